#include "neuroevo/dist.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "neuroevo/error.hpp"

namespace neuroevo::dist {

namespace {

constexpr std::size_t kHeader = 4 + 1 + 4;

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_f64(Bytes& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(bits >> s));
}

void put_string(Bytes& out, const std::string& s) {
    if (s.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "reason longer than 65535 bytes");
    put_u16(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

std::uint32_t get_u32(std::span<const std::uint8_t> b) {
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

class PayloadReader {
public:
    explicit PayloadReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (data_.size() - pos_ < n) throw Error(ErrorCode::TruncatedFrame, "payload shorter than its kind requires");
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
    }
    double f64() {
        auto b = take(8);
        std::uint64_t bits = 0;
        for (std::uint8_t byte : b) bits = (bits << 8) | byte;
        return std::bit_cast<double>(bits);
    }
    std::string str() {
        auto b = take(u16());
        return {b.begin(), b.end()};
    }
    Digest digest() {
        Digest d;
        auto b = take(d.size());
        std::copy(b.begin(), b.end(), d.begin());
        return d;
    }
    Mesh mesh() { return decode_mesh_bits(take(kMeshBytes)); }
    void finish() const {
        if (pos_ != data_.size()) throw Error(ErrorCode::ParseError, "trailing bytes in frame payload");
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

bool known_kind(std::uint8_t k) { return k >= 1 && k <= 5; }

}  // namespace

Message Message::request_paths(const Digest& digest) {
    Message m;
    m.kind = MessageKind::RequestPaths;
    m.digest = digest;
    return m;
}

Message Message::assignment(std::uint32_t job_id, const Mesh& mesh, Arch arch, const Digest& digest) {
    Message m;
    m.kind = MessageKind::PathsAssignment;
    m.job_id = job_id;
    m.mesh = mesh;
    m.arch = arch;
    m.digest = digest;
    return m;
}

Message Message::report(std::uint32_t job_id, double fitness, const Mesh& mesh, double wall_time_s) {
    Message m;
    m.kind = MessageKind::ReportFitness;
    m.job_id = job_id;
    m.fitness = fitness;
    m.mesh = mesh;
    m.wall_time_s = wall_time_s;
    return m;
}

Message Message::report_failure(std::uint32_t job_id, const Mesh& mesh, std::string reason, double wall_time_s) {
    Message m = report(job_id, 0.0, mesh, wall_time_s);
    m.status = JobStatus::Failed;
    m.reason = std::move(reason);
    return m;
}

Message Message::shutdown() { return Message{}; }

Message Message::error(std::string reason) {
    Message m;
    m.kind = MessageKind::Error;
    m.reason = std::move(reason);
    return m;
}

Bytes encode_frame(const Message& msg) {
    Bytes payload;
    switch (msg.kind) {
        case MessageKind::RequestPaths:
            payload.assign(msg.digest.begin(), msg.digest.end());
            break;
        case MessageKind::PathsAssignment: {
            const auto bits = encode_mesh_bits(msg.mesh);
            payload.assign(bits.begin(), bits.end());
            payload.push_back(static_cast<std::uint8_t>(msg.arch));
            payload.insert(payload.end(), msg.digest.begin(), msg.digest.end());
            break;
        }
        case MessageKind::ReportFitness: {
            put_f64(payload, msg.fitness);
            const auto bits = encode_mesh_bits(msg.mesh);
            payload.insert(payload.end(), bits.begin(), bits.end());
            payload.push_back(static_cast<std::uint8_t>(msg.status));
            put_string(payload, msg.reason);
            put_f64(payload, msg.wall_time_s);
            break;
        }
        case MessageKind::Shutdown:
            break;
        case MessageKind::Error:
            put_string(payload, msg.reason);
            break;
        default:
            throw Error(ErrorCode::UnknownKind, fmt::format("cannot encode kind {}", static_cast<int>(msg.kind)));
    }
    Bytes frame;
    frame.reserve(payload.size() + kFrameOverhead);
    put_u32(frame, static_cast<std::uint32_t>(payload.size()));
    frame.push_back(static_cast<std::uint8_t>(msg.kind));
    put_u32(frame, msg.job_id);
    frame.insert(frame.end(), payload.begin(), payload.end());
    put_u32(frame, crc32(frame));
    return frame;
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffered) {
    if (buffered.size() < 4) return std::nullopt;
    const std::uint32_t len = get_u32(buffered);
    if (len > kMaxPayload) {
        throw Error(ErrorCode::TruncatedFrame, fmt::format("payload length {} exceeds limit {}", len, kMaxPayload));
    }
    return std::size_t{len} + kFrameOverhead;
}

Message decode_frame(std::span<const std::uint8_t> frame) {
    if (frame.size() < kFrameOverhead) {
        throw Error(ErrorCode::TruncatedFrame, fmt::format("{} bytes is shorter than a frame header", frame.size()));
    }
    const std::uint32_t len = get_u32(frame);
    if (std::size_t{len} + kFrameOverhead > frame.size()) {
        throw Error(ErrorCode::TruncatedFrame,
                    fmt::format("length field {} but only {} payload bytes", len, frame.size() - kFrameOverhead));
    }
    if (std::size_t{len} + kFrameOverhead < frame.size()) {
        throw Error(ErrorCode::ParseError, "bytes after the frame checksum");
    }
    const std::uint8_t kind = frame[4];
    if (!known_kind(kind)) throw Error(ErrorCode::UnknownKind, fmt::format("kind byte 0x{:02X}", kind));
    const std::size_t body = kHeader + len;
    if (crc32(frame.first(body)) != get_u32(frame.subspan(body))) {
        throw Error(ErrorCode::ChecksumMismatch, "frame CRC does not match");
    }

    Message msg;
    msg.kind = static_cast<MessageKind>(kind);
    msg.job_id = get_u32(frame.subspan(5));
    PayloadReader r(frame.subspan(kHeader, len));
    switch (msg.kind) {
        case MessageKind::RequestPaths:
            msg.digest = r.digest();
            break;
        case MessageKind::PathsAssignment: {
            msg.mesh = r.mesh();
            const std::uint8_t arch = r.u8();
            if (arch < 1 || arch > 3) throw Error(ErrorCode::ParseError, fmt::format("arch byte {}", arch));
            msg.arch = static_cast<Arch>(arch);
            msg.digest = r.digest();
            break;
        }
        case MessageKind::ReportFitness: {
            msg.fitness = r.f64();
            msg.mesh = r.mesh();
            const std::uint8_t status = r.u8();
            if (status > 1) throw Error(ErrorCode::ParseError, fmt::format("status byte {}", status));
            msg.status = static_cast<JobStatus>(status);
            msg.reason = r.str();
            msg.wall_time_s = r.f64();
            break;
        }
        case MessageKind::Shutdown:
            break;
        case MessageKind::Error:
            msg.reason = r.str();
            break;
    }
    r.finish();
    return msg;
}

Digest config_digest(std::string_view canonical) {
    Digest out{};
    unsigned int n = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), out.data(), &n, EVP_sha256(), nullptr) != 1 ||
        n != out.size()) {
        throw Error(ErrorCode::Io, "SHA-256 failed");
    }
    return out;
}

// ---- coordinator -----------------------------------------------------------

Coordinator::Coordinator(AcoState& state, MasterOptions options) : state_(state), options_(options) {
    if (options_.max_failures == 0) options_.max_failures = std::max<std::size_t>(1, state_.config().n_iterations);
}

bool Coordinator::finished() const {
    return run_.completed >= state_.config().n_iterations || run_.failed >= options_.max_failures;
}

double Coordinator::current_timeout_s() const {
    if (job_times_.empty()) return options_.timeout_floor_s;
    std::vector<double> t = job_times_;
    const auto mid = t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2);
    std::nth_element(t.begin(), mid, t.end());
    return std::max(options_.timeout_floor_s, options_.timeout_multiplier * *mid);
}

Message Coordinator::on_request(ConnId conn, const Message& request, Clock::time_point now) {
    if (request.digest != options_.digest) {
        spdlog::warn("connection {}: config digest mismatch, rejecting", conn);
        return Message::error("config digest mismatch: worker and master were started with different settings");
    }
    if (finished()) return Message::shutdown();

    // Reassign a previously lost job before sampling a new one.
    while (!requeue_.empty()) {
        const std::uint32_t id = requeue_.front();
        requeue_.pop_front();
        auto it = run_.outstanding.find(id);
        if (it == run_.outstanding.end()) continue;  // reported late by its first owner
        it->second.conn = conn;
        it->second.dispatched = now;
        spdlog::info("job {} reassigned to connection {}", id, conn);
        return Message::assignment(id, it->second.mesh, state_.arch(), options_.digest);
    }

    const std::uint32_t id = next_job_++;
    RunState::Job job{state_.sample(), conn, now};
    ++run_.dispatched;
    Message reply = Message::assignment(id, job.mesh, state_.arch(), options_.digest);
    run_.outstanding.emplace(id, std::move(job));
    spdlog::debug("job {} -> connection {}", id, conn);
    return reply;
}

void Coordinator::on_report(ConnId conn, const Message& report, Clock::time_point now) {
    auto it = run_.outstanding.find(report.job_id);
    if (it == run_.outstanding.end()) {
        ++run_.ignored_reports;
        spdlog::debug("connection {}: ignoring report for job {} (unknown or already reported)", conn,
                      report.job_id);
        return;
    }
    if (report.mesh != it->second.mesh) {
        ++run_.ignored_reports;
        spdlog::warn("connection {}: report for job {} carries a different mesh, ignored", conn, report.job_id);
        return;
    }
    if (finished()) {
        ++run_.ignored_reports;
        return;
    }
    const RunState::Job job = std::move(it->second);
    run_.outstanding.erase(it);

    if (report.status == JobStatus::Failed || !std::isfinite(report.fitness)) {
        ++run_.failed;
        state_.report_failure(fmt::format("job {}: {}", report.job_id,
                                          report.status == JobStatus::Failed ? report.reason : "non-finite fitness"));
        return;
    }
    ++run_.completed;
    job_times_.push_back(std::chrono::duration<double>(now - job.dispatched).count());
    state_.report(report.fitness, job.mesh, report.wall_time_s);
}

void Coordinator::on_disconnect(ConnId conn) {
    for (auto& [id, job] : run_.outstanding) {
        if (job.conn != conn) continue;
        job.conn = 0;
        requeue_.push_back(id);
        spdlog::info("connection {} lost with job {} outstanding, requeued", conn, id);
    }
}

void Coordinator::expire(Clock::time_point now) {
    const auto limit = std::chrono::duration<double>(current_timeout_s());
    for (auto& [id, job] : run_.outstanding) {
        if (job.conn == 0 || now - job.dispatched <= limit) continue;
        spdlog::warn("job {} on connection {} timed out after {:.1f}s, requeued", id, job.conn, limit.count());
        job.conn = 0;
        requeue_.push_back(id);
    }
}

// ---- loops -----------------------------------------------------------------

MasterSummary master_loop(AcoState& state, MasterTransport& transport, const MasterOptions& options) {
    Coordinator coord(state, options);
    std::optional<Clock::time_point> done_at;
    MasterSummary summary;

    while (true) {
        const auto now = Clock::now();
        coord.expire(now);
        if (coord.finished()) {
            if (!done_at) {
                done_at = now;
                spdlog::info("run finished: {} completed, {} failed; draining {} connection(s)",
                             coord.run_state().completed, coord.run_state().failed, transport.open_connections());
            }
            if (transport.open_connections() == 0) break;
            if (now - *done_at > std::chrono::duration<double>(options.drain_timeout_s)) {
                spdlog::warn("drain timeout with {} connection(s) still open", transport.open_connections());
                summary.drained = false;
                break;
            }
        }

        auto ev = transport.next_event(std::chrono::milliseconds(100));
        if (!ev) continue;
        if (ev->type == MasterEvent::Type::Disconnected) {
            coord.on_disconnect(ev->conn);
            continue;
        }
        const Message& msg = ev->message;
        switch (msg.kind) {
            case MessageKind::RequestPaths: {
                Message reply = coord.on_request(ev->conn, msg, Clock::now());
                transport.send(ev->conn, reply);
                if (reply.kind != MessageKind::PathsAssignment) transport.close(ev->conn);
                break;
            }
            case MessageKind::ReportFitness:
                coord.on_report(ev->conn, msg, Clock::now());
                break;
            default:
                spdlog::warn("connection {}: unexpected message kind {}, dropping", ev->conn,
                             static_cast<int>(msg.kind));
                transport.close(ev->conn);
                coord.on_disconnect(ev->conn);
                break;
        }
    }
    summary.run = coord.run_state();
    return summary;
}

int worker_loop(WorkerChannel& channel, const MeshEvaluator& evaluator, const Digest& digest) {
    while (true) {
        channel.send(Message::request_paths(digest));
        const Message msg = channel.receive();
        switch (msg.kind) {
            case MessageKind::Shutdown:
                spdlog::info("worker: shutdown received");
                return 0;
            case MessageKind::Error:
                spdlog::error("worker: master rejected request: {}", msg.reason);
                return 3;
            case MessageKind::PathsAssignment:
                break;
            default:
                spdlog::error("worker: unexpected message kind {}", static_cast<int>(msg.kind));
                return 4;
        }
        if (msg.digest != digest) {
            spdlog::error("worker: assignment carries a different config digest");
            return 3;
        }
        const auto start = Clock::now();
        auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
        try {
            const double fitness = evaluator(msg.mesh);
            if (!std::isfinite(fitness)) throw Error(ErrorCode::NonFiniteGradient, "non-finite fitness");
            spdlog::debug("worker: job {} fitness {:.6f}", msg.job_id, fitness);
            channel.send(Message::report(msg.job_id, fitness, msg.mesh, elapsed()));
        } catch (const std::exception& e) {
            spdlog::warn("worker: job {} failed: {}", msg.job_id, e.what());
            channel.send(Message::report_failure(msg.job_id, msg.mesh, e.what(), elapsed()));
        }
    }
}

LocalRunResult run_local(const AcoConfig& cfg, Arch arch, std::size_t window, std::size_t n_workers,
                         const MeshEvaluator& evaluator, const MasterOptions& options) {
    if (n_workers == 0) throw Error(ErrorCode::InvalidArgument, "need at least one worker");
    AcoState state(cfg, arch, window);
    InProcHub hub;
    std::vector<std::unique_ptr<InProcHub::Worker>> channels;
    for (std::size_t w = 0; w < n_workers; ++w) channels.push_back(hub.connect());

    std::vector<std::thread> threads;
    for (auto& ch : channels) {
        threads.emplace_back([&ch, &evaluator, &options] {
            try {
                const int code = worker_loop(*ch, evaluator, options.digest);
                if (code != 0) spdlog::error("worker {} exited with status {}", ch->id(), code);
            } catch (const std::exception& e) {
                spdlog::error("worker {}: {}", ch->id(), e.what());
            }
            ch->disconnect();
        });
    }
    LocalRunResult result;
    result.summary = master_loop(state, hub.master(), options);
    hub.close_all();
    for (auto& t : threads) t.join();

    result.evolution.population = state.population();
    result.evolution.pheromones = state.pheromones();
    result.evolution.log = state.log();
    result.evolution.failures = state.failures();
    return result;
}

}  // namespace neuroevo::dist
