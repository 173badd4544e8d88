#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neuroevo/aco.hpp"
#include "neuroevo/lstm.hpp"
#include "neuroevo/model_io.hpp"

namespace neuroevo::dist {

// ---- messages and frames ---------------------------------------------------
//
// Frame (all integers big-endian):
//   u32 payload length | u8 kind | u32 job_id | payload | u32 CRC-32
// The CRC covers every byte before it. Payloads:
//   RequestPaths     digest[32]
//   PathsAssignment  mesh[36] | u8 arch | digest[32]
//   ReportFitness    f64 fitness | mesh[36] | u8 status | u16 len | reason | f64 wall_time_s
//   Shutdown         (empty)
//   Error            u16 len | reason
// Mesh bytes use the model-file bitmap encoding.

using Digest = std::array<std::uint8_t, 32>;

enum class MessageKind : std::uint8_t {
    RequestPaths = 1,
    PathsAssignment = 2,
    ReportFitness = 3,
    Shutdown = 4,
    Error = 5,
};

enum class JobStatus : std::uint8_t { Ok = 0, Failed = 1 };

struct Message {
    MessageKind kind = MessageKind::Shutdown;
    std::uint32_t job_id = 0;
    Digest digest{};
    Mesh mesh;
    Arch arch = Arch::I;
    double fitness = 0.0;
    JobStatus status = JobStatus::Ok;
    std::string reason;
    double wall_time_s = 0.0;

    static Message request_paths(const Digest& digest);
    static Message assignment(std::uint32_t job_id, const Mesh& mesh, Arch arch, const Digest& digest);
    static Message report(std::uint32_t job_id, double fitness, const Mesh& mesh, double wall_time_s);
    static Message report_failure(std::uint32_t job_id, const Mesh& mesh, std::string reason, double wall_time_s);
    static Message shutdown();
    static Message error(std::string reason);

    friend bool operator==(const Message&, const Message&) = default;
};

inline constexpr std::size_t kFrameOverhead = 4 + 1 + 4 + 4;
inline constexpr std::uint32_t kMaxPayload = 1u << 20;

Bytes encode_frame(const Message& msg);
/// Decodes exactly one frame occupying all of `frame`.
Message decode_frame(std::span<const std::uint8_t> frame);
/// Total size of the frame at the front of `buffered`, once its length field
/// has arrived. Throws TruncatedFrame for a length above kMaxPayload.
std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffered);

/// SHA-256 of a canonical description of the training setup.
Digest config_digest(std::string_view canonical);

// ---- coordinator -----------------------------------------------------------

using ConnId = std::uint64_t;
using Clock = std::chrono::steady_clock;

struct MasterOptions {
    Digest digest{};
    double timeout_floor_s = 60.0;       // reassignment timeout lower bound
    double timeout_multiplier = 10.0;    // times the median completed job time
    double drain_timeout_s = 30.0;       // wait for busy workers after the last report
    std::size_t max_failures = 0;        // 0: n_iterations
};

struct RunState {
    struct Job {
        Mesh mesh;
        ConnId conn = 0;  // 0 while waiting for reassignment
        Clock::time_point dispatched;
    };
    std::map<std::uint32_t, Job> outstanding;
    std::size_t dispatched = 0;
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::size_t ignored_reports = 0; // duplicates, unknown job ids, reports after the end
};

/// Master protocol logic independent of transport. Owns no I/O; every state
/// change happens inside these calls, in the order the caller delivers them.
class Coordinator {
public:
    Coordinator(AcoState& state, MasterOptions options);

    /// Reply to a RequestPaths: an assignment, Shutdown once finished, or an
    /// Error frame when the worker's config digest differs.
    Message on_request(ConnId conn, const Message& request, Clock::time_point now);
    void on_report(ConnId conn, const Message& report, Clock::time_point now);
    void on_disconnect(ConnId conn);
    /// Requeues jobs outstanding longer than the current timeout.
    void expire(Clock::time_point now);

    bool finished() const;
    double current_timeout_s() const;
    const RunState& run_state() const { return run_; }
    const AcoState& aco() const { return state_; }
    std::size_t pending_requeue() const { return requeue_.size(); }

private:
    AcoState& state_;
    MasterOptions options_;
    RunState run_;
    std::deque<std::uint32_t> requeue_;  // outstanding jobs waiting for a new owner
    std::vector<double> job_times_;
    std::uint32_t next_job_ = 1;
};

// ---- transports ------------------------------------------------------------

struct MasterEvent {
    enum class Type { Frame, Disconnected } type = Type::Frame;
    ConnId conn = 0;
    Message message;
};

class MasterTransport {
public:
    virtual ~MasterTransport() = default;
    /// Next frame or disconnect, or nullopt after `timeout` without one.
    /// Malformed frames drop the connection and surface as Disconnected.
    virtual std::optional<MasterEvent> next_event(std::chrono::milliseconds timeout) = 0;
    virtual void send(ConnId conn, const Message& msg) = 0;
    virtual void close(ConnId conn) = 0;
    virtual std::size_t open_connections() const = 0;
};

class WorkerChannel {
public:
    virtual ~WorkerChannel() = default;
    virtual void send(const Message& msg) = 0;
    /// Blocks for the next message; throws Error(Transport) once the master is gone.
    virtual Message receive() = 0;
};

/// Listening socket multiplexed with poll(); `address` is "host:port".
class TcpMasterTransport final : public MasterTransport {
public:
    explicit TcpMasterTransport(const std::string& address);
    ~TcpMasterTransport() override;
    TcpMasterTransport(const TcpMasterTransport&) = delete;
    TcpMasterTransport& operator=(const TcpMasterTransport&) = delete;

    std::uint16_t port() const { return port_; }

    std::optional<MasterEvent> next_event(std::chrono::milliseconds timeout) override;
    void send(ConnId conn, const Message& msg) override;
    void close(ConnId conn) override;
    std::size_t open_connections() const override { return conns_.size(); }

private:
    struct Conn {
        int fd = -1;
        Bytes inbox;
    };
    void drop(ConnId conn);

    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    ConnId next_id_ = 1;
    std::map<ConnId, Conn> conns_;
    std::deque<MasterEvent> ready_;
};

class TcpWorkerChannel final : public WorkerChannel {
public:
    /// Connects with exponential backoff (initial_delay doubling up to
    /// `attempts` tries); throws Error(Transport) if the master never answers.
    static std::unique_ptr<TcpWorkerChannel> connect(const std::string& address, int attempts = 6,
                                                     std::chrono::milliseconds initial_delay =
                                                         std::chrono::milliseconds(200));
    ~TcpWorkerChannel() override;

    void send(const Message& msg) override;
    Message receive() override;

private:
    explicit TcpWorkerChannel(int fd) : fd_(fd) {}
    int fd_ = -1;
};

/// Thread-safe in-process transport carrying encoded frames through queues.
class InProcHub {
public:
    class Worker;

    InProcHub();
    ~InProcHub();
    InProcHub(const InProcHub&) = delete;
    InProcHub& operator=(const InProcHub&) = delete;

    MasterTransport& master();
    std::unique_ptr<Worker> connect();
    /// Closes every connection; blocked workers see a transport error.
    void close_all();

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

class InProcHub::Worker final : public WorkerChannel {
public:
    ~Worker() override;
    void send(const Message& msg) override;
    Message receive() override;
    /// Pushes raw bytes as if they were a frame (fault injection).
    void send_raw(Bytes bytes);
    /// Simulates the worker process dying.
    void disconnect();
    ConnId id() const { return id_; }

private:
    friend class InProcHub;
    Worker(std::shared_ptr<InProcHub::Impl> hub, ConnId id) : hub_(std::move(hub)), id_(id) {}
    std::shared_ptr<InProcHub::Impl> hub_;
    ConnId id_;
    bool closed_ = false;
};

// ---- loops -----------------------------------------------------------------

struct MasterSummary {
    RunState run;
    bool drained = true;  // every connection was shut down before returning
};

/// Serves workers until n_iterations successful reports have arrived, then
/// answers remaining requests with Shutdown until every connection closed or
/// the drain timeout passed.
MasterSummary master_loop(AcoState& state, MasterTransport& transport, const MasterOptions& options);

/// Request / evaluate / report until Shutdown. Returns the process exit code:
/// 0 on Shutdown, 3 when the master rejects the configuration, 4 on a protocol
/// violation. Transport failures propagate as Error(Transport).
int worker_loop(WorkerChannel& channel, const MeshEvaluator& evaluator, const Digest& digest);

struct LocalRunResult {
    EvolutionResult evolution;
    MasterSummary summary;
};

/// Master plus `n_workers` worker threads over an in-process hub.
LocalRunResult run_local(const AcoConfig& cfg, Arch arch, std::size_t window, std::size_t n_workers,
                         const MeshEvaluator& evaluator, const MasterOptions& options);

}  // namespace neuroevo::dist
