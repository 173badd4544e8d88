#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "neuroevo/dist.hpp"
#include "neuroevo/error.hpp"

namespace neuroevo::dist {

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
    throw Error(ErrorCode::Transport, fmt::format("{}: {}", what, std::strerror(errno)));
}

std::pair<std::string, std::string> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 == address.size()) {
        throw Error(ErrorCode::InvalidArgument, "address must be host:port, got '" + address + "'");
    }
    std::string host = address.substr(0, colon);
    if (host == "*") host.clear();
    return {host, address.substr(colon + 1)};
}

struct AddrInfo {
    addrinfo* list = nullptr;
    AddrInfo(const std::string& address, bool passive) {
        auto [host, port] = split_address(address);
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        if (passive) hints.ai_flags = AI_PASSIVE;
        const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &list);
        if (rc != 0) throw Error(ErrorCode::Transport, fmt::format("resolve {}: {}", address, gai_strerror(rc)));
    }
    ~AddrInfo() {
        if (list) freeaddrinfo(list);
    }
    AddrInfo(const AddrInfo&) = delete;
    AddrInfo& operator=(const AddrInfo&) = delete;
};

bool write_all(int fd, const Bytes& bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

// False on orderly EOF before any byte; throws on errors and partial reads.
bool read_exact(int fd, std::uint8_t* out, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
        const ssize_t got = ::recv(fd, out + off, n - off, 0);
        if (got < 0) {
            if (errno == EINTR) continue;
            sys_fail("recv");
        }
        if (got == 0) {
            if (off == 0) return false;
            throw Error(ErrorCode::TruncatedFrame, "connection closed mid-frame");
        }
        off += static_cast<std::size_t>(got);
    }
    return true;
}

}  // namespace

// ---- TCP master ------------------------------------------------------------

TcpMasterTransport::TcpMasterTransport(const std::string& address) {
    AddrInfo info(address, true);
    for (addrinfo* ai = info.list; ai != nullptr; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
            listen_fd_ = fd;
            break;
        }
        ::close(fd);
    }
    if (listen_fd_ < 0) sys_fail("bind " + address);

    sockaddr_storage bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    char port[NI_MAXSERV] = {};
    ::getnameinfo(reinterpret_cast<sockaddr*>(&bound), len, nullptr, 0, port, sizeof port, NI_NUMERICSERV);
    port_ = static_cast<std::uint16_t>(std::stoi(port));
    spdlog::info("master listening on port {}", port_);
}

TcpMasterTransport::~TcpMasterTransport() {
    for (auto& [id, c] : conns_) ::close(c.fd);
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpMasterTransport::drop(ConnId conn) {
    auto it = conns_.find(conn);
    if (it == conns_.end()) return;
    ::close(it->second.fd);
    conns_.erase(it);
    ready_.push_back({MasterEvent::Type::Disconnected, conn, {}});
}

std::optional<MasterEvent> TcpMasterTransport::next_event(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    while (ready_.empty()) {
        std::vector<pollfd> fds;
        std::vector<ConnId> ids;
        fds.push_back({listen_fd_, POLLIN, 0});
        for (auto& [id, c] : conns_) {
            fds.push_back({c.fd, POLLIN, 0});
            ids.push_back(id);
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::max<long long>(0, left.count())));
        if (rc < 0) {
            if (errno == EINTR) continue;
            sys_fail("poll");
        }
        if (rc == 0) return std::nullopt;

        if (fds[0].revents & POLLIN) {
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd >= 0) {
                const ConnId id = next_id_++;
                conns_.emplace(id, Conn{fd, {}});
                spdlog::info("worker connected as connection {}", id);
            }
        }
        for (std::size_t k = 1; k < fds.size(); ++k) {
            if (fds[k].revents == 0) continue;
            const ConnId id = ids[k - 1];
            Conn& c = conns_.at(id);
            std::uint8_t buf[65536];
            const ssize_t n = ::recv(c.fd, buf, sizeof buf, 0);
            if (n <= 0) {
                if (n < 0 && errno == EINTR) continue;
                drop(id);
                continue;
            }
            c.inbox.insert(c.inbox.end(), buf, buf + n);
            try {
                while (auto size = frame_size(c.inbox)) {
                    if (c.inbox.size() < *size) break;
                    Message msg = decode_frame(std::span(c.inbox).first(*size));
                    c.inbox.erase(c.inbox.begin(), c.inbox.begin() + static_cast<std::ptrdiff_t>(*size));
                    ready_.push_back({MasterEvent::Type::Frame, id, std::move(msg)});
                }
            } catch (const Error& e) {
                spdlog::warn("connection {}: malformed frame ({}), dropping", id, e.what());
                drop(id);
            }
        }
    }
    MasterEvent ev = std::move(ready_.front());
    ready_.pop_front();
    return ev;
}

void TcpMasterTransport::send(ConnId conn, const Message& msg) {
    auto it = conns_.find(conn);
    if (it == conns_.end()) return;
    if (!write_all(it->second.fd, encode_frame(msg))) {
        spdlog::warn("connection {}: send failed, dropping", conn);
        drop(conn);
    }
}

void TcpMasterTransport::close(ConnId conn) {
    auto it = conns_.find(conn);
    if (it == conns_.end()) return;
    ::shutdown(it->second.fd, SHUT_WR);
    ::close(it->second.fd);
    conns_.erase(it);
}

// ---- TCP worker ------------------------------------------------------------

std::unique_ptr<TcpWorkerChannel> TcpWorkerChannel::connect(const std::string& address, int attempts,
                                                            std::chrono::milliseconds initial_delay) {
    auto delay = initial_delay;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        AddrInfo info(address, false);
        for (addrinfo* ai = info.list; ai != nullptr; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
                return std::unique_ptr<TcpWorkerChannel>(new TcpWorkerChannel(fd));
            }
            ::close(fd);
        }
        if (attempt == attempts) break;
        spdlog::info("master at {} unreachable (attempt {}/{}), retrying in {} ms", address, attempt, attempts,
                     delay.count());
        std::this_thread::sleep_for(delay);
        delay *= 2;
    }
    throw Error(ErrorCode::Transport, fmt::format("master at {} unreachable after {} attempts", address, attempts));
}

TcpWorkerChannel::~TcpWorkerChannel() {
    if (fd_ >= 0) ::close(fd_);
}

void TcpWorkerChannel::send(const Message& msg) {
    if (!write_all(fd_, encode_frame(msg))) sys_fail("send to master");
}

Message TcpWorkerChannel::receive() {
    Bytes frame(4);
    if (!read_exact(fd_, frame.data(), 4)) throw Error(ErrorCode::Transport, "master closed the connection");
    const std::size_t size = *frame_size(frame);
    frame.resize(size);
    if (!read_exact(fd_, frame.data() + 4, size - 4)) {
        throw Error(ErrorCode::TruncatedFrame, "connection closed mid-frame");
    }
    return decode_frame(frame);
}

// ---- in-process ------------------------------------------------------------

struct InProcHub::Impl {
    struct Port {
        std::deque<Bytes> inbox;
        bool open = true;
    };
    struct Inbound {
        ConnId conn;
        std::optional<Bytes> bytes;  // nullopt: worker disconnected
    };

    class Master final : public MasterTransport {
    public:
        explicit Master(Impl& hub) : hub_(hub) {}

        std::optional<MasterEvent> next_event(std::chrono::milliseconds timeout) override {
            std::unique_lock lock(hub_.mu);
            const auto deadline = Clock::now() + timeout;
            while (true) {
                if (!hub_.master_cv.wait_until(lock, deadline, [&] { return !hub_.to_master.empty(); })) {
                    return std::nullopt;
                }
                Inbound in = std::move(hub_.to_master.front());
                hub_.to_master.pop_front();
                auto it = hub_.ports.find(in.conn);
                if (it == hub_.ports.end() || !it->second.open) continue;  // already closed by the master
                if (!in.bytes) {
                    it->second.open = false;
                    hub_.worker_cv.notify_all();
                    return MasterEvent{MasterEvent::Type::Disconnected, in.conn, {}};
                }
                try {
                    return MasterEvent{MasterEvent::Type::Frame, in.conn, decode_frame(*in.bytes)};
                } catch (const Error& e) {
                    spdlog::warn("connection {}: malformed frame ({}), dropping", in.conn, e.what());
                    it->second.open = false;
                    hub_.worker_cv.notify_all();
                    return MasterEvent{MasterEvent::Type::Disconnected, in.conn, {}};
                }
            }
        }

        void send(ConnId conn, const Message& msg) override {
            Bytes frame = encode_frame(msg);
            std::lock_guard lock(hub_.mu);
            auto it = hub_.ports.find(conn);
            if (it == hub_.ports.end() || !it->second.open) return;
            it->second.inbox.push_back(std::move(frame));
            hub_.worker_cv.notify_all();
        }

        void close(ConnId conn) override {
            std::lock_guard lock(hub_.mu);
            auto it = hub_.ports.find(conn);
            if (it == hub_.ports.end()) return;
            it->second.open = false;
            hub_.worker_cv.notify_all();
        }

        std::size_t open_connections() const override {
            std::lock_guard lock(hub_.mu);
            std::size_t n = 0;
            for (const auto& [id, p] : hub_.ports) n += p.open ? 1 : 0;
            return n;
        }

    private:
        Impl& hub_;
    };

    mutable std::mutex mu;
    std::condition_variable master_cv;
    std::condition_variable worker_cv;
    std::deque<Inbound> to_master;
    std::map<ConnId, Port> ports;
    ConnId next_id = 1;
    Master master{*this};
};

InProcHub::InProcHub() : impl_(std::make_shared<Impl>()) {}
InProcHub::~InProcHub() { close_all(); }

MasterTransport& InProcHub::master() { return impl_->master; }

std::unique_ptr<InProcHub::Worker> InProcHub::connect() {
    std::lock_guard lock(impl_->mu);
    const ConnId id = impl_->next_id++;
    impl_->ports.emplace(id, Impl::Port{});
    return std::unique_ptr<Worker>(new Worker(impl_, id));
}

void InProcHub::close_all() {
    std::lock_guard lock(impl_->mu);
    for (auto& [id, p] : impl_->ports) p.open = false;
    impl_->worker_cv.notify_all();
}

InProcHub::Worker::~Worker() { disconnect(); }

void InProcHub::Worker::send(const Message& msg) { send_raw(encode_frame(msg)); }

void InProcHub::Worker::send_raw(Bytes bytes) {
    std::lock_guard lock(hub_->mu);
    if (closed_ || !hub_->ports.at(id_).open) throw Error(ErrorCode::Transport, "connection closed");
    hub_->to_master.push_back({id_, std::move(bytes)});
    hub_->master_cv.notify_all();
}

Message InProcHub::Worker::receive() {
    std::unique_lock lock(hub_->mu);
    auto& port = hub_->ports.at(id_);
    hub_->worker_cv.wait(lock, [&] { return !port.inbox.empty() || !port.open || closed_; });
    if (port.inbox.empty()) throw Error(ErrorCode::Transport, "master closed the connection");
    Bytes frame = std::move(port.inbox.front());
    port.inbox.pop_front();
    lock.unlock();
    return decode_frame(frame);
}

void InProcHub::Worker::disconnect() {
    std::lock_guard lock(hub_->mu);
    if (closed_) return;
    closed_ = true;
    if (hub_->ports.at(id_).open) {
        hub_->to_master.push_back({id_, std::nullopt});
        hub_->master_cv.notify_all();
    }
}

}  // namespace neuroevo::dist
