// SPDX-License-Identifier: Apache-2.0

#include "kpcc/bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>

#include "kpcc/byte_io.hpp"
#include "kpcc/digest.hpp"
#include "kpcc/errors.hpp"

extern char** environ;

namespace kpcc {

namespace bridge {

namespace {

constexpr std::uint32_t kMaxFrame = 1u << 24;

// Reads exactly n bytes. Returns false on EOF before the first byte when
// `eof_ok`; any other shortfall throws.
bool read_exact(int fd, std::uint8_t* dst, std::size_t n, int timeout_ms, bool eof_ok) {
    std::size_t got = 0;
    while (got < n) {
        pollfd p{fd, POLLIN, 0};
        const int ready = ::poll(&p, 1, timeout_ms);
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("bridge poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) throw TransportError("bridge timed out after " + std::to_string(timeout_ms) + " ms");
        const ssize_t r = ::read(fd, dst + got, n - got);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("bridge read failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            if (got == 0 && eof_ok) return false;
            throw TransportError("bridge closed the stream mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

} // namespace

std::vector<std::uint8_t> encode_frame(const Frame& f) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(f.body.size() + 1));
    w.u8(f.type);
    w.bytes(f.body);
    return w.take();
}

std::optional<Frame> read_frame(int fd, int timeout_ms) {
    std::uint8_t len_bytes[4];
    if (!read_exact(fd, len_bytes, 4, timeout_ms, true)) return std::nullopt;
    const std::uint32_t len = std::uint32_t{len_bytes[0]} | std::uint32_t{len_bytes[1]} << 8 |
                              std::uint32_t{len_bytes[2]} << 16 | std::uint32_t{len_bytes[3]} << 24;
    if (len == 0 || len > kMaxFrame) throw TransportError("bridge frame length " + std::to_string(len) + " invalid");
    std::vector<std::uint8_t> payload(len);
    read_exact(fd, payload.data(), len, timeout_ms, false);
    Frame f;
    f.type = payload[0];
    f.body.assign(payload.begin() + 1, payload.end());
    return f;
}

void write_frame(int fd, const Frame& f) {
    const auto bytes = encode_frame(f);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t w = ::write(fd, bytes.data() + sent, bytes.size() - sent);
        if (w < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("bridge write failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(w);
    }
}

} // namespace bridge

// ---------------------------------------------------------------------------

ChildProcess::ChildProcess(const std::string& command) {
    static std::once_flag ignore_sigpipe;
    std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

    int in_pipe[2];  // parent -> child
    int out_pipe[2]; // child -> parent
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError("pipe failed");
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw TransportError("pipe failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    // own process group, so the whole shell pipeline can be signalled at once
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, &attr, const_cast<char* const*>(argv), environ);
    posix_spawnattr_destroy(&attr);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw TransportError("cannot start bridge process: " + std::string(std::strerror(rc)));
    }
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

ChildProcess::~ChildProcess() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (pid_ > 0) {
        ::kill(-pid_, SIGKILL);
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
    }
}

// ---------------------------------------------------------------------------

namespace {

class BridgeSession final : public ModelSession {
public:
    BridgeSession(const std::string& command, std::uint32_t vocab, int timeout_ms)
        : process_(command), vocab_(vocab), timeout_ms_(timeout_ms) {
        ByteWriter body;
        body.u32(vocab);
        body.u8(bridge::kProtoVersion);
        const auto reply = request(bridge::kInit, body.take(), bridge::kInitAck);
        ByteReader<TransportError> r(reply.body);
        const std::uint32_t acked = r.u32();
        if (vocab_ == 0) vocab_ = acked;
        if (acked != vocab_) {
            throw TransportError("bridge acknowledged vocabulary " + std::to_string(acked) + ", expected " +
                                 std::to_string(vocab_));
        }
    }

    std::uint32_t vocab_size() const override { return vocab_; }

    void push_token(TokenId t) override {
        if (t >= vocab_) throw DomainError("token " + std::to_string(t) + " outside vocabulary");
        ByteWriter body;
        body.u32(t);
        request(bridge::kPush, body.take(), bridge::kPushAck);
    }

    QuantizedCdf next_cdf() override {
        const auto reply = request(bridge::kGetCdf, {}, bridge::kCdf);
        if (reply.body.size() != (std::size_t{vocab_} + 1) * 4) {
            throw TransportError("bridge CDF frame has " + std::to_string(reply.body.size()) + " bytes");
        }
        ByteReader<TransportError> r(reply.body);
        std::vector<std::uint32_t> cum(vocab_ + 1);
        for (auto& c : cum) c = r.u32();
        try {
            return QuantizedCdf(std::move(cum));
        } catch (const DomainError& e) {
            throw TransportError(std::string("bridge sent an invalid CDF: ") + e.what());
        }
    }

    void reset() override { request(bridge::kReset, {}, bridge::kResetAck); }

private:
    bridge::Frame request(std::uint8_t type, std::vector<std::uint8_t> body, std::uint8_t expect) {
        bridge::write_frame(process_.to_child(), {type, std::move(body)});
        auto reply = bridge::read_frame(process_.from_child(), timeout_ms_);
        if (!reply) throw TransportError("bridge process disconnected");
        if (reply->type == bridge::kError) {
            const int code = reply->body.empty() ? 0 : reply->body[0];
            throw TransportError("bridge returned error code " + std::to_string(code));
        }
        if (reply->type != expect) {
            throw TransportError("bridge replied with frame type " + std::to_string(reply->type) + ", expected " +
                                 std::to_string(expect));
        }
        return std::move(*reply);
    }

    ChildProcess process_;
    std::uint32_t vocab_;
    int timeout_ms_;
};

} // namespace

BridgeModel::BridgeModel(std::string command, std::uint32_t vocab_size, int timeout_ms)
    : command_(std::move(command)), vocab_(vocab_size), timeout_ms_(timeout_ms) {
    if (command_.empty()) throw ParameterError("bridge command is empty");
}

void BridgeModel::probe() {
    BridgeSession session(command_, vocab_, timeout_ms_);
    vocab_ = session.vocab_size();
}

std::uint64_t BridgeModel::params_digest() const {
    Fnv1a h;
    h.add_string("external_bridge");
    h.add_string(command_);
    h.add_u32(vocab_);
    return h.value();
}

std::unique_ptr<ModelSession> BridgeModel::start_session() const {
    return std::make_unique<BridgeSession>(command_, vocab_, timeout_ms_);
}

} // namespace kpcc
