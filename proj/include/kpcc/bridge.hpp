// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_BRIDGE_HPP
#define KPCC_BRIDGE_HPP

#include <sys/types.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kpcc/probmodel.hpp"

namespace kpcc {

/// Wire protocol between the codec and an out-of-process model.
///
/// Every message is a frame `len u32 | type u8 | body`, little-endian, where
/// `len` counts the type byte plus the body. One request is in flight at a
/// time; each request gets exactly one response.
///
///   0x01 INIT   {vocab u32, proto_version u8}  -> 0x81 ACK {vocab u32}
///   0x02 RESET  {}                             -> 0x82 ACK {}
///   0x03 PUSH   {token u32}                    -> 0x83 ACK {}
///   0x04 GETCDF {}                             -> 0x84 CDF {(vocab+1) x u32 cumfreq}
///   anything else                              -> 0xFF ERR {code u8}
namespace bridge {

inline constexpr std::uint8_t kProtoVersion = 1;

enum MessageType : std::uint8_t {
    kInit = 0x01,
    kReset = 0x02,
    kPush = 0x03,
    kGetCdf = 0x04,
    kInitAck = 0x81,
    kResetAck = 0x82,
    kPushAck = 0x83,
    kCdf = 0x84,
    kError = 0xFF,
};

enum ErrorCode : std::uint8_t {
    kUnknownType = 1,
    kBadBody = 2,
    kBadToken = 3,
    kVocabMismatch = 4,
    kNotInitialized = 5,
};

struct Frame {
    std::uint8_t type = 0;
    std::vector<std::uint8_t> body;
};

std::vector<std::uint8_t> encode_frame(const Frame& f);

/// Blocking frame I/O over file descriptors. `timeout_ms` < 0 waits forever.
/// Returns nullopt on clean EOF before any byte of a frame; throws
/// TransportError on timeouts, short reads and write failures.
std::optional<Frame> read_frame(int fd, int timeout_ms);
void write_frame(int fd, const Frame& f);

} // namespace bridge

/// A child process started with `/bin/sh -c command`, its stdin and stdout
/// connected to pipes. The destructor closes the pipes and reaps the child.
class ChildProcess {
public:
    explicit ChildProcess(const std::string& command);
    ~ChildProcess();
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    int to_child() const { return to_child_; }
    int from_child() const { return from_child_; }
    pid_t pid() const { return pid_; }

private:
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
};

/// Probability model served by an external process speaking the bridge
/// protocol. Each session owns its own process, so sessions run in parallel.
/// Malformed replies, timeouts and disconnects raise TransportError.
class BridgeModel final : public ProbabilityModel {
public:
    /// `vocab_size` 0 adopts whatever the process acknowledges in probe().
    BridgeModel(std::string command, std::uint32_t vocab_size, int timeout_ms = 30000);

    /// Starts the process once and completes the INIT handshake.
    void probe();

    ModelId id() const override { return ModelId::external_bridge; }
    std::uint32_t vocab_size() const override { return vocab_; }
    std::uint64_t params_digest() const override;
    std::unique_ptr<ModelSession> start_session() const override;

    const std::string& command() const { return command_; }

private:
    std::string command_;
    std::uint32_t vocab_;
    int timeout_ms_;
};

} // namespace kpcc

#endif // KPCC_BRIDGE_HPP
