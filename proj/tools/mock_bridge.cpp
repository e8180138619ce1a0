// SPDX-License-Identifier: Apache-2.0
//
// Scripted model process for bridge tests. Speaks the frame protocol on
// stdin/stdout and answers GETCDF with a fixed schedule that depends only on
// how many tokens were pushed since the last RESET/INIT:
//   token (31*step + 7) mod V gets half of the spare mass, the rest is spread
//   evenly, every token keeps at least one unit.
//
// Options:
//   --vocab N        acknowledge vocabulary N regardless of INIT
//   --die-after N    exit without replying once the N-th PUSH arrives
//   --hang-after N   stop answering once the N-th PUSH arrives

#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "kpcc/bridge.hpp"
#include "kpcc/errors.hpp"

namespace {

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> schedule_cdf(std::uint32_t vocab, std::uint64_t step) {
    std::vector<std::uint32_t> freq(vocab, 1);
    const std::uint32_t spare = 65536u - vocab;
    const std::uint32_t favored = static_cast<std::uint32_t>((31 * step + 7) % vocab);
    freq[favored] += spare / 2;
    const std::uint32_t rest = spare - spare / 2;
    for (auto& f : freq) f += rest / vocab;
    freq[0] += rest % vocab;
    std::vector<std::uint8_t> body;
    std::uint32_t cum = 0;
    put_u32(body, 0);
    for (auto f : freq) {
        cum += f;
        put_u32(body, cum);
    }
    return body;
}

void reply(std::uint8_t type, std::vector<std::uint8_t> body = {}) {
    kpcc::bridge::write_frame(STDOUT_FILENO, {type, std::move(body)});
}

void error(std::uint8_t code) { reply(kpcc::bridge::kError, {code}); }

} // namespace

int main(int argc, char** argv) {
    std::uint32_t forced_vocab = 0;
    long die_after = -1;
    long hang_after = -1;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string opt = argv[i];
        const long value = std::strtol(argv[i + 1], nullptr, 10);
        if (opt == "--vocab") forced_vocab = static_cast<std::uint32_t>(value);
        else if (opt == "--die-after") die_after = value;
        else if (opt == "--hang-after") hang_after = value;
    }

    using namespace kpcc::bridge;
    std::uint32_t vocab = 0;
    std::uint64_t step = 0;
    long pushes = 0;
    try {
        while (auto frame = read_frame(STDIN_FILENO, -1)) {
            switch (frame->type) {
            case kInit: {
                if (frame->body.size() != 5) {
                    error(kBadBody);
                    break;
                }
                vocab = forced_vocab != 0 ? forced_vocab : get_u32(frame->body, 0);
                if (vocab < 2 || vocab > 65536) {
                    error(kVocabMismatch);
                    vocab = 0;
                    break;
                }
                step = 0;
                std::vector<std::uint8_t> body;
                put_u32(body, vocab);
                reply(kInitAck, body);
                break;
            }
            case kReset:
                step = 0;
                reply(kResetAck);
                break;
            case kPush: {
                ++pushes;
                if (die_after >= 0 && pushes >= die_after) return 3;
                if (hang_after >= 0 && pushes >= hang_after) {
                    for (;;) pause();
                }
                if (vocab == 0) {
                    error(kNotInitialized);
                } else if (frame->body.size() != 4 || get_u32(frame->body, 0) >= vocab) {
                    error(kBadToken);
                } else {
                    ++step;
                    reply(kPushAck);
                }
                break;
            }
            case kGetCdf:
                if (vocab == 0) error(kNotInitialized);
                else reply(kCdf, schedule_cdf(vocab, step));
                break;
            default:
                error(kUnknownType);
            }
        }
    } catch (const kpcc::Error&) {
        return 2;
    }
    return 0;
}
