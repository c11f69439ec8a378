#pragma once

#include <cstdint>
#include <iosfwd>

namespace nrf::cli {

// Stream tags keep data, initialization, training and evaluation randomness
// apart for a given seed.
inline constexpr std::uint64_t kDataTag = 0x64617461ULL;
inline constexpr std::uint64_t kInitTag = 0x696e6974ULL;
inline constexpr std::uint64_t kEvalTag = 0x6576616cULL;
inline constexpr std::uint64_t kDumpTag = 0x64756d70ULL;
inline constexpr std::uint64_t kTargetTag = 0x74617267ULL;

// Exit codes: 0 success, 1 configuration error, 2 runtime or numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nrf::cli
