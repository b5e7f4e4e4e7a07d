#pragma once

#include <stdexcept>
#include <string>

#include "sp4d/gaussian.hpp"

// Checkpoint container: little-endian binary, magic "SP4D", u16 major/minor
// version, appearance config, iteration, count, fixed-stride f64 records,
// trailing CRC32 over everything after the magic. Round trips are bitwise.

namespace sp4d {

struct CheckpointError : std::runtime_error {
    enum class Kind { kMagic, kVersion, kTruncated, kChecksum, kIo };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline constexpr uint16_t kCheckpointMajor = 1;
inline constexpr uint16_t kCheckpointMinor = 0;

void save_checkpoint(const GaussianCloud& cloud, const std::string& path,
                     uint64_t iteration = 0);

GaussianCloud load_checkpoint(const std::string& path, uint64_t* iteration = nullptr);

}  // namespace sp4d
