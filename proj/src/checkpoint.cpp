#include "sp4d/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace sp4d {

namespace {

template <typename T>
void put(std::vector<uint8_t>& buf, const T& v) {
    const size_t at = buf.size();
    buf.resize(at + sizeof(T));
    std::memcpy(buf.data() + at, &v, sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& buf, size_t& at) {
    if (at + sizeof(T) > buf.size())
        throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated");
    T v;
    std::memcpy(&v, buf.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const GaussianCloud& cloud, const std::string& path, uint64_t iteration) {
    std::vector<uint8_t> body;
    put<uint16_t>(body, kCheckpointMajor);
    put<uint16_t>(body, kCheckpointMinor);
    put<uint32_t>(body, static_cast<uint32_t>(cloud.appearance.sh_degree));
    put<uint32_t>(body, static_cast<uint32_t>(cloud.appearance.temporal_bands));
    put<double>(body, cloud.appearance.period);
    put<uint64_t>(body, iteration);
    put<uint64_t>(body, cloud.size());

    const size_t n_coeff = static_cast<size_t>(cloud.appearance.coeff_count()) * 3;
    const size_t n_phase = cloud.appearance.temporal_bands;
    for (const Gaussian4D& g : cloud.gaussians) {
        for (int i = 0; i < 4; ++i) put<double>(body, g.mu[i]);
        for (int i = 0; i < 4; ++i) put<double>(body, g.rotor.q_left[i]);
        for (int i = 0; i < 4; ++i) put<double>(body, g.rotor.q_right[i]);
        for (int i = 0; i < 4; ++i) put<double>(body, g.scales.log_s[i]);
        put<double>(body, g.opacity_logit);
        if (g.sh.k.size() != n_coeff || g.sh.phases.size() != n_phase)
            throw CheckpointError(CheckpointError::Kind::kIo,
                                  "gaussian appearance size does not match the cloud config");
        for (double v : g.sh.k) put<double>(body, v);
        for (double v : g.sh.phases) put<double>(body, v);
    }

    const uint32_t crc =
        static_cast<uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size())));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write checkpoint: " + path);
    f.write("SP4D", 4);
    f.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
    f.write(reinterpret_cast<const char*>(&crc), 4);
    if (!f) throw CheckpointError(CheckpointError::Kind::kIo, "write failed: " + path);
}

GaussianCloud load_checkpoint(const std::string& path, uint64_t* iteration) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open checkpoint: " + path);
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    if (raw.size() < 8 || std::memcmp(raw.data(), "SP4D", 4) != 0)
        throw CheckpointError(CheckpointError::Kind::kMagic, "not a checkpoint file: " + path);

    std::vector<uint8_t> body(raw.begin() + 4, raw.end() - 4);
    uint32_t stored_crc;
    std::memcpy(&stored_crc, raw.data() + raw.size() - 4, 4);
    const uint32_t crc =
        static_cast<uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size())));
    if (crc != stored_crc)
        throw CheckpointError(CheckpointError::Kind::kChecksum, "checkpoint checksum mismatch: " + path);

    size_t at = 0;
    const uint16_t major = take<uint16_t>(body, at);
    take<uint16_t>(body, at); // minor: forward-compatible
    if (major > kCheckpointMajor)
        throw CheckpointError(CheckpointError::Kind::kVersion,
                              "checkpoint major version " + std::to_string(major) +
                                  " is newer than supported " + std::to_string(kCheckpointMajor));

    GaussianCloud cloud;
    cloud.appearance.sh_degree = static_cast<int>(take<uint32_t>(body, at));
    cloud.appearance.temporal_bands = static_cast<int>(take<uint32_t>(body, at));
    cloud.appearance.period = take<double>(body, at);
    const uint64_t iter = take<uint64_t>(body, at);
    if (iteration) *iteration = iter;
    const uint64_t count = take<uint64_t>(body, at);

    const size_t n_coeff = static_cast<size_t>(cloud.appearance.coeff_count()) * 3;
    const size_t n_phase = cloud.appearance.temporal_bands;
    const size_t record = (4 + 4 + 4 + 4 + 1 + n_coeff + n_phase) * sizeof(double);
    if (body.size() - at != count * record)
        throw CheckpointError(CheckpointError::Kind::kTruncated,
                              "checkpoint record section has the wrong size: " + path);

    cloud.gaussians.resize(count);
    for (Gaussian4D& g : cloud.gaussians) {
        for (int i = 0; i < 4; ++i) g.mu[i] = take<double>(body, at);
        for (int i = 0; i < 4; ++i) g.rotor.q_left[i] = take<double>(body, at);
        for (int i = 0; i < 4; ++i) g.rotor.q_right[i] = take<double>(body, at);
        for (int i = 0; i < 4; ++i) g.scales.log_s[i] = take<double>(body, at);
        g.opacity_logit = take<double>(body, at);
        g.sh.k.resize(n_coeff);
        for (double& v : g.sh.k) v = take<double>(body, at);
        g.sh.phases.resize(n_phase);
        for (double& v : g.sh.phases) v = take<double>(body, at);
    }
    return cloud;
}

}  // namespace sp4d
