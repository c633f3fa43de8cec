#include "mmcap/mmcf.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace mmcap {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'F'};
constexpr uint16_t kVersion = 1;

void put_u16(std::ostream& out, uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    out.write(bytes, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out.write(bytes, 4);
}

uint16_t get_u16(std::istream& in) {
    unsigned char bytes[2];
    in.read(reinterpret_cast<char*>(bytes), 2);
    return static_cast<uint16_t>(bytes[0] | (bytes[1] << 8));
}

uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<uint32_t>(bytes[i]) << (8 * i);
    }
    return v;
}

} // namespace

void write_mmcf(std::ostream& out, const FeatureMatrix& m) {
    require(m.rows >= 1 && m.cols >= 1, "bad_shape", "mmcf: rows and cols must be >= 1");
    require(static_cast<int64_t>(m.values.size()) == m.rows * m.cols, "bad_shape",
            "mmcf: value count does not match rows*cols");
    out.write(kMagic, 4);
    put_u16(out, kVersion);
    put_u32(out, static_cast<uint32_t>(m.rows));
    put_u32(out, static_cast<uint32_t>(m.cols));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * 4));
    require(out.good(), "io_error", "mmcf: write failed");
}

FeatureMatrix read_mmcf(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    require(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0, "bad_magic",
            "mmcf: bad magic bytes");
    const uint16_t version = get_u16(in);
    require(in.good() && version == kVersion, "bad_version",
            "mmcf: unsupported version " + std::to_string(version));
    const uint32_t rows = get_u32(in);
    const uint32_t cols = get_u32(in);
    require(in.good(), "truncated", "mmcf: truncated header");
    require(rows >= 1 && cols >= 1, "bad_shape", "mmcf: rows and cols must be >= 1");
    const uint64_t count = static_cast<uint64_t>(rows) * cols;
    require(count <= static_cast<uint64_t>(std::numeric_limits<int64_t>::max() / 8),
            "overflow", "mmcf: rows*cols overflows");

    FeatureMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.values.resize(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(count * 4));
    require(in.gcount() == static_cast<std::streamsize>(count * 4), "truncated",
            "mmcf: truncated payload");
    for (float v : m.values) {
        require(std::isfinite(v), "non_finite", "mmcf: payload contains a non-finite value");
    }
    return m;
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), "missing_feature", "cannot open feature file " + path.string());
    return read_mmcf(in);
}

void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    require(out.is_open(), "io_error", "cannot create feature file " + path.string());
    write_mmcf(out, m);
}

} // namespace mmcap
