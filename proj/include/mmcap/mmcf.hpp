#pragma once

#include "mmcap/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace mmcap {

// One per-timestep feature sequence: rows = timesteps, cols = feature dim.
struct FeatureMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> values; // row-major

    float at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * cols + c)]; }
    float& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols + c)]; }
};

// MMCF binary layout (little-endian):
//   bytes 0..3   ASCII "MMCF"
//   bytes 4..5   u16 version (= 1)
//   bytes 6..9   u32 rows
//   bytes 10..13 u32 cols
//   then rows*cols IEEE-754 float32, row-major
void write_mmcf(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_mmcf(std::istream& in);

FeatureMatrix load_feature_matrix(const std::filesystem::path& path);
void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m);

} // namespace mmcap
