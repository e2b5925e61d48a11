#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "embalign/errors.hpp"
#include "embalign/volume.hpp"

namespace embalign {

/// 8-bit grayscale plane, row-major.
struct Plane {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Min-max scales values to 0..255; a constant input maps to all zeros.
inline std::vector<std::uint8_t> scale_to_u8(const std::vector<float>& values) {
    std::vector<std::uint8_t> out(values.size(), 0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo)) return out;
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double t = (static_cast<double>(values[i]) - *lo) / range;
        out[i] = static_cast<std::uint8_t>(std::clamp(t * 255.0 + 0.5, 0.0, 255.0));
    }
    return out;
}

/// Central axis2 slice; rows follow axis0 downward, columns axis1.
inline Plane mid_sagittal_plane(const Volume3D& v) {
    const std::size_t k = v.dims[2] / 2;
    std::vector<float> values;
    values.reserve(v.dims[0] * v.dims[1]);
    for (std::size_t i = 0; i < v.dims[0]; ++i) {
        for (std::size_t j = 0; j < v.dims[1]; ++j) values.push_back(v(i, j, k));
    }
    return {v.dims[1], v.dims[0], scale_to_u8(values)};
}

/// Central axis1 slice; rows follow axis0 downward, columns axis2.
inline Plane mid_coronal_plane(const Volume3D& v) {
    const std::size_t j = v.dims[1] / 2;
    std::vector<float> values;
    values.reserve(v.dims[0] * v.dims[2]);
    for (std::size_t i = 0; i < v.dims[0]; ++i) {
        for (std::size_t k = 0; k < v.dims[2]; ++k) values.push_back(v(i, j, k));
    }
    return {v.dims[2], v.dims[0], scale_to_u8(values)};
}

inline void write_pgm(const std::filesystem::path& path, const Plane& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P5\n" << p.width << ' ' << p.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace embalign
