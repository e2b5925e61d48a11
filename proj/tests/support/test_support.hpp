#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "embalign/embalign.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using embalign::Dims;
using embalign::Mask3D;
using embalign::Spacing;
using embalign::Vec3;
using embalign::Volume3D;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("embalign_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

/// Ellipsoid mask with semi-axes (a, b, c) mm about the grid center.
inline Mask3D ellipsoid_mask(const Dims& dims, double spacing, const Vec3& semi, const embalign::Mat3& pose = embalign::Mat3::Identity()) {
    Mask3D m(dims, {spacing, spacing, spacing});
    const Vec3 c = m.center();
    const embalign::Mat3 inv = pose.transpose();
    for (std::size_t k = 0; k < dims[2]; ++k)
        for (std::size_t j = 0; j < dims[1]; ++j)
            for (std::size_t i = 0; i < dims[0]; ++i) {
                const Vec3 q = inv * (m.physical(i, j, k) - c);
                const double r = (q.array() / semi.array()).square().sum();
                m(i, j, k) = r <= 1.0 ? 1 : 0;
            }
    return m;
}

inline Volume3D to_image(const Mask3D& m, float inside = 1.0f) {
    Volume3D v(m.dims, m.spacing);
    for (std::size_t i = 0; i < m.data.size(); ++i) v.data[i] = m.data[i] ? inside : 0.0f;
    return v;
}

inline Volume3D random_volume(const Dims& dims, const Spacing& spacing, std::uint64_t seed) {
    embalign::Pcg32 rng(seed, 9);
    Volume3D v(dims, spacing);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(-3.0, 3.0));
    return v;
}

} // namespace testing_support
