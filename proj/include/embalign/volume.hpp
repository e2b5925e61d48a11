#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "embalign/errors.hpp"

namespace embalign {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

/// Dense 3D grid with axis0 varying fastest. Voxel (i, j, k) sits at the
/// physical point (i*sx, j*sy, k*sz) in millimeters.
template <class T>
struct Volume {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<T> data;

    Volume() = default;
    Volume(Dims d, Spacing s, T fill = T{})
        : dims(d), spacing(s), data(d[0] * d[1] * d[2], fill) {}

    std::size_t size() const noexcept { return dims[0] * dims[1] * dims[2]; }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return i + dims[0] * (j + dims[1] * k);
    }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept { return data[index(i, j, k)]; }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data[index(i, j, k)];
    }

    Vec3 physical(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return {static_cast<double>(i) * spacing[0], static_cast<double>(j) * spacing[1],
                static_cast<double>(k) * spacing[2]};
    }

    /// Physical center of the grid, i.e. the midpoint between the first and last voxel.
    Vec3 center() const noexcept {
        return {0.5 * static_cast<double>(dims[0] - 1) * spacing[0],
                0.5 * static_cast<double>(dims[1] - 1) * spacing[1],
                0.5 * static_cast<double>(dims[2] - 1) * spacing[2]};
    }

    double voxel_volume() const noexcept { return spacing[0] * spacing[1] * spacing[2]; }
    double min_spacing() const noexcept { return std::min({spacing[0], spacing[1], spacing[2]}); }
};

using Volume3D = Volume<float>;
using Mask3D = Volume<std::uint8_t>;

template <class A, class B>
bool same_geometry(const Volume<A>& a, const Volume<B>& b) {
    return a.dims == b.dims && a.spacing == b.spacing;
}

/// Throws ArgumentError unless dims, spacing and payload satisfy the grid invariants.
template <class T>
void validate_geometry(const Volume<T>& v) {
    for (std::size_t d : v.dims) {
        if (d == 0) throw ArgumentError("volume dims must be positive");
    }
    for (double s : v.spacing) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ArgumentError("volume spacing must be positive and finite");
    }
    if (v.data.size() != v.size()) throw ArgumentError("volume data length does not match dims");
}

inline void validate(const Volume3D& v) {
    validate_geometry(v);
    for (float x : v.data) {
        if (!std::isfinite(x)) throw ArgumentError("volume contains non-finite intensity");
    }
}

inline void validate(const Mask3D& m) {
    validate_geometry(m);
    for (std::uint8_t x : m.data) {
        if (x > 1) throw MaskValueError("mask value " + std::to_string(int{x}) + " is not 0 or 1");
    }
}

inline std::size_t count_nonzero(const Mask3D& m) {
    return static_cast<std::size_t>(std::count_if(m.data.begin(), m.data.end(), [](std::uint8_t x) { return x != 0; }));
}

/// Mean physical coordinate of the nonzero voxels.
inline Vec3 center_of_mass(const Mask3D& m) {
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
    for (std::size_t k = 0; k < m.dims[2]; ++k) {
        for (std::size_t j = 0; j < m.dims[1]; ++j) {
            const std::size_t row = m.index(0, j, k);
            for (std::size_t i = 0; i < m.dims[0]; ++i) {
                if (m.data[row + i]) {
                    sum += Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
                    ++n;
                }
            }
        }
    }
    if (n == 0) throw EmptyMaskError("center_of_mass: mask has no nonzero voxels");
    sum /= static_cast<double>(n);
    return {sum[0] * m.spacing[0], sum[1] * m.spacing[1], sum[2] * m.spacing[2]};
}

/// Segmented volume in mm^3. An empty mask measures 0.
inline double embryonic_volume(const Mask3D& m) {
    return static_cast<double>(count_nonzero(m)) * m.voxel_volume();
}

/// Image with every voxel outside the mask set to zero.
inline Volume3D apply_mask(const Volume3D& image, const Mask3D& mask) {
    if (!same_geometry(image, mask)) throw ShapeError("image and mask geometry differ");
    Volume3D out = image;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (!mask.data[i]) out.data[i] = 0.0f;
    }
    return out;
}

/// Binary mask of voxels strictly above `level`.
inline Mask3D threshold(const Volume3D& v, float level) {
    Mask3D m(v.dims, v.spacing);
    for (std::size_t i = 0; i < v.data.size(); ++i) m.data[i] = v.data[i] > level ? 1 : 0;
    return m;
}

} // namespace embalign
