#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "embalign/errors.hpp"
#include "embalign/volume.hpp"

namespace embalign {

/// Rigid map between two physical frames. Output point p_out samples the
/// input at rotation^T * (p_out - center_out) + center_in.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 center_in = Vec3::Zero();
    Vec3 center_out = Vec3::Zero();

    RigidTransform() = default;
    RigidTransform(const Mat3& r, const Vec3& cin, const Vec3& cout) : rotation(r), center_in(cin), center_out(cout) {
        check();
    }

    void check() const {
        if (!rotation.allFinite()) throw TransformError("rotation has non-finite entries");
        const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
        if (ortho >= 1e-10) throw TransformError("rotation is not orthogonal (|R^T R - I| = " + std::to_string(ortho) + ")");
        const double det = rotation.determinant();
        if (std::abs(det - 1.0) >= 1e-10) throw TransformError("rotation determinant is " + std::to_string(det));
        if (!center_in.allFinite() || !center_out.allFinite()) throw TransformError("non-finite transform center");
    }
};

inline bool is_rotation(const Mat3& r, double tol = 1e-10) {
    return r.allFinite() && (r.transpose() * r - Mat3::Identity()).norm() < tol && std::abs(r.determinant() - 1.0) < tol;
}

enum class Interp { Trilinear, Nearest };

/// Physical center of an isotropic grid with `dims` voxels of size `spacing`.
inline Vec3 grid_center(const Dims& dims, double spacing) {
    return {0.5 * static_cast<double>(dims[0] - 1) * spacing, 0.5 * static_cast<double>(dims[1] - 1) * spacing,
            0.5 * static_cast<double>(dims[2] - 1) * spacing};
}

namespace resample_detail {

// Samples at continuous voxel index (x, y, z); neighbours outside the grid read as zero.
inline float trilinear(const Volume3D& v, double x, double y, double z) {
    const auto nx = static_cast<double>(v.dims[0]);
    const auto ny = static_cast<double>(v.dims[1]);
    const auto nz = static_cast<double>(v.dims[2]);
    if (!(x > -1.0 && y > -1.0 && z > -1.0 && x < nx && y < ny && z < nz)) return 0.0f;
    const double fx0 = std::floor(x), fy0 = std::floor(y), fz0 = std::floor(z);
    const auto i0 = static_cast<long>(fx0), j0 = static_cast<long>(fy0), k0 = static_cast<long>(fz0);
    const double tx = x - fx0, ty = y - fy0, tz = z - fz0;
    const long sx = static_cast<long>(v.dims[0]), sy = static_cast<long>(v.dims[1]), sz = static_cast<long>(v.dims[2]);
    const float* d = v.data.data();
    if (i0 >= 0 && j0 >= 0 && k0 >= 0 && i0 + 1 < sx && j0 + 1 < sy && k0 + 1 < sz) {
        const long base = i0 + sx * (j0 + sy * k0);
        const long dy = sx, dz = sx * sy;
        const double c00 = d[base] + tx * (d[base + 1] - d[base]);
        const double c10 = d[base + dy] + tx * (d[base + dy + 1] - d[base + dy]);
        const double c01 = d[base + dz] + tx * (d[base + dz + 1] - d[base + dz]);
        const double c11 = d[base + dy + dz] + tx * (d[base + dy + dz + 1] - d[base + dy + dz]);
        const double c0 = c00 + ty * (c10 - c00);
        const double c1 = c01 + ty * (c11 - c01);
        return static_cast<float>(c0 + tz * (c1 - c0));
    }
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        const long i = i0 + (c & 1), j = j0 + ((c >> 1) & 1), k = k0 + ((c >> 2) & 1);
        if (i < 0 || j < 0 || k < 0 || i >= sx || j >= sy || k >= sz) continue;
        const double w = ((c & 1) ? tx : 1.0 - tx) * (((c >> 1) & 1) ? ty : 1.0 - ty) * (((c >> 2) & 1) ? tz : 1.0 - tz);
        acc += w * d[i + sx * (j + sy * k)];
    }
    return static_cast<float>(acc);
}

template <class T>
T nearest(const Volume<T>& v, double x, double y, double z) {
    const double rx = std::floor(x + 0.5), ry = std::floor(y + 0.5), rz = std::floor(z + 0.5);
    if (rx < 0.0 || ry < 0.0 || rz < 0.0) return T{};
    const auto i = static_cast<std::size_t>(rx), j = static_cast<std::size_t>(ry), k = static_cast<std::size_t>(rz);
    if (i >= v.dims[0] || j >= v.dims[1] || k >= v.dims[2]) return T{};
    return v(i, j, k);
}

// Fills an isotropic output grid whose voxel (i, j, k) reads the input at
// continuous index origin + i*step0 + j*step1 + k*step2.
template <class T>
Volume<T> fill_affine(const Volume<T>& in, const Dims& out_dims, double out_spacing, const Vec3& origin,
                      const Vec3& step0, const Vec3& step1, const Vec3& step2, Interp interp) {
    Volume<T> out(out_dims, {out_spacing, out_spacing, out_spacing});
    for (std::size_t k = 0; k < out_dims[2]; ++k) {
        for (std::size_t j = 0; j < out_dims[1]; ++j) {
            Vec3 p = origin + static_cast<double>(j) * step1 + static_cast<double>(k) * step2;
            T* row = out.data.data() + out.index(0, j, k);
            for (std::size_t i = 0; i < out_dims[0]; ++i, p += step0) {
                if constexpr (std::is_same_v<T, float>) {
                    row[i] = interp == Interp::Trilinear ? trilinear(in, p[0], p[1], p[2]) : nearest(in, p[0], p[1], p[2]);
                } else {
                    row[i] = nearest(in, p[0], p[1], p[2]);
                }
            }
        }
    }
    return out;
}

// Continuous-index coordinates of physical point p in grid v.
template <class T>
Vec3 to_index(const Volume<T>& v, const Vec3& p) {
    return {p[0] / v.spacing[0], p[1] / v.spacing[1], p[2] / v.spacing[2]};
}

} // namespace resample_detail

/// Backward-mapped rigid resampling onto an isotropic grid with spacing
/// equal to the smallest input spacing. Samples outside the input are 0.
/// Masks (uint8) are always resampled with nearest neighbour.
template <class T>
Volume<T> resample_rigid(const Volume<T>& vol, const RigidTransform& t, const Dims& out_dims, Interp interp) {
    t.check();
    if constexpr (!std::is_same_v<T, float>) {
        if (interp == Interp::Trilinear) throw ArgumentError("trilinear interpolation requires a float volume");
    }
    const double s = vol.min_spacing();
    const Mat3 inv = t.rotation.transpose();
    // p_in(i,j,k) = inv * ((i,j,k)*s - center_out) + center_in
    const Vec3 origin = resample_detail::to_index(vol, t.center_in - inv * t.center_out);
    const Vec3 step0 = resample_detail::to_index(vol, inv.col(0) * s);
    const Vec3 step1 = resample_detail::to_index(vol, inv.col(1) * s);
    const Vec3 step2 = resample_detail::to_index(vol, inv.col(2) * s);
    return resample_detail::fill_affine(vol, out_dims, s, origin, step0, step1, step2, interp);
}

/// Isotropic zoom about `center`: output point p_out samples the input at
/// center + (p_out - out_center) / zoom, trilinear, zero fill. The output
/// spacing defaults to the smallest input spacing.
inline Volume3D rescale_iso(const Volume3D& vol, double zoom, const Dims& out_dims, const Vec3& center,
                            std::optional<double> out_spacing = std::nullopt) {
    if (!(zoom > 0.0) || !std::isfinite(zoom)) throw ArgumentError("rescale_iso: zoom must be positive and finite");
    const double s = out_spacing.value_or(vol.min_spacing());
    if (!(s > 0.0) || !std::isfinite(s)) throw ArgumentError("rescale_iso: output spacing must be positive");
    const Vec3 oc = grid_center(out_dims, s);
    const Vec3 origin = resample_detail::to_index(vol, center - oc / zoom);
    const double step = s / zoom;
    const Vec3 step0 = resample_detail::to_index(vol, Vec3(step, 0, 0));
    const Vec3 step1 = resample_detail::to_index(vol, Vec3(0, step, 0));
    const Vec3 step2 = resample_detail::to_index(vol, Vec3(0, 0, step));
    return resample_detail::fill_affine(vol, out_dims, s, origin, step0, step1, step2, Interp::Trilinear);
}

/// The axis2 = `slice` plane of rescale_iso(vol, zoom, (n0, n1, n2), center, spacing),
/// computed without materializing the full output. Row-major: axis0 outer, axis1 inner.
inline std::vector<float> rescale_iso_slice(const Volume3D& vol, double zoom, const Dims& out_dims, const Vec3& center,
                                            std::size_t slice, std::optional<double> out_spacing = std::nullopt) {
    if (!(zoom > 0.0) || !std::isfinite(zoom)) throw ArgumentError("rescale_iso: zoom must be positive and finite");
    if (slice >= out_dims[2]) throw ArgumentError("rescale_iso_slice: slice index out of range");
    const double s = out_spacing.value_or(vol.min_spacing());
    const Vec3 oc = grid_center(out_dims, s);
    const double step = s / zoom;
    std::vector<float> out(out_dims[0] * out_dims[1]);
    const double z = (center[2] + (static_cast<double>(slice) * s - oc[2]) / zoom) / vol.spacing[2];
    for (std::size_t i = 0; i < out_dims[0]; ++i) {
        const double x = (center[0] + (static_cast<double>(i) * s - oc[0]) / zoom) / vol.spacing[0];
        for (std::size_t j = 0; j < out_dims[1]; ++j) {
            const double y = (center[1] - oc[1] / zoom + static_cast<double>(j) * step) / vol.spacing[1];
            out[i * out_dims[1] + j] = resample_detail::trilinear(vol, x, y, z);
        }
    }
    return out;
}

} // namespace embalign
