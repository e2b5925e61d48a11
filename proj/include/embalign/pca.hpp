#pragma once

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <vector>

#include "embalign/errors.hpp"
#include "embalign/volume.hpp"

namespace embalign {

/// Physical coordinates (mm) of mask voxels, translated to zero mean.
struct PointCloud {
    std::vector<Vec3> points;
    Vec3 origin = Vec3::Zero();  // center of mass the points were shifted by
};

/// Principal axes as matrix columns, ordered by descending singular value.
struct PrincipalFrame {
    Mat3 axes = Mat3::Identity();
    Vec3 singular_values = Vec3::Zero();
    bool degenerate = false;
};

inline constexpr double kDegenerateRatio = 0.98;

inline PointCloud extract_point_cloud(const Mask3D& mask) {
    PointCloud pc;
    Vec3 sum = Vec3::Zero();
    for (std::size_t k = 0; k < mask.dims[2]; ++k) {
        for (std::size_t j = 0; j < mask.dims[1]; ++j) {
            for (std::size_t i = 0; i < mask.dims[0]; ++i) {
                if (!mask(i, j, k)) continue;
                pc.points.push_back(mask.physical(i, j, k));
                sum += pc.points.back();
            }
        }
    }
    if (pc.points.empty()) throw EmptyMaskError("mask has no nonzero voxels");
    pc.origin = sum / static_cast<double>(pc.points.size());
    for (auto& p : pc.points) p -= pc.origin;
    return pc;
}

/// Principal frame from the 3x3 scatter matrix. Each column is sign-fixed so
/// that its largest-magnitude entry is non-negative (lowest row wins ties).
inline PrincipalFrame principal_axes(const PointCloud& pc) {
    if (pc.points.size() < 3) throw DegenerateShapeError("principal_axes: fewer than 3 points");
    Mat3 scatter = Mat3::Zero();
    for (const auto& p : pc.points) scatter.noalias() += p * p.transpose();

    Eigen::SelfAdjointEigenSolver<Mat3> solver(scatter);
    if (solver.info() != Eigen::Success) throw DegenerateShapeError("principal_axes: eigen decomposition failed");

    PrincipalFrame frame;
    for (int c = 0; c < 3; ++c) {
        // eigenvalues are ascending; singular values of the 3xN matrix are their roots
        frame.axes.col(c) = solver.eigenvectors().col(2 - c);
        frame.singular_values[c] = std::sqrt(std::max(0.0, solver.eigenvalues()[2 - c]));
    }
    const double s1 = frame.singular_values[0], s2 = frame.singular_values[1], s3 = frame.singular_values[2];
    if (!(s1 > 0.0) || s2 <= 1e-9 * s1) throw DegenerateShapeError("principal_axes: point cloud is collinear");

    for (int c = 0; c < 3; ++c) {
        int best = 0;
        for (int r = 1; r < 3; ++r) {
            if (std::abs(frame.axes(r, c)) > std::abs(frame.axes(best, c))) best = r;
        }
        if (frame.axes(best, c) < 0.0) frame.axes.col(c) *= -1.0;
    }
    frame.degenerate = s2 / s1 > kDegenerateRatio || s3 / s2 > kDegenerateRatio;
    return frame;
}

/// The four right-handed frames obtained by flipping the first two axes:
/// sign patterns (+,+), (+,-), (-,+), (-,-); the third column is their cross product.
inline std::array<Mat3, 4> candidate_rotations(const PrincipalFrame& frame) {
    static constexpr std::array<std::array<double, 2>, 4> kSigns{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
    std::array<Mat3, 4> out;
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec3 c1 = kSigns[i][0] * frame.axes.col(0);
        const Vec3 c2 = kSigns[i][1] * frame.axes.col(1);
        out[i].col(0) = c1;
        out[i].col(1) = c2;
        out[i].col(2) = c1.cross(c2);
    }
    return out;
}

} // namespace embalign
