#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "embalign/parallel.hpp"
#include "embalign/pca.hpp"
#include "embalign/resample.hpp"
#include "embalign/volume.hpp"

namespace embalign {

inline constexpr std::size_t kCandidateCount = 4;
inline constexpr std::size_t kDefaultCandidate = 3;  // (-,-) sign pattern

/// The four sign-resolved principal frames of a mask and the image/mask
/// resampled into each of them. Candidate axis0/1/2 follow PC1/PC2/PC3.
struct CandidateSet {
    std::array<Mat3, kCandidateCount> rotations;  // columns = signed principal axes (world frame)
    std::array<Volume3D, kCandidateCount> volumes;
    std::array<Mask3D, kCandidateCount> masks;
    PrincipalFrame source_frame;
    PointCloud cloud;
    double source_ev = 0.0;
    std::size_t default_index = kDefaultCandidate;
    std::vector<std::string> notes;

    /// World-to-candidate rotation applied to the image.
    Mat3 alignment(std::size_t i) const { return rotations.at(i).transpose(); }
};

/// Side of the cubic candidate grid: next even voxel count that holds the mask
/// support under any rotation about its center of mass.
inline std::size_t candidate_grid_side(const PointCloud& pc, const Spacing& spacing) {
    const double s = std::min({spacing[0], spacing[1], spacing[2]});
    const double smax = std::max({spacing[0], spacing[1], spacing[2]});
    double r2 = 0.0;
    for (const auto& p : pc.points) r2 = std::max(r2, p.squaredNorm());
    const double margin = 2.0 * (smax / s + 1.0);
    auto n = static_cast<std::size_t>(std::ceil(2.0 * std::sqrt(r2) / s + margin));
    if (n % 2) ++n;
    return n;
}

inline std::size_t default_candidate(const CandidateSet& set) { return set.default_index; }

inline CandidateSet generate_candidates(const Volume3D& image, const Mask3D& mask, unsigned threads = 1) {
    if (!same_geometry(image, mask)) throw ShapeError("generate_candidates: image and mask geometry differ");
    CandidateSet set;
    set.cloud = extract_point_cloud(mask);
    set.source_frame = principal_axes(set.cloud);
    set.rotations = candidate_rotations(set.source_frame);
    set.source_ev = embryonic_volume(mask);
    if (set.source_frame.degenerate) {
        set.notes.push_back("DegenerateWarning: near-equal singular values, candidate order is ambiguous");
    }

    const Volume3D masked = apply_mask(image, mask);
    const std::size_t side = candidate_grid_side(set.cloud, mask.spacing);
    const Dims dims{side, side, side};
    const Vec3 out_center = grid_center(dims, mask.min_spacing());

    parallel_for(kCandidateCount, threads, [&](std::size_t i) {
        const RigidTransform t(set.alignment(i), set.cloud.origin, out_center);
        set.volumes[i] = resample_rigid(masked, t, dims, Interp::Trilinear);
        set.masks[i] = resample_rigid(mask, t, dims, Interp::Nearest);
    });
    return set;
}

} // namespace embalign
