#pragma once

// Synthetic embryo-like phantoms: a tapered tube swept along a circular arc,
// voxelized in a random pose with known ground truth.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "embalign/candidates.hpp"
#include "embalign/errors.hpp"
#include "embalign/nrrd.hpp"
#include "embalign/parallel.hpp"
#include "embalign/rng.hpp"
#include "embalign/selectors.hpp"
#include "embalign/volume.hpp"

namespace embalign {

inline constexpr double kPhantomSpacing = 0.5;
inline constexpr double kPhantomMargin = 0.2;
inline constexpr int kMinWeek = 7;
inline constexpr int kMaxWeek = 12;

/// Representative crown-rump length (mm) per gestational week.
inline double crl_for_week(int week) {
    static constexpr std::array<double, 6> kCrl{10.0, 16.0, 23.0, 31.0, 41.0, 53.0};
    if (week < kMinWeek || week > kMaxWeek) throw ArgumentError("week must be in 7..12, got " + std::to_string(week));
    return kCrl[static_cast<std::size_t>(week - kMinWeek)];
}

struct PhantomSpec {
    int week = 9;
    double crl_mm = 23.0;
    double arc_angle_deg = 120.0;
    double head_bulge_ratio = 1.6;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    static PhantomSpec for_week(int week, std::uint64_t seed, double noise = 0.0) {
        PhantomSpec s;
        s.week = week;
        s.crl_mm = crl_for_week(week);
        s.noise_sigma = noise;
        s.seed = seed;
        return s;
    }

    void check() const {
        if (week < kMinWeek || week > kMaxWeek) throw ArgumentError("phantom week must be in 7..12");
        if (!(crl_mm > 0.0) || !std::isfinite(crl_mm)) throw ArgumentError("phantom crl_mm must be positive");
        if (!(arc_angle_deg > 30.0 && arc_angle_deg < 180.0)) throw ArgumentError("phantom arc angle must be in (30, 180)");
        if (!(head_bulge_ratio > 1.0) || !std::isfinite(head_bulge_ratio)) throw ArgumentError("head bulge ratio must be > 1");
        if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ArgumentError("noise sigma must be >= 0");
    }
};

/// Shape variation drawn from the seed: arc angle +-10 degrees, head bulge +-0.2.
inline PhantomSpec jittered(PhantomSpec spec, std::uint64_t jitter_seed, std::uint64_t stream = 1) {
    Pcg32 rng(jitter_seed, stream);
    spec.arc_angle_deg += rng.uniform(-10.0, 10.0);
    spec.head_bulge_ratio += rng.uniform(-0.2, 0.2);
    return spec;
}

struct PhantomSample {
    Volume3D image;
    Mask3D mask;
    Mat3 truth_rotation = Mat3::Identity();  // canonical pose -> scanned pose
    PhantomSpec spec;
};

/// Uniform rotation: normalized quaternion from four seeded standard normals.
inline Mat3 random_rotation(std::uint64_t seed) {
    Pcg32 rng(seed, 0);
    Eigen::Quaterniond q;
    double norm = 0.0;
    do {
        q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        norm = q.norm();
    } while (norm < 1e-12);
    q.coeffs() /= norm;
    Mat3 r = q.toRotationMatrix();
    // re-orthonormalize to keep |R^T R - I| well below 1e-10
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    return r;
}

/// Canonical body: arc in the axis0-axis1 plane, chord along axis0 with the
/// head end at -crl/2, concave side (face) toward -axis1. Coordinates are
/// relative to the chord midpoint.
class ArcTube {
public:
    explicit ArcTube(const PhantomSpec& spec) {
        half_ = 0.5 * spec.arc_angle_deg * std::numbers::pi / 180.0;
        radius_ = 0.5 * spec.crl_mm / std::sin(half_);
        center_y_ = -radius_ * std::cos(half_);
        rump_r_ = spec.crl_mm / 8.0;
        head_r_ = spec.head_bulge_ratio * rump_r_;
        sagitta_ = radius_ + center_y_;
    }

    /// Tube radius at arc parameter t in [0, 1] (0 = head).
    double tube_radius(double t) const { return head_r_ + (rump_r_ - head_r_) * t; }

    Vec3 centerline(double t) const {
        const double phi = -half_ + 2.0 * half_ * t;
        return {radius_ * std::sin(phi), center_y_ + radius_ * std::cos(phi), 0.0};
    }

    bool inside(const Vec3& p) const {
        const double qx = p[0], qy = p[1] - center_y_;
        const double phi = std::atan2(qx, qy);
        double dist2 = 0.0, t = 0.0;
        if (phi >= -half_ && phi <= half_) {
            const double rho = std::sqrt(qx * qx + qy * qy) - radius_;
            dist2 = rho * rho + p[2] * p[2];
            t = (phi + half_) / (2.0 * half_);
        } else {
            t = phi < 0.0 ? 0.0 : 1.0;
            dist2 = (p - centerline(t)).squaredNorm();
        }
        const double r = tube_radius(t);
        return dist2 <= r * r;
    }

    /// Point the voxel grid is centered on: halfway between chord and apex.
    Vec3 anchor() const { return {0.0, 0.5 * sagitta_, 0.0}; }

    double bounding_radius() const {
        const Vec3 a = anchor();
        double r = 0.0;
        for (int s = 0; s <= 512; ++s) {
            const double t = s / 512.0;
            r = std::max(r, (centerline(t) - a).norm() + tube_radius(t));
        }
        return r;
    }

private:
    double half_ = 0.0, radius_ = 0.0, center_y_ = 0.0, rump_r_ = 0.0, head_r_ = 0.0, sagitta_ = 0.0;
};

struct PhantomOptions {
    bool identity_pose = false;  // test hook: skip the random pose
};

inline PhantomSample generate_phantom(const PhantomSpec& spec, const PhantomOptions& options = {}) {
    spec.check();
    PhantomSample sample;
    sample.spec = spec;
    sample.truth_rotation = options.identity_pose ? Mat3::Identity() : random_rotation(spec.seed);

    const ArcTube body(spec);
    const double bound = body.bounding_radius();
    const auto n = static_cast<std::size_t>(std::ceil(2.0 * bound * (1.0 + kPhantomMargin) / kPhantomSpacing));
    const Dims dims{n, n, n};
    const Spacing spacing{kPhantomSpacing, kPhantomSpacing, kPhantomSpacing};
    sample.image = Volume3D(dims, spacing);
    sample.mask = Mask3D(dims, spacing);

    // voxel p (world) sits at anchor + R^T (p - grid center) in the canonical frame
    const Mat3 inv = sample.truth_rotation.transpose();
    const Vec3 gc = sample.mask.center();
    const Vec3 anchor = body.anchor();
    const Vec3 step0 = inv.col(0) * kPhantomSpacing;
    const double bound2 = bound * bound;
    Pcg32 noise(spec.seed, 2);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            Vec3 p = anchor + inv * (sample.mask.physical(0, j, k) - gc);
            const std::size_t row = sample.mask.index(0, j, k);
            for (std::size_t i = 0; i < n; ++i, p += step0) {
                const bool in = (p - anchor).squaredNorm() <= bound2 && body.inside(p);
                double value = in ? 1.0 : 0.0;
                if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise.normal();
                // interior stays strictly positive so the mask is inside the image support
                value = in ? std::max(value, 1e-3) : std::max(value, 0.0);
                sample.image.data[row + i] = static_cast<float>(value);
                sample.mask.data[row + i] = in ? 1 : 0;
            }
        }
    }
    return sample;
}

// ---------------------------------------------------------------------------
// datasets

struct ManifestRow {
    int id = 0;
    int week = 0;
    std::uint64_t seed = 0;
    Mat3 truth_rotation = Mat3::Identity();
    std::string image;
    std::string mask;
};

inline std::vector<double> row_major(const Mat3& m) {
    std::vector<double> out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
    }
    return out;
}

inline Mat3 from_row_major(const std::vector<double>& v) {
    if (v.size() != 9) throw ParseError("rotation must have 9 entries");
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m(r, c) = v[static_cast<std::size_t>(3 * r + c)];
    }
    return m;
}

/// Phantom parameters for dataset sample `seed`: week geometry plus seeded shape jitter.
inline PhantomSpec dataset_spec(int week, std::uint64_t seed, double noise) {
    return jittered(PhantomSpec::for_week(week, seed, noise), seed);
}

inline std::string case_name(int id) {
    std::string s = std::to_string(id);
    return "case_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// Writes count_per_week phantoms for every week plus manifest.json.
/// Sample seeds are base_seed + sequential index.
inline std::vector<ManifestRow> generate_dataset(std::size_t count_per_week, const std::vector<int>& weeks,
                                                 std::uint64_t base_seed, const std::filesystem::path& out_dir,
                                                 double noise_sigma, unsigned threads = 1) {
    std::filesystem::create_directories(out_dir);
    std::vector<ManifestRow> rows;
    for (int w : weeks) {
        crl_for_week(w);
        for (std::size_t c = 0; c < count_per_week; ++c) {
            ManifestRow row;
            row.id = static_cast<int>(rows.size());
            row.week = w;
            row.seed = base_seed + static_cast<std::uint64_t>(row.id);
            row.image = case_name(row.id) + "_image.nrrd";
            row.mask = case_name(row.id) + "_mask.nrrd";
            rows.push_back(row);
        }
    }
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        auto& row = rows[i];
        const auto sample = generate_phantom(dataset_spec(row.week, row.seed, noise_sigma));
        row.truth_rotation = sample.truth_rotation;
        write_volume(out_dir / row.image, sample.image);
        write_volume(out_dir / row.mask, sample.mask);
    });

    nlohmann::json samples = nlohmann::json::array();
    for (const auto& r : rows) {
        samples.push_back({{"id", r.id},
                           {"week", r.week},
                           {"seed", r.seed},
                           {"truth_rotation", row_major(r.truth_rotation)},
                           {"paths", {{"image", r.image}, {"mask", r.mask}}}});
    }
    const nlohmann::json manifest{{"noise_sigma", noise_sigma}, {"samples", samples}};
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + (out_dir / "manifest.json").string());
    return rows;
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("dataset has no manifest: " + path.string());
    std::vector<ManifestRow> rows;
    try {
        nlohmann::json j;
        in >> j;
        for (const auto& s : j.at("samples")) {
            ManifestRow r;
            r.id = s.at("id").get<int>();
            r.week = s.at("week").get<int>();
            r.seed = s.at("seed").get<std::uint64_t>();
            r.truth_rotation = from_row_major(s.at("truth_rotation").get<std::vector<double>>());
            r.image = s.at("paths").at("image").get<std::string>();
            r.mask = s.at("paths").at("mask").get<std::string>();
            rows.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return rows;
}

// ---------------------------------------------------------------------------
// atlases

inline constexpr int kAtlasSubjects = 8;
inline constexpr int kAtlasFirstWeek = 8;
inline constexpr int kAtlasLastWeek = 12;

/// Index of the candidate whose alignment is closest to the identity, i.e.
/// the one in standard orientation for a phantom in canonical pose.
inline std::size_t closest_to_identity(const CandidateSet& set) {
    std::size_t best = 0;
    double best_trace = -4.0;
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        const double tr = set.rotations[i].trace();
        if (tr > best_trace) {
            best_trace = tr;
            best = i;
        }
    }
    return best;
}

/// Phantom parameters of atlas subject `subject` (1-based) at `week`; the shape jitter is
/// per subject so one subject is consistent across weeks.
inline PhantomSpec atlas_spec(int subject, int week, std::uint64_t seed) {
    return jittered(PhantomSpec::for_week(week, seed), seed, 100 + static_cast<std::uint64_t>(subject));
}

/// 8 subjects x weeks 8..12 noiseless phantoms in standard orientation,
/// EV-normalized onto 64^3 matching grids.
inline std::vector<AtlasEntry> build_phantom_atlases(std::uint64_t seed, unsigned threads = 1) {
    struct Source {
        int subject = 0, week = 0;
        Volume3D candidate;
        double ev = 0.0;
        double half_extent = 0.0;
    };
    std::vector<Source> sources;
    for (int s = 1; s <= kAtlasSubjects; ++s) {
        for (int w = kAtlasFirstWeek; w <= kAtlasLastWeek; ++w) sources.push_back({s, w, {}, 0.0, 0.0});
    }
    parallel_for(sources.size(), threads, [&](std::size_t i) {
        auto& src = sources[i];
        const auto sample = generate_phantom(atlas_spec(src.subject, src.week, seed), {.identity_pose = true});
        auto set = generate_candidates(sample.image, sample.mask);
        const std::size_t standard = closest_to_identity(set);
        src.candidate = std::move(set.volumes[standard]);
        src.ev = embryonic_volume(sample.mask);
        const Vec3 c = src.candidate.center();
        for (std::size_t k = 0; k < src.candidate.dims[2]; ++k) {
            for (std::size_t jj = 0; jj < src.candidate.dims[1]; ++jj) {
                for (std::size_t ii = 0; ii < src.candidate.dims[0]; ++ii) {
                    if (src.candidate(ii, jj, k) == 0.0f) continue;
                    src.half_extent = std::max(src.half_extent, (src.candidate.physical(ii, jj, k) - c).cwiseAbs().maxCoeff());
                }
            }
        }
        src.half_extent += src.candidate.min_spacing();
    });

    std::vector<AtlasEntry> atlases(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        atlases[i].subject_id = sources[i].subject;
        atlases[i].week = sources[i].week;
        atlases[i].ev = sources[i].ev;
    }
    const double median = median_ev(atlases);
    // shared matching grid: the largest normalized embryo fills ~87% of the window
    double grid = 0.0;
    for (const auto& src : sources) grid = std::max(grid, src.half_extent * atlas_zoom(median, src.ev));
    grid *= 1.15 / (0.5 * static_cast<double>(kAtlasSide) - 1.0);

    parallel_for(sources.size(), threads, [&](std::size_t i) {
        const double zoom = atlas_zoom(median, sources[i].ev);
        atlases[i].volume = atlas_view(sources[i].candidate, zoom, grid);
        const double physical = grid / zoom;
        atlases[i].volume.spacing = {physical, physical, physical};
        atlases[i].ev = atlas_volume_ev(atlases[i].volume);
    });
    return atlases;
}

} // namespace embalign
