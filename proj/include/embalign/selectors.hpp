#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "embalign/candidates.hpp"
#include "embalign/errors.hpp"
#include "embalign/forest.hpp"
#include "embalign/nrrd.hpp"
#include "embalign/parallel.hpp"
#include "embalign/resample.hpp"
#include "embalign/similarity.hpp"

namespace embalign {

enum class Selector { Pearson, Atlas, Forest };

inline const char* to_string(Selector s) {
    switch (s) {
    case Selector::Pearson: return "pearson";
    case Selector::Atlas: return "atlas";
    case Selector::Forest: return "forest";
    }
    return "?";
}

struct SelectorVerdict {
    Selector selector = Selector::Pearson;
    std::optional<std::size_t> choice;  // nullopt = abstain
    std::array<double, kCandidateCount> scores{};
    std::vector<std::string> notes;
};

/// Lowest index whose score lies within `tol` of the maximum; nullopt when no
/// score is finite.
inline std::optional<std::size_t> argmax_lowest(const std::array<double, kCandidateCount>& scores, double tol) {
    double best = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (std::isfinite(s)) best = std::max(best, s);
    }
    if (!std::isfinite(best)) return std::nullopt;
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        if (std::isfinite(scores[i]) && scores[i] >= best - tol) return i;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pearson heuristic

/// Candidate cloud with the smallest axis dropped. u runs along PC2 (the
/// facing axis, face toward -u); v is the display "up" direction, which is
/// -PC1 because standard orientation puts the head toward -axis0.
struct Silhouette2D {
    std::vector<double> u;
    std::vector<double> v;
};

inline Silhouette2D project_silhouette(const PointCloud& pc, const Mat3& rotation) {
    Silhouette2D s;
    s.u.reserve(pc.points.size());
    s.v.reserve(pc.points.size());
    const Vec3 up = -rotation.col(0);
    const Vec3 facing = rotation.col(1);
    for (const auto& p : pc.points) {
        s.u.push_back(p.dot(facing));
        s.v.push_back(p.dot(up));
    }
    return s;
}

inline Silhouette2D project_silhouette(const Mask3D& mask, const Mat3& rotation) {
    return project_silhouette(extract_point_cloud(mask), rotation);
}

struct SectionCorrelation {
    std::optional<double> r_top;
    std::optional<double> r_bottom;
};

/// Pearson r of (u, v) in the top (v > 0) and bottom (v <= 0) halves.
inline SectionCorrelation section_correlations(const Silhouette2D& s) {
    std::vector<double> tu, tv, bu, bv;
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        if (s.v[i] > 0.0) {
            tu.push_back(s.u[i]);
            tv.push_back(s.v[i]);
        } else {
            bu.push_back(s.u[i]);
            bv.push_back(s.v[i]);
        }
    }
    SectionCorrelation out;
    try {
        out.r_top = pearson_r(tu, tv);
    } catch (const DegenerateInputError&) {
    } catch (const ArgumentError&) {
    }
    try {
        out.r_bottom = pearson_r(bu, bv);
    } catch (const DegenerateInputError&) {
    } catch (const ArgumentError&) {
    }
    return out;
}

inline SelectorVerdict pearson_heuristic(const CandidateSet& set) {
    SelectorVerdict verdict;
    verdict.selector = Selector::Pearson;
    std::array<double, kCandidateCount> margin{};
    std::array<bool, kCandidateCount> pass{};
    std::size_t degenerate = 0;
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        const auto rs = section_correlations(project_silhouette(set.cloud, set.rotations[i]));
        if (!rs.r_top || !rs.r_bottom) {
            ++degenerate;
            pass[i] = false;
            verdict.scores[i] = -std::numeric_limits<double>::infinity();
            verdict.notes.push_back("candidate " + std::to_string(i) + ": degenerate section correlation");
            continue;
        }
        margin[i] = std::abs(*rs.r_bottom) - std::abs(*rs.r_top);
        pass[i] = std::abs(*rs.r_bottom) > std::abs(*rs.r_top) && *rs.r_bottom > 0.0;
        verdict.scores[i] = pass[i] ? std::abs(margin[i]) : -std::abs(margin[i]);
    }
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        if (pass[i] && (!best || margin[i] > margin[*best])) best = i;
    }
    verdict.choice = best;
    if (!best) {
        verdict.notes.push_back(degenerate == kCandidateCount ? "abstain: every candidate is degenerate"
                                                              : "abstain: no candidate passes");
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// atlas matching

inline constexpr std::size_t kAtlasSide = 64;

/// Reference volume in standard orientation at 64^3. The stored spacing is
/// physical (mm in the atlas subject), so the thresholded volume reproduces ev.
struct AtlasEntry {
    int subject_id = 0;
    int week = 0;
    Volume3D volume;
    double ev = 0.0;
};

inline const AtlasEntry& best_atlas(const std::vector<AtlasEntry>& atlases, double ev) {
    if (atlases.empty()) throw ArgumentError("best_atlas: no atlases");
    const AtlasEntry* best = &atlases.front();
    for (const auto& a : atlases) {
        const double da = std::abs(a.ev - ev), db = std::abs(best->ev - ev);
        if (da < db || (da == db && (a.week < best->week || (a.week == best->week && a.subject_id < best->subject_id)))) {
            best = &a;
        }
    }
    return *best;
}

/// Median atlas EV; mean of the middle two for even counts.
inline double median_ev(const std::vector<AtlasEntry>& atlases) {
    if (atlases.empty()) throw ArgumentError("median_ev: no atlases");
    std::vector<double> evs;
    for (const auto& a : atlases) evs.push_back(a.ev);
    std::sort(evs.begin(), evs.end());
    const std::size_t n = evs.size();
    return n % 2 ? evs[n / 2] : 0.5 * (evs[n / 2 - 1] + evs[n / 2]);
}

/// Zoom that brings an embryo of volume `ev` to the median atlas size.
inline double atlas_zoom(double median, double ev) {
    if (!(ev > 0.0) || !(median > 0.0)) throw ArgumentError("atlas zoom needs positive EVs");
    return std::cbrt(median / ev);
}

/// Voxel size of the EV-normalized matching grid shared by all atlases.
inline double atlas_grid_spacing(const AtlasEntry& a, double median) {
    return a.volume.min_spacing() * atlas_zoom(median, a.ev);
}

/// Candidate resampled to the atlas matching grid about its grid center.
inline Volume3D atlas_view(const Volume3D& candidate, double zoom, double grid_spacing) {
    return rescale_iso(candidate, zoom, {kAtlasSide, kAtlasSide, kAtlasSide}, candidate.center(), grid_spacing);
}

inline SelectorVerdict atlas_select(const CandidateSet& set, const std::vector<AtlasEntry>& atlases, unsigned threads = 1) {
    SelectorVerdict verdict;
    verdict.selector = Selector::Atlas;
    if (!(set.source_ev > 0.0)) throw ArgumentError("atlas_select: source EV must be positive");
    const double median = median_ev(atlases);
    const double zoom = atlas_zoom(median, set.source_ev);
    const AtlasEntry& atlas = best_atlas(atlases, set.source_ev);
    const double grid = atlas_grid_spacing(atlas, median);
    verdict.notes.push_back("atlas subject" + std::to_string(atlas.subject_id) + "_week" + std::to_string(atlas.week));
    parallel_for(kCandidateCount, threads, [&](std::size_t i) {
        try {
            verdict.scores[i] = ncc(atlas_view(set.volumes[i], zoom, grid), atlas.volume);
        } catch (const DegenerateInputError&) {
            verdict.scores[i] = -std::numeric_limits<double>::infinity();
        }
    });
    verdict.choice = argmax_lowest(verdict.scores, 1e-9);
    if (!verdict.choice) verdict.notes.push_back("abstain: every candidate is degenerate after rescale");
    return verdict;
}

inline std::filesystem::path atlas_filename(int subject_id, int week) {
    return "subject" + std::to_string(subject_id) + "_week" + std::to_string(week) + ".nrrd";
}

/// Mask-thresholded EV of a stored atlas volume.
inline double atlas_volume_ev(const Volume3D& v) { return embryonic_volume(threshold(v, 0.5f)); }

inline void write_atlases(const std::filesystem::path& dir, const std::vector<AtlasEntry>& atlases) {
    std::filesystem::create_directories(dir);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& a : atlases) {
        const auto name = atlas_filename(a.subject_id, a.week);
        write_volume(dir / name, a.volume);
        entries.push_back({{"subject_id", a.subject_id}, {"week", a.week}, {"ev", a.ev}, {"path", name.string()}});
    }
    std::ofstream out(dir / "index.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "index.json").string());
    out << nlohmann::json{{"entries", entries}}.dump(2) << '\n';
}

inline std::vector<AtlasEntry> load_atlases(const std::filesystem::path& dir) {
    const auto index_path = dir / "index.json";
    std::ifstream in(index_path);
    if (!in) throw IoError("cannot open " + index_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(index_path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array() || j["entries"].empty()) {
        throw ParseError(index_path.string() + ": expected a non-empty 'entries' array");
    }
    std::vector<AtlasEntry> atlases;
    for (const auto& e : j["entries"]) {
        AtlasEntry a;
        try {
            a.subject_id = e.at("subject_id").get<int>();
            a.week = e.at("week").get<int>();
            a.ev = e.at("ev").get<double>();
            a.volume = read_image(dir / e.at("path").get<std::string>());
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(index_path.string() + ": bad entry: " + ex.what());
        }
        if (a.volume.dims != Dims{kAtlasSide, kAtlasSide, kAtlasSide}) {
            throw ShapeError("atlas subject" + std::to_string(a.subject_id) + " is not 64^3");
        }
        if (!(a.ev > 0.0)) throw ParseError("atlas EV must be positive");
        const double stored = atlas_volume_ev(a.volume);
        if (std::abs(stored - a.ev) > 0.01 * a.ev) {
            throw ParseError("atlas subject" + std::to_string(a.subject_id) + "_week" + std::to_string(a.week) +
                             ": index EV " + std::to_string(a.ev) + " disagrees with stored volume EV " +
                             std::to_string(stored));
        }
        atlases.push_back(std::move(a));
    }
    return atlases;
}

// ---------------------------------------------------------------------------
// forest

inline SelectorVerdict forest_select(const CandidateFeatures& features, const ForestModel& model) {
    if (model.feature_len != kFeatureLen) {
        throw ModelShapeError("forest_select: model expects " + std::to_string(model.feature_len) + " features, slices have " +
                              std::to_string(kFeatureLen));
    }
    SelectorVerdict verdict;
    verdict.selector = Selector::Forest;
    for (std::size_t i = 0; i < kCandidateCount; ++i) verdict.scores[i] = predict_proba(model, features[i]);
    verdict.choice = argmax_lowest(verdict.scores, 0.0);
    return verdict;
}

inline SelectorVerdict forest_select(const CandidateSet& set, const ForestModel& model) {
    return forest_select(candidate_features(set), model);
}

// ---------------------------------------------------------------------------
// vote

/// Index with at least two of the three votes, or nullopt (failure).
inline std::optional<std::size_t> majority_vote(const std::array<SelectorVerdict, 3>& verdicts) {
    std::array<int, kCandidateCount> votes{};
    for (const auto& v : verdicts) {
        if (v.choice && *v.choice < kCandidateCount) ++votes[*v.choice];
    }
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        if (votes[i] >= 2) return i;
    }
    return std::nullopt;
}

} // namespace embalign
