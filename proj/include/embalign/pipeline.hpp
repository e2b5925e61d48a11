#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "embalign/candidates.hpp"
#include "embalign/evaluation.hpp"
#include "embalign/forest.hpp"
#include "embalign/phantom.hpp"
#include "embalign/selectors.hpp"

namespace embalign {

/// Selection resources; a method may only run when its inputs are present.
struct Resources {
    const std::vector<AtlasEntry>* atlases = nullptr;
    const ForestModel* model = nullptr;
    unsigned threads = 1;
};

inline bool needs_atlas(Method m) { return m == Method::Atlas || m == Method::Majority; }
inline bool needs_model(Method m) { return m == Method::Forest || m == Method::Majority; }

struct Selection {
    std::optional<SelectorVerdict> pearson;
    std::optional<SelectorVerdict> atlas;
    std::optional<SelectorVerdict> forest;

    /// Final choice of `m`, nullopt on failure or abstention.
    std::optional<std::size_t> choice(Method m, const CandidateSet& set) const {
        switch (m) {
        case Method::Default: return default_candidate(set);
        case Method::Pearson: return pearson ? pearson->choice : std::nullopt;
        case Method::Atlas: return atlas ? atlas->choice : std::nullopt;
        case Method::Forest: return forest ? forest->choice : std::nullopt;
        case Method::Majority:
            if (!pearson || !atlas || !forest) return std::nullopt;
            return majority_vote({*pearson, *atlas, *forest});
        }
        return std::nullopt;
    }

    std::vector<SelectorVerdict> verdicts() const {
        std::vector<SelectorVerdict> out;
        for (const auto* v : {&pearson, &atlas, &forest}) {
            if (*v) out.push_back(**v);
        }
        return out;
    }
};

/// Runs every selector needed by `methods` once.
inline Selection run_selectors(const CandidateSet& set, const std::vector<Method>& methods, const Resources& res) {
    bool want_p = false, want_a = false, want_f = false;
    for (Method m : methods) {
        want_p = want_p || m == Method::Pearson || m == Method::Majority;
        want_a = want_a || needs_atlas(m);
        want_f = want_f || needs_model(m);
    }
    if (want_a && (!res.atlases || res.atlases->empty())) throw ArgumentError("atlas selection requires an atlas set");
    if (want_f && !res.model) throw ArgumentError("forest selection requires a trained model");
    Selection sel;
    if (want_p) sel.pearson = pearson_heuristic(set);
    if (want_a) sel.atlas = atlas_select(set, *res.atlases, res.threads);
    if (want_f) sel.forest = forest_select(set, *res.model);
    return sel;
}

struct Alignment {
    Method method = Method::Default;
    CandidateSet candidates;
    Selection selection;
    std::optional<std::size_t> final;
};

inline Alignment align(const Volume3D& image, const Mask3D& mask, Method method, const Resources& res) {
    Alignment out;
    out.method = method;
    out.candidates = generate_candidates(image, mask, res.threads);
    out.selection = run_selectors(out.candidates, {method}, res);
    out.final = out.selection.choice(method, out.candidates);
    return out;
}

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json verdict_json(const SelectorVerdict& v) {
    nlohmann::json scores = nlohmann::json::array();
    for (double s : v.scores) scores.push_back(finite_or_null(s));
    return {{"selector", to_string(v.selector)},
            {"choice", v.choice ? nlohmann::json(*v.choice) : nlohmann::json(nullptr)},
            {"scores", scores}};
}

/// Diagnostic record: {image, mask, rotations, verdicts, final, failure}.
/// Rotations are the four world-to-candidate alignments, row-major.
inline nlohmann::json diagnostics_json(const Alignment& a, const std::string& image, const std::string& mask) {
    nlohmann::json rotations = nlohmann::json::array();
    for (std::size_t i = 0; i < kCandidateCount; ++i) rotations.push_back(row_major(a.candidates.alignment(i)));
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : a.selection.verdicts()) verdicts.push_back(verdict_json(v));
    return {{"image", image},
            {"mask", mask},
            {"rotations", rotations},
            {"verdicts", verdicts},
            {"final", a.final ? nlohmann::json(*a.final) : nlohmann::json(nullptr)},
            {"failure", !a.final.has_value()}};
}

/// Judges every requested method on one phantom with known truth.
inline std::vector<TrialResult> evaluate_candidates(const std::string& id, int week, const Mat3& truth,
                                                    const CandidateSet& set, const Selection& sel,
                                                    const std::vector<Method>& methods,
                                                    double tolerance_deg = kDefaultToleranceDeg) {
    bool available = false;
    for (std::size_t i = 0; i < kCandidateCount; ++i) available = available || judge(truth, set.alignment(i), tolerance_deg);
    std::vector<TrialResult> out;
    for (Method m : methods) {
        TrialResult r;
        r.sample_id = id;
        r.week = week;
        r.method = m;
        r.chosen = sel.choice(m, set);
        r.candidate_available = available;
        if (r.chosen) {
            r.rotation_error_deg = alignment_error_deg(truth, set.alignment(*r.chosen));
            r.correct = *r.rotation_error_deg <= tolerance_deg;
        }
        out.push_back(r);
    }
    return out;
}

/// Index of the candidate that matches the truth, if any.
inline std::optional<std::size_t> true_candidate(const CandidateSet& set, const Mat3& truth,
                                                 double tolerance_deg = kDefaultToleranceDeg) {
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        if (judge(truth, set.alignment(i), tolerance_deg)) return i;
    }
    return std::nullopt;
}

} // namespace embalign
