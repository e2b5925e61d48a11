#pragma once

// Binary random forest over flattened mid-sagittal slices: CART trees grown
// on bootstrap samples with Gini splits, plus feature extraction and JSON
// persistence.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "embalign/candidates.hpp"
#include "embalign/errors.hpp"
#include "embalign/parallel.hpp"
#include "embalign/resample.hpp"
#include "embalign/rng.hpp"

namespace embalign {

inline constexpr std::size_t kSliceSide = 192;
inline constexpr std::size_t kFeatureLen = kSliceSide * kSliceSide;
inline constexpr double kSliceMargin = 1.1;

using FeatureVector = std::vector<float>;

/// Central axis2 slice of the candidate after an isotropic resize to 192^3
/// that fits the nonzero support (plus 10%) around the grid center. Values
/// are scaled by the slice maximum and flattened axis0-major.
inline FeatureVector mid_sagittal_features(const Volume3D& candidate) {
    FeatureVector features(kFeatureLen, 0.0f);
    const double s = candidate.min_spacing();
    const Vec3 c = candidate.center();
    double half = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < candidate.dims[2]; ++k) {
        for (std::size_t j = 0; j < candidate.dims[1]; ++j) {
            for (std::size_t i = 0; i < candidate.dims[0]; ++i) {
                if (candidate(i, j, k) == 0.0f) continue;
                any = true;
                const Vec3 d = (candidate.physical(i, j, k) - c).cwiseAbs();
                half = std::max(half, d.maxCoeff());
            }
        }
    }
    if (!any) return features;
    const double extent = 2.0 * (half + s) * kSliceMargin;
    const double zoom = static_cast<double>(kSliceSide) * s / extent;
    const Dims out{kSliceSide, kSliceSide, kSliceSide};
    features = rescale_iso_slice(candidate, zoom, out, c, kSliceSide / 2, s);
    float peak = 0.0f;
    for (float& v : features) {
        v = std::max(v, 0.0f);
        peak = std::max(peak, v);
    }
    if (peak > 0.0f) {
        for (float& v : features) v = std::min(1.0f, v / peak);
    }
    return features;
}

/// 1 - p0^2 - p1^2.
inline double gini_impurity(std::uint64_t n0, std::uint64_t n1) {
    const std::uint64_t n = n0 + n1;
    if (n == 0) throw ArgumentError("gini_impurity: empty node");
    const double p0 = static_cast<double>(n0) / static_cast<double>(n);
    const double p1 = static_cast<double>(n1) / static_cast<double>(n);
    return 1.0 - p0 * p0 - p1 * p1;
}

struct ForestParams {
    std::size_t n_trees = 200;
    std::string max_features_rule = "sqrt";  // "sqrt" or "all"
    std::size_t min_samples_leaf = 1;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::array<std::uint32_t, 2> counts{0, 0};  // (non-standard, standard) at leaves

    bool is_leaf() const noexcept { return feature < 0; }
};

/// Nodes in preorder; the root is nodes[0].
struct Tree {
    std::vector<TreeNode> nodes;
};

struct ForestModel {
    std::vector<Tree> trees;
    std::size_t feature_len = kFeatureLen;
    std::uint64_t train_seed = 0;
    ForestParams params;
};

/// Knobs that are not part of the persisted model.
struct TrainOptions {
    bool bootstrap = true;  // false: every tree sees each sample exactly once
    unsigned threads = 1;
};

inline std::size_t max_features_for(const ForestParams& p, std::size_t d) {
    if (p.max_features_rule == "sqrt") {
        auto m = static_cast<std::size_t>(std::sqrt(static_cast<double>(d)));
        while (m * m > d) --m;
        while ((m + 1) * (m + 1) <= d) ++m;
        return std::max<std::size_t>(1, m);
    }
    if (p.max_features_rule == "all") return d;
    throw ArgumentError("unknown max_features_rule '" + p.max_features_rule + "'");
}

namespace forest_detail {

// Split quality as an exact fraction; larger is better. For a split with
// class counts (l0, l1 | r0, r1) the weighted Gini impurity times n equals
// n - (l0^2 + l1^2)/nl - (r0^2 + r1^2)/nr, so maximizing
// ((l0^2 + l1^2)*nr + (r0^2 + r1^2)*nl) / (nl*nr) minimizes it.
struct Score {
    __int128 num = -1;
    __int128 den = 1;

    static Score of(std::uint64_t l0, std::uint64_t l1, std::uint64_t r0, std::uint64_t r1) {
        const auto nl = static_cast<__int128>(l0 + l1), nr = static_cast<__int128>(r0 + r1);
        const __int128 lsq = static_cast<__int128>(l0 * l0 + l1 * l1);
        const __int128 rsq = static_cast<__int128>(r0 * r0 + r1 * r1);
        return {lsq * nr + rsq * nl, nl * nr};
    }
    // Cross products stay below 2^127 for node sizes up to ~2^30.
    friend int compare(const Score& a, const Score& b) {
        const __int128 x = a.num * b.den, y = b.num * a.den;
        return x < y ? -1 : (x > y ? 1 : 0);
    }
};

struct Split {
    bool found = false;
    Score score;
    std::size_t feature = 0;
    double threshold = 0.0;
};

inline bool better(const Split& cand, const Split& best) {
    if (!best.found) return true;
    const int c = compare(cand.score, best.score);
    if (c != 0) return c > 0;
    if (cand.feature != best.feature) return cand.feature < best.feature;
    return cand.threshold < best.threshold;
}

class TreeBuilder {
public:
    TreeBuilder(std::span<const FeatureVector> x, std::span<const int> y, const ForestParams& params,
                std::size_t mtry, Pcg32 rng)
        : x_(x), y_(y), params_(params), mtry_(mtry), rng_(rng), perm_(x.empty() ? 0 : x[0].size()) {
        std::iota(perm_.begin(), perm_.end(), std::uint32_t{0});
    }

    Tree build(std::vector<std::uint32_t> samples) {
        Tree tree;
        grow(tree, samples);
        return tree;
    }

    Pcg32& rng() { return rng_; }

private:
    std::int32_t grow(Tree& tree, std::vector<std::uint32_t>& samples) {
        std::array<std::uint64_t, 2> counts{0, 0};
        for (auto s : samples) ++counts[static_cast<std::size_t>(y_[s])];
        const auto id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();

        const bool pure = counts[0] == 0 || counts[1] == 0;
        Split split;
        if (!pure && samples.size() >= 2 * params_.min_samples_leaf) split = find_split(samples, counts);
        if (!split.found) {
            tree.nodes[id].counts = {static_cast<std::uint32_t>(counts[0]), static_cast<std::uint32_t>(counts[1])};
            return id;
        }

        std::vector<std::uint32_t> left, right;
        for (auto s : samples) {
            (static_cast<double>(x_[s][split.feature]) <= split.threshold ? left : right).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        const std::int32_t l = grow(tree, left);
        const std::int32_t r = grow(tree, right);
        auto& node = tree.nodes[id];
        node.feature = static_cast<std::int32_t>(split.feature);
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    // Draws features without replacement until mtry non-constant ones have
    // been scored or all features are exhausted.
    Split find_split(const std::vector<std::uint32_t>& samples, const std::array<std::uint64_t, 2>& total) {
        Split best;
        const std::size_t d = perm_.size();
        std::size_t scored = 0;
        values_.resize(samples.size());
        for (std::size_t t = 0; t < d && scored < mtry_; ++t) {
            const std::size_t j = t + rng_.bounded(static_cast<std::uint32_t>(d - t));
            std::swap(perm_[t], perm_[j]);
            const std::size_t f = perm_[t];

            float lo = x_[samples[0]][f], hi = lo;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const float v = x_[samples[i]][f];
                values_[i] = {v, y_[samples[i]]};
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (lo == hi) continue;
            ++scored;
            std::sort(values_.begin(), values_.end());

            std::uint64_t l0 = 0, l1 = 0;
            const std::size_t n = values_.size();
            for (std::size_t i = 0; i + 1 < n; ++i) {
                (values_[i].second ? l1 : l0) += 1;
                if (values_[i].first == values_[i + 1].first) continue;
                const std::size_t nl = i + 1;
                if (nl < params_.min_samples_leaf || n - nl < params_.min_samples_leaf) continue;
                Split cand;
                cand.found = true;
                cand.score = Score::of(l0, l1, total[0] - l0, total[1] - l1);
                cand.feature = f;
                cand.threshold = 0.5 * (static_cast<double>(values_[i].first) + static_cast<double>(values_[i + 1].first));
                if (better(cand, best)) best = cand;
            }
        }
        return best;
    }

    std::span<const FeatureVector> x_;
    std::span<const int> y_;
    const ForestParams& params_;
    std::size_t mtry_;
    Pcg32 rng_;
    std::vector<std::uint32_t> perm_;
    std::vector<std::pair<float, int>> values_;
};

} // namespace forest_detail

inline ForestModel train_forest(std::span<const FeatureVector> features, std::span<const int> labels,
                                const ForestParams& params, std::uint64_t seed, const TrainOptions& options = {}) {
    if (features.size() != labels.size()) throw ArgumentError("train_forest: features and labels differ in length");
    if (features.size() < 2) throw ArgumentError("train_forest: need at least two samples");
    if (params.n_trees < 1) throw ArgumentError("train_forest: n_trees must be >= 1");
    if (params.min_samples_leaf < 1) throw ArgumentError("train_forest: min_samples_leaf must be >= 1");
    const std::size_t d = features[0].size();
    if (d == 0) throw ArgumentError("train_forest: empty feature vectors");
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != d) throw ModelShapeError("train_forest: inconsistent feature lengths");
        if (labels[i] != 0 && labels[i] != 1) throw ArgumentError("train_forest: labels must be 0 or 1");
        (labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) throw ArgumentError("train_forest: both classes must be present");

    ForestModel model;
    model.feature_len = d;
    model.train_seed = seed;
    model.params = params;
    model.trees.resize(params.n_trees);
    const std::size_t mtry = max_features_for(params, d);
    const std::size_t n = features.size();

    parallel_for(params.n_trees, options.threads, [&](std::size_t t) {
        forest_detail::TreeBuilder builder(features, labels, params, mtry, Pcg32(seed, t));
        std::vector<std::uint32_t> samples(n);
        if (options.bootstrap) {
            for (auto& s : samples) s = builder.rng().bounded(static_cast<std::uint32_t>(n));
        } else {
            std::iota(samples.begin(), samples.end(), std::uint32_t{0});
        }
        model.trees[t] = builder.build(std::move(samples));
    });
    return model;
}

/// Leaf class-1 fraction of one tree.
inline double tree_proba(const Tree& tree, std::span<const float> f) {
    std::size_t at = 0;
    while (!tree.nodes[at].is_leaf()) {
        const auto& node = tree.nodes[at];
        at = static_cast<std::size_t>(static_cast<double>(f[static_cast<std::size_t>(node.feature)]) <= node.threshold
                                          ? node.left
                                          : node.right);
    }
    const auto& c = tree.nodes[at].counts;
    return static_cast<double>(c[1]) / static_cast<double>(c[0] + c[1]);
}

inline double predict_proba(const ForestModel& model, std::span<const float> f) {
    if (f.size() != model.feature_len) {
        throw ModelShapeError("predict_proba: feature length " + std::to_string(f.size()) + " != model length " +
                              std::to_string(model.feature_len));
    }
    if (model.trees.empty()) throw ModelShapeError("predict_proba: model has no trees");
    double sum = 0.0;
    for (const auto& t : model.trees) sum += tree_proba(t, f);
    return std::clamp(sum / static_cast<double>(model.trees.size()), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// persistence

namespace forest_detail {

inline nlohmann::json node_to_json(const Tree& tree, std::size_t at) {
    const auto& n = tree.nodes[at];
    if (n.is_leaf()) return {{"kind", "leaf"}, {"counts", {n.counts[0], n.counts[1]}}};
    return {{"kind", "split"},
            {"feature", n.feature},
            {"threshold", n.threshold},
            {"left", node_to_json(tree, static_cast<std::size_t>(n.left))},
            {"right", node_to_json(tree, static_cast<std::size_t>(n.right))}};
}

inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
    if (!j.is_object()) throw ParseError(std::string(what) + " must be an object");
    if (j.size() != keys.size()) throw ParseError(std::string(what) + " has unexpected keys");
    for (const char* k : keys) {
        if (!j.contains(k)) throw ParseError(std::string(what) + " is missing key '" + k + "'");
    }
}

inline std::int32_t node_from_json(const nlohmann::json& j, Tree& tree, std::size_t feature_len, int depth) {
    if (depth > 4096) throw ParseError("tree is too deep");
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) throw ParseError("node lacks a kind");
    const auto id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::string kind = j["kind"];
    if (kind == "leaf") {
        require_keys(j, {"kind", "counts"}, "leaf node");
        const auto& c = j["counts"];
        if (!c.is_array() || c.size() != 2 || !c[0].is_number_unsigned() || !c[1].is_number_unsigned()) {
            throw ParseError("leaf counts must be two non-negative integers");
        }
        const std::uint64_t c0 = c[0], c1 = c[1];
        if (c0 + c1 < 1 || c0 > UINT32_MAX || c1 > UINT32_MAX) throw ParseError("leaf counts out of range");
        tree.nodes[id].counts = {static_cast<std::uint32_t>(c0), static_cast<std::uint32_t>(c1)};
        return id;
    }
    if (kind != "split") throw ParseError("unknown node kind '" + kind + "'");
    require_keys(j, {"kind", "feature", "threshold", "left", "right"}, "split node");
    if (!j["feature"].is_number_unsigned() || j["feature"].get<std::uint64_t>() >= feature_len) {
        throw ParseError("split feature index out of range");
    }
    if (!j["threshold"].is_number() || !std::isfinite(j["threshold"].get<double>())) {
        throw ParseError("split threshold must be a finite number");
    }
    const auto feature = static_cast<std::int32_t>(j["feature"].get<std::uint64_t>());
    const double threshold = j["threshold"].get<double>();
    const std::int32_t l = node_from_json(j["left"], tree, feature_len, depth + 1);
    const std::int32_t r = node_from_json(j["right"], tree, feature_len, depth + 1);
    auto& n = tree.nodes[id];
    n.feature = feature;
    n.threshold = threshold;
    n.left = l;
    n.right = r;
    return id;
}

} // namespace forest_detail

inline nlohmann::json model_to_json(const ForestModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(forest_detail::node_to_json(t, 0));
    return {{"format_version", 1},
            {"feature_len", m.feature_len},
            {"train_seed", m.train_seed},
            {"params",
             {{"n_trees", m.params.n_trees},
              {"max_features_rule", m.params.max_features_rule},
              {"min_samples_leaf", m.params.min_samples_leaf}}},
            {"trees", std::move(trees)}};
}

inline ForestModel model_from_json(const nlohmann::json& j) {
    using forest_detail::require_keys;
    require_keys(j, {"format_version", "feature_len", "train_seed", "params", "trees"}, "model");
    if (j["format_version"] != 1) throw ParseError("unsupported format_version");
    if (!j["feature_len"].is_number_unsigned() || j["feature_len"].get<std::uint64_t>() == 0) {
        throw ParseError("feature_len must be a positive integer");
    }
    if (!j["train_seed"].is_number_integer()) throw ParseError("train_seed must be an integer");
    const auto& p = j["params"];
    require_keys(p, {"n_trees", "max_features_rule", "min_samples_leaf"}, "params");
    if (!p["n_trees"].is_number_unsigned() || !p["min_samples_leaf"].is_number_unsigned() ||
        !p["max_features_rule"].is_string()) {
        throw ParseError("params have wrong types");
    }
    ForestModel m;
    m.feature_len = j["feature_len"].get<std::size_t>();
    m.train_seed = j["train_seed"].is_number_unsigned() ? j["train_seed"].get<std::uint64_t>()
                                                        : static_cast<std::uint64_t>(j["train_seed"].get<std::int64_t>());
    m.params.n_trees = p["n_trees"].get<std::size_t>();
    m.params.max_features_rule = p["max_features_rule"].get<std::string>();
    m.params.min_samples_leaf = p["min_samples_leaf"].get<std::size_t>();
    if (m.params.max_features_rule != "sqrt" && m.params.max_features_rule != "all") {
        throw ParseError("unknown max_features_rule");
    }
    const auto& trees = j["trees"];
    if (!trees.is_array() || trees.empty()) throw ParseError("model must contain at least one tree");
    if (trees.size() != m.params.n_trees) throw ParseError("params.n_trees does not match the tree count");
    for (const auto& t : trees) {
        Tree tree;
        forest_detail::node_from_json(t, tree, m.feature_len, 0);
        m.trees.push_back(std::move(tree));
    }
    return m;
}

inline void save_model(std::ostream& out, const ForestModel& m) { out << model_to_json(m).dump() << '\n'; }

inline void save_model(const std::filesystem::path& path, const ForestModel& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    save_model(out, m);
    if (!out) throw IoError("write failed for " + path.string());
}

inline ForestModel load_model(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model schema violation: ") + e.what());
    }
}

inline ForestModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return load_model(in);
}

// ---------------------------------------------------------------------------
// training data

struct TrainingSet {
    std::vector<FeatureVector> features;
    std::vector<int> labels;
};

using CandidateFeatures = std::array<FeatureVector, kCandidateCount>;

inline CandidateFeatures candidate_features(const CandidateSet& set) {
    CandidateFeatures out;
    for (std::size_t i = 0; i < kCandidateCount; ++i) out[i] = mid_sagittal_features(set.volumes[i]);
    return out;
}

/// One image contributes four samples: label 1 for its true candidate, 0 for the rest.
inline void append_training_samples(TrainingSet& ts, CandidateFeatures features, int true_index) {
    if (true_index < 0 || true_index >= static_cast<int>(kCandidateCount)) {
        throw ArgumentError("training image lacks a valid true candidate index (got " + std::to_string(true_index) + ")");
    }
    for (std::size_t i = 0; i < kCandidateCount; ++i) {
        ts.features.push_back(std::move(features[i]));
        ts.labels.push_back(static_cast<int>(i) == true_index ? 1 : 0);
    }
}

inline TrainingSet build_training_set(std::span<const CandidateFeatures> images, std::span<const int> true_indices) {
    if (images.size() != true_indices.size()) throw ArgumentError("build_training_set: every image needs a label");
    TrainingSet ts;
    for (std::size_t i = 0; i < images.size(); ++i) append_training_samples(ts, images[i], true_indices[i]);
    return ts;
}

inline TrainingSet build_training_set(std::span<const CandidateSet> sets, std::span<const int> true_indices) {
    if (sets.size() != true_indices.size()) throw ArgumentError("build_training_set: every image needs a label");
    TrainingSet ts;
    for (std::size_t i = 0; i < sets.size(); ++i) append_training_samples(ts, candidate_features(sets[i]), true_indices[i]);
    return ts;
}

} // namespace embalign
