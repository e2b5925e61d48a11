#include <gtest/gtest.h>

#include <sstream>

#include "embalign/forest.hpp"
#include "embalign/phantom.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace embalign;
using testing_support::TempDir;

namespace {

void expect_matches_oracle(const std::vector<FeatureVector>& x, const std::vector<int>& y) {
    ForestParams p;
    p.n_trees = 1;
    p.max_features_rule = "all";
    const auto model = train_forest(x, y, p, 17, {.bootstrap = false});
    const auto oracle = oracles::cart_tree(x, y);
    const auto& nodes = model.trees[0].nodes;
    ASSERT_EQ(nodes.size(), oracle.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        EXPECT_EQ(nodes[i].feature, oracle[i].feature) << "node " << i;
        EXPECT_EQ(nodes[i].threshold, oracle[i].threshold) << "node " << i;
        if (nodes[i].is_leaf()) EXPECT_EQ(nodes[i].counts, oracle[i].counts) << "node " << i;
    }
}

ForestModel stump_model(std::vector<std::array<std::uint32_t, 2>> leaves, std::size_t len) {
    ForestModel m;
    m.feature_len = len;
    for (const auto& c : leaves) {
        Tree t;
        t.nodes.resize(1);
        t.nodes[0].counts = c;
        m.trees.push_back(t);
    }
    m.params.n_trees = leaves.size();
    return m;
}

std::string serialized(const ForestModel& m) {
    std::ostringstream out;
    save_model(out, m);
    return out.str();
}

} // namespace

TEST(Gini, Values) {
    EXPECT_DOUBLE_EQ(gini_impurity(5, 5), 0.5);
    EXPECT_DOUBLE_EQ(gini_impurity(10, 0), 0.0);
    EXPECT_DOUBLE_EQ(gini_impurity(3, 1), 0.375);
    EXPECT_THROW(gini_impurity(0, 0), ArgumentError);
}

TEST(CartOracle, FourSampleToy) {
    const std::vector<FeatureVector> x{{0.0f, 1.0f, 5.0f}, {1.0f, 1.0f, 4.0f}, {2.0f, 0.0f, 3.0f}, {3.0f, 0.0f, 2.0f}};
    const std::vector<int> y{0, 0, 1, 1};
    expect_matches_oracle(x, y);
    const std::vector<int> y2{0, 1, 0, 1};
    expect_matches_oracle(x, y2);
}

TEST(CartOracle, RandomSmallInstances) {
    Pcg32 rng(31337);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.bounded(19);
        const std::size_t d = 1 + rng.bounded(6);
        const std::uint32_t levels = 2 + rng.bounded(6);
        std::vector<FeatureVector> x(n, FeatureVector(d));
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& v : x[i]) v = static_cast<float>(rng.bounded(levels)) * 0.25f;
            y[i] = static_cast<int>(rng.bounded(2));
        }
        y[0] = 0;
        y[1] = 1;
        SCOPED_TRACE("trial " + std::to_string(trial));
        expect_matches_oracle(x, y);
    }
}

TEST(Training, SeparablePaddedSetIsMemorized) {
    Pcg32 rng(3);
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
        FeatureVector f(kFeatureLen, 0.0f);
        f[100] = static_cast<float>(rng.uniform());
        f[20000] = static_cast<float>(rng.uniform());
        x.push_back(f);
        y.push_back(f[100] + f[20000] > 1.0f ? 1 : 0);
    }
    ForestParams p;
    p.n_trees = 15;
    const auto model = train_forest(x, y, p, 9);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(predict_proba(model, x[i]) > 0.5 ? 1 : 0, y[i]) << i;
    }
}

TEST(Training, SameSeedIsByteIdentical) {
    Pcg32 rng(8);
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        FeatureVector f(400);
        for (auto& v : f) v = static_cast<float>(rng.uniform());
        x.push_back(f);
        y.push_back(f[0] + f[1] + 0.3f * static_cast<float>(rng.uniform()) > 1.1f);
    }
    ForestParams p;
    p.n_trees = 25;
    const auto a = serialized(train_forest(x, y, p, 123));
    const auto b = serialized(train_forest(x, y, p, 123));
    const auto c = serialized(train_forest(x, y, p, 123, {.bootstrap = true, .threads = 3}));
    const auto d = serialized(train_forest(x, y, p, 124));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    EXPECT_NE(a, d);
}

TEST(Training, Errors) {
    const std::vector<FeatureVector> x{{0.0f}, {1.0f}};
    ForestParams p;
    EXPECT_THROW(train_forest(x, std::vector<int>{1, 1}, p, 0), ArgumentError);
    EXPECT_THROW(train_forest(x, std::vector<int>{1}, p, 0), ArgumentError);
    EXPECT_THROW(train_forest(x, std::vector<int>{0, 2}, p, 0), ArgumentError);
    p.n_trees = 0;
    EXPECT_THROW(train_forest(x, std::vector<int>{0, 1}, p, 0), ArgumentError);
}

TEST(MaxFeatures, SqrtRule) {
    ForestParams p;
    EXPECT_EQ(max_features_for(p, kFeatureLen), 192u);
    EXPECT_EQ(max_features_for(p, 10), 3u);
    p.max_features_rule = "all";
    EXPECT_EQ(max_features_for(p, 10), 10u);
    p.max_features_rule = "log2";
    EXPECT_THROW(max_features_for(p, 10), ArgumentError);
}

TEST(PredictProba, MeanOfLeaves) {
    const std::vector<float> f(5, 0.0f);
    EXPECT_EQ(predict_proba(stump_model(std::vector<std::array<std::uint32_t, 2>>(10, {0, 4}), 5), f), 1.0);
    EXPECT_NEAR(predict_proba(stump_model({{0, 1}, {2, 0}, {0, 7}}, 5), f), 2.0 / 3.0, 1e-15);
    EXPECT_THROW(predict_proba(stump_model({{0, 1}}, 6), f), ModelShapeError);
}

TEST(Persistence, RoundTripPreservesPredictions) {
    Pcg32 rng(21);
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (int i = 0; i < 50; ++i) {
        FeatureVector f(64);
        for (auto& v : f) v = static_cast<float>(rng.normal());
        x.push_back(f);
        y.push_back(f[3] > 0.1f);
    }
    ForestParams p;
    p.n_trees = 12;
    const auto model = train_forest(x, y, p, 5);
    TempDir dir("model");
    save_model(dir / "m.json", model);
    const auto back = load_model(dir / "m.json");
    for (int t = 0; t < 10; ++t) {
        FeatureVector f(64);
        for (auto& v : f) v = static_cast<float>(rng.normal());
        EXPECT_EQ(predict_proba(back, f), predict_proba(model, f));
    }
    EXPECT_EQ(serialized(back), serialized(model));
    EXPECT_EQ(back.train_seed, 5u);
    EXPECT_EQ(back.params.n_trees, 12u);
}

TEST(Persistence, RejectsMalformedModels) {
    const std::string good = serialized(stump_model({{1, 2}}, 8));
    {
        std::istringstream in(good.substr(0, good.size() / 2));
        EXPECT_THROW(load_model(in), ParseError);
    }
    auto j = nlohmann::json::parse(good);
    auto expect_bad = [](const nlohmann::json& bad) {
        std::istringstream in(bad.dump());
        EXPECT_THROW(load_model(in), ParseError) << bad.dump();
    };
    auto no_trees = j;
    no_trees["trees"] = nlohmann::json::array();
    no_trees["params"]["n_trees"] = 0;
    expect_bad(no_trees);
    auto extra = j;
    extra["comment"] = "x";
    expect_bad(extra);
    auto bad_feature = j;
    bad_feature["trees"][0] = {{"kind", "split"},
                               {"feature", 8},
                               {"threshold", 0.5},
                               {"left", {{"kind", "leaf"}, {"counts", {1, 0}}}},
                               {"right", {{"kind", "leaf"}, {"counts", {0, 1}}}}};
    expect_bad(bad_feature);
    auto bad_kind = j;
    bad_kind["trees"][0]["kind"] = "branch";
    expect_bad(bad_kind);
    auto bad_version = j;
    bad_version["format_version"] = 2;
    expect_bad(bad_version);
    auto mismatch = j;
    mismatch["params"]["n_trees"] = 3;
    expect_bad(mismatch);
}

TEST(Features, ZeroVolume) {
    Volume3D v({40, 40, 40}, {0.5, 0.5, 0.5});
    const auto f = mid_sagittal_features(v);
    ASSERT_EQ(f.size(), kFeatureLen);
    for (float x : f) EXPECT_EQ(x, 0.0f);
}

TEST(Features, NormalizedToUnitPeak) {
    Volume3D v({40, 40, 40}, {0.5, 0.5, 0.5});
    for (std::size_t i = 10; i < 30; ++i)
        for (std::size_t j = 15; j < 25; ++j) v(i, j, 20) = 200.0f;
    const auto f = mid_sagittal_features(v);
    EXPECT_FLOAT_EQ(*std::max_element(f.begin(), f.end()), 1.0f);
    EXPECT_GE(*std::min_element(f.begin(), f.end()), 0.0f);
}

TEST(Features, DoubleFlipRotatesSliceByHalfTurn) {
    const auto sample = generate_phantom(dataset_spec(9, 14, 0.1));
    const auto set = generate_candidates(sample.image, sample.mask);
    const auto& a = set.volumes[0];
    Volume3D flipped(a.dims, a.spacing);
    const std::size_t n0 = a.dims[0], n1 = a.dims[1];
    for (std::size_t k = 0; k < a.dims[2]; ++k)
        for (std::size_t j = 0; j < n1; ++j)
            for (std::size_t i = 0; i < n0; ++i) flipped(n0 - 1 - i, n1 - 1 - j, k) = a(i, j, k);
    const auto fa = mid_sagittal_features(a);
    const auto fb = mid_sagittal_features(flipped);
    double diff = 0.0;
    for (std::size_t i = 0; i < kSliceSide; ++i)
        for (std::size_t j = 0; j < kSliceSide; ++j)
            diff += std::abs(fa[i * kSliceSide + j] - fb[(kSliceSide - 1 - i) * kSliceSide + (kSliceSide - 1 - j)]);
    EXPECT_LT(diff / kFeatureLen, 1e-3);
}

TEST(TrainingSet, LabelsOneTruePerImage) {
    CandidateFeatures f;
    for (auto& v : f) v = FeatureVector(3, 0.0f);
    std::vector<CandidateFeatures> one{f};
    const auto ts = build_training_set(one, std::vector<int>{2});
    ASSERT_EQ(ts.labels.size(), 4u);
    EXPECT_EQ(ts.labels, (std::vector<int>{0, 0, 1, 0}));

    std::vector<CandidateFeatures> many(510, f);
    std::vector<int> idx(510);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i % 4);
    const auto big = build_training_set(many, idx);
    EXPECT_EQ(big.features.size(), 2040u);
    EXPECT_EQ(std::count(big.labels.begin(), big.labels.end(), 1), 510);

    EXPECT_THROW(build_training_set(one, std::vector<int>{4}), ArgumentError);
    EXPECT_THROW(build_training_set(one, std::vector<int>{-1}), ArgumentError);
}
