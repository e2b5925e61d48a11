#pragma once

#include <filesystem>

#include "embalign/pipeline.hpp"

namespace fixtures {

using namespace embalign;

struct DisagreementCase {
    std::size_t truth = 0;  // Pearson's pick
    std::size_t decoy = 0;  // atlas pick
    // the forest's flat model always picks candidate 0
};

/// Writes img.nrrd, msk.nrrd, an atlas directory `atl` holding one atlas made
/// from a wrong candidate, and flat.json, a forest whose probabilities are all
/// 0.5. With these inputs the three selectors vote for three different
/// candidates.
inline DisagreementCase write_disagreement_case(const std::filesystem::path& dir) {
    PhantomSample ph;
    CandidateSet set;
    DisagreementCase out;
    for (std::uint64_t seed = 1;; ++seed) {
        ph = generate_phantom(dataset_spec(9, seed, 0.0));
        set = generate_candidates(ph.image, ph.mask);
        const auto t = true_candidate(set, ph.truth_rotation);
        if (t && *t != 0 && pearson_heuristic(set).choice == t) {
            out.truth = *t;
            break;
        }
    }
    std::filesystem::create_directories(dir);
    write_volume(dir / "img.nrrd", ph.image);
    write_volume(dir / "msk.nrrd", ph.mask);

    out.decoy = 1;
    while (out.decoy == out.truth) ++out.decoy;
    const auto& cand = set.volumes[out.decoy];
    const double grid = static_cast<double>(cand.dims[0]) * cand.min_spacing() / static_cast<double>(kAtlasSide);
    AtlasEntry atlas;
    atlas.subject_id = 1;
    atlas.week = 9;
    atlas.volume = atlas_view(cand, 1.0, grid);
    atlas.ev = atlas_volume_ev(atlas.volume);
    write_atlases(dir / "atl", {atlas});

    ForestModel flat;
    flat.trees.resize(1);
    flat.trees[0].nodes.resize(1);
    flat.trees[0].nodes[0].counts = {1, 1};
    flat.params.n_trees = 1;
    save_model(dir / "flat.json", flat);
    return out;
}

} // namespace fixtures
