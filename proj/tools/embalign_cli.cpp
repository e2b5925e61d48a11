#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "embalign/embalign.hpp"

namespace fs = std::filesystem;
using namespace embalign;

namespace {

enum Exit : int { kOk = 0, kIo = 1, kUsage = 2, kFailure = 3 };

// Usage/validation problems detected after CLI11 parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

unsigned resolve_threads(int flag) { return flag > 0 ? static_cast<unsigned>(flag) : default_threads(); }

std::vector<int> parse_weeks(const std::string& text) {
    const auto dash = text.find('-');
    int lo = 0, hi = 0;
    try {
        std::size_t used = 0;
        if (dash == std::string::npos) {
            lo = hi = std::stoi(text, &used);
            if (used != text.size()) throw UsageError("");
        } else {
            const std::string a = text.substr(0, dash), b = text.substr(dash + 1);
            lo = std::stoi(a, &used);
            if (used != a.size()) throw UsageError("");
            hi = std::stoi(b, &used);
            if (used != b.size()) throw UsageError("");
        }
    } catch (const std::exception&) {
        throw UsageError("--weeks expects A-B, got '" + text + "'");
    }
    if (lo > hi) throw UsageError("--weeks range is empty: " + text);
    if (lo < kMinWeek || hi > kMaxWeek) throw UsageError("--weeks must lie within 7..12, got " + text);
    std::vector<int> weeks;
    for (int w = lo; w <= hi; ++w) weeks.push_back(w);
    return weeks;
}

std::vector<Method> parse_methods(const std::string& text) {
    std::vector<Method> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            const Method m = parse_method(item);
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
        } catch (const ArgumentError& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) throw UsageError("--methods lists no method");
    return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

std::vector<ManifestRow> open_dataset(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw UsageError("dataset " + dir.string() + " has no manifest.json");
    return load_manifest(dir);
}

struct Loaded {
    std::optional<std::vector<AtlasEntry>> atlases;
    std::optional<ForestModel> model;
};

Loaded load_resources(const std::vector<Method>& methods, const std::string& atlas_dir, const std::string& model_path) {
    bool want_atlas = false, want_model = false;
    for (Method m : methods) {
        want_atlas = want_atlas || needs_atlas(m);
        want_model = want_model || needs_model(m);
    }
    if (want_atlas && atlas_dir.empty()) throw UsageError("the selected method needs --atlas-dir");
    if (want_model && model_path.empty()) throw UsageError("the selected method needs --model");
    Loaded r;
    if (want_atlas) {
        if (!fs::is_directory(atlas_dir)) throw UsageError("atlas directory not found: " + atlas_dir);
        r.atlases = load_atlases(atlas_dir);
    }
    if (want_model) {
        if (!fs::exists(model_path)) throw UsageError("model file not found: " + model_path);
        r.model = load_model(fs::path(model_path));
    }
    return r;
}

Resources as_resources(const Loaded& l, unsigned threads) {
    Resources r;
    r.atlases = l.atlases ? &*l.atlases : nullptr;
    r.model = l.model ? &*l.model : nullptr;
    r.threads = threads;
    return r;
}

void render(const Volume3D& v, const fs::path& dir) {
    fs::create_directories(dir);
    write_pgm(dir / "mid_sagittal.pgm", mid_sagittal_plane(v));
    write_pgm(dir / "mid_coronal.pgm", mid_coronal_plane(v));
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::size_t count = 0;
    std::string weeks;
    std::string out;
    std::uint64_t seed = 0;
    double noise = 0.0;
};

int gen_phantoms(const GenArgs& a, unsigned threads) {
    const auto weeks = parse_weeks(a.weeks);
    if (a.count == 0) throw UsageError("--count must be positive");
    if (!(a.noise >= 0.0)) throw UsageError("--noise must be non-negative");
    const auto rows = generate_dataset(a.count, weeks, a.seed, a.out, a.noise, threads);
    std::cerr << "wrote " << rows.size() << " phantoms to " << a.out << '\n';
    return kOk;
}

int build_atlases(const std::string& out, std::uint64_t seed, unsigned threads) {
    const auto atlases = build_phantom_atlases(seed, threads);
    write_atlases(out, atlases);
    std::cerr << "wrote " << atlases.size() << " atlases to " << out << '\n';
    return kOk;
}

struct AlignArgs {
    std::string image, mask, method = "majority", atlas_dir, model, out, out_mask, planes, json;
};

int align_cmd(const AlignArgs& a, unsigned threads) {
    Method method;
    try {
        method = parse_method(a.method);
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
    const Loaded loaded = load_resources({method}, a.atlas_dir, a.model);
    const Volume3D image = read_image(a.image);
    const Mask3D mask = read_mask(a.mask);
    if (!same_geometry(image, mask)) throw UsageError("image and mask geometry differ");

    const Alignment result = align(image, mask, method, as_resources(loaded, threads));
    if (!a.json.empty()) write_json(a.json, diagnostics_json(result, a.image, a.mask));
    if (!result.final) {
        std::cerr << "alignment failed: no candidate selected by " << to_string(method) << '\n';
        return kFailure;
    }
    const std::size_t pick = *result.final;
    write_volume(fs::path(a.out), result.candidates.volumes[pick]);
    if (!a.out_mask.empty()) write_volume(fs::path(a.out_mask), result.candidates.masks[pick]);
    if (!a.planes.empty()) render(result.candidates.volumes[pick], a.planes);
    std::cerr << "selected candidate " << pick << '\n';
    return kOk;
}

struct TrainArgs {
    std::string dataset, out, max_features = "sqrt";
    std::size_t trees = 200, min_leaf = 1;
    std::uint64_t seed = 0;
};

int train_cmd(const TrainArgs& a, unsigned threads) {
    if (a.trees == 0) throw UsageError("--trees must be at least 1");
    if (a.min_leaf == 0) throw UsageError("--min-samples-leaf must be at least 1");
    if (a.max_features != "sqrt" && a.max_features != "all") throw UsageError("--max-features must be sqrt or all");
    const auto rows = open_dataset(a.dataset);
    const fs::path root(a.dataset);

    std::vector<std::optional<CandidateFeatures>> features(rows.size());
    std::vector<int> truth(rows.size(), -1);
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        const auto set = generate_candidates(read_image(root / rows[i].image), read_mask(root / rows[i].mask));
        if (const auto t = true_candidate(set, rows[i].truth_rotation)) {
            truth[i] = static_cast<int>(*t);
            features[i] = candidate_features(set);
        }
    });
    std::vector<CandidateFeatures> usable;
    std::vector<int> labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!features[i]) {
            std::cerr << "skipping " << rows[i].image << ": no candidate within tolerance\n";
            continue;
        }
        usable.push_back(std::move(*features[i]));
        labels.push_back(truth[i]);
    }
    if (usable.empty()) throw UsageError("dataset has no sample with a usable candidate");
    const TrainingSet ts = build_training_set(usable, labels);

    ForestParams params;
    params.n_trees = a.trees;
    params.min_samples_leaf = a.min_leaf;
    params.max_features_rule = a.max_features;
    const ForestModel model = train_forest(ts.features, ts.labels, params, a.seed, {.bootstrap = true, .threads = threads});
    save_model(fs::path(a.out), model);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < usable.size(); ++i) {
        const auto v = forest_select(usable[i], model);
        correct += v.choice && static_cast<int>(*v.choice) == labels[i];
    }
    std::printf("training accuracy: %.1f%% (%zu/%zu images)\n", 100.0 * static_cast<double>(correct) / usable.size(),
                correct, usable.size());
    return kOk;
}

struct EvalArgs {
    std::string dataset, atlas_dir, model, methods = "default,pearson,atlas,forest,majority", report;
    double tolerance = kDefaultToleranceDeg;
};

int evaluate_cmd(const EvalArgs& a, unsigned threads) {
    const auto methods = parse_methods(a.methods);
    if (!(a.tolerance > 0.0)) throw UsageError("--tolerance must be positive");
    const Loaded loaded = load_resources(methods, a.atlas_dir, a.model);
    const auto rows = open_dataset(a.dataset);
    const fs::path root(a.dataset);
    const Resources res = as_resources(loaded, 1);

    std::vector<std::vector<TrialResult>> per_sample(rows.size());
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        const auto& row = rows[i];
        const auto set = generate_candidates(read_image(root / row.image), read_mask(root / row.mask));
        const auto sel = run_selectors(set, methods, res);
        per_sample[i] = evaluate_candidates(case_name(row.id), row.week, row.truth_rotation, set, sel, methods, a.tolerance);
    });
    std::vector<TrialResult> results;
    for (auto& r : per_sample) results.insert(results.end(), r.begin(), r.end());

    const auto report = build_report(results);
    const auto table = report_table(report);
    write_json(a.report, report_json(report));
    fs::path table_path(a.report);
    table_path.replace_extension(".txt");
    write_text(table_path, table);
    std::cout << table;
    return kOk;
}

int render_cmd(const std::string& image, const std::string& out) {
    render(read_image(image), out);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rigid standard-orientation alignment of embryo volumes"};
    app.require_subcommand(1);
    int threads_flag = 0;
    app.add_option("--threads", threads_flag, "worker threads (overrides ALIGN_THREADS)")->check(CLI::PositiveNumber);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-phantoms", "write a seeded phantom dataset with manifest");
    gen_cmd->add_option("--count", gen.count, "phantoms per week")->required();
    gen_cmd->add_option("--weeks", gen.weeks, "inclusive week range A-B within 7..12")->required();
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "base seed")->required();
    gen_cmd->add_option("--noise", gen.noise, "Gaussian noise sigma");

    std::string atlas_out;
    std::uint64_t atlas_seed = 0;
    auto* atlas_cmd = app.add_subcommand("build-atlases", "write the phantom atlas set");
    atlas_cmd->add_option("--out", atlas_out, "atlas directory")->required();
    atlas_cmd->add_option("--seed", atlas_seed, "atlas seed")->required();

    AlignArgs al;
    auto* align_sub = app.add_subcommand("align", "align one image into standard orientation");
    align_sub->add_option("--image", al.image)->required();
    align_sub->add_option("--mask", al.mask)->required();
    align_sub->add_option("--method", al.method, "default|pearson|atlas|forest|majority")->required();
    align_sub->add_option("--atlas-dir", al.atlas_dir);
    align_sub->add_option("--model", al.model);
    align_sub->add_option("--out", al.out, "aligned image")->required();
    align_sub->add_option("--out-mask", al.out_mask, "aligned mask");
    align_sub->add_option("--emit-planes", al.planes, "directory for mid-plane PGMs");
    align_sub->add_option("--emit-json", al.json, "diagnostics JSON path");

    TrainArgs tr;
    auto* train_sub = app.add_subcommand("train-forest", "train the candidate classifier");
    train_sub->add_option("--dataset", tr.dataset)->required();
    train_sub->add_option("--out", tr.out)->required();
    train_sub->add_option("--trees", tr.trees);
    train_sub->add_option("--seed", tr.seed)->required();
    train_sub->add_option("--min-samples-leaf", tr.min_leaf);
    train_sub->add_option("--max-features", tr.max_features, "sqrt|all");

    EvalArgs ev;
    auto* eval_sub = app.add_subcommand("evaluate", "score selection methods on a phantom dataset");
    eval_sub->add_option("--dataset", ev.dataset)->required();
    eval_sub->add_option("--atlas-dir", ev.atlas_dir);
    eval_sub->add_option("--model", ev.model);
    eval_sub->add_option("--methods", ev.methods, "comma-separated methods");
    eval_sub->add_option("--report", ev.report, "report JSON path")->required();
    eval_sub->add_option("--tolerance", ev.tolerance, "correctness tolerance in degrees");

    std::string render_image, render_out;
    auto* render_sub = app.add_subcommand("render-planes", "write mid-sagittal and mid-coronal PGMs");
    render_sub->add_option("--image", render_image)->required();
    render_sub->add_option("--out", render_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    const unsigned threads = resolve_threads(threads_flag);
    try {
        if (*gen_cmd) return gen_phantoms(gen, threads);
        if (*atlas_cmd) return build_atlases(atlas_out, atlas_seed, threads);
        if (*align_sub) return align_cmd(al, threads);
        if (*train_sub) return train_cmd(tr, threads);
        if (*eval_sub) return evaluate_cmd(ev, threads);
        if (*render_sub) return render_cmd(render_image, render_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
        return kUsage;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    }
    return kUsage;
}
