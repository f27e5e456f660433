// Command-line front end. Every subcommand reads and writes files only.
//
// Exit codes: 0 success, 1 validation failure or error, 2 warnings under
// --strict.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aape/aape.hpp"

namespace fs = std::filesystem;
using namespace aape;

namespace {

struct Globals {
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    bool strict = false;
    std::string out;
};

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kStrictWarning = 2;

std::string require_out(const Globals& g, const char* what) {
    if (g.out.empty()) throw Error(std::string("missing --out (") + what + ")");
    return g.out;
}

// report.json sits inside output directories and next to single-file outputs.
fs::path report_path_for(const fs::path& out, bool is_dir) {
    if (is_dir) return out / "report.json";
    return out.parent_path() / (out.stem().string() + ".report.json");
}

int finish(const Globals& g, ReportBundle& bundle, const fs::path& report_path) {
    bundle.config["threads"] = g.threads;
    bundle.config["strict"] = g.strict;
    if (!report_path.parent_path().empty()) fs::create_directories(report_path.parent_path());
    bundle.write(report_path);
    for (const auto& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
    return g.strict && !bundle.warnings.empty() ? kStrictWarning : kOk;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string::npos ? s.size() : comma;
        if (end > start) out.push_back(s.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

// ---- validate ----------------------------------------------------------

struct ValidateArgs {
    std::string dataset;
};

int run_validate(const Globals& g, const ValidateArgs& a) {
    const auto report = validate_dataset(a.dataset);
    for (const auto& v : report.violations) std::cout << "violation: " << v.code << ": " << v.detail << "\n";
    for (const auto& w : report.warnings) std::cout << "warning: " << w.code << ": " << w.detail << "\n";
    std::cout << (report.ok() ? "ok" : "invalid") << "\n";
    if (!g.out.empty()) {
        ReportBundle bundle{.command = "validate"};
        bundle.add_input(a.dataset);
        auto issues = nlohmann::ordered_json::array();
        for (const auto& v : report.violations)
            issues.push_back({{"kind", "violation"}, {"code", v.code}, {"detail", v.detail}});
        for (const auto& w : report.warnings)
            issues.push_back({{"kind", "warning"}, {"code", w.code}, {"detail", w.detail}});
        bundle.config["issues"] = std::move(issues);
        bundle.write(g.out);
    }
    if (!report.ok()) return kFailure;
    return g.strict && !report.warnings.empty() ? kStrictWarning : kOk;
}

// ---- stats -------------------------------------------------------------

struct StatsArgs {
    std::string dataset;
    unsigned shards = 1;
};

int run_stats(const Globals& g, const StatsArgs& a) {
    const fs::path out = require_out(g, "probs.bin path");
    const auto m = read_manifest(a.dataset);
    const auto labels = read_labels(a.dataset, m);
    const unsigned K = std::max(1u, a.shards);

    // One PartialCounts per contiguous shard; layers are streamed from disk.
    std::vector<PartialCounts> parts;
    std::vector<SampleRange> ranges;
    for (unsigned k = 0; k < K; ++k) {
        const SampleRange r{static_cast<std::uint64_t>(m.num_samples) * k / K,
                            static_cast<std::uint64_t>(m.num_samples) * (k + 1) / K};
        parts.emplace_back(m.geometry(), m.num_classes());
        ranges.push_back(r);
        parts.back().add_samples(r, std::span(labels.classes).subspan(r.begin, r.end - r.begin));
    }
    for (std::uint32_t l = 0; l < m.num_layers; ++l) {
        const auto t = read_layer(a.dataset, m, l);
        for (unsigned k = 0; k < K; ++k)
            parts[k].add_layer(t, ranges[k],
                               std::span(labels.classes).subspan(ranges[k].begin, ranges[k].end - ranges[k].begin));
    }
    PartialCounts merged = parts.front();
    for (unsigned k = 1; k < K; ++k) merged = merge_partial_counts(merged, parts[k]);
    const auto table = finalize(merged);
    write_probabilities(table, out);

    ReportBundle bundle{.command = "stats"};
    bundle.add_input(a.dataset);
    bundle.config["shards"] = K;
    bundle.outputs = {out.filename().string()};
    const auto counts = table.class_counts;
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0) bundle.warnings.push_back("zero-sample class: " + m.class_names[c]);
    std::cout << "layers " << m.num_layers << ", neurons/layer " << m.neurons_per_layer << ", samples "
              << m.num_samples << ", classes " << m.num_classes() << ", shards " << K << "\n";
    return finish(g, bundle, report_path_for(out, false));
}

// ---- select ------------------------------------------------------------

struct SelectArgs {
    std::string dataset;
    std::string probs;
    std::string task;
    double r_aape = 1.0;
    double low_cut = 5.0;
    double assign_cut = 95.0;
    std::string low_stat = "peak_class";
    std::string assign_pop = "all_neurons";
};

int run_select(const Globals& g, const SelectArgs& a) {
    const fs::path out = require_out(g, "selection.json path");
    SelectionConfig cfg{a.r_aape, a.low_cut, a.assign_cut};
    cfg.low_activation_stat = a.low_stat == "pooled" ? ActivationStat::pooled : ActivationStat::peak_class;
    cfg.assign_population =
        a.assign_pop == "step2_survivors" ? AssignPopulation::step2_survivors : AssignPopulation::all_neurons;

    const auto m = read_manifest(a.dataset);
    ReportBundle bundle{.command = "select"};
    bundle.add_input(a.dataset);
    ProbabilityTable probs;
    if (!a.probs.empty()) {
        probs = read_probabilities(a.probs);
        if (!(probs.geometry == m.geometry()) || probs.num_classes != m.num_classes())
            throw Error("geometry mismatch: probabilities do not match the dataset manifest");
        bundle.add_input(a.probs);
    } else {
        probs = compute_probabilities(fs::path(a.dataset), g.threads);
    }
    const auto sel = select_neurons(probs, compute_aape(probs), cfg, a.task.empty() ? m.task_name : a.task,
                                    m.class_names);
    write_selection(sel, out);

    bundle.config["r_aape"] = cfg.r_aape;
    bundle.config["low_activation_cut"] = cfg.low_activation_cut;
    bundle.config["assignment_cut"] = cfg.assignment_cut;
    bundle.config["low_activation_stat"] = to_string(cfg.low_activation_stat);
    bundle.config["assign_population"] = to_string(cfg.assign_population);
    bundle.outputs = {out.filename().string()};
    bundle.warnings = sel.warnings;
    const auto cs = coverage_stats(sel);
    std::printf("step1 %zu, step2 %zu, assigned %zu, mean/class %.1f, coverage %ld%%\n",
                sel.step1_survivors, sel.step2_survivors, sel.assigned_neurons, cs.mean_neurons,
                std::lround(100.0 * cs.coverage_ratio));
    return finish(g, bundle, report_path_for(out, false));
}

// ---- overlap -----------------------------------------------------------

struct OverlapArgs {
    std::vector<std::string> selections;
    std::string label_map;
};

int run_overlap(const Globals& g, const OverlapArgs& a) {
    const fs::path out = require_out(g, "output directory");
    if (a.selections.empty() || a.selections.size() > 2) throw Error("overlap takes one or two selections");
    std::map<std::string, std::string> relabel;
    if (!a.label_map.empty())
        relabel = nlohmann::json::parse(detail::require_file(a.label_map)).get<std::map<std::string, std::string>>();
    std::vector<NeuronSelection> sels;
    for (const auto& p : a.selections) {
        auto s = read_selection(p);
        sels.push_back(relabel.empty() ? std::move(s) : relabel_classes(s, relabel));
    }
    const auto& lhs = sels.front();
    const auto& rhs = sels.back();
    const auto m = cross_task_matrix(lhs, rhs);

    fs::create_directories(out);
    detail::write_file(out / "overlap.csv", overlap_to_csv(m));
    detail::write_file(out / "overlap.json", overlap_to_json(m).dump(2) + "\n");
    detail::write_file(out / "overlap.svg", render_heatmap(m, {.title = "Common neuron ratio: " + lhs.task_name +
                                                                         " vs " + rhs.task_name}));

    ReportBundle bundle{.command = "overlap"};
    for (const auto& p : a.selections) bundle.add_input(p);
    if (!a.label_map.empty()) bundle.add_input(a.label_map);
    bundle.outputs = {"overlap.csv", "overlap.json", "overlap.svg"};
    for (auto [r, c] : m.empty_pairs)
        bundle.warnings.push_back("empty pair: " + m.row_labels[r] + " / " + m.col_labels[c] +
                                  " both have no neurons; ratio reported as 0");
    return finish(g, bundle, report_path_for(out, true));
}

// ---- summary -----------------------------------------------------------

struct SummaryArgs {
    std::vector<std::string> selections;
};

int run_summary(const Globals& g, const SummaryArgs& a) {
    std::vector<NeuronSelection> sels;
    for (const auto& p : a.selections) sels.push_back(read_selection(p));
    const auto rendered = render_summary(summarize_rq1(sels));
    std::cout << rendered.markdown;
    if (g.out.empty()) return kOk;
    const fs::path out = g.out;
    fs::create_directories(out);
    detail::write_file(out / "summary.md", rendered.markdown);
    detail::write_file(out / "summary.csv", rendered.csv);
    ReportBundle bundle{.command = "summary"};
    for (const auto& p : a.selections) bundle.add_input(p);
    bundle.outputs = {"summary.md", "summary.csv"};
    return finish(g, bundle, report_path_for(out, true));
}

// ---- mask --------------------------------------------------------------

struct MaskArgs {
    std::string selection;
    std::string classes;
    std::string mode = "intersection";
    std::string geometry;  // "LxN"
    std::optional<std::size_t> size;
    std::string like;
    std::string exclude;
};

Geometry parse_geometry(const std::string& s) {
    unsigned long l = 0, n = 0;
    char x = 0, extra = 0;
    if (std::sscanf(s.c_str(), "%lu%c%lu%c", &l, &x, &n, &extra) != 3 || x != 'x' || l == 0 || n == 0)
        throw Error("bad geometry '" + s + "': expected LxN");
    return {static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(n)};
}

int run_mask_targeted(const Globals& g, const MaskArgs& a) {
    const fs::path out = require_out(g, "mask.json path");
    if (a.selection.empty()) throw Error("mask targeted needs --selection");
    const auto sel = read_selection(a.selection);
    const auto mode = a.mode == "union" ? MaskMode::union_ : MaskMode::intersection;
    const auto mask = targeted_mask(sel, split_csv(a.classes), mode);
    write_mask(mask, out);
    ReportBundle bundle{.command = "mask targeted"};
    bundle.add_input(a.selection);
    bundle.config["classes"] = split_csv(a.classes);
    bundle.config["mode"] = to_string(mode);
    bundle.outputs = {out.filename().string()};
    if (mask.neurons.empty()) bundle.warnings.push_back("empty mask: the named classes share no neurons");
    std::cout << mask.neurons.size() << " neurons\n";
    return finish(g, bundle, report_path_for(out, false));
}

int run_mask_random(const Globals& g, const MaskArgs& a) {
    const fs::path out = require_out(g, "mask.json path");
    ReportBundle bundle{.command = "mask random"};
    Geometry geom{};
    if (!a.geometry.empty()) {
        geom = parse_geometry(a.geometry);
    } else if (!a.selection.empty()) {
        geom = read_selection(a.selection).geometry;
        bundle.add_input(a.selection);
    } else if (!a.like.empty()) {
        geom = read_mask(a.like).geometry;
    } else {
        throw Error("mask random needs --geometry, --selection or --like");
    }
    std::size_t size = 0;
    if (a.size) {
        size = *a.size;
    } else if (!a.like.empty()) {
        size = read_mask(a.like).neurons.size();
    } else {
        throw Error("mask random needs --size or --like");
    }
    if (!a.like.empty()) bundle.add_input(a.like);
    NeuronSet exclude;
    if (!a.exclude.empty()) {
        const auto ex = read_mask(a.exclude);
        if (!(ex.geometry == geom)) throw Error("geometry mismatch: exclude mask");
        exclude = ex.neurons;
        bundle.add_input(a.exclude);
    }
    const std::uint64_t seed = g.seed.value_or(0);
    const auto mask = random_mask(geom, size, seed, exclude);
    write_mask(mask, out);
    bundle.config["seed"] = seed;
    bundle.config["size"] = size;
    bundle.outputs = {out.filename().string()};
    return finish(g, bundle, report_path_for(out, false));
}

// ---- ablate-report -----------------------------------------------------

struct AblateArgs {
    std::string baseline;
    std::string ablated;
    std::string class_names;
    std::string selection;
};

int run_ablate_report(const Globals& g, const AblateArgs& a) {
    const fs::path out = require_out(g, "output directory");
    std::vector<std::string> names = split_csv(a.class_names);
    if (names.empty() && !a.selection.empty()) names = read_selection(a.selection).class_names;
    const auto d = confusion_delta(read_predictions(a.baseline, "baseline"),
                                   read_predictions(a.ablated, "ablated"), names);
    fs::create_directories(out);
    detail::write_file(out / "delta.json", delta_to_json(d).dump(2) + "\n");
    detail::write_file(out / "delta.svg", render_heatmap(d));
    ReportBundle bundle{.command = "ablate-report"};
    bundle.add_input(a.baseline);
    bundle.add_input(a.ablated);
    if (!a.selection.empty()) bundle.add_input(a.selection);
    bundle.outputs = {"delta.json", "delta.svg"};
    std::printf("overall accuracy %.2f%% -> %.2f%% (%+.2f pp)\n", d.overall_baseline, d.overall_ablated,
                d.overall_delta);
    for (std::size_t c = 0; c < d.num_classes(); ++c)
        std::printf("  %s: %+.2f pp\n", d.class_names[c].c_str(), d.accuracy_delta[c]);
    return finish(g, bundle, report_path_for(out, true));
}

// ---- toy-run / toy-plant -----------------------------------------------

struct ToyArgs {
    std::string spec;
};

int run_toy(const Globals& g, const ToyArgs& a) {
    const fs::path out = require_out(g, "output directory");
    ToySpec spec;
    if (!a.spec.empty()) spec = toy_spec_from_json(nlohmann::json::parse(detail::require_file(a.spec)));
    if (g.seed) spec.seed = *g.seed;
    std::vector<ActivationTensor> acts;
    const auto rep = run_toy_pipeline(spec, &acts);
    ReportBundle bundle{.command = "toy-run"};
    if (!a.spec.empty()) bundle.add_input(a.spec);
    bundle.config["spec"] = toy_spec_to_json(spec);
    bundle.outputs = write_pipeline_outputs(rep, acts, out);
    bundle.warnings = rep.selection.warnings;
    if (rep.targeted.mask.neurons.empty()) bundle.warnings.push_back("empty mask: targeted classes share no neurons");
    std::printf("baseline %.2f%%, targeted drop %.2f pp, random drop %.2f pp, random overall change %.2f pp\n",
                rep.targeted.delta.overall_baseline, rep.targeted_drop(), rep.random_drop(),
                rep.random_overall_change());
    return finish(g, bundle, report_path_for(out, true));
}

int run_toy_plant(const Globals& g, const ToyArgs& a) {
    const fs::path out = require_out(g, "dataset directory");
    PlantSpec spec;
    if (!a.spec.empty()) spec = plant_spec_from_json(nlohmann::json::parse(detail::require_file(a.spec)));
    if (g.seed) spec.seed = *g.seed;
    generate_planted_dataset(spec, out);
    std::cout << "wrote " << out.string() << "\n";
    return kOk;
}

// ---- plot --------------------------------------------------------------

struct PlotArgs {
    std::string overlap;
    std::string delta;
    std::string title;
};

int run_plot(const Globals& g, const PlotArgs& a) {
    const fs::path out = require_out(g, "svg path");
    if (a.overlap.empty() == a.delta.empty()) throw Error("plot takes exactly one of --overlap or --delta");
    const auto& in = a.overlap.empty() ? a.delta : a.overlap;
    const auto j = nlohmann::json::parse(detail::require_file(in));
    const auto svg = a.overlap.empty() ? render_heatmap(delta_from_json(j), {.title = a.title})
                                       : render_heatmap(overlap_from_json(j), {.title = a.title});
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    detail::write_file(out, svg);
    ReportBundle bundle{.command = "plot"};
    bundle.add_input(in);
    bundle.outputs = {out.filename().string()};
    return finish(g, bundle, report_path_for(out, false));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-specific neuron identification, overlap and ablation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kToolVersion));

    Globals g;
    app.add_option("--threads", g.threads, "Worker threads for counting")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "Seed for random masks and toy runs");
    app.add_flag("--strict", g.strict, "Exit with code 2 when warnings are emitted");
    app.add_option("--out", g.out, "Output file or directory");

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "Check a dataset directory");
    validate->add_option("dataset", va.dataset)->required();

    StatsArgs sa;
    auto* stats = app.add_subcommand("stats", "Class-wise activation probabilities -> probs.bin");
    stats->add_option("dataset", sa.dataset)->required();
    stats->add_option("--shards", sa.shards, "Count in this many sample shards and merge")
        ->check(CLI::PositiveNumber);

    SelectArgs sel;
    auto* select = app.add_subcommand("select", "Identify class-specific neurons -> selection.json");
    select->add_option("--dataset", sel.dataset)->required();
    select->add_option("--probs", sel.probs, "Precomputed probs.bin");
    select->add_option("--task", sel.task, "Task name (default: manifest task_name)");
    select->add_option("--r-aape", sel.r_aape, "AAPE percentile cut")->capture_default_str();
    select->add_option("--low-cut", sel.low_cut, "Low-activation percentile")->capture_default_str();
    select->add_option("--assign-cut", sel.assign_cut, "Class assignment percentile")->capture_default_str();
    select->add_option("--low-stat", sel.low_stat)
        ->check(CLI::IsMember({"peak_class", "pooled"}))
        ->capture_default_str();
    select->add_option("--assign-pop", sel.assign_pop)
        ->check(CLI::IsMember({"all_neurons", "step2_survivors"}))
        ->capture_default_str();

    OverlapArgs oa;
    auto* overlap = app.add_subcommand("overlap", "Common neuron ratios between selections");
    overlap->add_option("selections", oa.selections, "One selection (within task) or two (across tasks)")
        ->required();
    overlap->add_option("--label-map", oa.label_map, "JSON object mapping class names to merged names");

    SummaryArgs sua;
    auto* summary = app.add_subcommand("summary", "Per-task neuron statistics table");
    summary->add_option("selections", sua.selections)->required();

    MaskArgs ma;
    auto* mask = app.add_subcommand("mask", "Build an ablation mask");
    mask->require_subcommand(1);
    auto* targeted = mask->add_subcommand("targeted", "Neurons of the named classes");
    targeted->add_option("--selection", ma.selection)->required();
    targeted->add_option("--classes", ma.classes, "Comma-separated class names")->required();
    targeted->add_option("--mode", ma.mode)->check(CLI::IsMember({"intersection", "union"}))->capture_default_str();
    auto* random = mask->add_subcommand("random", "Uniform random neurons (seed from --seed)");
    random->add_option("--geometry", ma.geometry, "LxN");
    random->add_option("--selection", ma.selection, "Take geometry from a selection");
    random->add_option("--size", ma.size);
    random->add_option("--like", ma.like, "Match size and geometry of an existing mask");
    random->add_option("--exclude", ma.exclude, "Mask whose neurons are never drawn");

    AblateArgs aa;
    auto* ablate = app.add_subcommand("ablate-report", "Confusion deltas between two prediction runs");
    ablate->add_option("--baseline", aa.baseline)->required();
    ablate->add_option("--ablated", aa.ablated)->required();
    ablate->add_option("--class-names", aa.class_names, "Comma-separated class names");
    ablate->add_option("--selection", aa.selection, "Take class names from a selection");

    ToyArgs ta;
    auto* toy = app.add_subcommand("toy-run", "End-to-end synthetic pipeline");
    toy->add_option("--spec", ta.spec, "Toy spec JSON (defaults if omitted)");
    ToyArgs pa;
    auto* plant = app.add_subcommand("toy-plant", "Write a planted-neuron dataset");
    plant->add_option("--spec", pa.spec, "Plant spec JSON (defaults if omitted)");

    PlotArgs pl;
    auto* plot = app.add_subcommand("plot", "Render overlap.json or delta.json as SVG");
    plot->add_option("--overlap", pl.overlap);
    plot->add_option("--delta", pl.delta);
    plot->add_option("--title", pl.title);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kFailure;
    }

    try {
        if (*validate) return run_validate(g, va);
        if (*stats) return run_stats(g, sa);
        if (*select) return run_select(g, sel);
        if (*overlap) return run_overlap(g, oa);
        if (*summary) return run_summary(g, sua);
        if (*targeted) return run_mask_targeted(g, ma);
        if (*random) return run_mask_random(g, ma);
        if (*ablate) return run_ablate_report(g, aa);
        if (*toy) return run_toy(g, ta);
        if (*plant) return run_toy_plant(g, pa);
        if (*plot) return run_plot(g, pl);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: bad json: " << e.what() << "\n";
        return kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
