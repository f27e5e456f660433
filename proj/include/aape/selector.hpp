#pragma once

// Audio activation probability entropy and class-specific neuron selection.
//
// For each neuron the class-wise activation probabilities are normalized to
// a distribution over classes and scored by its Shannon entropy (natural
// log, 0 ln 0 = 0). Low entropy means the neuron fires for few classes.
//
// Selection is a three-step filter:
//   1. drop neurons whose activation statistic is at or below the
//      low_activation_cut percentile over all neurons;
//   2. among survivors with a finite score, keep those at or below the
//      r_aape percentile of scores;
//   3. assign each kept neuron to every class whose probability is positive
//      and at or above the assignment_cut percentile of the class-probability
//      multiset; neurons with no class are dropped.
// Percentiles are nearest-rank and boundary ties are kept on the inclusive
// side.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "activation_store.hpp"
#include "error.hpp"
#include "neuron_id.hpp"
#include "percentile.hpp"
#include "stats.hpp"

namespace aape {

inline constexpr double kNoActivation = std::numeric_limits<double>::infinity();

struct AapeScores {
    Geometry geometry{};
    std::vector<double> score;  // flat [layer][neuron]; kNoActivation if never active

    double operator[](NeuronId id) const { return score[geometry.flat(id)]; }
};

// Entropy of one neuron's class-wise probabilities after normalization.
// Terms are summed in ascending order, so the result is bitwise independent
// of class order.
inline double aape_entropy(std::span<const double> class_probs) {
    thread_local std::vector<double> sorted;
    sorted.assign(class_probs.begin(), class_probs.end());
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double p : sorted) total += p;
    if (!(total > 0.0)) return kNoActivation;
    double h = 0.0;
    for (double p : sorted) {
        if (p <= 0.0) continue;
        const double q = p / total;
        h -= q * std::log(q);
    }
    return h;
}

inline AapeScores compute_aape(const ProbabilityTable& probs) {
    if (probs.class_prob.size() != probs.geometry.size() * probs.num_classes)
        throw Error("invalid probability table");
    AapeScores s{probs.geometry, std::vector<double>(probs.geometry.size())};
    for (std::size_t i = 0; i < s.score.size(); ++i) s.score[i] = aape_entropy(probs.probs_of(i));
    return s;
}

// Statistic ranked in step 1.
enum class ActivationStat {
    peak_class,  // max over classes of the class-wise probability
    pooled,      // fraction of all samples with positive activation
};

// Population whose class probabilities define the step-3 threshold.
enum class AssignPopulation {
    all_neurons,
    step2_survivors,
};

inline const char* to_string(ActivationStat s) {
    return s == ActivationStat::pooled ? "pooled" : "peak_class";
}
inline const char* to_string(AssignPopulation p) {
    return p == AssignPopulation::step2_survivors ? "step2_survivors" : "all_neurons";
}

struct SelectionConfig {
    double r_aape = 1.0;
    double low_activation_cut = 5.0;
    double assignment_cut = 95.0;
    ActivationStat low_activation_stat = ActivationStat::peak_class;
    AssignPopulation assign_population = AssignPopulation::all_neurons;

    void validate() const {
        auto check = [](double v, const char* name) {
            if (!(v > 0.0 && v <= 100.0))
                throw Error(std::string("invalid config: ") + name + " must be in (0, 100]");
        };
        check(r_aape, "r_aape");
        check(low_activation_cut, "low_activation_cut");
        check(assignment_cut, "assignment_cut");
    }
};

struct SelectedNeuron {
    NeuronId id;
    double aape = 0.0;
    double prob = 0.0;  // class-wise probability for the class it is listed under

    friend bool operator==(const SelectedNeuron&, const SelectedNeuron&) = default;
};

struct ResolvedThresholds {
    double low_activation = 0.0;  // step-1 cut value (neurons <= this are dropped)
    double aape = 0.0;            // step-2 cut value (neurons <= this are kept)
    double assignment = 0.0;      // step-3 cut value (probabilities >= this assign)
    friend bool operator==(const ResolvedThresholds&, const ResolvedThresholds&) = default;
};

struct NeuronSelection {
    std::string task_name;
    Geometry geometry{};
    std::vector<std::string> class_names;
    SelectionConfig config;
    ResolvedThresholds thresholds;
    std::size_t step1_survivors = 0;
    std::size_t step2_survivors = 0;
    std::size_t assigned_neurons = 0;
    std::vector<std::vector<SelectedNeuron>> per_class;  // sorted by NeuronId
    std::vector<std::string> warnings;

    std::size_t num_classes() const { return class_names.size(); }

    std::optional<std::size_t> class_index(std::string_view name) const {
        for (std::size_t c = 0; c < class_names.size(); ++c)
            if (class_names[c] == name) return c;
        return std::nullopt;
    }

    NeuronSet neurons_of(std::size_t cls) const {
        NeuronSet out;
        out.reserve(per_class.at(cls).size());
        for (const auto& m : per_class[cls]) out.push_back(m.id);
        return out;
    }

    // All neurons assigned to at least one class, sorted.
    NeuronSet all_neurons() const {
        NeuronSet out;
        for (const auto& members : per_class)
            for (const auto& m : members) out.push_back(m.id);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

namespace detail {

inline bool all_equal(std::span<const double> v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

}  // namespace detail

inline NeuronSelection select_neurons(const ProbabilityTable& probs, const AapeScores& scores,
                                      const SelectionConfig& cfg, std::string task_name = {},
                                      std::vector<std::string> class_names = {}) {
    cfg.validate();
    const auto& g = probs.geometry;
    const auto C = probs.num_classes;
    if (!(scores.geometry == g) || scores.score.size() != g.size())
        throw Error("geometry mismatch: scores and probabilities");
    if (class_names.empty())
        for (std::size_t c = 0; c < C; ++c) class_names.push_back("class_" + std::to_string(c));
    if (class_names.size() != C) throw Error("class name count mismatch");
    if (g.size() == 0) throw Error("empty selection after step 1: no neurons");

    NeuronSelection sel;
    sel.task_name = std::move(task_name);
    sel.geometry = g;
    sel.class_names = std::move(class_names);
    sel.config = cfg;
    sel.per_class.resize(C);

    // Step 1: insufficient activation.
    std::vector<double> stat(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (cfg.low_activation_stat == ActivationStat::pooled) {
            stat[i] = probs.pooled_prob[i];
        } else {
            const auto p = probs.probs_of(i);
            stat[i] = p.empty() ? 0.0 : *std::max_element(p.begin(), p.end());
        }
    }
    if (detail::all_equal(stat))
        throw Error("degenerate statistic at step 1: all " + std::to_string(stat.size()) +
                    " neurons share the value " + std::to_string(stat.front()));
    sel.thresholds.low_activation = nearest_rank_percentile(stat, cfg.low_activation_cut);
    std::vector<std::size_t> step1;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (stat[i] > sel.thresholds.low_activation) step1.push_back(i);
    sel.step1_survivors = step1.size();
    if (step1.empty()) throw Error("empty selection after step 1");

    // Step 2: selectivity.
    std::vector<std::size_t> finite;
    std::vector<double> finite_scores;
    for (auto i : step1)
        if (std::isfinite(scores.score[i])) {
            finite.push_back(i);
            finite_scores.push_back(scores.score[i]);
        }
    if (finite.empty()) throw Error("empty selection after step 2: no finite scores");
    if (finite.size() > 1 && detail::all_equal(finite_scores))
        sel.warnings.push_back("degenerate statistic at step 2: all scores equal");
    sel.thresholds.aape = nearest_rank_percentile(finite_scores, cfg.r_aape);
    std::vector<std::size_t> step2;
    for (auto i : finite)
        if (scores.score[i] <= sel.thresholds.aape) step2.push_back(i);
    sel.step2_survivors = step2.size();

    // Step 3: class assignment.
    std::vector<double> pool;
    if (cfg.assign_population == AssignPopulation::all_neurons) {
        pool = probs.class_prob;
    } else {
        for (auto i : step2) {
            const auto p = probs.probs_of(i);
            pool.insert(pool.end(), p.begin(), p.end());
        }
    }
    if (pool.size() > 1 && detail::all_equal(pool))
        sel.warnings.push_back("degenerate statistic at step 3: all probabilities equal");
    sel.thresholds.assignment = nearest_rank_percentile(pool, cfg.assignment_cut);
    for (auto i : step2) {
        const auto p = probs.probs_of(i);
        bool any = false;
        for (std::size_t c = 0; c < C; ++c) {
            if (p[c] > 0.0 && p[c] >= sel.thresholds.assignment) {
                sel.per_class[c].push_back({g.unflat(i), scores.score[i], p[c]});
                any = true;
            }
        }
        sel.assigned_neurons += any ? 1 : 0;
    }
    if (sel.assigned_neurons == 0) throw Error("empty selection after step 3");
    return sel;
}

struct CoverageStats {
    double mean_neurons = 0.0;    // sum of per-class set sizes / number of classes
    double coverage_ratio = 0.0;  // fraction of classes with a nonempty set
    std::vector<std::size_t> per_class_counts;
};

inline CoverageStats coverage_stats(const NeuronSelection& sel) {
    CoverageStats s;
    const auto C = sel.num_classes();
    if (C == 0) return s;
    std::size_t total = 0, covered = 0;
    for (const auto& members : sel.per_class) {
        s.per_class_counts.push_back(members.size());
        total += members.size();
        covered += members.empty() ? 0 : 1;
    }
    s.mean_neurons = static_cast<double>(total) / static_cast<double>(C);
    s.coverage_ratio = static_cast<double>(covered) / static_cast<double>(C);
    return s;
}

// selection.json. Classes appear in class order and members in NeuronId
// order, so equal selections serialize to identical bytes.
inline nlohmann::ordered_json selection_to_json(const NeuronSelection& sel) {
    nlohmann::ordered_json j;
    j["task"] = sel.task_name;
    j["geometry"] = {{"layers", sel.geometry.layers},
                     {"neurons_per_layer", sel.geometry.neurons_per_layer}};
    j["class_names"] = sel.class_names;
    j["entropy_log_base"] = "e";
    j["config"] = {{"r_aape", sel.config.r_aape},
                   {"low_activation_cut", sel.config.low_activation_cut},
                   {"assignment_cut", sel.config.assignment_cut},
                   {"low_activation_stat", to_string(sel.config.low_activation_stat)},
                   {"assign_population", to_string(sel.config.assign_population)},
                   {"percentile_method", "nearest_rank"}};
    j["thresholds"] = {{"low_activation", sel.thresholds.low_activation},
                       {"aape", sel.thresholds.aape},
                       {"assignment", sel.thresholds.assignment}};
    j["survivors"] = {{"step1", sel.step1_survivors},
                      {"step2", sel.step2_survivors},
                      {"assigned", sel.assigned_neurons}};
    auto classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < sel.num_classes(); ++c) {
        auto members = nlohmann::ordered_json::array();
        for (const auto& m : sel.per_class[c])
            members.push_back({{"layer", m.id.layer},
                               {"neuron", m.id.neuron},
                               {"aape", m.aape},
                               {"prob", m.prob}});
        classes.push_back({{"name", sel.class_names[c]}, {"neurons", std::move(members)}});
    }
    j["classes"] = std::move(classes);
    j["warnings"] = sel.warnings;
    return j;
}

inline NeuronSelection selection_from_json(const nlohmann::json& j) {
    NeuronSelection sel;
    try {
        sel.task_name = j.at("task").get<std::string>();
        sel.geometry = {j.at("geometry").at("layers").get<std::uint32_t>(),
                        j.at("geometry").at("neurons_per_layer").get<std::uint32_t>()};
        sel.class_names = j.at("class_names").get<std::vector<std::string>>();
        const auto& cfg = j.at("config");
        sel.config.r_aape = cfg.at("r_aape").get<double>();
        sel.config.low_activation_cut = cfg.at("low_activation_cut").get<double>();
        sel.config.assignment_cut = cfg.at("assignment_cut").get<double>();
        sel.config.low_activation_stat = cfg.value("low_activation_stat", "peak_class") == "pooled"
                                             ? ActivationStat::pooled
                                             : ActivationStat::peak_class;
        sel.config.assign_population =
            cfg.value("assign_population", "all_neurons") == "step2_survivors"
                ? AssignPopulation::step2_survivors
                : AssignPopulation::all_neurons;
        const auto& th = j.at("thresholds");
        sel.thresholds = {th.at("low_activation").get<double>(), th.at("aape").get<double>(),
                          th.at("assignment").get<double>()};
        const auto& sv = j.at("survivors");
        sel.step1_survivors = sv.at("step1").get<std::size_t>();
        sel.step2_survivors = sv.at("step2").get<std::size_t>();
        sel.assigned_neurons = sv.at("assigned").get<std::size_t>();
        const auto& classes = j.at("classes");
        if (classes.size() != sel.class_names.size())
            throw Error("bad selection: class list length mismatch");
        for (const auto& cls : classes) {
            std::vector<SelectedNeuron> members;
            for (const auto& m : cls.at("neurons")) {
                SelectedNeuron s{{m.at("layer").get<std::uint32_t>(),
                                  m.at("neuron").get<std::uint32_t>()},
                                 m.at("aape").get<double>(),
                                 m.at("prob").get<double>()};
                if (!sel.geometry.contains(s.id))
                    throw Error("bad selection: neuron " + s.id.str() + " outside geometry");
                members.push_back(s);
            }
            std::sort(members.begin(), members.end(),
                      [](const auto& a, const auto& b) { return a.id < b.id; });
            sel.per_class.push_back(std::move(members));
        }
        if (j.contains("warnings")) sel.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad selection: ") + e.what());
    }
    return sel;
}

inline void write_selection(const NeuronSelection& sel, const std::filesystem::path& path) {
    detail::write_file(path, selection_to_json(sel).dump(2) + "\n");
}

inline NeuronSelection read_selection(const std::filesystem::path& path) {
    const auto text = detail::require_file(path);
    try {
        return selection_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("bad selection: ") + e.what());
    }
}

}  // namespace aape
