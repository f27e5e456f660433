#pragma once

// Ablation masks and prediction deltas.
//
// A mask names neurons whose activation outputs are forced to exactly 0.0.
// Targeted masks come from a selection; random masks are drawn uniformly
// without replacement with the counter-based generator in rng.hpp, so a
// (geometry, size, seed, exclude) tuple always yields the same mask.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "activation_store.hpp"
#include "error.hpp"
#include "neuron_id.hpp"
#include "overlap.hpp"
#include "rng.hpp"
#include "selector.hpp"

namespace aape {

enum class MaskMode { intersection, union_ };

inline const char* to_string(MaskMode m) {
    return m == MaskMode::union_ ? "union" : "intersection";
}

struct TargetedProvenance {
    std::string task;
    std::vector<std::string> classes;
    MaskMode mode = MaskMode::intersection;
    friend bool operator==(const TargetedProvenance&, const TargetedProvenance&) = default;
};

struct RandomProvenance {
    std::uint64_t seed = 0;
    std::size_t size = 0;
    friend bool operator==(const RandomProvenance&, const RandomProvenance&) = default;
};

struct AblationMask {
    Geometry geometry{};
    NeuronSet neurons;  // sorted, unique
    std::variant<TargetedProvenance, RandomProvenance> provenance;

    bool contains(NeuronId id) const {
        return std::binary_search(neurons.begin(), neurons.end(), id);
    }
    friend bool operator==(const AblationMask&, const AblationMask&) = default;
};

inline AblationMask targeted_mask(const NeuronSelection& sel, const std::vector<std::string>& classes,
                                  MaskMode mode = MaskMode::intersection) {
    if (classes.empty()) throw Error("unknown class: no classes given");
    std::vector<NeuronSet> sets;
    for (const auto& name : classes) {
        const auto idx = sel.class_index(name);
        if (!idx) throw Error("unknown class: '" + name + "'");
        sets.push_back(sel.neurons_of(*idx));
    }
    NeuronSet acc = sets.front();
    for (std::size_t i = 1; i < sets.size(); ++i) {
        NeuronSet next;
        if (mode == MaskMode::intersection)
            std::set_intersection(acc.begin(), acc.end(), sets[i].begin(), sets[i].end(),
                                  std::back_inserter(next));
        else
            std::set_union(acc.begin(), acc.end(), sets[i].begin(), sets[i].end(),
                           std::back_inserter(next));
        acc = std::move(next);
    }
    return {sel.geometry, std::move(acc), TargetedProvenance{sel.task_name, classes, mode}};
}

inline AblationMask random_mask(Geometry geometry, std::size_t size, std::uint64_t seed,
                                const NeuronSet& exclude = {}) {
    const auto excl = normalized(exclude);
    for (const auto& id : excl)
        if (!geometry.contains(id)) throw Error("exclude neuron " + id.str() + " outside geometry");
    std::vector<std::size_t> candidates;
    candidates.reserve(geometry.size());
    for (std::size_t i = 0; i < geometry.size(); ++i)
        if (!std::binary_search(excl.begin(), excl.end(), geometry.unflat(i)))
            candidates.push_back(i);
    if (size > candidates.size())
        throw Error("size too large: " + std::to_string(size) + " > " +
                    std::to_string(candidates.size()) + " available neurons");
    // Partial Fisher-Yates: position k swaps with k + bounded(remaining).
    SplitMix64 rng(seed);
    for (std::size_t k = 0; k < size; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.bounded(candidates.size() - k));
        std::swap(candidates[k], candidates[j]);
    }
    NeuronSet picked;
    picked.reserve(size);
    for (std::size_t k = 0; k < size; ++k) picked.push_back(geometry.unflat(candidates[k]));
    std::sort(picked.begin(), picked.end());
    return {geometry, std::move(picked), RandomProvenance{seed, size}};
}

inline void check_mask_geometry(const AblationMask& mask, std::uint32_t layer, std::uint32_t cols) {
    if (layer >= mask.geometry.layers || cols != mask.geometry.neurons_per_layer)
        throw Error("geometry mismatch: mask " + std::to_string(mask.geometry.layers) + "x" +
                    std::to_string(mask.geometry.neurons_per_layer) + " vs layer " +
                    std::to_string(layer) + " with " + std::to_string(cols) + " neurons");
}

// Zeroes the masked columns of one layer in place.
inline void zero_masked_columns(ActivationTensor& t, const AblationMask& mask) {
    check_mask_geometry(mask, t.layer, t.cols);
    auto first = std::lower_bound(mask.neurons.begin(), mask.neurons.end(), NeuronId{t.layer, 0});
    for (auto it = first; it != mask.neurons.end() && it->layer == t.layer; ++it)
        for (std::size_t s = 0; s < t.rows; ++s) t.at(s, it->neuron) = 0.0f;
}

inline std::vector<ActivationTensor> apply_mask_to_tensors(std::span<const ActivationTensor> tensors,
                                                           const AblationMask& mask) {
    std::vector<ActivationTensor> out(tensors.begin(), tensors.end());
    for (auto& t : out) zero_masked_columns(t, mask);
    return out;
}

// mask.json: geometry, provenance, sorted neuron list.
inline nlohmann::ordered_json mask_to_json(const AblationMask& mask) {
    nlohmann::ordered_json j;
    j["geometry"] = {{"layers", mask.geometry.layers},
                     {"neurons_per_layer", mask.geometry.neurons_per_layer}};
    if (const auto* t = std::get_if<TargetedProvenance>(&mask.provenance)) {
        j["provenance"] = {{"kind", "targeted"},
                           {"task", t->task},
                           {"classes", t->classes},
                           {"mode", to_string(t->mode)}};
    } else {
        const auto& r = std::get<RandomProvenance>(mask.provenance);
        j["provenance"] = {{"kind", "random"}, {"seed", r.seed}, {"size", r.size}};
    }
    auto neurons = nlohmann::ordered_json::array();
    for (const auto& id : mask.neurons) neurons.push_back({{"layer", id.layer}, {"neuron", id.neuron}});
    j["neurons"] = std::move(neurons);
    return j;
}

inline AblationMask mask_from_json(const nlohmann::json& j) {
    AblationMask m;
    try {
        m.geometry = {j.at("geometry").at("layers").get<std::uint32_t>(),
                      j.at("geometry").at("neurons_per_layer").get<std::uint32_t>()};
        const auto& p = j.at("provenance");
        const auto kind = p.at("kind").get<std::string>();
        if (kind == "targeted") {
            m.provenance = TargetedProvenance{
                p.at("task").get<std::string>(), p.at("classes").get<std::vector<std::string>>(),
                p.at("mode").get<std::string>() == "union" ? MaskMode::union_
                                                           : MaskMode::intersection};
        } else if (kind == "random") {
            m.provenance = RandomProvenance{p.at("seed").get<std::uint64_t>(),
                                            p.at("size").get<std::size_t>()};
        } else {
            throw Error("bad mask: unknown provenance kind '" + kind + "'");
        }
        for (const auto& n : j.at("neurons")) {
            NeuronId id{n.at("layer").get<std::uint32_t>(), n.at("neuron").get<std::uint32_t>()};
            if (!m.geometry.contains(id)) throw Error("bad mask: neuron " + id.str() + " outside geometry");
            m.neurons.push_back(id);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad mask: ") + e.what());
    }
    const auto before = m.neurons.size();
    m.neurons = normalized(std::move(m.neurons));
    if (m.neurons.size() != before) throw Error("bad mask: duplicate neurons");
    return m;
}

inline void write_mask(const AblationMask& mask, const std::filesystem::path& path) {
    detail::write_file(path, mask_to_json(mask).dump(2) + "\n");
}

inline AblationMask read_mask(const std::filesystem::path& path) {
    const auto text = detail::require_file(path);
    try {
        return mask_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("bad mask: ") + e.what());
    }
}

struct PredictionRun {
    std::string tag;  // "original", "targeted", "random-seed-<k>"
    std::vector<std::uint32_t> truth;
    std::vector<std::uint32_t> predicted;

    std::size_t size() const { return truth.size(); }
    friend bool operator==(const PredictionRun&, const PredictionRun&) = default;
};

// predictions.csv: "sample_id,true_class,predicted_class".
inline std::string predictions_to_csv(const PredictionRun& run) {
    if (run.truth.size() != run.predicted.size()) throw Error("sample misalignment");
    std::string out = "sample_id,true_class,predicted_class\n";
    for (std::size_t s = 0; s < run.truth.size(); ++s)
        out += std::to_string(s) + "," + std::to_string(run.truth[s]) + "," +
               std::to_string(run.predicted[s]) + "\n";
    return out;
}

inline PredictionRun predictions_from_csv(std::string_view text, std::string tag = {}) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "sample_id,true_class,predicted_class")
        throw Error("bad predictions header");
    PredictionRun run;
    run.tag = std::move(tag);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        unsigned long long id = 0, t = 0, p = 0;
        char extra = 0;
        if (std::sscanf(line.c_str(), "%llu,%llu,%llu%c", &id, &t, &p, &extra) != 3)
            throw Error("bad predictions row " + std::to_string(row) + ": '" + line + "'");
        if (id != row) throw Error("sample misalignment: row " + std::to_string(row) +
                                   " has sample_id " + std::to_string(id));
        run.truth.push_back(static_cast<std::uint32_t>(t));
        run.predicted.push_back(static_cast<std::uint32_t>(p));
        ++row;
    }
    return run;
}

inline void write_predictions(const PredictionRun& run, const std::filesystem::path& path) {
    detail::write_file(path, predictions_to_csv(run));
}

inline PredictionRun read_predictions(const std::filesystem::path& path, std::string tag = {}) {
    return predictions_from_csv(detail::require_file(path), std::move(tag));
}

struct DeltaReport {
    std::vector<std::string> class_names;
    std::vector<std::uint64_t> baseline_counts;  // [true][predicted]
    std::vector<std::uint64_t> ablated_counts;
    std::vector<double> baseline_rate;  // row-normalized percent
    std::vector<double> ablated_rate;
    std::vector<double> delta_rate;     // ablated - baseline, percentage points
    std::vector<double> baseline_accuracy;  // per class, percent
    std::vector<double> ablated_accuracy;
    std::vector<double> accuracy_delta;     // per class, percentage points
    double overall_baseline = 0.0;
    double overall_ablated = 0.0;
    double overall_delta = 0.0;

    std::size_t num_classes() const { return class_names.size(); }
};

namespace detail {

inline void confusion(const PredictionRun& run, std::size_t C, std::vector<std::uint64_t>& counts,
                      std::vector<double>& rate, std::vector<double>& acc, double& overall) {
    counts.assign(C * C, 0);
    std::uint64_t correct = 0;
    for (std::size_t s = 0; s < run.size(); ++s) {
        if (run.truth[s] >= C || run.predicted[s] >= C) throw Error("class index out of range");
        ++counts[run.truth[s] * C + run.predicted[s]];
        correct += run.truth[s] == run.predicted[s] ? 1 : 0;
    }
    rate.assign(C * C, 0.0);
    acc.assign(C, 0.0);
    for (std::size_t t = 0; t < C; ++t) {
        std::uint64_t row = 0;
        for (std::size_t p = 0; p < C; ++p) row += counts[t * C + p];
        if (row == 0) continue;
        for (std::size_t p = 0; p < C; ++p)
            rate[t * C + p] = 100.0 * static_cast<double>(counts[t * C + p]) / static_cast<double>(row);
        acc[t] = rate[t * C + t];
    }
    overall = run.size() == 0 ? 0.0
                              : 100.0 * static_cast<double>(correct) / static_cast<double>(run.size());
}

}  // namespace detail

// `class_names` may be empty; the class count is then inferred from the
// largest index seen in either run.
inline DeltaReport confusion_delta(const PredictionRun& baseline, const PredictionRun& ablated,
                                   std::vector<std::string> class_names = {}) {
    if (baseline.truth.size() != baseline.predicted.size() ||
        ablated.truth.size() != ablated.predicted.size() || baseline.truth != ablated.truth)
        throw Error("sample misalignment: runs cover different samples");
    if (class_names.empty()) {
        std::uint32_t max_idx = 0;
        for (const auto* r : {&baseline, &ablated})
            for (std::size_t s = 0; s < r->size(); ++s)
                max_idx = std::max({max_idx, r->truth[s], r->predicted[s]});
        for (std::uint32_t c = 0; c <= max_idx; ++c) class_names.push_back(std::to_string(c));
    }
    DeltaReport d;
    d.class_names = std::move(class_names);
    const auto C = d.num_classes();
    detail::confusion(baseline, C, d.baseline_counts, d.baseline_rate, d.baseline_accuracy,
                      d.overall_baseline);
    detail::confusion(ablated, C, d.ablated_counts, d.ablated_rate, d.ablated_accuracy,
                      d.overall_ablated);
    d.delta_rate.resize(C * C);
    for (std::size_t i = 0; i < C * C; ++i) d.delta_rate[i] = d.ablated_rate[i] - d.baseline_rate[i];
    d.accuracy_delta.resize(C);
    for (std::size_t c = 0; c < C; ++c)
        d.accuracy_delta[c] = d.ablated_accuracy[c] - d.baseline_accuracy[c];
    d.overall_delta = d.overall_ablated - d.overall_baseline;
    return d;
}

inline nlohmann::ordered_json delta_to_json(const DeltaReport& d) {
    nlohmann::ordered_json j;
    j["class_names"] = d.class_names;
    j["baseline_counts"] = d.baseline_counts;
    j["ablated_counts"] = d.ablated_counts;
    j["baseline_rate_pct"] = d.baseline_rate;
    j["ablated_rate_pct"] = d.ablated_rate;
    j["delta_rate_pp"] = d.delta_rate;
    j["baseline_accuracy_pct"] = d.baseline_accuracy;
    j["ablated_accuracy_pct"] = d.ablated_accuracy;
    j["accuracy_delta_pp"] = d.accuracy_delta;
    j["overall"] = {{"baseline_pct", d.overall_baseline},
                    {"ablated_pct", d.overall_ablated},
                    {"delta_pp", d.overall_delta}};
    return j;
}

inline DeltaReport delta_from_json(const nlohmann::json& j) {
    DeltaReport d;
    try {
        d.class_names = j.at("class_names").get<std::vector<std::string>>();
        d.baseline_counts = j.at("baseline_counts").get<std::vector<std::uint64_t>>();
        d.ablated_counts = j.at("ablated_counts").get<std::vector<std::uint64_t>>();
        d.baseline_rate = j.at("baseline_rate_pct").get<std::vector<double>>();
        d.ablated_rate = j.at("ablated_rate_pct").get<std::vector<double>>();
        d.delta_rate = j.at("delta_rate_pp").get<std::vector<double>>();
        d.baseline_accuracy = j.at("baseline_accuracy_pct").get<std::vector<double>>();
        d.ablated_accuracy = j.at("ablated_accuracy_pct").get<std::vector<double>>();
        d.accuracy_delta = j.at("accuracy_delta_pp").get<std::vector<double>>();
        d.overall_baseline = j.at("overall").at("baseline_pct").get<double>();
        d.overall_ablated = j.at("overall").at("ablated_pct").get<double>();
        d.overall_delta = j.at("overall").at("delta_pp").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad delta report: ") + e.what());
    }
    const auto C = d.num_classes();
    if (d.delta_rate.size() != C * C || d.accuracy_delta.size() != C)
        throw Error("bad delta report: shape");
    return d;
}

}  // namespace aape
