#pragma once

// Common neuron ratios (Jaccard coefficients) between class neuron sets,
// within one task or across two tasks of the same model geometry.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "neuron_id.hpp"
#include "selector.hpp"

namespace aape {

inline std::size_t intersection_size(const NeuronSet& a, const NeuronSet& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++n, ++i, ++j;
        }
    }
    return n;
}

inline NeuronSet normalized(NeuronSet s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

// |a ∩ b| / |a ∪ b|, 0 when both are empty. Inputs must be sorted and unique.
inline double jaccard(const NeuronSet& a, const NeuronSet& b) {
    const auto inter = intersection_size(a, b);
    const auto uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct OverlapMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<double> values;  // row-major
    std::vector<std::pair<std::size_t, std::size_t>> empty_pairs;  // both sets empty

    std::size_t rows() const { return row_labels.size(); }
    std::size_t cols() const { return col_labels.size(); }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    OverlapMatrix transposed() const {
        OverlapMatrix t;
        t.row_labels = col_labels;
        t.col_labels = row_labels;
        t.values.resize(values.size());
        for (std::size_t r = 0; r < rows(); ++r)
            for (std::size_t c = 0; c < cols(); ++c) t.values[c * rows() + r] = at(r, c);
        for (auto [r, c] : empty_pairs) t.empty_pairs.emplace_back(c, r);
        std::sort(t.empty_pairs.begin(), t.empty_pairs.end());
        return t;
    }
};

inline std::vector<std::string> qualified_labels(const NeuronSelection& sel) {
    std::vector<std::string> out;
    for (const auto& c : sel.class_names) out.push_back(sel.task_name + ":" + c);
    return out;
}

inline OverlapMatrix cross_task_matrix(const NeuronSelection& a, const NeuronSelection& b) {
    if (!(a.geometry == b.geometry))
        throw Error("geometry mismatch: selections come from different model geometries");
    OverlapMatrix m;
    m.row_labels = qualified_labels(a);
    m.col_labels = qualified_labels(b);
    std::vector<NeuronSet> sa, sb;
    for (std::size_t c = 0; c < a.num_classes(); ++c) sa.push_back(a.neurons_of(c));
    for (std::size_t c = 0; c < b.num_classes(); ++c) sb.push_back(b.neurons_of(c));
    m.values.resize(sa.size() * sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i)
        for (std::size_t j = 0; j < sb.size(); ++j) {
            m.values[i * sb.size() + j] = jaccard(sa[i], sb[j]);
            if (sa[i].empty() && sb[j].empty()) m.empty_pairs.emplace_back(i, j);
        }
    return m;
}

// Merges classes under a label map (old class name -> new class name); each
// new class gets the union of its sources' neuron sets. Classes missing from
// the map keep their name. New classes are ordered by first appearance.
inline NeuronSelection relabel_classes(const NeuronSelection& sel,
                                       const std::map<std::string, std::string>& label_map) {
    NeuronSelection out = sel;
    out.class_names.clear();
    out.per_class.clear();
    std::map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < sel.num_classes(); ++c) {
        const auto it = label_map.find(sel.class_names[c]);
        const auto& name = it == label_map.end() ? sel.class_names[c] : it->second;
        auto [pos, inserted] = index.try_emplace(name, out.class_names.size());
        if (inserted) {
            out.class_names.push_back(name);
            out.per_class.emplace_back();
        }
        auto& dst = out.per_class[pos->second];
        for (const auto& m : sel.per_class[c]) {
            auto same = std::find_if(dst.begin(), dst.end(),
                                     [&](const SelectedNeuron& x) { return x.id == m.id; });
            if (same == dst.end())
                dst.push_back(m);
            else
                same->prob = std::max(same->prob, m.prob);
        }
    }
    for (auto& members : out.per_class)
        std::sort(members.begin(), members.end(),
                  [](const auto& x, const auto& y) { return x.id < y.id; });
    return out;
}

struct SummaryRow {
    std::string task;
    double mean_neurons = 0.0;
    double coverage_ratio = 0.0;
};

struct SummaryTable {
    std::vector<SummaryRow> tasks;
    std::optional<SummaryRow> average;  // unweighted over tasks; absent for no tasks
};

inline SummaryTable summarize_rq1(const std::vector<NeuronSelection>& selections) {
    SummaryTable t;
    double mean_sum = 0.0, cov_sum = 0.0;
    for (const auto& sel : selections) {
        const auto cs = coverage_stats(sel);
        t.tasks.push_back({sel.task_name, cs.mean_neurons, cs.coverage_ratio});
        mean_sum += cs.mean_neurons;
        cov_sum += cs.coverage_ratio;
    }
    if (!t.tasks.empty()) {
        const auto n = static_cast<double>(t.tasks.size());
        t.average = SummaryRow{"Average", mean_sum / n, cov_sum / n};
    }
    return t;
}

// overlap.csv: "row,col,ratio", one line per cell in row-major order.
inline std::string overlap_to_csv(const OverlapMatrix& m) {
    std::string out = "row,col,ratio\n";
    char buf[64];
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.6f", m.at(r, c));
            out += m.row_labels[r] + "," + m.col_labels[c] + "," + buf + "\n";
        }
    return out;
}

inline nlohmann::ordered_json overlap_to_json(const OverlapMatrix& m) {
    nlohmann::ordered_json j;
    j["row_labels"] = m.row_labels;
    j["col_labels"] = m.col_labels;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::vector<double> row(m.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols()),
                                m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols()));
        rows.push_back(row);
    }
    j["values"] = std::move(rows);
    auto empties = nlohmann::ordered_json::array();
    for (auto [r, c] : m.empty_pairs) empties.push_back({r, c});
    j["empty_pairs"] = std::move(empties);
    return j;
}

inline OverlapMatrix overlap_from_json(const nlohmann::json& j) {
    OverlapMatrix m;
    try {
        m.row_labels = j.at("row_labels").get<std::vector<std::string>>();
        m.col_labels = j.at("col_labels").get<std::vector<std::string>>();
        const auto& rows = j.at("values");
        if (rows.size() != m.rows()) throw Error("bad overlap: row count");
        for (const auto& row : rows) {
            auto v = row.get<std::vector<double>>();
            if (v.size() != m.cols()) throw Error("bad overlap: column count");
            m.values.insert(m.values.end(), v.begin(), v.end());
        }
        if (j.contains("empty_pairs"))
            for (const auto& p : j.at("empty_pairs"))
                m.empty_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad overlap: ") + e.what());
    }
    return m;
}

}  // namespace aape
