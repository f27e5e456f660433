#pragma once

// On-disk activation dataset.
//
// A dataset directory holds
//   manifest.json   task name, geometry, sample count, class names,
//                   token aggregation, dtype tag ("f32le")
//   layer_<ll>.bin  magic "AAPEDAT1", u32-LE S, u32-LE N, then S*N
//                   f32-LE values, row-major (one row per sample)
//   labels.csv      "sample_id,class_index" header, S rows, sample_id is
//                   the row ordinal
//
// Values are one scalar per (sample, neuron): token aggregation happens
// before storage and is recorded in the manifest.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "neuron_id.hpp"

namespace aape {

enum class Aggregation { mean_tokens, max_tokens, frac_positive_tokens };

inline const char* to_string(Aggregation a) {
    switch (a) {
        case Aggregation::mean_tokens: return "mean_tokens";
        case Aggregation::max_tokens: return "max_tokens";
        case Aggregation::frac_positive_tokens: return "frac_positive_tokens";
    }
    return "?";
}

inline std::optional<Aggregation> parse_aggregation(std::string_view s) {
    if (s == "mean_tokens") return Aggregation::mean_tokens;
    if (s == "max_tokens") return Aggregation::max_tokens;
    if (s == "frac_positive_tokens") return Aggregation::frac_positive_tokens;
    return std::nullopt;
}

struct DatasetManifest {
    std::string task_name;
    std::uint32_t num_layers = 0;
    std::uint32_t neurons_per_layer = 0;
    std::uint32_t num_samples = 0;
    std::vector<std::string> class_names;
    Aggregation aggregation = Aggregation::mean_tokens;
    std::string dtype = "f32le";

    Geometry geometry() const { return {num_layers, neurons_per_layer}; }
    std::size_t num_classes() const { return class_names.size(); }
};

// One layer: S x N values, row-major.
struct ActivationTensor {
    std::uint32_t layer = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<float> values;

    ActivationTensor() = default;
    ActivationTensor(std::uint32_t layer_, std::uint32_t rows_, std::uint32_t cols_)
        : layer(layer_), rows(rows_), cols(cols_),
          values(static_cast<std::size_t>(rows_) * cols_, 0.0f) {}

    float& at(std::size_t s, std::size_t n) { return values[s * cols + n]; }
    float at(std::size_t s, std::size_t n) const { return values[s * cols + n]; }
    std::span<const float> row(std::size_t s) const {
        return {values.data() + s * cols, cols};
    }
    std::span<float> row(std::size_t s) { return {values.data() + s * cols, cols}; }

    friend bool operator==(const ActivationTensor& a, const ActivationTensor& b) {
        return a.layer == b.layer && a.rows == b.rows && a.cols == b.cols &&
               a.values.size() == b.values.size() &&
               std::memcmp(a.values.data(), b.values.data(),
                           a.values.size() * sizeof(float)) == 0;
    }
};

struct ClassLabeling {
    std::vector<std::uint32_t> classes;  // per sample, aligned with tensor rows

    std::size_t size() const { return classes.size(); }
    std::vector<std::uint64_t> counts(std::size_t num_classes) const {
        std::vector<std::uint64_t> c(num_classes, 0);
        for (auto k : classes)
            if (k < num_classes) ++c[k];
        return c;
    }
    friend bool operator==(const ClassLabeling&, const ClassLabeling&) = default;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<ActivationTensor> tensors;
    ClassLabeling labels;
};

struct Issue {
    std::string code;    // stable tag, e.g. "label out of range"
    std::string detail;  // human-readable context
};

struct ValidationReport {
    std::vector<Issue> violations;
    std::vector<Issue> warnings;  // e.g. "zero-sample class"

    bool ok() const { return violations.empty(); }
    bool has_violation(std::string_view code) const {
        for (const auto& v : violations)
            if (v.code == code) return true;
        return false;
    }
    bool has_warning(std::string_view code) const {
        for (const auto& w : warnings)
            if (w.code == code) return true;
        return false;
    }
};

inline constexpr std::array<char, 8> kLayerMagic = {'A', 'A', 'P', 'E', 'D', 'A', 'T', '1'};

inline std::string layer_file_name(std::uint32_t layer) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "layer_%02u.bin", layer);
    return buf;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("i/o failure: cannot open " + p.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("i/o failure: write to " + p.string());
}

inline std::optional<std::string> read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) return std::nullopt;
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string require_file(const std::filesystem::path& p) {
    auto bytes = read_file(p);
    if (!bytes) throw Error("missing file: " + p.string());
    return *bytes;
}

}  // namespace detail

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["task_name"] = m.task_name;
    j["num_layers"] = m.num_layers;
    j["neurons_per_layer"] = m.neurons_per_layer;
    j["num_samples"] = m.num_samples;
    j["class_names"] = m.class_names;
    j["aggregation"] = to_string(m.aggregation);
    j["dtype"] = m.dtype;
    return j;
}

// Structural checks on the manifest alone.
inline void check_manifest(const DatasetManifest& m, std::vector<Issue>& out) {
    if (m.num_layers < 1) out.push_back({"bad manifest", "num_layers must be >= 1"});
    if (m.neurons_per_layer < 1) out.push_back({"bad manifest", "neurons_per_layer must be >= 1"});
    if (m.num_samples < 1) out.push_back({"bad manifest", "num_samples must be >= 1"});
    if (m.class_names.size() < 2) out.push_back({"bad manifest", "need at least 2 classes"});
    for (std::size_t i = 0; i < m.class_names.size(); ++i)
        for (std::size_t j = i + 1; j < m.class_names.size(); ++j)
            if (m.class_names[i] == m.class_names[j])
                out.push_back({"bad manifest", "duplicate class name '" + m.class_names[i] + "'"});
    if (m.dtype != "f32le") out.push_back({"bad manifest", "dtype must be f32le"});
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.task_name = j.at("task_name").get<std::string>();
        m.num_layers = j.at("num_layers").get<std::uint32_t>();
        m.neurons_per_layer = j.at("neurons_per_layer").get<std::uint32_t>();
        m.num_samples = j.at("num_samples").get<std::uint32_t>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        const auto agg = j.at("aggregation").get<std::string>();
        auto parsed = parse_aggregation(agg);
        if (!parsed) throw Error("bad manifest: unknown aggregation '" + agg + "'");
        m.aggregation = *parsed;
        m.dtype = j.at("dtype").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad manifest: ") + e.what());
    }
    return m;
}

inline std::string encode_layer(const ActivationTensor& t) {
    std::string out;
    out.reserve(16 + t.values.size() * 4);
    out.append(kLayerMagic.data(), kLayerMagic.size());
    detail::put_u32(out, t.rows);
    detail::put_u32(out, t.cols);
    for (float v : t.values) detail::put_f32(out, v);
    return out;
}

inline std::string encode_labels(const ClassLabeling& labels) {
    std::string out = "sample_id,class_index\n";
    for (std::size_t s = 0; s < labels.classes.size(); ++s)
        out += std::to_string(s) + "," + std::to_string(labels.classes[s]) + "\n";
    return out;
}

// Decodes one layer file; problems are appended to `issues`. Returns the
// tensor only when the file is structurally sound and every value finite.
inline std::optional<ActivationTensor> decode_layer(std::string_view bytes, std::uint32_t layer,
                                                    const DatasetManifest& m,
                                                    std::vector<Issue>& issues) {
    const auto name = layer_file_name(layer);
    if (bytes.size() < 16) {
        issues.push_back({"truncated file", name + ": shorter than header"});
        return std::nullopt;
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kLayerMagic.data(), kLayerMagic.size()) != 0) {
        issues.push_back({"bad magic", name});
        return std::nullopt;
    }
    const auto rows = detail::get_u32(p + 8);
    const auto cols = detail::get_u32(p + 12);
    if (rows != m.num_samples || cols != m.neurons_per_layer) {
        issues.push_back({"header/manifest disagreement",
                          name + ": header " + std::to_string(rows) + "x" + std::to_string(cols) +
                              ", manifest " + std::to_string(m.num_samples) + "x" +
                              std::to_string(m.neurons_per_layer)});
        return std::nullopt;
    }
    const std::size_t expected = 16 + static_cast<std::size_t>(rows) * cols * 4;
    if (bytes.size() < expected) {
        issues.push_back({"truncated file", name + ": " + std::to_string(bytes.size()) +
                                                " bytes, expected " + std::to_string(expected)});
        return std::nullopt;
    }
    if (bytes.size() > expected) {
        issues.push_back({"trailing data", name + ": " + std::to_string(bytes.size() - expected) +
                                               " extra bytes"});
        return std::nullopt;
    }
    ActivationTensor t(layer, rows, cols);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        t.values[i] = detail::get_f32(p + 16 + 4 * i);
        if (!std::isfinite(t.values[i])) ++bad;
    }
    if (bad) {
        issues.push_back({"non-finite value", name + ": " + std::to_string(bad) + " values"});
        return std::nullopt;
    }
    return t;
}

inline std::optional<ClassLabeling> decode_labels(std::string_view text, const DatasetManifest& m,
                                                  std::vector<Issue>& violations,
                                                  std::vector<Issue>& warnings) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "sample_id,class_index") {
        violations.push_back({"bad labels header", "expected 'sample_id,class_index'"});
        return std::nullopt;
    }
    ClassLabeling labels;
    bool ok = true;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        long long id = -1, cls = -1;
        try {
            if (comma == std::string::npos) throw std::invalid_argument("no comma");
            std::size_t used = 0;
            id = std::stoll(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("id");
            const auto rest = line.substr(comma + 1);
            cls = std::stoll(rest, &used);
            if (used != rest.size()) throw std::invalid_argument("class");
        } catch (const std::exception&) {
            violations.push_back({"bad labels row", "row " + std::to_string(row) + ": '" + line + "'"});
            ok = false;
            ++row;
            continue;
        }
        if (id != static_cast<long long>(row)) {
            violations.push_back({"bad sample id", "row " + std::to_string(row) + " has sample_id " +
                                                       std::to_string(id)});
            ok = false;
        }
        if (cls < 0 || cls >= static_cast<long long>(m.class_names.size())) {
            violations.push_back({"label out of range", "sample " + std::to_string(row) +
                                                            " class " + std::to_string(cls)});
            ok = false;
        } else {
            labels.classes.push_back(static_cast<std::uint32_t>(cls));
        }
        ++row;
    }
    if (row != m.num_samples) {
        violations.push_back({"label count mismatch", std::to_string(row) + " rows, expected " +
                                                          std::to_string(m.num_samples)});
        ok = false;
    }
    if (!ok) return std::nullopt;
    const auto counts = labels.counts(m.class_names.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0)
            warnings.push_back({"zero-sample class", m.class_names[c]});
    return labels;
}

// Shape and finiteness checks for in-memory data about to be written.
inline void check_dataset(const DatasetManifest& m, std::span<const ActivationTensor> tensors,
                          const ClassLabeling& labels) {
    std::vector<Issue> issues;
    check_manifest(m, issues);
    if (!issues.empty()) throw Error(issues.front().code + ": " + issues.front().detail);
    if (tensors.size() != m.num_layers)
        throw Error("shape mismatch: " + std::to_string(tensors.size()) + " tensors for " +
                    std::to_string(m.num_layers) + " layers");
    std::vector<bool> seen(m.num_layers, false);
    for (const auto& t : tensors) {
        if (t.layer >= m.num_layers || seen[t.layer])
            throw Error("shape mismatch: layer " + std::to_string(t.layer) +
                        " out of range or repeated");
        seen[t.layer] = true;
        if (t.rows != m.num_samples || t.cols != m.neurons_per_layer ||
            t.values.size() != static_cast<std::size_t>(t.rows) * t.cols)
            throw Error("shape mismatch: layer " + std::to_string(t.layer));
        for (float v : t.values)
            if (!std::isfinite(v))
                throw Error("non-finite value in layer " + std::to_string(t.layer));
    }
    if (labels.size() != m.num_samples)
        throw Error("label count mismatch: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(m.num_samples) + " samples");
    for (auto c : labels.classes)
        if (c >= m.num_classes()) throw Error("label out of range: " + std::to_string(c));
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
    detail::write_file(dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

inline void write_dataset(const DatasetManifest& m, std::span<const ActivationTensor> tensors,
                          const ClassLabeling& labels, const std::filesystem::path& dir) {
    check_dataset(m, tensors, labels);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("i/o failure: " + ec.message());
    write_manifest(m, dir);
    for (const auto& t : tensors) detail::write_file(dir / layer_file_name(t.layer), encode_layer(t));
    detail::write_file(dir / "labels.csv", encode_labels(labels));
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto text = detail::require_file(dir / "manifest.json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad manifest: ") + e.what());
    }
    auto m = manifest_from_json(j);
    std::vector<Issue> issues;
    check_manifest(m, issues);
    if (!issues.empty()) throw Error(issues.front().code + ": " + issues.front().detail);
    return m;
}

// Reads one layer for streaming consumers; throws on any violation.
inline ActivationTensor read_layer(const std::filesystem::path& dir, const DatasetManifest& m,
                                   std::uint32_t layer) {
    const auto bytes = detail::require_file(dir / layer_file_name(layer));
    std::vector<Issue> issues;
    auto t = decode_layer(bytes, layer, m, issues);
    if (!t) throw Error(issues.front().code + ": " + issues.front().detail);
    return std::move(*t);
}

inline ClassLabeling read_labels(const std::filesystem::path& dir, const DatasetManifest& m) {
    const auto text = detail::require_file(dir / "labels.csv");
    std::vector<Issue> violations, warnings;
    auto labels = decode_labels(text, m, violations, warnings);
    if (!labels) throw Error(violations.front().code + ": " + violations.front().detail);
    return std::move(*labels);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    Dataset d;
    d.manifest = read_manifest(dir);
    d.tensors.reserve(d.manifest.num_layers);
    for (std::uint32_t l = 0; l < d.manifest.num_layers; ++l)
        d.tensors.push_back(read_layer(dir, d.manifest, l));
    d.labels = read_labels(dir, d.manifest);
    return d;
}

// Never throws for content problems; every problem becomes a report entry.
inline ValidationReport validate_dataset(const std::filesystem::path& dir) {
    ValidationReport r;
    const auto text = detail::read_file(dir / "manifest.json");
    if (!text) {
        r.violations.push_back({"missing file", "manifest.json"});
        return r;
    }
    DatasetManifest m;
    try {
        m = manifest_from_json(nlohmann::json::parse(*text));
    } catch (const std::exception& e) {
        r.violations.push_back({"bad manifest", e.what()});
        return r;
    }
    check_manifest(m, r.violations);
    if (!r.violations.empty()) return r;

    for (std::uint32_t l = 0; l < m.num_layers; ++l) {
        const auto bytes = detail::read_file(dir / layer_file_name(l));
        if (!bytes) {
            r.violations.push_back({"missing file", layer_file_name(l)});
            continue;
        }
        decode_layer(*bytes, l, m, r.violations);
    }
    if (std::filesystem::exists(dir / layer_file_name(m.num_layers)))
        r.violations.push_back({"extra layer file", layer_file_name(m.num_layers)});

    const auto labels = detail::read_file(dir / "labels.csv");
    if (!labels)
        r.violations.push_back({"missing file", "labels.csv"});
    else
        decode_labels(*labels, m, r.violations, r.warnings);
    return r;
}

}  // namespace aape
