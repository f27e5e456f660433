#pragma once

// Rendering: SVG heatmaps, summary tables, run metadata.
//
// Output is a pure function of the input values: fixed color maps, fixed
// "%.2f"-style number formatting, no timestamps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ablation.hpp"
#include "error.hpp"
#include "overlap.hpp"

namespace aape {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string hash_file(const std::filesystem::path& p) {
    return hex64(fnv1a64(detail::require_file(p)));
}

// Hash of a dataset directory: manifest, labels and every layer file in
// layer order.
inline std::string hash_dataset(const std::filesystem::path& dir) {
    std::string acc = hash_file(dir / "manifest.json") + hash_file(dir / "labels.csv");
    const auto m = read_manifest(dir);
    for (std::uint32_t l = 0; l < m.num_layers; ++l) acc += hash_file(dir / layer_file_name(l));
    return hex64(fnv1a64(acc));
}

enum class ColorMap { sequential, diverging };

struct HeatmapStyle {
    std::string title;
    ColorMap colormap = ColorMap::sequential;
    double vmin = 0.0;
    double vmax = 1.0;
    const char* value_format = "%.2f";
    int cell = 44;
};

namespace detail {

struct Rgb {
    double r, g, b;
};

inline Rgb lerp(Rgb a, Rgb b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

inline Rgb color_at(ColorMap map, double t) {
    t = std::clamp(t, 0.0, 1.0);
    if (map == ColorMap::sequential) {
        static constexpr std::array<Rgb, 4> stops{
            {{255, 255, 255}, {252, 187, 161}, {239, 59, 44}, {103, 0, 13}}};
        const double x = t * 3.0;
        const auto i = std::min<std::size_t>(2, static_cast<std::size_t>(x));
        return lerp(stops[i], stops[i + 1], x - static_cast<double>(i));
    }
    static constexpr Rgb blue{33, 102, 172}, white{247, 247, 247}, red{178, 24, 43};
    return t < 0.5 ? lerp(blue, white, t * 2.0) : lerp(white, red, (t - 0.5) * 2.0);
}

inline std::string rgb_hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(c.r)),
                  static_cast<int>(std::lround(c.g)), static_cast<int>(std::lround(c.b)));
    return buf;
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

inline std::string render_matrix_svg(const std::vector<std::string>& row_labels,
                                     const std::vector<std::string>& col_labels,
                                     const std::vector<double>& values, const HeatmapStyle& style) {
    const auto R = row_labels.size();
    const auto C = col_labels.size();
    if (R == 0 || C == 0) throw Error("empty matrix");
    if (values.size() != R * C) throw Error("matrix shape mismatch");
    for (double v : values)
        if (!std::isfinite(v)) throw Error("non-finite matrix entry");

    std::size_t row_chars = 0, col_chars = 0;
    for (const auto& l : row_labels) row_chars = std::max(row_chars, l.size());
    for (const auto& l : col_labels) col_chars = std::max(col_chars, l.size());
    const int cell = style.cell;
    const int left = 12 + static_cast<int>(row_chars) * 7;
    const int top = 36 + static_cast<int>(col_chars) * 5;
    const int width = left + static_cast<int>(C) * cell + 12;
    const int height = top + static_cast<int>(R) * cell + 12;

    std::string svg;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\" font-family=\"sans-serif\" font-size=\"11\">\n",
                  width, height, width, height);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    if (!style.title.empty()) {
        std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"16\" font-size=\"13\">", left);
        svg += buf;
        svg += detail::xml_escape(style.title) + "</text>\n";
    }
    for (std::size_t c = 0; c < C; ++c) {
        const int x = left + static_cast<int>(c) * cell + cell / 2;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%d\" transform=\"rotate(-45 %d %d)\">", x, top - 6, x,
                      top - 6);
        svg += buf;
        svg += detail::xml_escape(col_labels[c]) + "</text>\n";
    }
    const double span = style.vmax - style.vmin;
    for (std::size_t r = 0; r < R; ++r) {
        const int y = top + static_cast<int>(r) * cell;
        std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">", left - 6,
                      y + cell / 2 + 4);
        svg += buf;
        svg += detail::xml_escape(row_labels[r]) + "</text>\n";
        for (std::size_t c = 0; c < C; ++c) {
            const double v = values[r * C + c];
            const double t = span > 0.0 ? (v - style.vmin) / span : 0.5;
            const auto fill = detail::color_at(style.colormap, t);
            const int x = left + static_cast<int>(c) * cell;
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\" "
                          "stroke=\"#cccccc\"/>\n",
                          x, y, cell, cell, detail::rgb_hex(fill).c_str());
            svg += buf;
            const double lum = 0.299 * fill.r + 0.587 * fill.g + 0.114 * fill.b;
            char value[32];
            std::snprintf(value, sizeof value, style.value_format, v);
            std::snprintf(buf, sizeof buf,
                          "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" fill=\"%s\">%s</text>\n",
                          x + cell / 2, y + cell / 2 + 4, lum < 128 ? "#ffffff" : "#000000", value);
            svg += buf;
        }
    }
    svg += "</svg>\n";
    return svg;
}

inline std::string render_heatmap(const OverlapMatrix& m, HeatmapStyle style = {}) {
    if (style.title.empty()) style.title = "Common neuron ratio";
    return render_matrix_svg(m.row_labels, m.col_labels, m.values, style);
}

// Confusion-rate deltas (percentage points) on a diverging scale
// symmetric around zero.
inline std::string render_heatmap(const DeltaReport& d, HeatmapStyle style = {}) {
    double extent = 1.0;
    for (double v : d.delta_rate) extent = std::max(extent, std::abs(v));
    style.colormap = ColorMap::diverging;
    style.vmin = -extent;
    style.vmax = extent;
    style.value_format = "%+.1f";
    if (style.title.empty()) style.title = "Confusion delta (pp, ablated - original)";
    return render_matrix_svg(d.class_names, d.class_names, d.delta_rate, style);
}

struct RenderedSummary {
    std::string markdown;
    std::string csv;
};

inline RenderedSummary render_summary(const SummaryTable& t) {
    RenderedSummary out;
    out.markdown =
        "| Task | Mean class-specific neurons | Class coverage ratio |\n"
        "|---|---:|---:|\n";
    out.csv = "task,mean_class_specific_neurons,class_coverage_ratio\n";
    auto emit = [&](const SummaryRow& row) {
        char mean[32], cov[32];
        std::snprintf(mean, sizeof mean, "%.1f", row.mean_neurons);
        std::snprintf(cov, sizeof cov, "%ld%%", std::lround(100.0 * row.coverage_ratio));
        out.markdown += "| " + row.task + " | " + mean + " | " + cov + " |\n";
        out.csv += row.task + "," + mean + "," + cov + "\n";
    };
    for (const auto& row : t.tasks) emit(row);
    if (t.average) emit(*t.average);
    return out;
}

struct InputRecord {
    std::string path;
    std::string hash;
};

// report.json for a CLI run.
struct ReportBundle {
    std::string command{};
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::vector<InputRecord> inputs{};
    std::vector<std::string> outputs{};
    std::vector<std::string> warnings{};

    void add_input(const std::filesystem::path& p) {
        inputs.push_back({p.filename().string(), std::filesystem::is_directory(p)
                                                     ? hash_dataset(p)
                                                     : hash_file(p)});
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool"] = "aape";
        j["version"] = kToolVersion;
        j["hash"] = "fnv1a64";
        j["command"] = command;
        j["config"] = config;
        auto in = nlohmann::ordered_json::array();
        for (const auto& r : inputs) in.push_back({{"path", r.path}, {"hash", r.hash}});
        j["inputs"] = std::move(in);
        j["outputs"] = outputs;
        j["warnings"] = warnings;
        return j;
    }

    void write(const std::filesystem::path& path) const {
        detail::write_file(path, to_json().dump(2) + "\n");
    }
};

}  // namespace aape
