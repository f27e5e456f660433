#pragma once

// Class-wise activation probabilities.
//
// P(c)[l][n] = |{s : label(s) = c and a[l][n][s] > 0}| / count_c
//
// Counting is exact (integers) and shardable; division happens once, in
// finalize(). A value of exactly 0.0 is inactive. Classes without samples
// get probability 0 everywhere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "activation_store.hpp"
#include "error.hpp"
#include "neuron_id.hpp"

namespace aape {

struct SampleRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;  // exclusive
    friend constexpr bool operator==(const SampleRange&, const SampleRange&) = default;
};

// Integer activation counts over a set of sample ranges. The merge unit for
// sharded or streamed datasets.
class PartialCounts {
public:
    PartialCounts() = default;
    PartialCounts(Geometry geometry, std::size_t num_classes)
        : geometry_(geometry), num_classes_(num_classes), class_counts_(num_classes, 0),
          active_(geometry.size() * num_classes, 0) {}

    const Geometry& geometry() const { return geometry_; }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<SampleRange>& ranges() const { return ranges_; }
    const std::vector<std::uint64_t>& class_counts() const { return class_counts_; }
    std::uint64_t num_samples() const {
        std::uint64_t s = 0;
        for (auto c : class_counts_) s += c;
        return s;
    }

    // Layout [layer][class][neuron], contiguous in neuron for streaming.
    std::uint64_t active(std::uint32_t layer, std::uint32_t neuron, std::size_t cls) const {
        return active_[index(layer, cls, neuron)];
    }
    const std::vector<std::uint64_t>& raw_active() const { return active_; }

    // Registers samples [begin, end) with their labels; must precede
    // add_layer() for the same rows.
    void add_samples(SampleRange range, std::span<const std::uint32_t> labels) {
        if (labels.size() != range.end - range.begin)
            throw Error("label count mismatch: range of " +
                        std::to_string(range.end - range.begin) + " samples, " +
                        std::to_string(labels.size()) + " labels");
        insert_range(range);
        for (auto c : labels) {
            if (c >= num_classes_) throw Error("label out of range: " + std::to_string(c));
            ++class_counts_[c];
        }
    }

    // Counts strictly positive entries of `t` rows [range.begin, range.end).
    // Thread-safe for distinct layers on the same object.
    void add_layer(const ActivationTensor& t, SampleRange range,
                   std::span<const std::uint32_t> labels) {
        if (t.layer >= geometry_.layers || t.cols != geometry_.neurons_per_layer)
            throw Error("geometry mismatch: layer " + std::to_string(t.layer));
        if (range.end > t.rows || labels.size() != range.end - range.begin)
            throw Error("geometry mismatch: sample range outside tensor");
        const std::size_t n_cols = t.cols;
        for (std::uint64_t s = range.begin; s < range.end; ++s) {
            const auto cls = labels[s - range.begin];
            if (cls >= num_classes_) throw Error("label out of range: " + std::to_string(cls));
            std::uint64_t* dst = active_.data() + index(t.layer, cls, 0);
            const float* row = t.values.data() + s * n_cols;
            for (std::size_t n = 0; n < n_cols; ++n) {
                const float v = row[n];
                if (!std::isfinite(v))
                    throw Error("non-finite value: layer " + std::to_string(t.layer) + " sample " +
                                std::to_string(s));
                dst[n] += v > 0.0f ? 1u : 0u;
            }
        }
    }

    friend PartialCounts merge_partial_counts(const PartialCounts& a, const PartialCounts& b);
    friend bool operator==(const PartialCounts&, const PartialCounts&) = default;

private:
    std::size_t index(std::uint32_t layer, std::size_t cls, std::uint32_t neuron) const {
        return (static_cast<std::size_t>(layer) * num_classes_ + cls) *
                   geometry_.neurons_per_layer + neuron;
    }

    void insert_range(SampleRange r) {
        if (r.begin > r.end) throw Error("invalid sample range");
        if (r.begin == r.end) return;
        for (const auto& q : ranges_)
            if (r.begin < q.end && q.begin < r.end)
                throw Error("overlapping sample ranges: [" + std::to_string(r.begin) + "," +
                            std::to_string(r.end) + ") and [" + std::to_string(q.begin) + "," +
                            std::to_string(q.end) + ")");
        ranges_.push_back(r);
        std::sort(ranges_.begin(), ranges_.end(),
                  [](const SampleRange& x, const SampleRange& y) { return x.begin < y.begin; });
        std::vector<SampleRange> merged;
        for (const auto& q : ranges_) {
            if (!merged.empty() && merged.back().end == q.begin)
                merged.back().end = q.end;
            else
                merged.push_back(q);
        }
        ranges_ = std::move(merged);
    }

    Geometry geometry_{};
    std::size_t num_classes_ = 0;
    std::vector<SampleRange> ranges_;  // sorted, coalesced, disjoint
    std::vector<std::uint64_t> class_counts_;
    std::vector<std::uint64_t> active_;
};

inline PartialCounts merge_partial_counts(const PartialCounts& a, const PartialCounts& b) {
    if (!(a.geometry_ == b.geometry_) || a.num_classes_ != b.num_classes_)
        throw Error("geometry mismatch: cannot merge counts of different shape");
    PartialCounts out = a;
    for (const auto& r : b.ranges_) out.insert_range(r);
    for (std::size_t c = 0; c < out.class_counts_.size(); ++c)
        out.class_counts_[c] += b.class_counts_[c];
    for (std::size_t i = 0; i < out.active_.size(); ++i) out.active_[i] += b.active_[i];
    return out;
}

// Counts rows [begin, end) of every layer. Layers are split across `threads`
// workers; the result does not depend on the thread count.
inline PartialCounts count_range(std::span<const ActivationTensor> tensors,
                                 const ClassLabeling& labels, const DatasetManifest& m,
                                 SampleRange range, unsigned threads = 1) {
    if (tensors.size() != m.num_layers)
        throw Error("geometry mismatch: " + std::to_string(tensors.size()) + " tensors for " +
                    std::to_string(m.num_layers) + " layers");
    if (labels.size() != m.num_samples)
        throw Error("label count mismatch: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(m.num_samples) + " samples");
    if (range.begin > range.end || range.end > m.num_samples)
        throw Error("invalid sample range");
    for (const auto& t : tensors)
        if (t.rows != m.num_samples || t.cols != m.neurons_per_layer || t.layer >= m.num_layers)
            throw Error("geometry mismatch: layer " + std::to_string(t.layer));

    PartialCounts pc(m.geometry(), m.num_classes());
    const std::span<const std::uint32_t> lab(labels.classes.data() + range.begin,
                                             range.end - range.begin);
    pc.add_samples(range, lab);

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(tensors.size())));
    if (threads == 1) {
        for (const auto& t : tensors) pc.add_layer(t, range, lab);
        return pc;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t l = w; l < tensors.size(); l += threads)
                        pc.add_layer(tensors[l], range, lab);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return pc;
}

struct ProbabilityTable {
    Geometry geometry{};
    std::size_t num_classes = 0;
    std::vector<double> class_prob;  // [layer][neuron][class]
    std::vector<double> pooled_prob;  // [layer][neuron]
    std::vector<std::uint64_t> class_counts;

    double prob(std::size_t flat_neuron, std::size_t cls) const {
        return class_prob[flat_neuron * num_classes + cls];
    }
    double prob(NeuronId id, std::size_t cls) const { return prob(geometry.flat(id), cls); }
    std::span<const double> probs_of(std::size_t flat_neuron) const {
        return {class_prob.data() + flat_neuron * num_classes, num_classes};
    }
    std::uint64_t num_samples() const {
        std::uint64_t s = 0;
        for (auto c : class_counts) s += c;
        return s;
    }
};

inline ProbabilityTable finalize(const PartialCounts& pc) {
    ProbabilityTable t;
    t.geometry = pc.geometry();
    t.num_classes = pc.num_classes();
    t.class_counts = pc.class_counts();
    const auto total = pc.num_samples();
    const auto& g = t.geometry;
    t.class_prob.assign(g.size() * t.num_classes, 0.0);
    t.pooled_prob.assign(g.size(), 0.0);
    for (std::uint32_t l = 0; l < g.layers; ++l)
        for (std::uint32_t n = 0; n < g.neurons_per_layer; ++n) {
            const auto flat = g.flat({l, n});
            std::uint64_t sum = 0;
            for (std::size_t c = 0; c < t.num_classes; ++c) {
                const auto a = pc.active(l, n, c);
                sum += a;
                if (t.class_counts[c] > 0)
                    t.class_prob[flat * t.num_classes + c] =
                        static_cast<double>(a) / static_cast<double>(t.class_counts[c]);
            }
            if (total > 0)
                t.pooled_prob[flat] = static_cast<double>(sum) / static_cast<double>(total);
        }
    return t;
}

inline ProbabilityTable compute_probabilities(std::span<const ActivationTensor> tensors,
                                              const ClassLabeling& labels,
                                              const DatasetManifest& m, unsigned threads = 1) {
    return finalize(count_range(tensors, labels, m, {0, m.num_samples}, threads));
}

// Reads and counts one layer file at a time; peak memory is one layer.
inline ProbabilityTable compute_probabilities(const std::filesystem::path& dir,
                                              unsigned threads = 1) {
    const auto m = read_manifest(dir);
    const auto labels = read_labels(dir, m);
    PartialCounts pc(m.geometry(), m.num_classes());
    const SampleRange all{0, m.num_samples};
    pc.add_samples(all, labels.classes);
    threads = std::max(1u, threads);
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::uint32_t l = w; l < m.num_layers; l += threads)
                        pc.add_layer(read_layer(dir, m, l), all, labels.classes);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return finalize(pc);
}

// probs.bin: "AAPEPRB1", u32-LE L, N, C, then L*N*C f64-LE class
// probabilities, then L*N f64-LE pooled probabilities.
inline std::string encode_probabilities(const ProbabilityTable& t) {
    std::string out = "AAPEPRB1";
    detail::put_u32(out, t.geometry.layers);
    detail::put_u32(out, t.geometry.neurons_per_layer);
    detail::put_u32(out, static_cast<std::uint32_t>(t.num_classes));
    auto put_f64 = [&](double d) {
        const auto bits = std::bit_cast<std::uint64_t>(d);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    };
    for (double d : t.class_prob) put_f64(d);
    for (double d : t.pooled_prob) put_f64(d);
    return out;
}

inline void write_probabilities(const ProbabilityTable& t, const std::filesystem::path& path) {
    detail::write_file(path, encode_probabilities(t));
}

// Class counts are not stored in probs.bin; the returned table has none.
inline ProbabilityTable read_probabilities(const std::filesystem::path& path) {
    const auto bytes = detail::require_file(path);
    if (bytes.size() < 20 || bytes.compare(0, 8, "AAPEPRB1") != 0) throw Error("bad magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    ProbabilityTable t;
    t.geometry = {detail::get_u32(p + 8), detail::get_u32(p + 12)};
    t.num_classes = detail::get_u32(p + 16);
    const std::size_t n = t.geometry.size();
    if (bytes.size() != 20 + 8 * (n * t.num_classes + n)) throw Error("truncated file");
    auto get_f64 = [&](std::size_t off) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        return std::bit_cast<double>(bits);
    };
    t.class_prob.resize(n * t.num_classes);
    t.pooled_prob.resize(n);
    std::size_t off = 20;
    for (auto& d : t.class_prob) d = get_f64(off), off += 8;
    for (auto& d : t.pooled_prob) d = get_f64(off), off += 8;
    return t;
}

}  // namespace aape
