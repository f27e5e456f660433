#include <gtest/gtest.h>

#include "aape/overlap.hpp"
#include "aape/toy_bench.hpp"
#include "test_util.hpp"

using namespace aape;
using test::make_selection;

namespace {

NeuronSet random_set(SplitMix64& rng, Geometry g, std::size_t max_size) {
    NeuronSet s;
    const auto n = rng.bounded(max_size + 1);
    for (std::uint64_t i = 0; i < n; ++i) s.push_back(g.unflat(rng.bounded(g.size())));
    return normalized(s);
}

}  // namespace

TEST(Jaccard, WorkedExample) {
    const NeuronSet a{{0, 1}, {0, 2}, {1, 7}};
    const NeuronSet b{{0, 2}, {1, 7}, {3, 3}};
    EXPECT_EQ(jaccard(a, b), 0.5);
}

TEST(Jaccard, IdentityDisjointEmpty) {
    const NeuronSet a{{0, 1}, {2, 2}};
    const NeuronSet b{{1, 1}};
    EXPECT_EQ(jaccard(a, a), 1.0);
    EXPECT_EQ(jaccard(a, b), 0.0);
    EXPECT_EQ(jaccard({}, {}), 0.0);
    EXPECT_EQ(jaccard(a, {}), 0.0);
}

TEST(Jaccard, RandomProperties) {
    SplitMix64 rng(41);
    const Geometry g{3, 10};
    for (int i = 0; i < 2000; ++i) {
        auto a = random_set(rng, g, 12);
        auto b = random_set(rng, g, 12);
        const double j = jaccard(a, b);
        EXPECT_EQ(j, jaccard(b, a));
        EXPECT_GE(j, 0.0);
        EXPECT_LE(j, 1.0);
        EXPECT_EQ(j == 1.0, a == b && !a.empty());

        // A neuron outside both sets, added to both, never lowers the ratio;
        // the ratio is unaffected by neurons in neither set.
        const auto x = g.unflat(rng.bounded(g.size()));
        if (!std::binary_search(a.begin(), a.end(), x) && !std::binary_search(b.begin(), b.end(), x)) {
            auto a2 = a, b2 = b;
            a2.push_back(x);
            b2.push_back(x);
            EXPECT_GE(jaccard(normalized(a2), normalized(b2)), j);
        }
    }
}

TEST(CrossTask, SelfMatrixIsSymmetricWithUnitDiagonal) {
    const Geometry g{2, 8};
    const auto sel = make_selection("t", g, {{{0, 1}, {0, 2}}, {{0, 2}, {1, 5}}, {{1, 7}}});
    const auto m = cross_task_matrix(sel, sel);
    ASSERT_EQ(m.rows(), 3u);
    EXPECT_EQ(m.row_labels[0], "t:c0");
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(m.at(i, i), 1.0);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m.at(i, j), m.at(j, i));
    }
    EXPECT_DOUBLE_EQ(m.at(0, 1), 1.0 / 3.0);
    EXPECT_TRUE(m.empty_pairs.empty());
}

TEST(CrossTask, EmptyPairsAreZeroAndFlagged) {
    const Geometry g{1, 4};
    const auto a = make_selection("a", g, {{}, {{0, 1}}});
    const auto b = make_selection("b", g, {{}, {}});
    const auto m = cross_task_matrix(a, b);
    EXPECT_EQ(m.at(0, 0), 0.0);
    using P = std::pair<std::size_t, std::size_t>;
    EXPECT_EQ(m.empty_pairs, (std::vector<P>{{0, 0}, {0, 1}}));
    EXPECT_EQ(m.at(1, 0), 0.0);
}

TEST(CrossTask, TransposeAndGeometryMismatch) {
    SplitMix64 rng(3);
    const Geometry g{2, 16};
    for (int i = 0; i < 50; ++i) {
        std::vector<NeuronSet> sa(2 + rng.bounded(4)), sb(2 + rng.bounded(4));
        for (auto& s : sa) s = random_set(rng, g, 10);
        for (auto& s : sb) s = random_set(rng, g, 10);
        const auto a = make_selection("a", g, sa);
        const auto b = make_selection("b", g, sb);
        const auto ab = cross_task_matrix(a, b).transposed();
        const auto ba = cross_task_matrix(b, a);
        EXPECT_EQ(ab.values, ba.values);
        EXPECT_EQ(ab.row_labels, ba.row_labels);
        EXPECT_EQ(ab.empty_pairs, ba.empty_pairs);
    }
    const auto a = make_selection("a", {2, 16}, {{}});
    const auto b = make_selection("b", {2, 17}, {{}});
    EXPECT_THROW(cross_task_matrix(a, b), Error);
}

TEST(CrossTask, InvariantUnderNeuronBijection) {
    SplitMix64 rng(17);
    const Geometry g{3, 12};
    for (int i = 0; i < 20; ++i) {
        std::vector<NeuronSet> sa(4), sb(3);
        for (auto& s : sa) s = random_set(rng, g, 15);
        for (auto& s : sb) s = random_set(rng, g, 15);
        const auto perm = sample_without_replacement(g.size(), g.size(), 1000 + i);
        auto remap = [&](const std::vector<NeuronSet>& sets) {
            std::vector<NeuronSet> out;
            for (const auto& s : sets) {
                NeuronSet t;
                for (const auto& id : s) t.push_back(g.unflat(perm[g.flat(id)]));
                out.push_back(normalized(t));
            }
            return out;
        };
        const auto before = cross_task_matrix(make_selection("a", g, sa), make_selection("b", g, sb));
        const auto after =
            cross_task_matrix(make_selection("a", g, remap(sa)), make_selection("b", g, remap(sb)));
        EXPECT_EQ(before.values, after.values);
    }
}

TEST(CrossTask, PlantedPairsDominate) {
    // Two tasks sharing planted neurons for class pairs (0,0) and (1,1); all
    // other memberships are drawn from disjoint pools per task.
    const Geometry g{2, 64};
    const NeuronSet shared0{{0, 3}, {0, 9}, {1, 4}, {1, 20}};
    const NeuronSet shared1{{0, 30}, {1, 31}, {1, 40}};
    std::vector<NeuronSet> ta(3), tb(3);
    ta[0] = shared0, tb[0] = shared0;
    ta[1] = shared1, tb[1] = shared1;
    ta[0].push_back({0, 50});
    tb[1].push_back({0, 51});
    ta[2] = {{0, 52}, {0, 53}};
    tb[2] = {{1, 52}, {0, 53}};
    for (auto* s : {&ta[0], &tb[1]}) *s = normalized(*s);
    const auto m = cross_task_matrix(make_selection("A", g, ta), make_selection("B", g, tb));
    double off_max = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (!((i == 0 && j == 0) || (i == 1 && j == 1))) off_max = std::max(off_max, m.at(i, j));
    EXPECT_GT(m.at(0, 0), off_max);
    EXPECT_GT(m.at(1, 1), off_max);
}

TEST(Relabel, MergesClassesByUnion) {
    const Geometry g{1, 10};
    const auto sel = make_selection("t", g, {{{0, 1}}, {{0, 1}, {0, 2}}, {{0, 5}}}, {"a", "b", "c"});
    const auto r = relabel_classes(sel, {{"a", "ab"}, {"b", "ab"}});
    ASSERT_EQ(r.class_names, (std::vector<std::string>{"ab", "c"}));
    EXPECT_EQ(r.neurons_of(0), (NeuronSet{{0, 1}, {0, 2}}));
    EXPECT_EQ(r.neurons_of(1), (NeuronSet{{0, 5}}));
}

TEST(Summary, AllEmptyTask) {
    const auto t = summarize_rq1({make_selection("none", {1, 4}, {{}, {}, {}})});
    ASSERT_EQ(t.tasks.size(), 1u);
    EXPECT_EQ(t.tasks[0].mean_neurons, 0.0);
    EXPECT_EQ(t.tasks[0].coverage_ratio, 0.0);
    ASSERT_TRUE(t.average);
    EXPECT_EQ(t.average->mean_neurons, 0.0);
}

TEST(Summary, TwoToyTasksExactMeans) {
    // Task A: 3 classes with 2, 0, 4 neurons -> mean 2, coverage 2/3.
    // Task B: 2 classes with 1, 1 -> mean 1, coverage 1.
    const Geometry g{2, 8};
    const auto a = make_selection("A", g, {{{0, 0}, {0, 1}}, {}, {{1, 0}, {1, 1}, {1, 2}, {1, 3}}});
    const auto b = make_selection("B", g, {{{0, 4}}, {{0, 4}}});
    const auto t = summarize_rq1({a, b});
    EXPECT_EQ(t.tasks[0].mean_neurons, 2.0);
    EXPECT_EQ(t.tasks[0].coverage_ratio, 2.0 / 3.0);
    EXPECT_EQ(t.tasks[1].mean_neurons, 1.0);
    EXPECT_EQ(t.tasks[1].coverage_ratio, 1.0);
    EXPECT_EQ(t.average->mean_neurons, 1.5);
    EXPECT_DOUBLE_EQ(t.average->coverage_ratio, (2.0 / 3.0 + 1.0) / 2.0);
    EXPECT_FALSE(summarize_rq1({}).average);
}

TEST(OverlapIo, CsvAndJsonRoundTrip) {
    const Geometry g{1, 6};
    const auto a = make_selection("a", g, {{{0, 1}, {0, 2}}, {}});
    const auto b = make_selection("b", g, {{{0, 2}}, {}});
    const auto m = cross_task_matrix(a, b);
    EXPECT_EQ(overlap_to_csv(m),
              "row,col,ratio\n"
              "a:c0,b:c0,0.500000\n"
              "a:c0,b:c1,0.000000\n"
              "a:c1,b:c0,0.000000\n"
              "a:c1,b:c1,0.000000\n");
    const auto back = overlap_from_json(nlohmann::json::parse(overlap_to_json(m).dump()));
    EXPECT_EQ(back.values, m.values);
    EXPECT_EQ(back.row_labels, m.row_labels);
    EXPECT_EQ(back.empty_pairs, m.empty_pairs);
}
