#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "test_util.hpp"

namespace fs = std::filesystem;
using aape::test::slurp;
using aape::test::TempDir;

namespace {

// Runs the CLI in `cwd`; returns its exit status.
int cli(const fs::path& cwd, const std::string& args) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" AAPE_CLI_PATH "' " + args + " >cli.log 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void full_run(const fs::path& dir) {
    aape::test::spit(dir / "plant.json", R"({"samples_per_class": 40, "neurons_per_layer": 64, "planted_per_class": 3})");
    ASSERT_EQ(cli(dir, "toy-plant --spec plant.json --seed 11 --out ds"), 0);
    ASSERT_EQ(cli(dir, "select --dataset ds --r-aape 10 --out sel.json"), 0);
    ASSERT_EQ(cli(dir, "overlap sel.json --out ov"), 0);
    ASSERT_EQ(cli(dir, "mask targeted --selection sel.json --classes class_0 --mode union --out mask.json"), 0);
    ASSERT_EQ(cli(dir, "mask random --like mask.json --exclude mask.json --seed 5 --out random.json"), 0);
    ASSERT_EQ(cli(dir, "summary sel.json --out sum"), 0);
    aape::test::spit(dir / "toy.json", R"({"neurons_per_layer": 64, "train_per_class": 30, "test_per_class": 30, "random_seeds": 2})");
    ASSERT_EQ(cli(dir, "toy-run --spec toy.json --out toy"), 0);
    ASSERT_EQ(cli(dir, "ablate-report --baseline toy/predictions_original.csv "
                       "--ablated toy/predictions_targeted.csv --selection toy/selection.json --out abl"),
              0);
    ASSERT_EQ(cli(dir, "plot --delta abl/delta.json --out delta.svg"), 0);
}

}  // namespace

TEST(Cli, TwoRunsAreByteIdentical) {
    TempDir a, b;
    full_run(a.path());
    full_run(b.path());
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file() || e.path().filename() == "cli.log") continue;
        const auto rel = fs::relative(e.path(), a.path());
        ASSERT_TRUE(fs::exists(b.path() / rel)) << rel;
        EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
        ++compared;
    }
    EXPECT_GT(compared, 30u);
    for (const char* f : {"sel.json", "mask.json", "ov/overlap.csv", "ov/overlap.svg", "delta.svg",
                          "abl/delta.svg", "sel.report.json", "ov/report.json"})
        EXPECT_TRUE(fs::exists(a / f)) << f;
}

TEST(Cli, ExitCodes) {
    TempDir t;
    EXPECT_EQ(cli(t.path(), "--help"), 0);
    EXPECT_EQ(cli(t.path(), ""), 1);
    EXPECT_EQ(cli(t.path(), "validate missing"), 1);

    const auto d = aape::test::random_dataset(1, 2, 5, 20, 3);
    aape::write_dataset(d.manifest, d.tensors, d.labels, t / "ds");
    EXPECT_EQ(cli(t.path(), "validate ds"), 0);
    auto bytes = slurp(t / "ds/layer_01.bin");
    bytes[0] = 'X';
    aape::test::spit(t / "ds/layer_01.bin", bytes);
    EXPECT_EQ(cli(t.path(), "validate ds --out v.json"), 1);
    EXPECT_NE(slurp(t / "v.json").find("bad magic"), std::string::npos);
    EXPECT_EQ(cli(t.path(), "stats ds --out p.bin"), 1);
}

TEST(Cli, StrictEscalatesWarnings) {
    TempDir t;
    const auto sel = aape::test::make_selection("t", {1, 8}, {{{0, 1}}, {{0, 2}}});
    aape::write_selection(sel, t / "sel.json");
    const std::string args = "mask targeted --selection sel.json --classes c0,c1 --out m.json";
    EXPECT_EQ(cli(t.path(), args), 0);
    EXPECT_EQ(cli(t.path(), "--strict " + args), 2);
    EXPECT_EQ(cli(t.path(), "mask targeted --selection sel.json --classes c0,zz --out m.json"), 1);

    // A zero-sample class is a warning at validation.
    aape::Dataset d;
    d.manifest = {"z", 1, 2, 2, {"a", "b", "c"}, aape::Aggregation::mean_tokens, "f32le"};
    d.tensors.emplace_back(0, 2, 2);
    d.labels.classes = {0, 1};
    aape::write_dataset(d.manifest, d.tensors, d.labels, t / "ds");
    EXPECT_EQ(cli(t.path(), "validate ds"), 0);
    EXPECT_EQ(cli(t.path(), "validate ds --strict"), 2);
}

TEST(Cli, ShardedStatsMatchSinglePass) {
    TempDir t;
    const auto d = aape::test::random_dataset(8, 3, 7, 41, 4);
    aape::write_dataset(d.manifest, d.tensors, d.labels, t / "ds");
    ASSERT_EQ(cli(t.path(), "stats ds --out one.bin"), 0);
    ASSERT_EQ(cli(t.path(), "stats ds --shards 7 --out seven.bin"), 0);
    EXPECT_EQ(slurp(t / "one.bin"), slurp(t / "seven.bin"));
    ASSERT_EQ(cli(t.path(), "select --dataset ds --probs seven.bin --r-aape 20 --out a.json"), 0);
    ASSERT_EQ(cli(t.path(), "select --dataset ds --threads 3 --r-aape 20 --out b.json"), 0);
    EXPECT_EQ(slurp(t / "a.json"), slurp(t / "b.json"));
}

TEST(Cli, RandomMaskSeedControlsDraw) {
    TempDir t;
    ASSERT_EQ(cli(t.path(), "mask random --geometry 2x50 --size 6 --seed 1 --out a.json"), 0);
    ASSERT_EQ(cli(t.path(), "mask random --geometry 2x50 --size 6 --seed 1 --out b.json"), 0);
    ASSERT_EQ(cli(t.path(), "mask random --geometry 2x50 --size 6 --seed 2 --out c.json"), 0);
    EXPECT_EQ(slurp(t / "a.json"), slurp(t / "b.json"));
    EXPECT_NE(slurp(t / "a.json"), slurp(t / "c.json"));
    EXPECT_EQ(cli(t.path(), "mask random --geometry 2x50 --size 101 --out d.json"), 1);
    EXPECT_EQ(cli(t.path(), "mask random --geometry 2by50 --size 1 --out d.json"), 1);
}
