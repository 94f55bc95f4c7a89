#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace moci;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("scaled layouts place terrain bands deterministically", "[experiment]") {
    SECTION("the 6x6 layout") {
        const Environment env = protocol_environment(6, HorizonRule::Short);
        CHECK(env.n == 6);
        CHECK(env.num_states() == 36);
        CHECK(env.horizon == 12);
        CHECK(env.start == 0);
        CHECK(env.goal == 35);
        // One corridor-breaking Water cell per terrain band forms the
        // true constraints.
        CHECK(env.true_constraints.size() == 2);
        for (int s : env.true_constraints.states())
            CHECK(env.terrain[static_cast<std::size_t>(s)] == Terrain::Water);
        // Grass band along the top row and the second-to-last column.
        CHECK(env.terrain[1] == Terrain::Grass);
        CHECK(env.terrain[4] == Terrain::Grass);
        // Rocks along the left column and the bottom row.
        CHECK(env.terrain[6] == Terrain::Rocks);
        CHECK(env.terrain[31] == Terrain::Rocks);
        // Both experts can reach the goal on a shortest path.
        CHECK(bfs_distance(env, env.true_constraints) == 2 * env.n - 2);
    }

    SECTION("the 5x5 layout has two Water cells") {
        const Environment env = protocol_environment(5, HorizonRule::Short);
        CHECK(env.true_constraints.size() == 2);
        CHECK(env.horizon == 10);
    }

    SECTION("horizon rules scale with the grid") {
        CHECK(protocol_environment(5, HorizonRule::Long).horizon == 25);
        CHECK(horizon_for(HorizonRule::Short, 8) == 16);
        CHECK(horizon_for(HorizonRule::Long, 8) == 40);
        CHECK(horizon_rule_name(HorizonRule::Short) == std::string("2N"));
        CHECK(horizon_rule_from_name("5N") == HorizonRule::Long);
        CHECK_THROWS_WITH(horizon_rule_from_name("3N"),
                          "unknown horizon rule '3N' (expected 2N or 5N)");
    }

    SECTION("grids below 4x4 cannot hold the bands") {
        CHECK_THROWS_WITH(protocol_environment(3, HorizonRule::Short),
                          "protocol layout needs n >= 4");
    }

    SECTION("named presets resolve to the scaled layouts") {
        CHECK(preset_environment("protocol-6x6") ==
              protocol_environment(6, HorizonRule::Short));
        CHECK(preset_environment("protocol-5x5") ==
              protocol_environment(5, HorizonRule::Short));
        CHECK_THROWS_WITH(preset_environment("protocol-9x9"),
                          ContainsSubstring("unknown preset"));
    }
}

TEST_CASE("the two stock experts oppose each other on Grass and Rocks",
          "[experiment]") {
    const auto experts = protocol_experts(10);
    REQUIRE(experts.size() == 2);
    CHECK(experts[0].name == "grass-lover");
    CHECK(experts[0].weights == PreferenceWeights{0.0, 2.0, -1.0, -1.0});
    CHECK(experts[1].name == "rock-lover");
    CHECK(experts[1].weights == PreferenceWeights{0.0, -1.0, 2.0, -1.0});
    CHECK(experts[0].count == 10);

    SECTION("a pooled total is split with the remainder up front") {
        const auto split = with_demo_total(experts, 21);
        CHECK(split[0].count == 11);
        CHECK(split[1].count == 10);
        CHECK_THROWS_WITH(with_demo_total(experts, -1),
                          "demo total must be non-negative");
    }
}

TEST_CASE("generate_demos pools labeled, feasible, seeded trajectories",
          "[experiment]") {
    const Environment env = protocol_environment(5, HorizonRule::Short);
    const auto experts = protocol_experts(6);
    const auto demos = generate_demos(env, experts, 42);

    REQUIRE(demos.size() == 12);
    int per_label[2] = {0, 0};
    for (const auto& traj : demos) {
        traj.validate(env);
        REQUIRE(traj.label.has_value());
        REQUIRE(*traj.label >= 0);
        REQUIRE(*traj.label <= 1);
        per_label[*traj.label] += 1;
        for (int s : traj.states)
            CHECK_FALSE(env.true_constraints.contains(s));
    }
    CHECK(per_label[0] == 6);
    CHECK(per_label[1] == 6);

    SECTION("deterministic per seed, distinct across seeds") {
        const auto again = generate_demos(env, experts, 42);
        REQUIRE(again.size() == demos.size());
        bool all_equal = true;
        for (std::size_t i = 0; i < demos.size(); ++i)
            all_equal = all_equal && again[i].states == demos[i].states &&
                        again[i].label == demos[i].label;
        CHECK(all_equal);

        const auto other = generate_demos(env, experts, 43);
        bool any_diff = false;
        for (std::size_t i = 0; i < demos.size(); ++i)
            any_diff = any_diff || other[i].states != demos[i].states;
        CHECK(any_diff);
    }

    SECTION("the pooled order is shuffled, not expert-blocked") {
        // With 6+6 demos the probability of the shuffle preserving the
        // blocked order is astronomically small; assert labels interleave.
        bool interleaved = false;
        for (std::size_t i = 0; i + 1 < demos.size() / 2; ++i)
            interleaved = interleaved || *demos[i].label != *demos[i + 1].label;
        CHECK(interleaved);
    }
}

TEST_CASE("random environments are seeded and feasible", "[experiment]") {
    const Environment a = random_environment(5, 0.2, 7, HorizonRule::Short);
    const Environment b = random_environment(5, 0.2, 7, HorizonRule::Short);
    CHECK(a == b);

    const Environment c = random_environment(5, 0.2, 8, HorizonRule::Short);
    CHECK_FALSE(a == c);

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Environment env = random_environment(4, 0.3, seed, HorizonRule::Short);
        CHECK(env.terrain[static_cast<std::size_t>(env.start)] != Terrain::Water);
        CHECK(env.terrain[static_cast<std::size_t>(env.goal)] != Terrain::Water);
        const int dist = bfs_distance(env, env.true_constraints);
        CHECK(dist >= 0);
        CHECK(dist <= env.horizon);
    }
}

TEST_CASE("run_experiment evaluates a seeded end-to-end run", "[experiment]") {
    const Environment env = protocol_environment(4, HorizonRule::Short);
    const auto experts = protocol_experts(5);
    RunSpec spec;
    spec.seed = 3;
    spec.inference.i_iter = 2;
    spec.inference.i_irl = 15;
    spec.inference.alpha = 0.01;

    SECTION("the mixture method reports weight recovery") {
        spec.method = Method::Moci;
        spec.k = 2;
        const auto out = run_experiment(env, experts, spec);
        CHECK(out.demos.size() == 10);
        CHECK(out.row.method == "moci");
        CHECK(out.row.seed == 3);
        CHECK(out.row.n == 4);
        CHECK(out.row.horizon == 8);
        CHECK(out.row.demo_count == 10);
        CHECK(out.row.k == 2);
        CHECK(out.row.runtime_s > 0.0);
        CHECK(out.report.weight_error.size() == 2);
        CHECK_FALSE(std::isnan(out.row.weight_error_mean));
        InferenceConfig used = spec.inference;
        used.seed = spec.seed;
        CHECK(out.row.config_digest == config_digest(used, 2));
        // Metrics in the row must agree with direct recomputation.
        CHECK_THAT(out.row.cmse,
                   WithinAbs(cmse(env.true_constraints, out.model.constraints), 1e-15));
        const auto m = confusion(env.true_constraints, out.model.constraints,
                                 {env.start, env.goal});
        CHECK(out.row.precision == m.precision);
        CHECK(out.row.recall == m.recall);
        CHECK(out.row.f1 == m.f1);
        CHECK(out.row.fpr == m.fpr);
        CHECK(out.row.avg_ll == avg_log_likelihood(env, out.demos, out.model));
    }

    SECTION("the known-weight baseline is labeled per expert") {
        spec.method = Method::Mlci;
        spec.mlci_expert = 1;
        const auto out = run_experiment(env, experts, spec);
        CHECK(out.row.method == "mlci:rock-lover");
        CHECK(out.row.k == 1);
        CHECK(out.model.weights[0] == experts[1].weights);
        CHECK(out.report.weight_error.empty());
        CHECK(std::isnan(out.row.weight_error_mean));
        CHECK(out.trace.iterations.empty()); // no EM loop ran
    }

    SECTION("the pooled single-cluster ablation") {
        spec.method = Method::SinglePref;
        const auto out = run_experiment(env, experts, spec);
        CHECK(out.row.method == "single");
        CHECK(out.row.k == 1);
        // Two experts, one cluster: weight recovery is undefined.
        CHECK(std::isnan(out.row.weight_error_mean));
    }

    SECTION("identical specs give identical rows apart from wall time") {
        spec.method = Method::Moci;
        const auto first = run_experiment(env, experts, spec);
        const auto second = run_experiment(env, experts, spec);
        CHECK(first.row.cmse == second.row.cmse);
        CHECK(first.row.avg_ll == second.row.avg_ll);
        CHECK(first.model.weights == second.model.weights);
        CHECK(first.model.constraints == second.model.constraints);
    }

    SECTION("the baseline expert index is validated") {
        spec.method = Method::Mlci;
        spec.mlci_expert = 5;
        CHECK_THROWS_WITH(run_experiment(env, experts, spec),
                          ContainsSubstring("mlci expert index"));
    }
}

TEST_CASE("method names round-trip", "[experiment]") {
    for (Method m : {Method::Moci, Method::Mlci, Method::SinglePref})
        CHECK(method_from_name(method_name(m)) == m);
    CHECK_THROWS_WITH(method_from_name("icrl"),
                      ContainsSubstring("unknown method 'icrl'"));
}

TEST_CASE("sweep cells enumerate the cross product with per-expert baselines",
          "[experiment]") {
    ExperimentSpec spec;
    spec.axes.grid_sizes = {4, 5};
    spec.axes.demo_counts = {8};
    spec.axes.thresholds = {0.05, 0.5};
    spec.axes.cluster_counts = {1, 2};
    spec.axes.methods = {Method::Moci, Method::Mlci, Method::SinglePref};
    spec.axes.seeds = {1, 2, 3};

    const auto cells = enumerate_cells(spec, std::nullopt);
    // moci: 2 sizes x 1 rule x 1 count x 2 thresholds x 2 ks x 3 seeds = 24
    // mlci: two expert variants, k locked to 1        -> 2x2x1x2x1x3 = 24
    // single: k locked to 1                           -> 2x1x1x2x1x3 = 12
    CHECK(cells.size() == 60);

    std::set<std::string> keys;
    for (const auto& cell : cells)
        keys.insert(cell.key());
    CHECK(keys.size() == cells.size()); // keys are unique

    int mlci_variants[2] = {0, 0};
    for (const auto& cell : cells) {
        if (cell.method == Method::Mlci) {
            CHECK(cell.k == 1);
            mlci_variants[cell.mlci_expert] += 1;
        }
        if (cell.method == Method::SinglePref)
            CHECK(cell.k == 1);
    }
    CHECK(mlci_variants[0] == 12);
    CHECK(mlci_variants[1] == 12);

    SECTION("axes must be non-empty") {
        spec.axes.seeds.clear();
        CHECK_THROWS_WITH(enumerate_cells(spec, std::nullopt),
                          "every sweep axis needs at least one value");
    }
}

TEST_CASE("seed_range counts up from its base", "[experiment]") {
    CHECK(seed_range(3) == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(seed_range(2, 10) == std::vector<std::uint64_t>{10, 11});
    CHECK_THROWS_WITH(seed_range(0), "seed count must be positive");
}

namespace {

ExperimentSpec tiny_sweep_spec(const std::string& out_dir) {
    ExperimentSpec spec;
    spec.experts = protocol_experts();
    spec.inference.i_iter = 2;
    spec.inference.i_irl = 10;
    spec.inference.alpha = 0.01;
    spec.axes.grid_sizes = {4};
    spec.axes.demo_counts = {6};
    spec.axes.thresholds = {0.05};
    spec.axes.cluster_counts = {2};
    spec.axes.methods = {Method::Moci, Method::Mlci};
    spec.axes.seeds = {1, 2};
    spec.out_dir = out_dir;
    return spec;
}

// Rows with the wall-time and digest columns ignored, for comparisons
// across reruns.
std::vector<std::string> stable_row_text(const std::vector<ReportRow>& rows) {
    std::vector<std::string> out;
    for (auto row : rows) {
        row.runtime_s = 0.0;
        out.push_back(report_row_to_csv(row));
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST_CASE("sweeps are resumable and parallel-safe", "[experiment]") {
    testutil::TempDir dir;

    const auto spec = tiny_sweep_spec(dir.file("sweep"));
    const auto first = run_sweep(spec, 1);
    CHECK(first.computed == 6); // (1 moci + 2 mlci variants) x 2 seeds
    CHECK(first.loaded == 0);
    CHECK(first.failed == 0);
    write_sweep_outputs(spec, first);

    const auto results_path = dir.file("sweep") + "/results.csv";
    const auto first_rows = read_report_csv(results_path);
    CHECK(first_rows.size() == 6);

    SECTION("a second pass only loads persisted cells") {
        const auto second = run_sweep(spec, 1);
        CHECK(second.computed == 0);
        CHECK(second.loaded == 6);
        write_sweep_outputs(spec, second);
        CHECK(stable_row_text(read_report_csv(results_path)) ==
              stable_row_text(first_rows));
    }

    SECTION("deleting one cell file recomputes exactly that cell") {
        const auto cells_dir = std::filesystem::path(dir.file("sweep")) / "cells";
        int removed = 0;
        for (const auto& entry : std::filesystem::directory_iterator(cells_dir)) {
            if (removed == 0 && entry.path().extension() == ".csv") {
                std::filesystem::remove(entry.path());
                ++removed;
            }
        }
        REQUIRE(removed == 1);
        const auto resumed = run_sweep(spec, 1);
        CHECK(resumed.computed == 1);
        CHECK(resumed.loaded == 5);
        write_sweep_outputs(spec, resumed);
        CHECK(stable_row_text(read_report_csv(results_path)) ==
              stable_row_text(first_rows));
    }

    SECTION("worker count does not change the results") {
        testutil::TempDir parallel_dir;
        auto parallel_spec = tiny_sweep_spec(parallel_dir.file("sweep"));
        const auto parallel = run_sweep(parallel_spec, 4);
        CHECK(parallel.computed == 6);
        write_sweep_outputs(parallel_spec, parallel);
        const auto parallel_rows =
            read_report_csv(parallel_dir.file("sweep") + "/results.csv");
        CHECK(stable_row_text(parallel_rows) == stable_row_text(first_rows));
    }

    SECTION("a sweep cell reproduces the direct single-run path") {
        RunSpec direct;
        direct.method = Method::Moci;
        direct.k = 2;
        direct.inference = spec.inference;
        direct.seed = 1;
        const Environment env = protocol_environment(4, HorizonRule::Short);
        const auto out =
            run_experiment(env, with_demo_total(spec.experts, 6), direct);
        bool found = false;
        for (const auto& row : first_rows)
            if (row.method == "moci" && row.seed == 1) {
                found = true;
                CHECK(row.cmse == out.row.cmse);
                CHECK(row.avg_ll == out.row.avg_ll);
                CHECK(row.recall == out.row.recall);
            }
        CHECK(found);
    }
}

TEST_CASE("sweep summary files are emitted with grouped statistics",
          "[experiment]") {
    testutil::TempDir dir;
    auto spec = tiny_sweep_spec(dir.file("sweep"));
    spec.axes.methods = {Method::Moci};
    spec.axes.cluster_counts = {1, 2};
    const auto sweep = run_sweep(spec, 2);
    CHECK(sweep.failed == 0);
    write_sweep_outputs(spec, sweep);

    const std::string base = dir.file("sweep");
    for (const char* name : {"results.csv", "fpr_by_demos.csv", "fpr_by_gridsize.csv",
                             "runtime_by_gridsize.csv", "ablation.csv"})
        CHECK(std::filesystem::exists(std::filesystem::path(base) / name));
    // No failures: the failure log is suppressed.
    CHECK_FALSE(std::filesystem::exists(std::filesystem::path(base) / "failures.txt"));

    const std::string ablation = testutil::slurp(base + "/ablation.csv");
    CHECK_THAT(ablation, ContainsSubstring("k,runs,avg_ll_mean"));
    CHECK_THAT(ablation, ContainsSubstring("\n1,"));
    CHECK_THAT(ablation, ContainsSubstring("\n2,"));
}

TEST_CASE("mean_std matches the sample formulas", "[experiment]") {
    const auto stats = mean_std({1.0, 2.0, 3.0, 4.0});
    CHECK_THAT(stats.mean, WithinAbs(2.5, 1e-15));
    CHECK_THAT(stats.stddev, WithinAbs(std::sqrt(5.0 / 3.0), 1e-12));
    CHECK(stats.count == 4);
    CHECK(mean_std({7.0}).stddev == 0.0);
    CHECK(mean_std({}).count == 0);
}

TEST_CASE("the comparison table quotes the unimplemented reference method",
          "[experiment]") {
    ReportRow row;
    row.method = "moci";
    row.cmse = 0.027;
    row.runtime_s = 0.69;
    const std::string table = render_comparison({row});
    CHECK_THAT(table, ContainsSubstring("moci"));
    CHECK_THAT(table, ContainsSubstring("icrl (quoted)"));
    CHECK_THAT(table, ContainsSubstring("not implemented or measured"));
}
