#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace moci;

namespace {

std::vector<Terrain> uniform_terrain(int n, Terrain t = Terrain::Normal) {
    return std::vector<Terrain>(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), t);
}

} // namespace

TEST_CASE("step handles boundaries, adjacency, Stay, and the absorbing goal",
          "[environment]") {
    const Environment env = build_gridworld(3, uniform_terrain(3), Cell{0, 0}, Cell{2, 2}, 6);

    CHECK(step(env, env.index(0, 0), Action::Up) == env.index(0, 0));
    CHECK(step(env, env.index(0, 0), Action::Left) == env.index(0, 0));
    CHECK(step(env, env.index(0, 0), Action::Right) == env.index(0, 1));
    CHECK(step(env, env.index(1, 1), Action::Down) == env.index(2, 1));
    CHECK(step(env, env.index(1, 2), Action::Stay) == env.index(1, 2));
    for (Action a : kAllActions)
        CHECK(step(env, env.goal, a) == env.goal);
}

TEST_CASE("step is closed over the state set", "[environment]") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const Environment env = oracle::random_small_env(rng);
        for (int s = 0; s < env.num_states(); ++s)
            for (Action a : kAllActions) {
                const int t = step(env, s, a);
                REQUIRE(t >= 0);
                REQUIRE(t < env.num_states());
            }
    }
}

TEST_CASE("build_gridworld assembles features and true constraints", "[environment]") {
    SECTION("2x2 all-Normal grid has no constraints") {
        const Environment env =
            build_gridworld(2, uniform_terrain(2), Cell{0, 0}, Cell{1, 1}, 2);
        CHECK(env.num_states() == 4);
        CHECK(env.true_constraints.empty());
        CHECK(env.feature_dim() == 4);
        for (int s = 0; s < env.num_states(); ++s) {
            double sum = 0.0;
            for (double v : env.phi(s))
                sum += v;
            CHECK(sum == 1.0);
        }
    }

    SECTION("Water cells become the true constraint set") {
        auto terrain = uniform_terrain(3);
        terrain[static_cast<std::size_t>(4)] = Terrain::Water; // center
        terrain[static_cast<std::size_t>(5)] = Terrain::Water;
        const Environment env = build_gridworld(3, terrain, Cell{0, 0}, Cell{2, 2}, 8);
        CHECK(env.true_constraints.states() == std::vector<int>{4, 5});
        CHECK(env.phi(4) == std::vector<double>{0.0, 0.0, 0.0, 1.0});
    }
}

TEST_CASE("build_gridworld rejects bad endpoints and short horizons", "[environment]") {
    auto terrain = uniform_terrain(3);

    CHECK_THROWS_WITH(build_gridworld(3, terrain, Cell{1, 1}, Cell{1, 1}, 4),
                      "start and goal must differ");

    auto wet = terrain;
    wet[0] = Terrain::Water;
    CHECK_THROWS_WITH(build_gridworld(3, wet, Cell{0, 0}, Cell{2, 2}, 4),
                      "start and goal must be non-Water cells");

    // Water wall across the middle row: goal unreachable no matter the horizon.
    auto walled = terrain;
    for (int c = 0; c < 3; ++c)
        walled[static_cast<std::size_t>(3 + c)] = Terrain::Water;
    CHECK_THROWS_WITH(build_gridworld(3, walled, Cell{0, 0}, Cell{2, 2}, 50),
                      "infeasible horizon: goal unreachable around constraints");

    // Center Water cell forces a detour: (1,0) -> (1,2) takes 4 moves, not 2.
    auto detour = terrain;
    detour[static_cast<std::size_t>(4)] = Terrain::Water;
    CHECK_THROWS_WITH(build_gridworld(3, detour, Cell{1, 0}, Cell{1, 2}, 3),
                      "infeasible horizon: shortest feasible path needs 4 steps, horizon is 3");
    const Environment env = build_gridworld(3, detour, Cell{1, 0}, Cell{1, 2}, 4);
    CHECK(bfs_distance(env, env.true_constraints) == 4);
}

TEST_CASE("bfs_distance agrees with an independent layered search", "[environment]") {
    Rng rng(202);
    for (int trial = 0; trial < 100; ++trial) {
        const Environment env = oracle::random_small_env(rng);
        const ConstraintSet blocked = oracle::random_constraints(env, rng, 0.3);
        CHECK(bfs_distance(env, blocked) == oracle::bfs_distance(env, blocked));
    }
}

TEST_CASE("candidate_states excludes visited states plus start and goal",
          "[environment]") {
    const Environment env = build_gridworld(3, uniform_terrain(3), Cell{0, 0}, Cell{2, 2}, 4);

    SECTION("one trajectory along the top row leaves the lower rows") {
        Trajectory traj;
        traj.states = {env.index(0, 0), env.index(0, 1), env.index(0, 2), env.index(0, 2),
                       env.index(0, 2)};
        traj.actions = {Action::Right, Action::Right, Action::Stay, Action::Stay};
        traj.validate(env);
        const std::vector<int> expected = {env.index(1, 0), env.index(1, 1), env.index(1, 2),
                                           env.index(2, 0), env.index(2, 1)};
        CHECK(candidate_states(env, {traj}) == expected);
    }

    SECTION("full coverage leaves nothing") {
        std::vector<Trajectory> demos;
        for (int s = 0; s < env.num_states(); ++s) {
            Trajectory traj;
            traj.states = {env.start, step(env, env.start, Action::Down), s};
            demos.push_back(traj); // synthetic visit records; only `states` is read
        }
        CHECK(candidate_states(env, demos).empty());
    }

    SECTION("random demos never overlap their candidates") {
        Rng rng(303);
        for (int trial = 0; trial < 50; ++trial) {
            const Environment small = oracle::random_small_env(rng);
            const auto demos = oracle::random_feasible_demos(
                small, ConstraintSet(small.num_states()), rng, 3);
            for (int c : candidate_states(small, demos)) {
                for (const auto& traj : demos)
                    CHECK_FALSE(traj.visits(c));
                CHECK(c != small.start);
                CHECK(c != small.goal);
            }
        }
    }
}

TEST_CASE("terrain and action codes round-trip and reject unknowns", "[environment]") {
    for (Terrain t : {Terrain::Normal, Terrain::Grass, Terrain::Rocks, Terrain::Water})
        CHECK(terrain_from_code(terrain_code(t)) == t);
    for (Action a : kAllActions)
        CHECK(action_from_code(action_code(a)) == a);
    CHECK_THROWS_WITH(terrain_from_code('X'), "unknown terrain code 'X'");
    CHECK_THROWS_WITH(action_from_code('q'), "unknown action code 'q'");
}

TEST_CASE("Environment::validate rejects malformed feature maps", "[environment]") {
    Environment env = build_gridworld(2, uniform_terrain(2), Cell{0, 0}, Cell{1, 1}, 2);

    SECTION("two active features") {
        env.features[1][2] = 1.0;
        CHECK_THROWS_WITH(env.validate(), "feature map not one-hot at state 1");
    }
    SECTION("fractional feature") {
        env.features[3] = {0.5, 0.5, 0.0, 0.0};
        CHECK_THROWS_WITH(env.validate(), "feature map not one-hot at state 3");
    }
    SECTION("wrong dimension") {
        env.features[2].push_back(0.0);
        CHECK_THROWS_WITH(env.validate(), "feature vector has wrong dimension at state 2");
    }
    SECTION("constrained start") {
        env.true_constraints.add(env.start);
        CHECK_THROWS_WITH(env.validate(), "start/goal may not be constrained");
    }
}

TEST_CASE("Trajectory::validate enforces shape, start, and dynamics", "[environment]") {
    const Environment env = build_gridworld(2, uniform_terrain(2), Cell{0, 0}, Cell{1, 1}, 2);

    Trajectory good;
    good.states = {env.index(0, 0), env.index(0, 1), env.index(1, 1)};
    good.actions = {Action::Right, Action::Down};
    CHECK_NOTHROW(good.validate(env));

    Trajectory short_traj = good;
    short_traj.states.pop_back();
    CHECK_THROWS_WITH(short_traj.validate(env), "trajectory length does not match horizon");

    Trajectory bad_start = good;
    bad_start.states[0] = env.index(1, 0);
    CHECK_THROWS_WITH(bad_start.validate(env), "trajectory does not begin at start state");

    Trajectory teleport = good;
    teleport.states[1] = env.index(1, 0); // Right does not lead there
    CHECK_THROWS_WITH(teleport.validate(env), "trajectory violates transition rule at step 0");
}

TEST_CASE("environments compare equal through a serialization cycle", "[environment]") {
    testutil::TempDir dir;
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        const Environment env = oracle::random_small_env(rng);
        const std::string path = dir.file("env.txt");
        save_env(path, env);
        CHECK(load_env(path) == env);
    }
}
