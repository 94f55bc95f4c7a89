#pragma once

// Brute-force reference implementations used only by tests. Everything here
// recomputes quantities by explicit enumeration over all |A|^H action
// sequences (or direct graph search), sharing no dynamic-programming code
// with the library.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "moci.hpp"

namespace oracle {

// Environment assembled field-by-field, so tests can cover shapes the
// gridworld builder rejects (1x1 grids, start == goal, custom constraints).
inline moci::Environment make_env(int n, int horizon,
                                  const std::vector<moci::Terrain>& terrain, int start,
                                  int goal, const std::vector<int>& true_constraints = {},
                                  bool step_feature = false) {
    moci::Environment env;
    env.n = n;
    env.horizon = horizon;
    env.start = start;
    env.goal = goal;
    env.terrain = terrain;
    env.step_feature = step_feature;
    env.true_constraints = moci::ConstraintSet(n * n);
    for (int s : true_constraints)
        env.true_constraints.add(s);
    env.features.reserve(terrain.size());
    for (const moci::Terrain t : terrain)
        env.features.push_back(env.default_features(t));
    env.validate();
    return env;
}

inline long long pow_ll(long long base, int exp) {
    long long v = 1;
    for (int i = 0; i < exp; ++i)
        v *= base;
    return v;
}

// Every length-H action sequence, decoded odometer-style, simulated into a
// trajectory. The trajectory space is exactly |A|^H entries.
inline std::vector<moci::Trajectory> all_trajectories(const moci::Environment& env) {
    const long long total = pow_ll(moci::kNumActions, env.horizon);
    if (total > 2'000'000)
        throw std::invalid_argument("trajectory space too large to enumerate");
    std::vector<moci::Trajectory> out;
    out.reserve(static_cast<std::size_t>(total));
    for (long long code = 0; code < total; ++code) {
        moci::Trajectory traj;
        traj.states.reserve(static_cast<std::size_t>(env.horizon) + 1);
        traj.actions.reserve(static_cast<std::size_t>(env.horizon));
        int s = env.start;
        traj.states.push_back(s);
        long long rest = code;
        for (int t = 0; t < env.horizon; ++t) {
            const auto a = static_cast<moci::Action>(rest % moci::kNumActions);
            rest /= moci::kNumActions;
            s = moci::step(env, s, a);
            traj.actions.push_back(a);
            traj.states.push_back(s);
        }
        out.push_back(std::move(traj));
    }
    return out;
}

inline bool feasible(const moci::Trajectory& traj, const moci::ConstraintSet& c) {
    for (int s : traj.states)
        if (c.contains(s))
            return false;
    return true;
}

// Reward summed step by step with scalar products written out longhand.
inline double reward_of(const moci::Environment& env, const moci::Trajectory& traj,
                        const moci::PreferenceWeights& w) {
    long double total = 0.0L;
    for (int s : traj.states) {
        const auto& f = env.phi(s);
        for (std::size_t j = 0; j < f.size(); ++j)
            total += static_cast<long double>(f[j]) * static_cast<long double>(w[j]);
    }
    return static_cast<double>(total);
}

// log Z by direct summation of exp(R) over feasible enumerated trajectories,
// with its own max-shift (no shared log-sum-exp code).
inline double log_partition(const moci::Environment& env, const moci::ConstraintSet& c,
                            const moci::PreferenceWeights& w) {
    const auto trajectories = all_trajectories(env);
    double max_reward = -std::numeric_limits<double>::infinity();
    for (const auto& traj : trajectories)
        if (feasible(traj, c))
            max_reward = std::max(max_reward, reward_of(env, traj, w));
    if (max_reward == -std::numeric_limits<double>::infinity())
        return max_reward;
    long double sum = 0.0L;
    for (const auto& traj : trajectories)
        if (feasible(traj, c))
            sum += std::exp(static_cast<long double>(reward_of(env, traj, w) - max_reward));
    return max_reward + static_cast<double>(std::log(sum));
}

// E[sum_t phi(s_t)] by probability-weighted summation over the enumeration.
inline std::vector<double> expected_feature_counts(const moci::Environment& env,
                                                   const moci::ConstraintSet& c,
                                                   const moci::PreferenceWeights& w) {
    const double log_z = oracle::log_partition(env, c, w);
    if (log_z == -std::numeric_limits<double>::infinity())
        throw std::runtime_error("no feasible trajectory");
    std::vector<long double> counts(w.size(), 0.0L);
    for (const auto& traj : all_trajectories(env)) {
        if (!feasible(traj, c))
            continue;
        const long double p = std::exp(static_cast<long double>(reward_of(env, traj, w) - log_z));
        for (int s : traj.states) {
            const auto& f = env.phi(s);
            for (std::size_t j = 0; j < counts.size(); ++j)
                counts[j] += p * static_cast<long double>(f[j]);
        }
    }
    return std::vector<double>(counts.begin(), counts.end());
}

// Mixture likelihood evaluated in probability space with long doubles.
inline double joint_log_likelihood(const moci::Environment& env,
                                   const std::vector<moci::Trajectory>& demos,
                                   const moci::MixtureModel& model) {
    std::vector<double> log_z(model.weights.size());
    for (std::size_t k = 0; k < model.weights.size(); ++k)
        log_z[k] = oracle::log_partition(env, model.constraints, model.weights[k]);
    long double total = 0.0L;
    for (const auto& traj : demos) {
        long double p = 0.0L;
        for (std::size_t k = 0; k < model.weights.size(); ++k) {
            if (!(model.priors[k] > 0.0) ||
                log_z[k] == -std::numeric_limits<double>::infinity() ||
                !feasible(traj, model.constraints))
                continue;
            p += static_cast<long double>(model.priors[k]) *
                 std::exp(static_cast<long double>(reward_of(env, traj, model.weights[k]) -
                                                   log_z[k]));
        }
        if (p == 0.0L)
            return -std::numeric_limits<double>::infinity();
        total += std::log(p);
    }
    return static_cast<double>(total);
}

// Independent shortest-path search: frontier layers over the four moves.
inline int bfs_distance(const moci::Environment& env, const moci::ConstraintSet& blocked) {
    if (blocked.contains(env.start) || blocked.contains(env.goal))
        return -1;
    std::vector<char> seen(static_cast<std::size_t>(env.num_states()), 0);
    std::vector<int> frontier{env.start};
    seen[static_cast<std::size_t>(env.start)] = 1;
    int depth = 0;
    while (!frontier.empty()) {
        for (int s : frontier)
            if (s == env.goal)
                return depth;
        std::vector<int> next;
        for (int s : frontier) {
            const moci::Cell cell = env.cell(s);
            const int moves[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
            for (const auto& mv : moves) {
                const int r = cell.row + mv[0];
                const int c = cell.col + mv[1];
                if (r < 0 || r >= env.n || c < 0 || c >= env.n)
                    continue;
                const int t = env.index(r, c);
                if (seen[static_cast<std::size_t>(t)] || blocked.contains(t))
                    continue;
                seen[static_cast<std::size_t>(t)] = 1;
                next.push_back(t);
            }
        }
        frontier = std::move(next);
        ++depth;
    }
    return -1;
}

// ---------------------------------------------------------------------------
// Random instance generators (shared by unit and acceptance tests)
// ---------------------------------------------------------------------------

inline std::vector<moci::Terrain> random_terrain(moci::Rng& rng, int n) {
    std::vector<moci::Terrain> terrain(static_cast<std::size_t>(n) *
                                       static_cast<std::size_t>(n));
    for (auto& t : terrain)
        t = static_cast<moci::Terrain>(rng.uniform_int(moci::kTerrainKinds));
    return terrain;
}

// Small enumerable instance; start may equal goal, constraints are separate
// from terrain, and the step feature appears occasionally.
inline moci::Environment random_small_env(moci::Rng& rng, int max_n = 3, int max_h = 6) {
    const int n = 1 + rng.uniform_int(max_n);
    const int horizon = 1 + rng.uniform_int(max_h);
    const int start = rng.uniform_int(n * n);
    const int goal = rng.uniform_int(n * n);
    const bool step_feature = rng.uniform() < 0.25;
    return make_env(n, horizon, random_terrain(rng, n), start, goal, {}, step_feature);
}

inline moci::ConstraintSet random_constraints(const moci::Environment& env, moci::Rng& rng,
                                              double density = 0.2) {
    moci::ConstraintSet c(env.num_states());
    for (int s = 0; s < env.num_states(); ++s)
        if (s != env.start && rng.uniform() < density)
            c.add(s);
    return c;
}

inline moci::PreferenceWeights random_weights(moci::Rng& rng, int dim, double scale = 1.0) {
    moci::PreferenceWeights w(static_cast<std::size_t>(dim));
    for (double& v : w)
        v = rng.uniform(-scale, scale);
    return w;
}

// Uniform picks from the feasible slice of the enumerated trajectory space;
// empty when the constraint set admits nothing.
inline std::vector<moci::Trajectory> random_feasible_demos(const moci::Environment& env,
                                                           const moci::ConstraintSet& c,
                                                           moci::Rng& rng, int count) {
    std::vector<moci::Trajectory> feasible_set;
    for (auto& traj : all_trajectories(env))
        if (feasible(traj, c))
            feasible_set.push_back(std::move(traj));
    std::vector<moci::Trajectory> out;
    if (feasible_set.empty())
        return out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out.push_back(feasible_set[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(feasible_set.size())))]);
    return out;
}

// Responsibility-weighted MaxEnt objective for finite-difference checks,
// evaluated entirely through the enumeration oracle.
inline double weighted_log_likelihood(const moci::Environment& env,
                                      const std::vector<moci::Trajectory>& demos,
                                      const std::vector<double>& resp_column,
                                      const moci::PreferenceWeights& w,
                                      const moci::ConstraintSet& c) {
    const double log_z = oracle::log_partition(env, c, w);
    long double total = 0.0L;
    for (std::size_t i = 0; i < demos.size(); ++i)
        total += static_cast<long double>(resp_column[i]) *
                 static_cast<long double>(reward_of(env, demos[i], w) - log_z);
    return static_cast<double>(total);
}

} // namespace oracle
