#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "moci/constraint_set.hpp"
#include "moci/environment.hpp"
#include "moci/numerics.hpp"

namespace moci {

// Per-terrain reward weights, one entry per feature. No normalization is
// imposed; the trajectory distribution is scale-sensitive.
using PreferenceWeights = std::vector<double>;

// Backward table of log partial partition sums. at(t, s) is the log of the
// summed exponentiated reward-to-go over all feasible continuations that
// occupy s at time t (including the reward of s itself). Constrained states
// hold -infinity.
struct LogPartitionTable {
    int horizon = 0;
    int num_states = 0;
    std::vector<double> log_value; // (horizon+1) * num_states, t-major
    double log_z = kNegInf;        // log_value at (0, start)
    bool degenerate = true;        // no feasible trajectory exists

    double at(int t, int s) const {
        return log_value[static_cast<std::size_t>(t) * static_cast<std::size_t>(num_states) +
                         static_cast<std::size_t>(s)];
    }
};

inline std::vector<double> state_rewards(const Environment& env, const PreferenceWeights& w) {
    std::vector<double> r(static_cast<std::size_t>(env.num_states()));
    for (int s = 0; s < env.num_states(); ++s)
        r[static_cast<std::size_t>(s)] = dot(env.phi(s), w);
    return r;
}

// Sum of per-state feature vectors over all H+1 visited states. Features are
// state-only, so actions contribute nothing.
inline std::vector<double> trajectory_feature_counts(const Environment& env,
                                                     const Trajectory& traj) {
    std::vector<double> counts(static_cast<std::size_t>(env.feature_dim()), 0.0);
    for (int s : traj.states) {
        const auto& f = env.phi(s);
        for (std::size_t j = 0; j < counts.size(); ++j)
            counts[j] += f[j];
    }
    return counts;
}

inline double trajectory_reward(const Environment& env, const Trajectory& traj,
                                const PreferenceWeights& w) {
    double r = 0.0;
    for (int s : traj.states)
        r += dot(env.phi(s), w);
    return r;
}

// Successor table step(s, a) for all states and actions, in action order.
inline std::vector<int> successor_table(const Environment& env) {
    std::vector<int> succ(static_cast<std::size_t>(env.num_states()) * kNumActions);
    for (int s = 0; s < env.num_states(); ++s)
        for (int a = 0; a < kNumActions; ++a)
            succ[static_cast<std::size_t>(s) * kNumActions + static_cast<std::size_t>(a)] =
                step(env, s, static_cast<Action>(a));
    return succ;
}

namespace detail {

inline LogPartitionTable log_partition_impl(const Environment& env, const ConstraintSet& c,
                                            std::span<const double> reward,
                                            std::span<const int> succ) {
    if (c.contains(env.start))
        throw std::invalid_argument("start state constrained");

    const int H = env.horizon;
    const int S = env.num_states();
    LogPartitionTable table;
    table.horizon = H;
    table.num_states = S;
    table.log_value.assign(static_cast<std::size_t>(H + 1) * static_cast<std::size_t>(S),
                           kNegInf);

    auto row = [&](int t) {
        return table.log_value.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(S);
    };

    double* last = row(H);
    for (int s = 0; s < S; ++s)
        if (!c.contains(s))
            last[s] = reward[static_cast<std::size_t>(s)];

    for (int t = H - 1; t >= 0; --t) {
        const double* next = row(t + 1);
        double* cur = row(t);
        for (int s = 0; s < S; ++s) {
            if (c.contains(s))
                continue;
            const int* sa = succ.data() + static_cast<std::size_t>(s) * kNumActions;
            double vals[kNumActions];
            for (int a = 0; a < kNumActions; ++a)
                vals[a] = next[sa[a]];
            const double lse = log_sum_exp(std::span<const double>(vals, kNumActions));
            cur[s] = lse == kNegInf ? kNegInf : reward[static_cast<std::size_t>(s)] + lse;
        }
    }

    table.log_z = table.at(0, env.start);
    table.degenerate = !(table.log_z > kNegInf);
    return table;
}

} // namespace detail

/**
 * Backward pass computing log Z(C, w) over all feasible length-H action
 * sequences from the start state, in log space throughout. A degenerate
 * result (no feasible trajectory, log_z = -infinity) is flagged, not an
 * error; a constrained start state is.
 */
inline LogPartitionTable log_partition(const Environment& env, const ConstraintSet& c,
                                       const PreferenceWeights& w) {
    return detail::log_partition_impl(env, c, state_rewards(env, w), successor_table(env));
}

// R_w(traj) - log Z when the trajectory respects C, -infinity otherwise.
inline double trajectory_log_prob(const Environment& env, const Trajectory& traj,
                                  const ConstraintSet& c, const PreferenceWeights& w,
                                  const LogPartitionTable& table) {
    for (int s : traj.states)
        if (c.contains(s))
            return kNegInf;
    if (table.degenerate)
        return kNegInf;
    return trajectory_reward(env, traj, w) - table.log_z;
}

namespace detail {

// Forward state-visitation pass under the per-step policy induced by the
// backward table. visitation[t*S + s] sums to 1 over s for each t.
inline std::vector<double> visitation_probabilities(const Environment& env,
                                                    const LogPartitionTable& table,
                                                    std::span<const double> reward,
                                                    std::span<const int> succ) {
    const int H = env.horizon;
    const int S = env.num_states();
    std::vector<double> visit(static_cast<std::size_t>(H + 1) * static_cast<std::size_t>(S),
                              0.0);
    visit[static_cast<std::size_t>(env.start)] = 1.0;
    for (int t = 0; t < H; ++t) {
        const double* cur = visit.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(S);
        double* next = visit.data() + static_cast<std::size_t>(t + 1) * static_cast<std::size_t>(S);
        for (int s = 0; s < S; ++s) {
            const double mass = cur[s];
            if (mass == 0.0)
                continue;
            const double here = table.at(t, s);
            if (here == kNegInf)
                continue;
            const double base = here - reward[static_cast<std::size_t>(s)];
            const int* sa = succ.data() + static_cast<std::size_t>(s) * kNumActions;
            for (int a = 0; a < kNumActions; ++a) {
                const double to = table.at(t + 1, sa[a]);
                if (to == kNegInf)
                    continue;
                next[sa[a]] += mass * std::exp(to - base);
            }
        }
    }
    return visit;
}

inline std::vector<double> expected_feature_counts_impl(const Environment& env,
                                                        const LogPartitionTable& table,
                                                        std::span<const double> reward,
                                                        std::span<const int> succ) {
    if (table.degenerate)
        throw std::runtime_error("no feasible trajectory: expected feature counts undefined");
    const auto visit = visitation_probabilities(env, table, reward, succ);
    std::vector<double> counts(static_cast<std::size_t>(env.feature_dim()), 0.0);
    const int S = env.num_states();
    for (int t = 0; t <= env.horizon; ++t) {
        const double* v = visit.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(S);
        for (int s = 0; s < S; ++s) {
            if (v[s] == 0.0)
                continue;
            const auto& f = env.phi(s);
            for (std::size_t j = 0; j < counts.size(); ++j)
                counts[j] += v[s] * f[j];
        }
    }
    return counts;
}

} // namespace detail

// E[sum_t phi(s_t)] under the constrained MaxEnt trajectory distribution,
// via an exact forward visitation pass. O(H * |S| * |A|).
inline std::vector<double> expected_feature_counts(const Environment& env,
                                                   const ConstraintSet& c,
                                                   const PreferenceWeights& w) {
    const auto reward = state_rewards(env, w);
    const auto succ = successor_table(env);
    const auto table = detail::log_partition_impl(env, c, reward, succ);
    return detail::expected_feature_counts_impl(env, table, reward, succ);
}

/**
 * Responsibility-weighted MaxEnt IRL gradient: the gap between weighted
 * empirical feature counts and the model's expected counts, with a single
 * expected-count evaluation shared across all demonstrations.
 */
inline std::vector<double> irl_gradient(const Environment& env,
                                        const std::vector<Trajectory>& demos,
                                        std::span<const double> resp_column,
                                        const PreferenceWeights& w, const ConstraintSet& c) {
    if (resp_column.size() != demos.size())
        throw std::invalid_argument("responsibility column does not match demo count");
    std::vector<double> grad(static_cast<std::size_t>(env.feature_dim()), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const double g = resp_column[i];
        if (g == 0.0)
            continue;
        total += g;
        const auto counts = trajectory_feature_counts(env, demos[i]);
        for (std::size_t j = 0; j < grad.size(); ++j)
            grad[j] += g * counts[j];
    }
    if (total == 0.0)
        return grad;
    const auto expected = expected_feature_counts(env, c, w);
    for (std::size_t j = 0; j < grad.size(); ++j)
        grad[j] -= total * expected[j];
    return grad;
}

// Fixed-step gradient ascent from w_init. Deterministic given inputs; a
// cluster with zero total responsibility keeps its weights.
inline PreferenceWeights gradient_ascent_weights(const Environment& env,
                                                 const std::vector<Trajectory>& demos,
                                                 std::span<const double> resp_column,
                                                 const PreferenceWeights& w_init,
                                                 const ConstraintSet& c, double alpha,
                                                 int irl_steps) {
    if (alpha < 0.0)
        throw std::invalid_argument("learning rate must be non-negative");
    if (resp_column.size() != demos.size())
        throw std::invalid_argument("responsibility column does not match demo count");

    // Empirical side is constant across ascent steps.
    std::vector<double> empirical(static_cast<std::size_t>(env.feature_dim()), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const double g = resp_column[i];
        if (g == 0.0)
            continue;
        total += g;
        const auto counts = trajectory_feature_counts(env, demos[i]);
        for (std::size_t j = 0; j < empirical.size(); ++j)
            empirical[j] += g * counts[j];
    }

    PreferenceWeights w = w_init;
    if (total == 0.0 || alpha == 0.0 || irl_steps == 0)
        return w;

    const auto succ = successor_table(env);
    for (int it = 0; it < irl_steps; ++it) {
        const auto reward = state_rewards(env, w);
        const auto table = detail::log_partition_impl(env, c, reward, succ);
        const auto expected = detail::expected_feature_counts_impl(env, table, reward, succ);
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double g = empirical[j] - total * expected[j];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in weight update (step " +
                                         std::to_string(it) + ", coordinate " +
                                         std::to_string(j) + ")");
            w[j] += alpha * g;
        }
    }
    return w;
}

// Finite-horizon stochastic policy; prob(t, s, a) for t in [0, H).
struct SoftPolicy {
    int horizon = 0;
    int num_states = 0;
    std::vector<double> prob;

    double at(int t, int s, int a) const {
        return prob[(static_cast<std::size_t>(t) * static_cast<std::size_t>(num_states) +
                     static_cast<std::size_t>(s)) *
                        kNumActions +
                    static_cast<std::size_t>(a)];
    }
};

/**
 * Soft-optimal finite-horizon policy whose induced trajectory distribution
 * equals the constrained MaxEnt distribution exactly. Actions leading into
 * constrained states carry probability zero.
 */
inline SoftPolicy soft_value_iteration(const Environment& env, const ConstraintSet& c,
                                       const PreferenceWeights& w) {
    const auto reward = state_rewards(env, w);
    const auto succ = successor_table(env);
    const auto table = detail::log_partition_impl(env, c, reward, succ);
    if (table.degenerate)
        throw std::runtime_error("no feasible trajectory: policy undefined");

    const int H = env.horizon;
    const int S = env.num_states();
    SoftPolicy policy;
    policy.horizon = H;
    policy.num_states = S;
    policy.prob.assign(static_cast<std::size_t>(H) * static_cast<std::size_t>(S) * kNumActions,
                       0.0);
    for (int t = 0; t < H; ++t) {
        for (int s = 0; s < S; ++s) {
            const double here = table.at(t, s);
            if (here == kNegInf)
                continue;
            const double base = here - reward[static_cast<std::size_t>(s)];
            const int* sa = succ.data() + static_cast<std::size_t>(s) * kNumActions;
            double* out = policy.prob.data() +
                          (static_cast<std::size_t>(t) * static_cast<std::size_t>(S) +
                           static_cast<std::size_t>(s)) *
                              kNumActions;
            for (int a = 0; a < kNumActions; ++a) {
                const double to = table.at(t + 1, sa[a]);
                if (to != kNegInf)
                    out[a] = std::exp(to - base);
            }
        }
    }
    return policy;
}

// Length-H rollout from the start state; deterministic per seed.
inline Trajectory sample_trajectory(const SoftPolicy& policy, const Environment& env,
                                    std::uint64_t seed) {
    Rng rng(seed);
    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(env.horizon) + 1);
    traj.actions.reserve(static_cast<std::size_t>(env.horizon));
    int s = env.start;
    traj.states.push_back(s);
    for (int t = 0; t < env.horizon; ++t) {
        const double u = rng.uniform();
        double acc = 0.0;
        int chosen = kNumActions - 1;
        for (int a = 0; a < kNumActions; ++a) {
            acc += policy.at(t, s, a);
            if (u < acc) {
                chosen = a;
                break;
            }
        }
        const Action act = static_cast<Action>(chosen);
        s = step(env, s, act);
        traj.actions.push_back(act);
        traj.states.push_back(s);
    }
    return traj;
}

} // namespace moci
