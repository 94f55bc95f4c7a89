#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moci/constraint_set.hpp"
#include "moci/environment.hpp"
#include "moci/maxent.hpp"
#include "moci/numerics.hpp"

namespace moci {

// A K-cluster mixture over preference weights sharing one constraint set.
struct MixtureModel {
    std::vector<PreferenceWeights> weights;
    std::vector<double> priors;
    ConstraintSet constraints;

    int K() const { return static_cast<int>(weights.size()); }

    void validate() const {
        if (weights.empty())
            throw std::invalid_argument("mixture model needs at least one cluster");
        if (priors.size() != weights.size())
            throw std::invalid_argument("prior count does not match cluster count");
        const std::size_t dim = weights.front().size();
        double sum = 0.0;
        for (std::size_t k = 0; k < priors.size(); ++k) {
            if (weights[k].size() != dim)
                throw std::invalid_argument("cluster weight vectors differ in dimension");
            if (!(priors[k] >= 0.0))
                throw std::invalid_argument("negative cluster prior");
            sum += priors[k];
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("cluster priors must sum to 1");
    }
};

// |D| x K posterior cluster assignments, rows summing to 1.
struct Responsibilities {
    int rows = 0;
    int cols = 0;
    std::vector<double> gamma; // row-major

    double at(int i, int k) const {
        return gamma[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) +
                     static_cast<std::size_t>(k)];
    }

    std::vector<double> column(int k) const {
        std::vector<double> col(static_cast<std::size_t>(rows));
        for (int i = 0; i < rows; ++i)
            col[static_cast<std::size_t>(i)] = at(i, k);
        return col;
    }
};

// Constraint acceptance is only possible while the fitted weights are
// moderate: once gradient ascent saturates a terrain aversion, the model
// itself stops routing mass through blocked cells and their likelihood
// gains vanish. The default alpha and i_irl are therefore sized so the
// first search rounds see a partially fitted model, while i_iter full
// rounds still converge the weights on small grids in well under a second.
struct InferenceConfig {
    double d_dkl = 0.05;     // stopping threshold on the constraint-search gain
    double alpha = 0.02;     // gradient-ascent learning rate
    int i_irl = 15;          // gradient steps per weight update
    int i_iter = 10;         // max outer EM iterations
    double em_tol = 1e-4;    // outer-loop convergence tolerance on avg log-likelihood
    std::optional<int> m_test; // cap on candidates scored per constraint addition
    std::uint64_t seed = 0;
    double init_scale = 0.1; // weight-initialization spread
    bool normalized_gain = true; // compare per-demo gain (true) or joint gain (false)

    void validate() const {
        if (!(d_dkl > 0.0))
            throw std::invalid_argument("d_dkl must be positive");
        if (!(alpha > 0.0))
            throw std::invalid_argument("alpha must be positive");
        // i_irl = 0 is allowed: a zero-step weight update leaves weights fixed,
        // which is exactly the known-reward baseline configuration.
        if (i_irl < 0)
            throw std::invalid_argument("i_irl must be non-negative");
        if (i_iter < 1)
            throw std::invalid_argument("i_iter must be at least 1");
        if (!(em_tol >= 0.0))
            throw std::invalid_argument("em_tol must be non-negative");
        if (m_test && *m_test < 1)
            throw std::invalid_argument("m_test must be at least 1 when set");
        if (!(init_scale > 0.0))
            throw std::invalid_argument("init_scale must be positive");
    }
};

// One accepted constraint: the EM iteration it was added in, the state, and
// the log-likelihood gain that justified it (per-demo if normalized_gain).
struct ConstraintAcceptance {
    int iteration = 0;
    int state = 0;
    double gain = 0.0;
};

struct IterationRecord {
    int iteration = 0;
    double avg_ll = 0.0;
    int constraints_total = 0;
    int constraints_added = 0;
    std::vector<double> priors;
};

struct Trace {
    std::vector<IterationRecord> iterations;
    std::vector<ConstraintAcceptance> acceptances;
    bool converged = false;
};

struct MociResult {
    MixtureModel model;
    Trace trace;
};

/**
 * Mixture log-likelihood of the demonstration set: for each demonstration,
 * log-sum-exp over clusters of log prior plus the constrained MaxEnt
 * trajectory log-probability. Returns -infinity if any demonstration
 * violates the model's constraints (or the model admits no trajectories).
 */
inline double joint_log_likelihood(const Environment& env, const std::vector<Trajectory>& demos,
                                   const MixtureModel& model) {
    const int K = model.K();
    std::vector<LogPartitionTable> tables;
    tables.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        tables.push_back(log_partition(env, model.constraints, model.weights[k]));

    double total = 0.0;
    std::vector<double> terms(static_cast<std::size_t>(K));
    for (const auto& traj : demos) {
        for (int k = 0; k < K; ++k) {
            const double lp = model.priors[static_cast<std::size_t>(k)] > 0.0
                                  ? std::log(model.priors[static_cast<std::size_t>(k)])
                                  : kNegInf;
            const double tp = trajectory_log_prob(env, traj, model.constraints,
                                                  model.weights[static_cast<std::size_t>(k)],
                                                  tables[static_cast<std::size_t>(k)]);
            terms[static_cast<std::size_t>(k)] = (lp == kNegInf || tp == kNegInf) ? kNegInf
                                                                                  : lp + tp;
        }
        const double demo_ll = log_sum_exp(terms);
        if (demo_ll == kNegInf)
            return kNegInf;
        total += demo_ll;
    }
    return total;
}

// Per-demonstration average of the joint log-likelihood; invariant under
// dataset replication for a fixed model.
inline double avg_log_likelihood(const Environment& env, const std::vector<Trajectory>& demos,
                                 const MixtureModel& model) {
    if (demos.empty())
        throw std::invalid_argument("average log-likelihood of an empty demonstration set");
    return joint_log_likelihood(env, demos, model) /
           static_cast<double>(demos.size());
}

// Posterior cluster assignments, computed and normalized in log space.
inline Responsibilities e_step(const Environment& env, const std::vector<Trajectory>& demos,
                               const MixtureModel& model) {
    const int K = model.K();
    const int N = static_cast<int>(demos.size());
    std::vector<LogPartitionTable> tables;
    tables.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        tables.push_back(log_partition(env, model.constraints, model.weights[k]));

    Responsibilities resp;
    resp.rows = N;
    resp.cols = K;
    resp.gamma.assign(static_cast<std::size_t>(N) * static_cast<std::size_t>(K), 0.0);

    std::vector<double> row(static_cast<std::size_t>(K));
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k < K; ++k) {
            const double pk = model.priors[static_cast<std::size_t>(k)];
            const double lp = pk > 0.0 ? std::log(pk) : kNegInf;
            const double tp = trajectory_log_prob(env, demos[static_cast<std::size_t>(i)],
                                                  model.constraints,
                                                  model.weights[static_cast<std::size_t>(k)],
                                                  tables[static_cast<std::size_t>(k)]);
            row[static_cast<std::size_t>(k)] = (lp == kNegInf || tp == kNegInf) ? kNegInf
                                                                                : lp + tp;
        }
        const double norm = log_sum_exp(row);
        if (norm == kNegInf)
            throw std::runtime_error("demonstration infeasible under model");
        for (int k = 0; k < K; ++k) {
            const double v = row[static_cast<std::size_t>(k)];
            resp.gamma[static_cast<std::size_t>(i) * static_cast<std::size_t>(K) +
                       static_cast<std::size_t>(k)] = v == kNegInf ? 0.0 : std::exp(v - norm);
        }
    }
    return resp;
}

// Column means of the responsibility matrix.
inline std::vector<double> m_step_priors(const Responsibilities& resp) {
    if (resp.rows == 0)
        throw std::invalid_argument("prior update from an empty responsibility matrix");
    std::vector<double> priors(static_cast<std::size_t>(resp.cols), 0.0);
    for (int i = 0; i < resp.rows; ++i)
        for (int k = 0; k < resp.cols; ++k)
            priors[static_cast<std::size_t>(k)] += resp.at(i, k);
    for (double& p : priors)
        p /= static_cast<double>(resp.rows);
    return priors;
}

// Independent responsibility-weighted gradient ascent per cluster.
inline std::vector<PreferenceWeights> m_step_weights(const Environment& env,
                                                     const std::vector<Trajectory>& demos,
                                                     const Responsibilities& resp,
                                                     const MixtureModel& model,
                                                     const InferenceConfig& cfg) {
    std::vector<PreferenceWeights> updated;
    updated.reserve(model.weights.size());
    for (int k = 0; k < model.K(); ++k) {
        const auto col = resp.column(k);
        updated.push_back(gradient_ascent_weights(env, demos, col,
                                                  model.weights[static_cast<std::size_t>(k)],
                                                  model.constraints, cfg.alpha, cfg.i_irl));
    }
    return updated;
}

// Joint log-likelihood if state c were added to the model's constraints.
// Does not mutate the model.
inline double score_candidate(const Environment& env, int c,
                              const std::vector<Trajectory>& demos,
                              const MixtureModel& model) {
    MixtureModel probe = model;
    probe.constraints.add(c);
    return joint_log_likelihood(env, demos, probe);
}

namespace detail {

// Fixed per-search context: demo rewards and cluster log-priors do not
// depend on the constraint set, so they are computed once.
struct SearchContext {
    std::vector<int> succ;
    std::vector<std::vector<double>> rewards;     // per cluster, per state
    std::vector<std::vector<double>> demo_reward; // per cluster, per demo
    std::vector<double> log_prior;                // per cluster

    SearchContext(const Environment& env, const std::vector<Trajectory>& demos,
                  const MixtureModel& model)
        : succ(successor_table(env)) {
        const int K = model.K();
        rewards.reserve(static_cast<std::size_t>(K));
        demo_reward.reserve(static_cast<std::size_t>(K));
        log_prior.reserve(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            rewards.push_back(state_rewards(env, model.weights[static_cast<std::size_t>(k)]));
            std::vector<double> dr(demos.size());
            for (std::size_t i = 0; i < demos.size(); ++i)
                dr[i] = trajectory_reward(env, demos[i],
                                          model.weights[static_cast<std::size_t>(k)]);
            demo_reward.push_back(std::move(dr));
            const double pk = model.priors[static_cast<std::size_t>(k)];
            log_prior.push_back(pk > 0.0 ? std::log(pk) : kNegInf);
        }
    }

    // Joint log-likelihood under constraint set c. Demonstrations are assumed
    // feasible under c (the search only ever considers unvisited states).
    double joint(const Environment& env, const ConstraintSet& c, std::size_t num_demos) const {
        const int K = static_cast<int>(rewards.size());
        std::vector<double> log_z(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            const auto table = log_partition_impl(env, c, rewards[static_cast<std::size_t>(k)],
                                                  succ);
            log_z[static_cast<std::size_t>(k)] = table.log_z;
        }
        double total = 0.0;
        std::vector<double> terms(static_cast<std::size_t>(K));
        for (std::size_t i = 0; i < num_demos; ++i) {
            for (int k = 0; k < K; ++k) {
                const std::size_t ku = static_cast<std::size_t>(k);
                terms[ku] = (log_prior[ku] == kNegInf || log_z[ku] == kNegInf)
                                ? kNegInf
                                : log_prior[ku] + demo_reward[ku][i] - log_z[ku];
            }
            const double demo_ll = log_sum_exp(terms);
            if (demo_ll == kNegInf)
                return kNegInf;
            total += demo_ll;
        }
        return total;
    }
};

} // namespace detail

struct SearchResult {
    ConstraintSet constraints;
    std::vector<ConstraintAcceptance> accepted;
};

/**
 * Greedy constraint search. Each round scores every remaining candidate (or
 * a seeded random subset of at most cfg.m_test of them), picks the best by
 * score with ties broken toward the smallest state index, and accepts it if
 * the log-likelihood gain exceeds cfg.d_dkl; otherwise the search stops.
 * Accepted states are removed from `candidates` permanently.
 */
inline SearchResult constraint_search(const Environment& env,
                                      const std::vector<Trajectory>& demos,
                                      const MixtureModel& model, const InferenceConfig& cfg,
                                      std::vector<int>& candidates, Rng* subset_rng = nullptr,
                                      int iteration = 0) {
    model.validate();
    SearchResult result;
    result.constraints = model.constraints;
    if (demos.empty())
        return result;

    const detail::SearchContext ctx(env, demos, model);
    const double denom = cfg.normalized_gain ? static_cast<double>(demos.size()) : 1.0;
    double current = ctx.joint(env, result.constraints, demos.size());
    if (current == kNegInf)
        return result; // no finite baseline; gains are undefined

    std::vector<int> subset;
    while (!candidates.empty()) {
        const std::vector<int>* scored = &candidates;
        if (cfg.m_test && static_cast<std::size_t>(*cfg.m_test) < candidates.size()) {
            if (subset_rng == nullptr)
                throw std::invalid_argument("candidate subsetting requires an RNG");
            subset = candidates;
            subset_rng->shuffle(subset);
            subset.resize(static_cast<std::size_t>(*cfg.m_test));
            std::sort(subset.begin(), subset.end());
            scored = &subset;
        }

        int best_state = -1;
        double best_score = kNegInf;
        for (int c : *scored) {
            ConstraintSet probe = result.constraints;
            probe.add(c);
            const double score = ctx.joint(env, probe, demos.size());
            if (score > best_score) { // ascending scan: ties keep the smallest index
                best_score = score;
                best_state = c;
            }
        }
        if (best_state < 0)
            break;

        const double gain = (best_score - current) / denom;
        if (!(gain > cfg.d_dkl))
            break;

        result.constraints.add(best_state);
        result.accepted.push_back(ConstraintAcceptance{iteration, best_state, gain});
        candidates.erase(std::find(candidates.begin(), candidates.end(), best_state));
        current = best_score;
    }
    return result;
}

namespace detail {

inline std::vector<PreferenceWeights> initial_weights(const Environment& env, int K,
                                                      const InferenceConfig& cfg) {
    const int dim = env.feature_dim();
    std::vector<PreferenceWeights> weights;
    weights.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        Rng rng(derive_seed(cfg.seed, seed_tag::weight_init, static_cast<std::uint64_t>(k)));
        PreferenceWeights w(static_cast<std::size_t>(dim));
        // Re-draw on near-collision with an earlier cluster: identical
        // clusters would make the E-step permanently symmetric.
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (double& v : w)
                v = rng.uniform(-cfg.init_scale, cfg.init_scale);
            bool distinct = true;
            for (const auto& other : weights)
                if (max_abs_diff(w, other) < 1e-6)
                    distinct = false;
            if (distinct)
                break;
        }
        weights.push_back(w);
    }
    return weights;
}

} // namespace detail

/**
 * Full EM driver: expectation step, prior update, responsibility-weighted
 * gradient ascent on each cluster's weights, then greedy constraint search,
 * repeated until the average log-likelihood change falls below em_tol or
 * i_iter iterations elapse. Deterministic given all inputs.
 *
 * If `init_weights` is provided it must hold exactly K vectors and replaces
 * the seeded random initialization. If `progress` is non-null the trace is
 * mirrored there as it grows, so a propagated error still leaves the trace
 * up to the failure point.
 */
inline MociResult run_moci(const Environment& env, const std::vector<Trajectory>& demos,
                           const InferenceConfig& cfg, int K,
                           const std::optional<std::vector<PreferenceWeights>>& init_weights =
                               std::nullopt,
                           Trace* progress = nullptr) {
    cfg.validate();
    if (K < 1)
        throw std::invalid_argument("cluster count must be at least 1");
    if (demos.empty())
        throw std::invalid_argument("cannot run inference on an empty demonstration set");
    for (const auto& traj : demos)
        traj.validate(env);
    if (init_weights && static_cast<int>(init_weights->size()) != K)
        throw std::invalid_argument("initial weight count does not match cluster count");

    MociResult out;
    MixtureModel& model = out.model;
    model.weights = init_weights ? *init_weights : detail::initial_weights(env, K, cfg);
    for (const auto& w : model.weights)
        if (static_cast<int>(w.size()) != env.feature_dim())
            throw std::invalid_argument("initial weight dimension does not match features");
    model.priors.assign(static_cast<std::size_t>(K), 1.0 / static_cast<double>(K));
    model.constraints = ConstraintSet(env.num_states());

    Trace& trace = out.trace;
    auto mirror = [&] {
        if (progress != nullptr)
            *progress = trace;
    };

    std::vector<int> candidates = candidate_states(env, demos);
    Rng subset_rng(derive_seed(cfg.seed, seed_tag::candidate_subset));

    double prev_avg = avg_log_likelihood(env, demos, model);
    trace.iterations.push_back(
        IterationRecord{0, prev_avg, static_cast<int>(model.constraints.size()), 0,
                        model.priors});
    mirror();

    for (int it = 1; it <= cfg.i_iter; ++it) {
        const Responsibilities resp = e_step(env, demos, model);
        model.priors = m_step_priors(resp);
        model.weights = m_step_weights(env, demos, resp, model, cfg);

        SearchResult search =
            constraint_search(env, demos, model, cfg, candidates, &subset_rng, it);
        model.constraints = search.constraints;
        for (const auto& acc : search.accepted)
            trace.acceptances.push_back(acc);

        const double avg = avg_log_likelihood(env, demos, model);
        trace.iterations.push_back(IterationRecord{it, avg,
                                                   static_cast<int>(model.constraints.size()),
                                                   static_cast<int>(search.accepted.size()),
                                                   model.priors});
        mirror();
        if (std::abs(avg - prev_avg) < cfg.em_tol) {
            trace.converged = true;
            mirror();
            break;
        }
        prev_avg = avg;
    }
    return out;
}

} // namespace moci
