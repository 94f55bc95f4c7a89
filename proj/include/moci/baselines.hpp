#pragma once

#include <stdexcept>
#include <vector>

#include "moci/constraint_set.hpp"
#include "moci/environment.hpp"
#include "moci/inference.hpp"
#include "moci/maxent.hpp"

namespace moci {

/**
 * Known-reward constraint learning: the greedy constraint search alone, with
 * a single fixed weight vector and no expectation or weight-update steps.
 * Shares the exact search code path with the mixture driver so runtime
 * differences between the two methods measure only the weight-update cost.
 */
inline ConstraintSet run_mlci(const Environment& env, const std::vector<Trajectory>& demos,
                              const PreferenceWeights& w_known, const InferenceConfig& cfg) {
    cfg.validate();
    if (demos.empty())
        throw std::invalid_argument("cannot run inference on an empty demonstration set");
    for (const auto& traj : demos)
        traj.validate(env);
    if (static_cast<int>(w_known.size()) != env.feature_dim())
        throw std::invalid_argument("known weight dimension does not match features");

    MixtureModel model;
    model.weights = {w_known};
    model.priors = {1.0};
    model.constraints = ConstraintSet(env.num_states());

    std::vector<int> candidates = candidate_states(env, demos);
    Rng subset_rng(derive_seed(cfg.seed, seed_tag::candidate_subset));
    return constraint_search(env, demos, model, cfg, candidates, &subset_rng, 1).constraints;
}

inline ConstraintSet run_mlci(const Environment& env, const std::vector<Trajectory>& demos,
                              const PreferenceWeights& w_known, double d_dkl) {
    InferenceConfig cfg;
    cfg.d_dkl = d_dkl;
    return run_mlci(env, demos, w_known, cfg);
}

// Single-preference ablation: the full EM driver restricted to one cluster.
// A named entry point so the ablation is a first-class experiment.
inline MociResult run_single_pref(const Environment& env, const std::vector<Trajectory>& demos,
                                  const InferenceConfig& cfg) {
    return run_moci(env, demos, cfg, 1);
}

} // namespace moci
