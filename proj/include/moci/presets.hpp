#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "moci/environment.hpp"
#include "moci/maxent.hpp"
#include "moci/numerics.hpp"

namespace moci {

// A ground-truth expert: its preference weights and how many demonstrations
// it contributes to the pooled dataset.
struct ExpertSpec {
    std::string name;
    PreferenceWeights weights;
    int count = 0;
};

// Horizon presets: "short" gives H = 2N, "long" H = 5N.
enum class HorizonRule { Short, Long };

inline int horizon_for(HorizonRule rule, int n) {
    return rule == HorizonRule::Short ? 2 * n : 5 * n;
}

inline std::string horizon_rule_name(HorizonRule rule) {
    return rule == HorizonRule::Short ? "2N" : "5N";
}

inline HorizonRule horizon_rule_from_name(const std::string& name) {
    if (name == "2N")
        return HorizonRule::Short;
    if (name == "5N")
        return HorizonRule::Long;
    throw std::invalid_argument("unknown horizon rule '" + name + "' (expected 2N or 5N)");
}

/**
 * The two-expert evaluation layout, scaled to any n >= 4: a Grass corridor
 * along the top edge hooking down the last column, a Rocks corridor down
 * the left edge hooking along the bottom edge, and one Water cell breaking
 * each corridor near its start — (0,2) in the Grass run, (2,0) in the Rocks
 * run. Each break sits where its expert's preferred terrain continues on
 * the far side, so an unconstrained preference-only model routes probability
 * mass straight through it while real demonstrations must hold back or
 * detour; that contrast is what makes the breaks detectable as constraints.
 * Start is the top-left corner, goal the bottom-right; the shortest
 * feasible start-to-goal path keeps length 2n-2.
 */
inline std::vector<Terrain> protocol_terrain(int n) {
    if (n < 4)
        throw std::invalid_argument("protocol layout needs n >= 4");
    std::vector<Terrain> terrain(static_cast<std::size_t>(n) * static_cast<std::size_t>(n),
                                 Terrain::Normal);
    auto set = [&](int r, int c, Terrain t) {
        terrain[static_cast<std::size_t>(r) * static_cast<std::size_t>(n) +
                static_cast<std::size_t>(c)] = t;
    };
    for (int c = 1; c <= n - 1; ++c)
        set(0, c, Terrain::Grass);
    for (int r = 1; r <= n - 2; ++r)
        set(r, n - 1, Terrain::Grass);
    for (int r = 1; r <= n - 1; ++r)
        set(r, 0, Terrain::Rocks);
    for (int c = 1; c <= n - 2; ++c)
        set(n - 1, c, Terrain::Rocks);
    set(0, 2, Terrain::Water);
    set(2, 0, Terrain::Water);
    return terrain;
}

inline Environment protocol_environment(int n, HorizonRule rule = HorizonRule::Short,
                                        bool step_feature = false) {
    return build_gridworld(n, protocol_terrain(n), Cell{0, 0}, Cell{n - 1, n - 1},
                           horizon_for(rule, n), 0.99, step_feature);
}

// Named canonical layouts for the CLI.
inline Environment preset_environment(const std::string& name) {
    if (name == "protocol-6x6")
        return protocol_environment(6);
    if (name == "protocol-5x5")
        return protocol_environment(5);
    throw std::invalid_argument("unknown preset '" + name +
                                "' (expected protocol-6x6 or protocol-5x5)");
}

// Default ground-truth experts. Magnitudes are preset choices: strong
// enough that soft-optimal rollouts reliably favor the expert's corridor
// and reach the goal within H = 2N. The Water weight never influences
// behavior (Water is impassable) but is kept negative so learned-weight
// comparisons have a meaningful target sign.
inline std::vector<ExpertSpec> protocol_experts(int demos_per_expert = 10) {
    if (demos_per_expert < 0)
        throw std::invalid_argument("demo count must be non-negative");
    return {
        ExpertSpec{"grass-lover", {0.0, 2.0, -1.0, -1.0}, demos_per_expert},
        ExpertSpec{"rock-lover", {0.0, -1.0, 2.0, -1.0}, demos_per_expert},
    };
}

// Splits a pooled demonstration total across experts, earlier experts
// receiving the remainder.
inline std::vector<ExpertSpec> with_demo_total(std::vector<ExpertSpec> experts, int total) {
    if (experts.empty())
        throw std::invalid_argument("at least one expert is required");
    if (total < 0)
        throw std::invalid_argument("demo total must be non-negative");
    const int base = total / static_cast<int>(experts.size());
    int remainder = total % static_cast<int>(experts.size());
    for (auto& e : experts) {
        e.count = base + (remainder > 0 ? 1 : 0);
        if (remainder > 0)
            --remainder;
    }
    return experts;
}

// Seeded random terrain with the given Water density; start and goal are
// forced to Normal. Re-rolls (deterministically) until the goal is
// reachable within the rule's horizon.
inline Environment random_environment(int n, double water_density, std::uint64_t seed,
                                      HorizonRule rule = HorizonRule::Short,
                                      bool step_feature = false) {
    if (n < 2)
        throw std::invalid_argument("random environment needs n >= 2");
    if (water_density < 0.0 || water_density >= 1.0)
        throw std::invalid_argument("water density must lie in [0, 1)");
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng rng(derive_seed(seed, seed_tag::terrain, attempt));
        std::vector<Terrain> terrain(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
        for (auto& t : terrain) {
            if (rng.uniform() < water_density) {
                t = Terrain::Water;
            } else {
                constexpr Terrain open[] = {Terrain::Normal, Terrain::Grass, Terrain::Rocks};
                t = open[rng.uniform_int(3)];
            }
        }
        terrain.front() = Terrain::Normal;
        terrain.back() = Terrain::Normal;
        try {
            return build_gridworld(n, terrain, Cell{0, 0}, Cell{n - 1, n - 1},
                                   horizon_for(rule, n), 0.99, step_feature);
        } catch (const std::invalid_argument&) {
            // goal walled off by Water; re-roll with the next sub-seed
        }
    }
    throw std::runtime_error("no feasible random environment found in 100 attempts");
}

namespace detail {

// Soft-policy rollout that pads with Stay once the goal is reached, so
// generated action strings end in an explicit hold instead of arbitrary
// self-transitions. State sequences (and hence likelihoods) are unaffected:
// the goal is absorbing.
inline Trajectory rollout_to_goal(const Environment& env, const SoftPolicy& policy,
                                  std::uint64_t seed) {
    Rng rng(seed);
    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(env.horizon) + 1);
    traj.actions.reserve(static_cast<std::size_t>(env.horizon));
    int s = env.start;
    traj.states.push_back(s);
    for (int t = 0; t < env.horizon; ++t) {
        Action act = Action::Stay;
        if (s != env.goal) {
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
            act = static_cast<Action>(chosen);
        }
        s = step(env, s, act);
        traj.actions.push_back(act);
        traj.states.push_back(s);
    }
    return traj;
}

} // namespace detail

/**
 * Samples each expert's demonstrations from its soft-optimal policy under
 * the true constraints, labels them with the expert index, pools and
 * shuffles. Deterministic per seed; labels ride along only for evaluation.
 */
inline std::vector<Trajectory> generate_demos(const Environment& env,
                                              const std::vector<ExpertSpec>& experts,
                                              std::uint64_t seed) {
    if (experts.empty())
        throw std::invalid_argument("at least one expert is required");
    std::vector<Trajectory> demos;
    std::uint64_t idx = 0;
    for (std::size_t k = 0; k < experts.size(); ++k) {
        const auto& expert = experts[k];
        if (static_cast<int>(expert.weights.size()) != env.feature_dim())
            throw std::invalid_argument("expert '" + expert.name +
                                        "' weight dimension does not match features");
        if (expert.count == 0)
            continue;
        const SoftPolicy policy =
            soft_value_iteration(env, env.true_constraints, expert.weights);
        for (int i = 0; i < expert.count; ++i) {
            Trajectory traj = detail::rollout_to_goal(
                env, policy, derive_seed(seed, seed_tag::demo_sample, idx++));
            traj.label = static_cast<int>(k);
            demos.push_back(std::move(traj));
        }
    }
    Rng shuffler(derive_seed(seed, seed_tag::shuffle));
    shuffler.shuffle(demos);
    return demos;
}

} // namespace moci
