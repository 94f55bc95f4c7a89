#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moci/constraint_set.hpp"

namespace moci {

// Terrain classes; the index doubles as the one-hot feature slot.
enum class Terrain : int { Normal = 0, Grass = 1, Rocks = 2, Water = 3 };

inline constexpr int kTerrainKinds = 4;

inline char terrain_code(Terrain t) {
    constexpr std::array<char, 4> codes = {'N', 'G', 'R', 'W'};
    return codes[static_cast<std::size_t>(t)];
}

inline Terrain terrain_from_code(char c) {
    switch (c) {
    case 'N': return Terrain::Normal;
    case 'G': return Terrain::Grass;
    case 'R': return Terrain::Rocks;
    case 'W': return Terrain::Water;
    default:
        throw std::invalid_argument(std::string("unknown terrain code '") + c + "'");
    }
}

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };

inline constexpr int kNumActions = 5;

inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay};

inline char action_code(Action a) {
    constexpr std::array<char, 5> codes = {'U', 'D', 'L', 'R', 'S'};
    return codes[static_cast<std::size_t>(a)];
}

inline Action action_from_code(char c) {
    switch (c) {
    case 'U': return Action::Up;
    case 'D': return Action::Down;
    case 'L': return Action::Left;
    case 'R': return Action::Right;
    case 'S': return Action::Stay;
    default:
        throw std::invalid_argument(std::string("unknown action code '") + c + "'");
    }
}

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

// Deterministic n x n gridworld with categorical terrain features and a set
// of ground-truth forbidden states. Immutable after construction; shared
// read-only across workers.
struct Environment {
    int n = 0;
    int horizon = 0;
    double gamma = 0.99; // stored for forward compatibility, unused by trajectory likelihoods
    int start = 0;
    int goal = 0;
    std::vector<Terrain> terrain;               // n*n, row-major
    std::vector<std::vector<double>> features;  // n*n rows of feature_dim() entries
    ConstraintSet true_constraints;             // C*, the Water cells
    bool step_feature = false;                  // appends a constant-1 feature when set

    int num_states() const { return n * n; }
    int feature_dim() const { return kTerrainKinds + (step_feature ? 1 : 0); }

    int index(int row, int col) const { return row * n + col; }
    int index(Cell c) const { return index(c.row, c.col); }
    Cell cell(int s) const { return Cell{s / n, s % n}; }

    const std::vector<double>& phi(int s) const {
        return features[static_cast<std::size_t>(s)];
    }

    // One-hot feature vector for a terrain class, honoring step_feature.
    std::vector<double> default_features(Terrain t) const {
        std::vector<double> f(static_cast<std::size_t>(feature_dim()), 0.0);
        f[static_cast<std::size_t>(t)] = 1.0;
        if (step_feature)
            f.back() = 1.0;
        return f;
    }

    void validate() const;

    friend bool operator==(const Environment&, const Environment&) = default;
};

// Deterministic transition rule. Total on S x A: boundary moves
// self-transition and the goal is absorbing.
inline int step(const Environment& env, int s, Action a) {
    if (s == env.goal)
        return env.goal;
    Cell c = env.cell(s);
    switch (a) {
    case Action::Up: c.row -= 1; break;
    case Action::Down: c.row += 1; break;
    case Action::Left: c.col -= 1; break;
    case Action::Right: c.col += 1; break;
    case Action::Stay: return s;
    }
    if (c.row < 0 || c.row >= env.n || c.col < 0 || c.col >= env.n)
        return s;
    return env.index(c);
}

// State-action sequence of fixed horizon: H+1 states, H actions. label is
// the generating expert index, present only in generated data and never
// read by inference.
struct Trajectory {
    std::vector<int> states;
    std::vector<Action> actions;
    std::optional<int> label;

    bool visits(int s) const {
        for (int v : states)
            if (v == s)
                return true;
        return false;
    }

    void validate(const Environment& env) const {
        if (states.size() != static_cast<std::size_t>(env.horizon) + 1 ||
            actions.size() != static_cast<std::size_t>(env.horizon))
            throw std::invalid_argument("trajectory length does not match horizon");
        if (states.front() != env.start)
            throw std::invalid_argument("trajectory does not begin at start state");
        for (std::size_t t = 0; t < actions.size(); ++t)
            if (step(env, states[t], actions[t]) != states[t + 1])
                throw std::invalid_argument("trajectory violates transition rule at step " +
                                            std::to_string(t));
    }
};

// Shortest path length from start to goal using the four moves, avoiding
// `blocked`. Returns -1 when the goal is unreachable.
inline int bfs_distance(const Environment& env, const ConstraintSet& blocked) {
    if (blocked.contains(env.start) || blocked.contains(env.goal))
        return -1;
    std::vector<int> dist(static_cast<std::size_t>(env.num_states()), -1);
    std::deque<int> queue;
    dist[static_cast<std::size_t>(env.start)] = 0;
    queue.push_back(env.start);
    while (!queue.empty()) {
        const int s = queue.front();
        queue.pop_front();
        if (s == env.goal)
            return dist[static_cast<std::size_t>(s)];
        for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
            const int t = step(env, s, a);
            if (t == s || blocked.contains(t))
                continue;
            if (dist[static_cast<std::size_t>(t)] < 0) {
                dist[static_cast<std::size_t>(t)] = dist[static_cast<std::size_t>(s)] + 1;
                queue.push_back(t);
            }
        }
    }
    return -1;
}

inline void Environment::validate() const {
    if (n < 1)
        throw std::invalid_argument("grid side length must be positive");
    if (horizon < 0)
        throw std::invalid_argument("horizon must be non-negative");
    const auto states = static_cast<std::size_t>(num_states());
    if (terrain.size() != states)
        throw std::invalid_argument("terrain must have n*n entries");
    if (features.size() != states)
        throw std::invalid_argument("feature map must have n*n entries");
    for (std::size_t s = 0; s < states; ++s) {
        const auto& f = features[s];
        if (f.size() != static_cast<std::size_t>(feature_dim()))
            throw std::invalid_argument("feature vector has wrong dimension at state " +
                                        std::to_string(s));
        double sum = 0.0;
        for (int j = 0; j < kTerrainKinds; ++j) {
            if (f[static_cast<std::size_t>(j)] != 0.0 && f[static_cast<std::size_t>(j)] != 1.0)
                throw std::invalid_argument("feature map not one-hot at state " +
                                            std::to_string(s));
            sum += f[static_cast<std::size_t>(j)];
        }
        if (sum != 1.0)
            throw std::invalid_argument("feature map not one-hot at state " +
                                        std::to_string(s));
    }
    if (start < 0 || start >= num_states() || goal < 0 || goal >= num_states())
        throw std::invalid_argument("start/goal outside the grid");
    if (true_constraints.universe() != num_states())
        throw std::invalid_argument("constraint universe does not match state count");
    if (true_constraints.contains(start) || true_constraints.contains(goal))
        throw std::invalid_argument("start/goal may not be constrained");
}

/// Builds the constrained gridworld: C* is exactly the Water cells, features
/// are one-hot over terrain. Rejects start/goal on Water and horizons
/// shorter than the shortest feasible start-to-goal path.
inline Environment build_gridworld(int n, const std::vector<Terrain>& terrain, Cell start,
                                   Cell goal, int horizon, double gamma = 0.99,
                                   bool step_feature = false) {
    if (n < 1)
        throw std::invalid_argument("grid side length must be positive");
    if (terrain.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw std::invalid_argument("terrain must have n*n entries");
    if (start == goal)
        throw std::invalid_argument("start and goal must differ");

    Environment env;
    env.n = n;
    env.horizon = horizon;
    env.gamma = gamma;
    env.start = env.index(start);
    env.goal = env.index(goal);
    env.terrain = terrain;
    env.step_feature = step_feature;
    env.true_constraints = ConstraintSet(env.num_states());
    env.features.reserve(terrain.size());
    for (int s = 0; s < env.num_states(); ++s) {
        const Terrain t = terrain[static_cast<std::size_t>(s)];
        env.features.push_back(env.default_features(t));
        if (t == Terrain::Water)
            env.true_constraints.add(s);
    }
    if (terrain[static_cast<std::size_t>(env.start)] == Terrain::Water ||
        terrain[static_cast<std::size_t>(env.goal)] == Terrain::Water)
        throw std::invalid_argument("start and goal must be non-Water cells");

    const int dist = bfs_distance(env, env.true_constraints);
    if (dist < 0)
        throw std::invalid_argument("infeasible horizon: goal unreachable around constraints");
    if (horizon < dist)
        throw std::invalid_argument("infeasible horizon: shortest feasible path needs " +
                                    std::to_string(dist) + " steps, horizon is " +
                                    std::to_string(horizon));
    env.validate();
    return env;
}

// States visited by no trajectory in `demos`, excluding start and goal.
// Ascending row-major order.
inline std::vector<int> candidate_states(const Environment& env,
                                         const std::vector<Trajectory>& demos) {
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(env.num_states()), 0);
    for (const auto& traj : demos)
        for (int s : traj.states)
            visited[static_cast<std::size_t>(s)] = 1;
    std::vector<int> out;
    for (int s = 0; s < env.num_states(); ++s)
        if (!visited[static_cast<std::size_t>(s)] && s != env.start && s != env.goal)
            out.push_back(s);
    return out;
}

} // namespace moci
