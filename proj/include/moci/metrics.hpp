#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "moci/constraint_set.hpp"
#include "moci/maxent.hpp"
#include "moci/numerics.hpp"

namespace moci {

// Mean squared error between the {0,1} indicator vectors of the two sets
// over the whole state space: |symmetric difference| / |S|.
inline double cmse(const ConstraintSet& c_true, const ConstraintSet& c_hat) {
    if (c_true.universe() != c_hat.universe())
        throw std::invalid_argument("constraint sets over different state spaces");
    int diff = 0;
    for (int s = 0; s < c_true.universe(); ++s)
        diff += c_true.contains(s) != c_hat.contains(s);
    return static_cast<double>(diff) / static_cast<double>(c_true.universe());
}

struct ConfusionMetrics {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    int tn = 0;
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    double fpr = 0.0;
};

/**
 * Constraint-recovery confusion metrics over the state space minus the
 * excluded states (typically start and goal, which can never be constrained).
 * Degenerate denominators resolve vacuously: precision 1 with no positive
 * predictions, recall 1 with no true constraints, FPR 0 with no negatives.
 */
inline ConfusionMetrics confusion(const ConstraintSet& c_true, const ConstraintSet& c_hat,
                                  const std::vector<int>& excluded) {
    if (c_true.universe() != c_hat.universe())
        throw std::invalid_argument("constraint sets over different state spaces");
    std::vector<char> skip(static_cast<std::size_t>(c_true.universe()), 0);
    for (int s : excluded) {
        if (s < 0 || s >= c_true.universe())
            throw std::invalid_argument("excluded state out of range");
        if (c_true.contains(s))
            throw std::invalid_argument("excluded state is a true constraint");
        skip[static_cast<std::size_t>(s)] = 1;
    }

    ConfusionMetrics m;
    for (int s = 0; s < c_true.universe(); ++s) {
        if (skip[static_cast<std::size_t>(s)])
            continue;
        const bool truth = c_true.contains(s);
        const bool hat = c_hat.contains(s);
        if (truth && hat)
            ++m.tp;
        else if (!truth && hat)
            ++m.fp;
        else if (truth && !hat)
            ++m.fn;
        else
            ++m.tn;
    }
    m.precision = m.tp + m.fp == 0 ? 1.0
                                   : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    m.recall = m.tp + m.fn == 0 ? 1.0
                                : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    m.fpr = m.fp + m.tn == 0 ? 0.0
                             : static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn);
    return m;
}

struct WeightRecovery {
    std::vector<int> permutation;        // permutation[k] = learned cluster matched to truth k
    std::vector<double> errors;          // per truth cluster, unit-normalized L2 distance
    double total_error = 0.0;
    std::vector<std::vector<bool>> sign_match; // per truth cluster, per feature
};

namespace detail {

inline std::vector<double> unit_normalize(const PreferenceWeights& w, const char* what) {
    const double norm = l2_norm(w);
    if (!(norm > 0.0))
        throw std::invalid_argument(std::string("degenerate weights: zero-norm ") + what);
    std::vector<double> out(w.size());
    for (std::size_t j = 0; j < w.size(); ++j)
        out[j] = w[j] / norm;
    return out;
}

} // namespace detail

/**
 * Aligns learned clusters to ground-truth experts by the permutation that
 * minimizes summed L2 distance between unit-normalized weight vectors
 * (exhaustive over K! orderings; K is small in all experiments). Sign
 * agreement per feature is reported alongside, since the trajectory model
 * is scale- but not shape-insensitive.
 */
inline WeightRecovery weight_recovery(const std::vector<PreferenceWeights>& w_hat,
                                      const std::vector<PreferenceWeights>& w_true) {
    if (w_hat.size() != w_true.size() || w_hat.empty())
        throw std::invalid_argument("weight recovery requires equal non-zero cluster counts");
    const std::size_t K = w_hat.size();
    if (K > 8)
        throw std::invalid_argument("weight recovery supports at most 8 clusters");
    const std::size_t dim = w_true.front().size();
    for (std::size_t k = 0; k < K; ++k)
        if (w_hat[k].size() != dim || w_true[k].size() != dim)
            throw std::invalid_argument("weight vectors differ in dimension");

    std::vector<std::vector<double>> hat_n(K), true_n(K);
    for (std::size_t k = 0; k < K; ++k) {
        hat_n[k] = detail::unit_normalize(w_hat[k], "learned weight");
        true_n[k] = detail::unit_normalize(w_true[k], "reference weight");
    }

    // Pairwise distances, then exhaustive assignment search.
    std::vector<std::vector<double>> dist(K, std::vector<double>(K));
    for (std::size_t t = 0; t < K; ++t)
        for (std::size_t h = 0; h < K; ++h) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = hat_n[h][j] - true_n[t][j];
                sq += d * d;
            }
            dist[t][h] = std::sqrt(sq);
        }

    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_total = kPosInf;
    do {
        double total = 0.0;
        for (std::size_t t = 0; t < K; ++t)
            total += dist[t][static_cast<std::size_t>(perm[t])];
        if (total < best_total) {
            best_total = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    WeightRecovery out;
    out.permutation = best;
    out.total_error = best_total;
    out.errors.resize(K);
    out.sign_match.assign(K, std::vector<bool>(dim, false));
    auto sign = [](double v) { return v > 0.0 ? 1 : v < 0.0 ? -1 : 0; };
    for (std::size_t t = 0; t < K; ++t) {
        const std::size_t h = static_cast<std::size_t>(best[t]);
        out.errors[t] = dist[t][h];
        for (std::size_t j = 0; j < dim; ++j)
            out.sign_match[t][j] = sign(w_hat[h][j]) == sign(w_true[t][j]);
    }
    return out;
}

// Wall-clock timing of a callable, in seconds.
template <typename Fn>
auto timed(Fn&& fn) -> std::pair<decltype(fn()), double> {
    const auto begin = std::chrono::steady_clock::now();
    auto result = fn();
    const auto end = std::chrono::steady_clock::now();
    const double seconds = std::chrono::duration<double>(end - begin).count();
    return {std::move(result), seconds};
}

// Flat per-run evaluation record, one row of the results table.
struct ExperimentReport {
    double cmse = 0.0;
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    double fpr = 0.0;
    double avg_ll = 0.0;
    std::vector<double> weight_error; // per cluster; empty when truth weights unknown
    double runtime_s = 0.0;
    std::string config_digest;
    std::uint64_t seed = 0;
};

} // namespace moci
