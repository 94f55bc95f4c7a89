#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace moci {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// log(sum_i exp(v[i])). Entries equal to kNegInf act as zeros; an all
// -infinity input returns -infinity rather than NaN.
inline double log_sum_exp(std::span<const double> v) {
    double m = kNegInf;
    for (double x : v)
        m = std::max(m, x);
    if (m == kNegInf)
        return kNegInf;
    double sum = 0.0;
    for (double x : v)
        sum += std::exp(x - m);
    return m + std::log(sum);
}

inline double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == kNegInf)
        return kNegInf;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Decorrelated sub-stream seed; tag identifies the purpose, idx the instance.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t idx = 0) {
    return splitmix64(splitmix64(base ^ (tag * 0x9e3779b97f4a7c15ULL)) + idx);
}

namespace seed_tag {
inline constexpr std::uint64_t weight_init = 1;
inline constexpr std::uint64_t demo_sample = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t candidate_subset = 4;
inline constexpr std::uint64_t terrain = 5;
} // namespace seed_tag

// splitmix64 counter generator. Deliberately not std::mt19937_64 +
// std::uniform_*_distribution: distribution output is implementation
// defined, and identical seeds must yield identical artifacts everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_++); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<unsigned __int128>(n)) >>
                                64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }

  private:
    std::uint64_t state_;
};

} // namespace moci
