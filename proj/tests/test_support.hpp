#pragma once

// Hand-rolled random generators shared by the property tests.

#include "locmis/locmis.hpp"

#include <random>

namespace testgen {

using locmis::numvec;

/// Random point of the probability simplex; with sparse = true about half the
/// entries are zeroed (at least one survives).
inline numvec simplex(std::size_t n, std::mt19937_64& rng, bool sparse = false) {
    std::exponential_distribution<double> expo(1.0);
    std::bernoulli_distribution keep(0.5);
    numvec p(n);
    double total = 0.0;
    for (auto& x : p) x = expo(rng);
    if (sparse) {
        const std::size_t forced = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        for (std::size_t i = 0; i < n; ++i)
            if (i != forced && !keep(rng)) p[i] = 0.0;
    }
    for (double x : p) total += x;
    for (auto& x : p) x /= total;
    return p;
}

inline numvec transitions(std::size_t S, std::size_t A, std::mt19937_64& rng, bool sparse = false) {
    numvec p;
    for (std::size_t sa = 0; sa < S * A; ++sa) {
        const auto row = simplex(S, rng, sparse);
        p.insert(p.end(), row.begin(), row.end());
    }
    return p;
}

inline numvec rewards(std::size_t S, std::size_t A, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    numvec r(S * A);
    for (auto& x : r) x = u(rng);
    return r;
}

inline locmis::TabularMDP mdp(std::size_t S, std::size_t A, double gamma, std::mt19937_64& rng,
                              bool sparse = false) {
    return {S, A, transitions(S, A, rng, sparse), rewards(S, A, rng), gamma, 0};
}

/// Same rewards and spaces as `base`, fresh transitions.
inline locmis::TabularMDP sibling(const locmis::TabularMDP& base, std::mt19937_64& rng, bool sparse = false) {
    return {base.num_states(), base.num_actions(), transitions(base.num_states(), base.num_actions(), rng, sparse),
            base.reward(), base.gamma(), base.initial_state()};
}

inline locmis::TabularPolicy policy(std::size_t S, std::size_t A, std::mt19937_64& rng) {
    numvec p;
    for (std::size_t s = 0; s < S; ++s) {
        const auto row = simplex(A, rng);
        p.insert(p.end(), row.begin(), row.end());
    }
    return {S, A, p};
}

inline double uniform(double lo, double hi, std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace testgen
