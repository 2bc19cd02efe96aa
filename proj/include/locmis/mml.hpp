#pragma once

#include "locmis/dataset.hpp"
#include "locmis/functions.hpp"
#include "locmis/kernel.hpp"

#include <array>

namespace locmis {

/// Loss of a candidate model; higher score is better.
struct MmlScore {
    double loss = 0.0;
    double score = 0.0;

    static MmlScore from_loss(double loss) {
        require(loss >= 0.0, "MML loss must be nonnegative");
        return {loss, -loss};
    }
};

enum class MmlBasisKind {
    /// [z, z^2 (elementwise), 1]
    squared,
    /// [z, upper triangle of z z^T, 1]
    polynomial2
};

/// Feature map psi(s, a, x) over the transition triple z = (s, a, x).
struct PolynomialBasis {
    MmlBasisKind kind = MmlBasisKind::squared;

    std::size_t dimension() const { return kind == MmlBasisKind::squared ? 7 : 10; }

    numvec operator()(double s, double a, double x) const {
        const std::array<double, 3> z{s, a, x};
        numvec f(z.begin(), z.end());
        if (kind == MmlBasisKind::squared) {
            for (double v : z) f.push_back(v * v);
        } else {
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = i; j < 3; ++j) f.push_back(z[i] * z[j]);
        }
        f.push_back(1.0);
        return f;
    }
};

/// Mean over the dataset of E_{x ~ T(s,a)}[psi(s, a, x)] - psi(s, a, s').
template <class Model, class Basis>
numvec mml_feature_difference(const TransitionDataset& data, const Model& model, const Basis& basis,
                              const ExpectationConfig& cfg = {}) {
    require(!data.empty(), "MML loss needs a nonempty dataset");
    Rng rng = derive_rng(cfg.seed, 0x6d6c6c);
    numvec mean;
    for (const auto& rec : data.records) {
        const auto support = next_state_points(model, rec.s, rec.a, cfg, rng);
        const numvec observed = basis(rec.s, rec.a, rec.s_next);
        if (mean.empty()) mean.assign(observed.size(), 0.0);
        for (std::size_t k = 0; k < support.points.size(); ++k) {
            const numvec f = basis(rec.s, rec.a, support.points[k]);
            for (std::size_t j = 0; j < f.size(); ++j) mean[j] += support.weights[k] * f[j];
        }
        for (std::size_t j = 0; j < observed.size(); ++j) mean[j] -= observed[j];
    }
    for (auto& m : mean) {
        m /= static_cast<double>(data.size());
        if (!std::isfinite(m)) throw NumericalError("MML features are not finite on the dataset");
    }
    return mean;
}

/// Signed objective E_D[E_{x~T}[h(s,a,x)] - h(s,a,s')] for h = psi^T theta.
template <class Model, class Basis>
double mml_linear_objective(const TransitionDataset& data, const Model& model, const Basis& basis,
                            std::span<const double> theta, const ExpectationConfig& cfg = {}) {
    const numvec d = mml_feature_difference(data, model, basis, cfg);
    require(theta.size() == d.size(), "coefficient vector does not match the basis");
    double acc = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) acc += d[j] * theta[j];
    return acc;
}

enum class MmlLinearMethod {
    /// exact sup over the unit coefficient ball
    closed_form,
    /// projected gradient ascent on theta
    gradient
};

struct MmlLinearConfig {
    MmlLinearMethod method = MmlLinearMethod::closed_form;
    std::size_t steps = 500;
    double rate = 0.01;
    ExpectationConfig expectation{};
};

/// Projected ascent from theta = 0 on the signed objective; theta is kept in
/// the unit ball, so the result never exceeds the closed form.
inline double mml_gradient_ascent(std::span<const double> mean_difference, std::size_t steps, double rate) {
    require(rate > 0.0, "ascent rate must be positive");
    numvec theta(mean_difference.size(), 0.0);
    for (std::size_t it = 0; it < steps; ++it) {
        double sq = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            theta[j] += rate * mean_difference[j];
            sq += theta[j] * theta[j];
        }
        if (!std::isfinite(sq)) throw NumericalError("MML ascent diverged");
        if (sq > 1.0) {
            const double norm = std::sqrt(sq);
            for (auto& t : theta) t /= norm;
        }
    }
    double value = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) value += theta[j] * mean_difference[j];
    return std::abs(value);
}

template <class Model, class Basis>
MmlScore mml_linear_loss(const TransitionDataset& data, const Model& model, const Basis& basis,
                         const MmlLinearConfig& cfg = {}) {
    const numvec d = mml_feature_difference(data, model, basis, cfg.expectation);
    if (cfg.method == MmlLinearMethod::gradient) return MmlScore::from_loss(mml_gradient_ascent(d, cfg.steps, cfg.rate));
    double sq = 0.0;
    for (double v : d) sq += v * v;
    return MmlScore::from_loss(std::sqrt(sq));
}

struct MmlRkhsConfig {
    /// draws per record when the model has no exact next-state support
    std::size_t samples = 32;
    std::uint64_t seed = 0;
};

namespace detail {

struct TripleSet {
    double s = 0.0;
    double a = 0.0;
    WeightedPoints next;
};

inline double triple_kernel(const KernelSpec& k, double s1, double a1, double x1, double s2, double a2, double x2) {
    const std::array<double, 3> p{s1, a1, x1}, q{s2, a2, x2};
    return k(std::span<const double>(p), std::span<const double>(q));
}

/// sum over weighted points of P and Q of K((s_P, a_P, x), (s_Q, a_Q, y))
inline double cross_term(const KernelSpec& k, const TripleSet& P, const TripleSet& Q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < P.next.points.size(); ++i)
        for (std::size_t j = 0; j < Q.next.points.size(); ++j)
            acc += P.next.weights[i] * Q.next.weights[j] *
                   triple_kernel(k, P.s, P.a, P.next.points[i], Q.s, Q.a, Q.next.points[j]);
    return acc;
}

template <class Model>
TripleSet model_triples(const Model& model, const TransitionRecord& rec, const MmlRkhsConfig& cfg, Rng& rng) {
    if constexpr (requires { model.next(rec.s, rec.a); } ||
                  requires { model.next_distribution(std::size_t{}, std::size_t{}); }) {
        return {rec.s, rec.a, next_state_points(model, rec.s, rec.a, {}, rng)};
    } else {
        ExpectationConfig mc{ExpectationMode::monte_carlo, cfg.samples, 0};
        return {rec.s, rec.a, next_state_points(model, rec.s, rec.a, mc, rng)};
    }
}

} // namespace detail

/**
 * Kernel MML loss L / |D| with L the sum over record pairs (i, j) of
 *   K(z_i, z~_j) + K(o_i, o_j) - K(z_i, o_j) - K(o_i, z~_j),
 * where o = (s, a, s'), z = (s, a, x) with x ~ T(s, a), and z~ uses an
 * independent draw. Exact support is used for tabular and deterministic
 * models (then z and z~ coincide and L is a squared RKHS norm). Sampled
 * estimates can dip below zero and are clamped at 0.
 */
template <class Model>
MmlScore mml_rkhs_loss(const TransitionDataset& data, const Model& model, const KernelSpec& kernel,
                       const MmlRkhsConfig& cfg = {}) {
    require(!data.empty(), "MML loss needs a nonempty dataset");
    const std::size_t n = data.size();
    Rng rng = derive_rng(cfg.seed, 0x726b6873);
    std::vector<detail::TripleSet> first(n), second(n), observed(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = data.records[i];
        first[i] = detail::model_triples(model, rec, cfg, rng);
        second[i] = detail::model_triples(model, rec, cfg, rng);
        observed[i] = {rec.s, rec.a, {{rec.s_next}, {1.0}}};
    }
    numvec rows(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            acc += detail::cross_term(kernel, first[i], second[j]) + detail::cross_term(kernel, observed[i], observed[j]) -
                   detail::cross_term(kernel, first[i], observed[j]) - detail::cross_term(kernel, observed[i], second[j]);
        rows[i] = acc;
    });
    double total = 0.0;
    for (double r : rows) total += r;
    if (!std::isfinite(total)) throw NumericalError("kernel MML loss is not finite");
    return MmlScore::from_loss(std::max(0.0, total) / static_cast<double>(n));
}

/// Median pairwise distance of the observed (s, a, s') triples.
inline KernelSpec triple_bandwidth(const TransitionDataset& data, std::size_t max_points = 1000) {
    std::vector<numvec> points;
    points.reserve(data.size());
    for (const auto& rec : data.records) points.push_back({rec.s, rec.a, rec.s_next});
    return median_heuristic(points, max_points);
}

/// Evenly strided subsample of at most max_records records.
inline TransitionDataset subsample(const TransitionDataset& data, std::size_t max_records) {
    TransitionDataset out;
    out.domain = data.domain;
    for (auto i : detail::strided_indices(data.size(), max_records)) out.records.push_back(data.records[i]);
    return out;
}

} // namespace locmis
