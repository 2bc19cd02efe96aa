#pragma once

#include "locmis/functions.hpp"
#include "locmis/histogram.hpp"
#include "locmis/kernel.hpp"
#include "locmis/tabular.hpp"

#include <Eigen/Dense>

#include <optional>
#include <variant>

namespace locmis {

/// Exact expectation of a tabular test function under a tabular model.
inline std::optional<double> analytic_expectation(const TabularMDP& model, const TableFn& g, double s, double a) {
    return model.expected_next(static_cast<std::size_t>(s), static_cast<std::size_t>(a), g.value);
}

/// Components of the pessimistic lower bound
///   lb = eta_model - (sup_loss + mismatch_penalty) / (1 - gamma).
struct LowerBoundReport {
    double eta_model = 0.0;
    double sup_loss = 0.0;
    double mismatch_penalty = 0.0;
    double lb = 0.0;
    std::optional<double> stat_correction;
};

/**
 * Empirical model loss |E_D[w(s,a) (E_{x~T(s,a)}[g(x)] - g(s'))]|.
 *
 * The weight of a record is looked up through the discretizer bin of its
 * (s, a) pair.
 */
template <class Model, class TestFn>
double model_loss(const TransitionDataset& data, const Discretizer& disc, const TruncatedRatio& w, const Model& model,
                  const TestFn& g, const ExpectationConfig& cfg = {}) {
    require(!data.empty(), "model loss needs a nonempty dataset");
    require(w.size() == disc.size(), "weight does not match the discretizer");
    Rng rng = derive_rng(cfg.seed, 0x6d6c);
    double acc = 0.0;
    for (const auto& rec : data.records) {
        const double weight = w[disc.bin(rec.s, rec.a)];
        if (weight == 0.0) continue;
        acc += weight * (expected_test_value(model, g, rec.s, rec.a, cfg, rng) - g(rec.s_next));
    }
    return std::abs(acc / static_cast<double>(data.size()));
}

/// Finite set of test functions; the sup is an exact maximum.
template <class TestFn>
struct FiniteClass {
    std::vector<TestFn> members;
};

/// {psi(.)^T theta : ||theta||_2 <= 1} for a vector-valued basis psi over states.
template <class Basis>
struct LinearSpanClass {
    Basis basis;
};

/// Unit ball of the RKHS of a kernel on states.
struct RkhsBallClass {
    KernelSpec kernel;
};

template <class Model, class TestFn>
double sup_model_loss(const TransitionDataset& data, const Discretizer& disc, const TruncatedRatio& w,
                      const Model& model, const FiniteClass<TestFn>& cls, const ExpectationConfig& cfg = {}) {
    require(!cls.members.empty(), "test function class is empty");
    double best = 0.0;
    for (const auto& g : cls.members) best = std::max(best, model_loss(data, disc, w, model, g, cfg));
    return best;
}

/// Mean weighted feature difference E_D[w (E_T[psi(x)] - psi(s'))]; its norm
/// is the exact sup over the unit coefficient ball.
template <class Model, class Basis>
numvec mean_feature_difference(const TransitionDataset& data, const Discretizer& disc, const TruncatedRatio& w,
                               const Model& model, const Basis& basis, const ExpectationConfig& cfg = {}) {
    require(!data.empty(), "model loss needs a nonempty dataset");
    Rng rng = derive_rng(cfg.seed, 0x6c73);
    numvec mean;
    for (const auto& rec : data.records) {
        const double weight = w[disc.bin(rec.s, rec.a)];
        if (weight == 0.0) continue;
        const auto support = next_state_points(model, rec.s, rec.a, cfg, rng);
        const numvec observed = basis(rec.s_next);
        if (mean.empty()) mean.assign(observed.size(), 0.0);
        for (std::size_t k = 0; k < support.points.size(); ++k) {
            const numvec f = basis(support.points[k]);
            for (std::size_t j = 0; j < f.size(); ++j) mean[j] += weight * support.weights[k] * f[j];
        }
        for (std::size_t j = 0; j < observed.size(); ++j) mean[j] -= weight * observed[j];
    }
    for (auto& m : mean) m /= static_cast<double>(data.size());
    return mean;
}

template <class Model, class Basis>
double sup_model_loss(const TransitionDataset& data, const Discretizer& disc, const TruncatedRatio& w,
                      const Model& model, const LinearSpanClass<Basis>& cls, const ExpectationConfig& cfg = {}) {
    const numvec mean = mean_feature_difference(data, disc, w, model, cls.basis, cfg);
    double sq = 0.0;
    for (double m : mean) sq += m * m;
    return std::sqrt(sq);
}

/**
 * Closed-form RKHS sup of the model loss. The witness
 *   h = E_D[w (E_T[K_x] - K_{s'})]
 * is written as a weighted sum of kernel sections over a point set, and its
 * squared RKHS norm is the quadratic form of the Gram matrix.
 */
template <class Model>
double sup_model_loss(const TransitionDataset& data, const Discretizer& disc, const TruncatedRatio& w,
                      const Model& model, const RkhsBallClass& cls, const ExpectationConfig& cfg = {}) {
    require(!data.empty(), "model loss needs a nonempty dataset");
    Rng rng = derive_rng(cfg.seed, 0x726b);
    numvec points, coeff;
    const double n = static_cast<double>(data.size());
    for (const auto& rec : data.records) {
        const double weight = w[disc.bin(rec.s, rec.a)];
        if (weight == 0.0) continue;
        const auto support = next_state_points(model, rec.s, rec.a, cfg, rng);
        for (std::size_t k = 0; k < support.points.size(); ++k) {
            points.push_back(support.points[k]);
            coeff.push_back(weight * support.weights[k] / n);
        }
        points.push_back(rec.s_next);
        coeff.push_back(-weight / n);
    }
    if (points.empty()) return 0.0;
    const Eigen::Map<const Eigen::VectorXd> c(coeff.data(), static_cast<Eigen::Index>(coeff.size()));
    const Eigen::MatrixXd gram = gram_matrix(cls.kernel, points);
    return std::sqrt(std::max(0.0, c.dot(gram * c)));
}

/// V_max times the rho-mass of bins with rho / mu_hat > zeta.
inline double mismatch_penalty(std::span<const double> rho_hat, std::span<const double> mu_hat, double zeta,
                               double v_max) {
    require(zeta > 0.0, "zeta must be positive");
    return v_max * mismatch_mass(rho_hat, mu_hat, zeta);
}

inline double mismatch_penalty(const HistogramDensity& rho_hat, const HistogramDensity& mu_hat, double zeta,
                               double v_max) {
    return mismatch_penalty(rho_hat.mass, mu_hat.mass, zeta, v_max);
}

inline LowerBoundReport lower_bound(double eta_model, double sup_loss, double penalty, double gamma) {
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    return {eta_model, sup_loss, penalty, eta_model - (sup_loss + penalty) / (1.0 - gamma), std::nullopt};
}

struct ClassSizes {
    std::size_t value_functions = 1;
    std::size_t dynamics = 1;
    std::size_t policies = 1;
};

/// log(2 |G| |T| |Pi| / delta)
inline double confidence_log_term(const ClassSizes& sizes, double delta) {
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    require(sizes.value_functions > 0 && sizes.dynamics > 0 && sizes.policies > 0, "class sizes must be positive");
    return std::log(2.0 * static_cast<double>(sizes.value_functions) * static_cast<double>(sizes.dynamics) *
                    static_cast<double>(sizes.policies) / delta);
}

/// Uniform deviation 2 V_max sqrt(zeta * iota / n) of the empirical loss.
inline double statistical_correction(std::size_t n, double zeta, const ClassSizes& sizes, double delta,
                                     double v_max) {
    require(n >= 1, "dataset size must be positive");
    require(zeta > 0.0, "zeta must be positive");
    return 2.0 * v_max * std::sqrt(zeta * confidence_log_term(sizes, delta) / static_cast<double>(n));
}

} // namespace locmis
