#pragma once

#include "locmis/core.hpp"

#include <optional>

namespace locmis {

/// g(s) = curvature * s^2 + offset
struct QuadraticValueFn {
    double curvature = 0.0;
    double offset = 0.0;

    double operator()(double s) const { return curvature * s * s + offset; }
};

/// Test function over tabular states, evaluated at an integral state index.
struct TableFn {
    numvec value;

    double operator()(double s) const { return value[static_cast<std::size_t>(s)]; }
};

/// Next-state law N(mean, variance).
struct GaussianNext {
    double mean = 0.0;
    double variance = 0.0;
};

enum class ExpectationMode {
    /// exact expectation; only for supported (model, test function) pairs
    analytic,
    /// average over sampled next states
    monte_carlo
};

struct ExpectationConfig {
    ExpectationMode mode = ExpectationMode::analytic;
    std::size_t samples = 32;
    std::uint64_t seed = 0;
};

/// Exact E_{x ~ T(s,a)}[g(x)] when the pair admits one:
///  - deterministic models (member next(s, a)) with any g,
///  - Gaussian models (member gaussian_next(s, a)) with quadratic g.
template <class Model, class TestFn>
std::optional<double> analytic_expectation(const Model& model, const TestFn& g, double s, double a) {
    if constexpr (requires { model.next(s, a); }) {
        return g(model.next(s, a));
    } else if constexpr (requires { model.gaussian_next(s, a); } && std::is_same_v<TestFn, QuadraticValueFn>) {
        std::optional<GaussianNext> law = model.gaussian_next(s, a);
        if (!law) return std::nullopt;
        return g.curvature * (law->mean * law->mean + law->variance) + g.offset;
    } else {
        return std::nullopt;
    }
}

/// Monte-Carlo estimate of E_{x ~ T(s,a)}[g(x)].
template <class Model, class TestFn>
double sampled_expectation(const Model& model, const TestFn& g, double s, double a, std::size_t samples, Rng& rng) {
    require(samples > 0, "Monte-Carlo expectation needs at least one sample");
    double acc = 0.0;
    for (std::size_t k = 0; k < samples; ++k) acc += g(model.sample_next(s, a, rng));
    return acc / static_cast<double>(samples);
}

template <class Model, class TestFn>
double expected_test_value(const Model& model, const TestFn& g, double s, double a, const ExpectationConfig& cfg,
                           Rng& rng) {
    if (cfg.mode == ExpectationMode::analytic) {
        auto exact = analytic_expectation(model, g, s, a);
        if (!exact) throw InvalidArgument("analytic expectation is not available for this model and test function");
        return *exact;
    }
    if constexpr (requires { model.sample_next(s, a, rng); }) {
        return sampled_expectation(model, g, s, a, cfg.samples, rng);
    } else {
        throw InvalidArgument("model cannot be sampled");
    }
}

/// Next-state distribution as a finite weighted point set: the exact support
/// for deterministic and tabular models, m equally weighted draws otherwise.
struct WeightedPoints {
    numvec points;
    numvec weights;
};

template <class Model>
WeightedPoints next_state_points(const Model& model, double s, double a, const ExpectationConfig& cfg, Rng& rng) {
    if (cfg.mode == ExpectationMode::analytic) {
        if constexpr (requires { model.next(s, a); }) {
            return {{model.next(s, a)}, {1.0}};
        } else if constexpr (requires { model.next_distribution(std::size_t{}, std::size_t{}); }) {
            auto row = model.next_distribution(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
            WeightedPoints out;
            for (std::size_t k = 0; k < row.size(); ++k)
                if (row[k] > 0.0) out.points.push_back(static_cast<double>(k)), out.weights.push_back(row[k]);
            return out;
        } else {
            throw InvalidArgument("exact next-state support is not available for this model");
        }
    }
    if constexpr (requires { model.sample_next(s, a, rng); }) {
        require(cfg.samples > 0, "Monte-Carlo expectation needs at least one sample");
        WeightedPoints out{numvec(cfg.samples), numvec(cfg.samples, 1.0 / static_cast<double>(cfg.samples))};
        for (auto& p : out.points) p = model.sample_next(s, a, rng);
        return out;
    } else {
        throw InvalidArgument("model cannot be sampled");
    }
}

} // namespace locmis
