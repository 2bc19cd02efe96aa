#pragma once

#include "locmis/dataset.hpp"

#include <Eigen/Dense>

#include <array>

namespace locmis {

/// V(s) = c0 + c1 s + c2 s^2
struct QuadraticFeatureValue {
    std::array<double, 3> coef{0.0, 0.0, 0.0};

    double operator()(double s) const { return coef[0] + coef[1] * s + coef[2] * s * s; }
};

/// A_t = sum_{t' >= t} (gamma lambda)^{t' - t} delta_{t'} with
/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t); the last step bootstraps from
/// its recorded next state.
template <class ValueFn>
numvec gae_advantages(const Trajectory& traj, const ValueFn& value, double gamma, double lambda) {
    const auto& steps = traj.steps;
    numvec adv(steps.size(), 0.0);
    double running = 0.0;
    for (std::size_t k = steps.size(); k-- > 0;) {
        const auto& rec = steps[k];
        const double delta = rec.r + gamma * value(rec.s_next) - value(rec.s);
        running = delta + gamma * lambda * running;
        adv[k] = running;
    }
    return adv;
}

struct GaeConfig {
    double tolerance = 1e-8;
    std::size_t max_iterations = 100;
};

struct GaeResult {
    double eta = 0.0;
    QuadraticFeatureValue value;
    std::size_t iterations = 0;
    bool converged = false;
};

/**
 * Policy value from logged trajectories: alternately fit V on (1, s, s^2) by
 * least squares to the targets A_t + V(s_t), then recompute advantages. The
 * estimate is the mean of A_0 + V(s_0) over trajectories.
 */
inline GaeResult gae_eta(const std::vector<Trajectory>& trajectories, double gamma, double lambda,
                         const GaeConfig& cfg = {}) {
    require(!trajectories.empty(), "GAE needs trajectories");
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
    std::size_t rows = 0;
    for (const auto& tr : trajectories) {
        require(tr.steps.size() >= 2, "GAE needs trajectories with at least two steps");
        rows += tr.steps.size();
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), 3);
    {
        Eigen::Index i = 0;
        for (const auto& tr : trajectories)
            for (const auto& rec : tr.steps) X.row(i++) << 1.0, rec.s, rec.s * rec.s;
    }
    const auto solver = X.colPivHouseholderQr();
    GaeResult out;
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
    for (out.iterations = 1; out.iterations <= cfg.max_iterations; ++out.iterations) {
        Eigen::Index i = 0;
        for (const auto& tr : trajectories) {
            const numvec adv = gae_advantages(tr, out.value, gamma, lambda);
            for (std::size_t k = 0; k < adv.size(); ++k) y(i++) = adv[k] + out.value(tr.steps[k].s);
        }
        const Eigen::VectorXd c = solver.solve(y);
        if (!c.allFinite()) throw NumericalError("GAE value fit produced non-finite coefficients");
        double change = 0.0, scale = 1.0;
        for (int k = 0; k < 3; ++k) {
            change = std::max(change, std::abs(c(k) - out.value.coef[static_cast<std::size_t>(k)]));
            scale = std::max(scale, std::abs(c(k)));
            out.value.coef[static_cast<std::size_t>(k)] = c(k);
        }
        if (change <= cfg.tolerance * scale) {
            out.converged = true;
            break;
        }
    }
    out.iterations = std::min(out.iterations, cfg.max_iterations);
    double acc = 0.0;
    for (const auto& tr : trajectories)
        acc += gae_advantages(tr, out.value, gamma, lambda)[0] + out.value(tr.steps[0].s);
    out.eta = acc / static_cast<double>(trajectories.size());
    return out;
}

inline GaeResult gae_eta(const TransitionDataset& data, double gamma, double lambda, const GaeConfig& cfg = {}) {
    return gae_eta(split_trajectories(data), gamma, lambda, cfg);
}

} // namespace locmis
