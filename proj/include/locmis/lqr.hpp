#pragma once

#include "locmis/dataset.hpp"
#include "locmis/functions.hpp"

#include <limits>
#include <optional>

namespace locmis {

enum class SignConvention {
    /// s' = A s + B a
    plus_B,
    /// s' = A s - B a
    minus_B
};

/// Scalar linear-Gaussian world with quadratic cost, reward -(Q s^2 + R a^2).
struct Lqr1DParams {
    /// scenario parameter: A = 1 + x / 10, B = -0.5 - x / 10
    double x = 6.0;
    double q_cost = 1.0;
    double r_cost = 1.0;
    double noise_std = std::sqrt(0.05);
    double gamma = 0.9;
    double state_lo = -1.0;
    double state_hi = 1.0;
    SignConvention sign_convention = SignConvention::minus_B;
    double init_mean = 0.5;
    double init_std = 0.2;

    void validate() const {
        require(std::isfinite(x), "scenario parameter must be finite");
        require(q_cost >= 0.0 && r_cost >= 0.0, "costs must be nonnegative");
        require(noise_std >= 0.0, "noise std must be nonnegative");
        require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
        require(state_lo < state_hi, "state interval must be nonempty");
        require(init_std >= 0.0, "initial-state std must be nonnegative");
    }

    double a_coef() const { return 1.0 + x / 10.0; }
    double b_coef() const { return -0.5 - x / 10.0; }
    /// coefficient of a in the noise-free next state
    double control_coef() const { return sign_convention == SignConvention::minus_B ? -b_coef() : b_coef(); }
    double clip(double s) const { return std::clamp(s, state_lo, state_hi); }
    double reward(double s, double a) const { return -(q_cost * s * s + r_cost * a * a); }
    double initial_state(Rng& rng) const { return clip(init_mean + init_std * standard_normal(rng)); }

    Lqr1DParams with_x(double other) const {
        Lqr1DParams p = *this;
        p.x = other;
        return p;
    }
};

/// a = slope (s - v) + N(0, action_noise_std^2)
struct LinearPolicy {
    double v = 0.0;
    double slope = -1.1;
    double action_noise_std = 0.1;

    double mean_action(double s) const { return slope * (s - v); }
    double sample_action(double s, Rng& rng) const {
        return mean_action(s) + action_noise_std * standard_normal(rng);
    }
};

/// True dynamics: s' = clip(A s +- B a + sigma eps).
struct LqrTrueDynamics {
    Lqr1DParams params;

    double mean_next(double s, double a) const { return params.a_coef() * s + params.control_coef() * a; }
    double sample_next(double s, double a, Rng& rng) const {
        return params.clip(mean_next(s, a) + params.noise_std * standard_normal(rng));
    }
    double reward(double s, double a) const { return params.reward(s, a); }
    double initial_state(Rng& rng) const { return params.initial_state(rng); }

    /// Gaussian law of s'; only exact when clipping is disabled.
    std::optional<GaussianNext> gaussian_next(double s, double a) const {
        if (std::isfinite(params.state_lo) || std::isfinite(params.state_hi)) return std::nullopt;
        return GaussianNext{mean_next(s, a), params.noise_std * params.noise_std};
    }
};

/// Deterministic model that follows the true noise-free dynamics on the
/// window [u, u + 1] and keeps the state unchanged elsewhere. The control
/// term always enters as -B a.
struct PiecewiseTransition {
    double u = 0.0;
    Lqr1DParams params;

    double next(double s, double a) const {
        if (s < u || s > u + 1.0) return s;
        return params.clip(params.a_coef() * s - params.b_coef() * a);
    }
    double sample_next(double s, double a, Rng&) const { return next(s, a); }
    double reward(double s, double a) const { return params.reward(s, a); }
    double initial_state(Rng& rng) const { return params.initial_state(rng); }
};

/// Closed-loop coefficient of s under a = k s.
inline double closed_loop_coef(const Lqr1DParams& params, double k) {
    return params.a_coef() + params.control_coef() * k;
}

/// Value of a = k s for s' = a s + b a_t + sigma eps, reward -(Q s^2 + R a^2):
/// V(s) = U s^2 + q with U = -(Q + R k^2) / (1 - gamma c^2), c = a + b k and
/// q = gamma sigma^2 U / (1 - gamma).
inline QuadraticValueFn riccati_policy_eval(double a, double b, double q_cost, double r_cost, double noise_std,
                                            double gamma, double k) {
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    const double c = a + b * k;
    const double contraction = gamma * c * c;
    if (!(contraction < 1.0)) throw NumericalError("closed loop is unstable under discounting");
    const double U = -(q_cost + r_cost * k * k) / (1.0 - contraction);
    return {U, gamma * noise_std * noise_std * U / (1.0 - gamma)};
}

/// Same for a scenario; ignores clipping and action noise.
inline QuadraticValueFn riccati_policy_eval(const Lqr1DParams& params, double k) {
    params.validate();
    return riccati_policy_eval(params.a_coef(), params.control_coef(), params.q_cost, params.r_cost,
                               params.noise_std, params.gamma, k);
}

/// Discounted Riccati iteration for the cost-to-go P of s' = a s + b u:
///   P = Q + g a^2 P - (g a b P)^2 / (R + g b^2 P),  gain k = -g a b P / (R + g b^2 P).
/// gamma = 1 gives the undiscounted gain.
inline double riccati_gain(double a, double b, double q_cost, double r_cost, double gamma,
                           double tolerance = 1e-12, long max_iterations = 100'000) {
    require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
    require(q_cost >= 0.0 && r_cost >= 0.0, "costs must be nonnegative");
    double P = q_cost;
    for (long it = 0; it < max_iterations; ++it) {
        const double denom = r_cost + gamma * b * b * P;
        const double next = denom > 0.0 ? q_cost + gamma * a * a * P - (gamma * a * b * P) * (gamma * a * b * P) / denom
                                         : q_cost + gamma * a * a * P;
        if (!std::isfinite(next)) break;
        if (std::abs(next - P) <= tolerance * std::max(1.0, std::abs(next))) {
            const double d = r_cost + gamma * b * b * next;
            return d > 0.0 ? -gamma * a * b * next / d : 0.0;
        }
        P = next;
    }
    throw NumericalError("Riccati iteration did not converge");
}

struct RiccatiSolution {
    double gain = 0.0;
    QuadraticValueFn value;
};

inline RiccatiSolution riccati_optimal(const Lqr1DParams& params) {
    params.validate();
    const double k =
        riccati_gain(params.a_coef(), params.control_coef(), params.q_cost, params.r_cost, params.gamma);
    return {k, riccati_policy_eval(params, k)};
}

struct LqrClasses {
    std::vector<PiecewiseTransition> transitions;
    std::vector<LinearPolicy> policies;
    std::vector<QuadraticValueFn> values;
};

inline const numvec& default_window_starts() {
    static const numvec u{-0.75, -0.5, -0.25, 0.0, 0.25};
    return u;
}
inline const numvec& default_policy_targets() {
    static const numvec v{-0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6};
    return v;
}

/// Windows T_u, targets pi_v and the 3 x 3 value grid over x in {2, 4, 10}
/// and slopes {-1.1, -0.9, -0.7}. `params` describes the true scenario.
inline LqrClasses build_lqr_classes(const Lqr1DParams& params, double policy_noise_std = 0.1) {
    params.validate();
    LqrClasses out;
    for (double u : default_window_starts()) out.transitions.push_back({u, params});
    for (double v : default_policy_targets()) out.policies.push_back({v, -1.1, policy_noise_std});
    for (double x : {2.0, 4.0, 10.0})
        for (double k : {-1.1, -0.9, -0.7}) out.values.push_back(riccati_policy_eval(params.with_x(x), k));
    return out;
}

/// max |reward| over the state interval times [-action_bound, action_bound], over 1 - gamma.
inline double lqr_v_max(const Lqr1DParams& params, double action_bound) {
    const double s = std::max(std::abs(params.state_lo), std::abs(params.state_hi));
    return (params.q_cost * s * s + params.r_cost * action_bound * action_bound) / (1.0 - params.gamma);
}

struct BehaviorDataConfig {
    numvec targets{-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75};
    std::size_t trajectories_per_target = 2000;
    std::size_t length = 20;
    double slope = -1.1;
    double policy_noise_std = 0.5;
};

/// Rollouts of noisy pi_v under the true dynamics for every behavior target.
/// Trajectory ids are target_index * trajectories_per_target + i.
inline TransitionDataset generate_behavior_dataset(const Lqr1DParams& params, std::uint64_t seed,
                                                   const BehaviorDataConfig& cfg = {}) {
    params.validate();
    require(cfg.length >= 1 && cfg.trajectories_per_target >= 1, "behavior data needs trajectories");
    const LqrTrueDynamics env{params};
    const std::size_t per_target = cfg.trajectories_per_target * cfg.length;
    TransitionDataset data;
    data.domain = Domain::continuous_1d;
    data.records.resize(cfg.targets.size() * per_target);
    parallel_for(cfg.targets.size(), [&](std::size_t b) {
        const LinearPolicy policy{cfg.targets[b], cfg.slope, cfg.policy_noise_std};
        Rng rng = derive_rng(seed, b);
        std::size_t slot = b * per_target;
        for (std::size_t i = 0; i < cfg.trajectories_per_target; ++i) {
            double s = env.initial_state(rng);
            for (std::size_t t = 0; t < cfg.length; ++t) {
                const double a = policy.sample_action(s, rng);
                const double s2 = env.sample_next(s, a, rng);
                data.records[slot++] = {static_cast<std::int64_t>(b * cfg.trajectories_per_target + i),
                                        static_cast<std::int64_t>(t), s, a, env.reward(s, a), s2};
                s = s2;
            }
        }
    });
    return data;
}

} // namespace locmis
