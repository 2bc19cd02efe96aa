#pragma once

#include "locmis/core.hpp"

#include <Eigen/Dense>

#include <limits>
#include <numeric>
#include <string>

namespace locmis {

/// Tolerance on the row sums of transition and policy tables.
inline constexpr double kStochasticTolerance = 1e-12;

/**
 * Finite MDP with a fixed initial state.
 *
 * Transitions are stored row-major as (s, a, s') and rewards as (s, a). The
 * same type represents the ground-truth dynamics and every candidate model;
 * candidates share states, actions, rewards and discount with the truth.
 */
class TabularMDP {
public:
    TabularMDP(std::size_t num_states, std::size_t num_actions, numvec transition,
               numvec reward, double gamma, std::size_t initial_state = 0)
        : num_states_(num_states), num_actions_(num_actions),
          transition_(std::move(transition)), reward_(std::move(reward)), gamma_(gamma),
          initial_state_(initial_state) {
        require(num_states_ > 0 && num_actions_ > 0, "MDP needs at least one state and action");
        require(transition_.size() == num_states_ * num_actions_ * num_states_,
                "transition table must have num_states * num_actions * num_states entries");
        require(reward_.size() == num_states_ * num_actions_,
                "reward table must have num_states * num_actions entries");
        require(gamma_ >= 0.0 && gamma_ < 1.0, "gamma must lie in [0, 1)");
        require(initial_state_ < num_states_, "initial state out of range");
        for (std::size_t sa = 0; sa < num_states_ * num_actions_; ++sa) {
            double total = 0.0;
            for (std::size_t s2 = 0; s2 < num_states_; ++s2) {
                double p = transition_[sa * num_states_ + s2];
                require(std::isfinite(p) && p >= 0.0, "transition probabilities must be nonnegative");
                total += p;
            }
            require(std::abs(total - 1.0) <= kStochasticTolerance,
                    "transition row " + std::to_string(sa) + " does not sum to 1");
            require(std::isfinite(reward_[sa]) && reward_[sa] >= 0.0, "rewards must be finite and nonnegative");
        }
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }
    double gamma() const { return gamma_; }
    std::size_t initial_state() const { return initial_state_; }
    const numvec& transition() const { return transition_; }
    const numvec& reward() const { return reward_; }

    double probability(std::size_t s, std::size_t a, std::size_t s2) const {
        return transition_[(s * num_actions_ + a) * num_states_ + s2];
    }
    std::span<const double> next_distribution(std::size_t s, std::size_t a) const {
        return {transition_.data() + (s * num_actions_ + a) * num_states_, num_states_};
    }
    double reward(std::size_t s, std::size_t a) const { return reward_[s * num_actions_ + a]; }

    double r_max() const { return *std::max_element(reward_.begin(), reward_.end()); }
    /// R_max / (1 - gamma)
    double v_max() const { return r_max() / (1.0 - gamma_); }

    /// E_{s' ~ T(s,a)}[g(s')]
    double expected_next(std::size_t s, std::size_t a, std::span<const double> g) const {
        auto row = next_distribution(s, a);
        double acc = 0.0;
        for (std::size_t s2 = 0; s2 < num_states_; ++s2) acc += row[s2] * g[s2];
        return acc;
    }

    /// Same states, actions, reward and discount; different transitions.
    bool compatible_with(const TabularMDP& other) const {
        return num_states_ == other.num_states_ && num_actions_ == other.num_actions_ &&
               gamma_ == other.gamma_ && initial_state_ == other.initial_state_ &&
               reward_ == other.reward_;
    }

private:
    std::size_t num_states_;
    std::size_t num_actions_;
    numvec transition_;
    numvec reward_;
    double gamma_;
    std::size_t initial_state_;
};

/// Stochastic stationary policy, one action distribution per state.
class TabularPolicy {
public:
    TabularPolicy(std::size_t num_states, std::size_t num_actions, numvec probabilities)
        : num_states_(num_states), num_actions_(num_actions), prob_(std::move(probabilities)) {
        require(prob_.size() == num_states_ * num_actions_, "policy table has wrong size");
        for (std::size_t s = 0; s < num_states_; ++s) {
            double total = 0.0;
            for (std::size_t a = 0; a < num_actions_; ++a) {
                double p = prob_[s * num_actions_ + a];
                require(std::isfinite(p) && p >= 0.0, "policy probabilities must be nonnegative");
                total += p;
            }
            require(std::abs(total - 1.0) <= kStochasticTolerance,
                    "policy row " + std::to_string(s) + " does not sum to 1");
        }
    }

    static TabularPolicy uniform(std::size_t num_states, std::size_t num_actions) {
        return {num_states, num_actions, numvec(num_states * num_actions, 1.0 / num_actions)};
    }

    static TabularPolicy deterministic(std::size_t num_actions, const std::vector<std::size_t>& actions) {
        numvec p(actions.size() * num_actions, 0.0);
        for (std::size_t s = 0; s < actions.size(); ++s) {
            require(actions[s] < num_actions, "action index out of range");
            p[s * num_actions + actions[s]] = 1.0;
        }
        return {actions.size(), num_actions, std::move(p)};
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }
    double probability(std::size_t s, std::size_t a) const { return prob_[s * num_actions_ + a]; }
    std::span<const double> action_distribution(std::size_t s) const {
        return {prob_.data() + s * num_actions_, num_actions_};
    }
    const numvec& table() const { return prob_; }

private:
    std::size_t num_states_;
    std::size_t num_actions_;
    numvec prob_;
};

/// Normalized discounted state-action visitation, indexed s * A + a.
struct OccupancyMeasure {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    numvec mass;

    double operator()(std::size_t s, std::size_t a) const { return mass[s * num_actions + a]; }
    double total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }
};

/// State values V(s).
struct ValueTable {
    numvec value;
    double operator()(std::size_t s) const { return value[s]; }
    double max_abs() const {
        double m = 0.0;
        for (double v : value) m = std::max(m, std::abs(v));
        return m;
    }
};

/// State-action values Q(s, a), indexed s * A + a.
struct QTable {
    std::size_t num_actions = 0;
    numvec value;
    double operator()(std::size_t s, std::size_t a) const { return value[s * num_actions + a]; }
};

inline void check_dimensions(const TabularMDP& mdp, const TabularPolicy& policy) {
    require(mdp.num_states() == policy.num_states() && mdp.num_actions() == policy.num_actions(),
            "policy dimensions do not match the MDP");
}

namespace detail {

inline Eigen::MatrixXd policy_state_matrix(const TabularMDP& mdp, const TabularPolicy& policy) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            double pa = policy.probability(s, a);
            if (pa == 0.0) continue;
            auto row = mdp.next_distribution(s, a);
            for (std::size_t s2 = 0; s2 < S; ++s2) P(s, s2) += pa * row[s2];
        }
    return P;
}

inline Eigen::VectorXd policy_reward(const TabularMDP& mdp, const TabularPolicy& policy) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mdp.num_states());
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        for (std::size_t a = 0; a < mdp.num_actions(); ++a)
            r(s) += policy.probability(s, a) * mdp.reward(s, a);
    return r;
}

/// Solves x = b + gamma * M x. Direct LU solve first; if the residual is
/// poor, falls back to fixed-point iteration down to 1e-12.
inline Eigen::VectorXd solve_discounted(const Eigen::MatrixXd& M, const Eigen::VectorXd& b, double gamma,
                                        double residual_target = 1e-10) {
    const auto n = M.rows();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma * M;
    Eigen::VectorXd x = system.partialPivLu().solve(b);
    auto residual = [&](const Eigen::VectorXd& v) { return (b + gamma * M * v - v).lpNorm<Eigen::Infinity>(); };
    if (x.allFinite() && residual(x) <= residual_target) return x;

    if (!x.allFinite()) x = b;
    for (int it = 0; it < 1'000'000; ++it) {
        Eigen::VectorXd next = b + gamma * M * x;
        double change = (next - x).lpNorm<Eigen::Infinity>();
        x = std::move(next);
        if (change <= 1e-12) return x;
    }
    throw NumericalError("discounted linear solve did not converge");
}

} // namespace detail

/// V^pi_T by a direct solve of (I - gamma P_pi) V = r_pi.
inline ValueTable exact_value(const TabularMDP& mdp, const TabularPolicy& policy) {
    check_dimensions(mdp, policy);
    Eigen::VectorXd v = detail::solve_discounted(detail::policy_state_matrix(mdp, policy),
                                                 detail::policy_reward(mdp, policy), mdp.gamma());
    return {numvec(v.data(), v.data() + v.size())};
}

/// Q(s,a) = r(s,a) + gamma E_{s'~T(s,a)}[V(s')]
inline QTable q_from_values(const TabularMDP& mdp, std::span<const double> values) {
    QTable q{mdp.num_actions(), numvec(mdp.num_states() * mdp.num_actions())};
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        for (std::size_t a = 0; a < mdp.num_actions(); ++a)
            q.value[s * mdp.num_actions() + a] = mdp.reward(s, a) + mdp.gamma() * mdp.expected_next(s, a, values);
    return q;
}

inline QTable exact_q(const TabularMDP& mdp, const TabularPolicy& policy) {
    return q_from_values(mdp, exact_value(mdp, policy).value);
}

/// rho^pi_T(s,a) = (1 - gamma) sum_t gamma^t Pr(s_t = s, a_t = a | s_0).
inline OccupancyMeasure exact_occupancy(const TabularMDP& mdp, const TabularPolicy& policy) {
    check_dimensions(mdp, policy);
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    Eigen::MatrixXd Pt = detail::policy_state_matrix(mdp, policy).transpose();
    Eigen::VectorXd start = Eigen::VectorXd::Zero(S);
    start(mdp.initial_state()) = 1.0 - mdp.gamma();
    Eigen::VectorXd d = detail::solve_discounted(Pt, start, mdp.gamma(), 1e-12);
    OccupancyMeasure rho{S, A, numvec(S * A, 0.0)};
    for (std::size_t s = 0; s < S; ++s) {
        double ds = std::max(0.0, d(s));
        for (std::size_t a = 0; a < A; ++a) rho.mass[s * A + a] = ds * policy.probability(s, a);
    }
    return rho;
}

/// eta(T, pi) = V^pi_T(s_0)
inline double eta(const TabularMDP& mdp, const TabularPolicy& policy) {
    return exact_value(mdp, policy).value[mdp.initial_state()];
}

/// L1 distance between the next-state distributions of two models at (s, a).
/// All total-variation quantities in this library use this (unhalved) norm.
inline double tv_distance(const TabularMDP& m1, const TabularMDP& m2, std::size_t s, std::size_t a) {
    auto p = m1.next_distribution(s, a);
    auto q = m2.next_distribution(s, a);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return acc;
}

inline double l1_distance(std::span<const double> p, std::span<const double> q) {
    require(p.size() == q.size(), "distributions differ in size");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return acc;
}

/**
 * Value gap predicted by the simulation lemma:
 *   gamma / (1 - gamma) * E_{rho^pi_model}[ E_model[V^pi_true] - E_true[V^pi_true] ].
 * Equals eta(model, pi) - eta(true, pi).
 */
inline double simulation_gap(const TabularMDP& mdp_true, const TabularMDP& mdp_model, const TabularPolicy& policy) {
    require(mdp_true.compatible_with(mdp_model), "simulation gap needs MDPs with identical rewards and spaces");
    check_dimensions(mdp_true, policy);
    const auto v_true = exact_value(mdp_true, policy);
    const auto rho = exact_occupancy(mdp_model, policy);
    double acc = 0.0;
    for (std::size_t s = 0; s < mdp_true.num_states(); ++s)
        for (std::size_t a = 0; a < mdp_true.num_actions(); ++a) {
            double w = rho(s, a);
            if (w == 0.0) continue;
            acc += w * (mdp_model.expected_next(s, a, v_true.value) - mdp_true.expected_next(s, a, v_true.value));
        }
    const double g = mdp_true.gamma();
    return g / (1.0 - g) * acc;
}

/// Optimal state values by value iteration; throws NumericalError when the
/// iteration cap is hit.
inline ValueTable optimal_value(const TabularMDP& mdp, double tolerance = 1e-13, long max_iterations = 1'000'000) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    numvec v(S, 0.0), next(S);
    for (long it = 0; it < max_iterations; ++it) {
        double change = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < A; ++a)
                best = std::max(best, mdp.reward(s, a) + mdp.gamma() * mdp.expected_next(s, a, v));
            next[s] = best;
            change = std::max(change, std::abs(best - v[s]));
        }
        v.swap(next);
        if (change <= tolerance * std::max(1.0, mdp.v_max())) return {v};
    }
    throw NumericalError("value iteration did not converge; gamma may be too close to 1");
}

/// Greedy policy under the given MDP. Actions whose optimal Q is within
/// tie_tolerance of the best share the probability mass uniformly.
inline TabularPolicy greedy_policy(const TabularMDP& mdp, double tie_tolerance = 1e-9) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    const auto q = q_from_values(mdp, optimal_value(mdp).value);
    numvec p(S * A, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < A; ++a) best = std::max(best, q(s, a));
        std::size_t ties = 0;
        for (std::size_t a = 0; a < A; ++a) ties += (q(s, a) >= best - tie_tolerance);
        for (std::size_t a = 0; a < A; ++a)
            if (q(s, a) >= best - tie_tolerance) p[s * A + a] = 1.0 / static_cast<double>(ties);
    }
    return {S, A, std::move(p)};
}

/// max_pi eta(T, pi)
/// Exact value of the greedy policy, free of value-iteration residual.
inline double optimal_eta(const TabularMDP& mdp) { return eta(mdp, greedy_policy(mdp)); }

} // namespace locmis
