#pragma once

#include "locmis/histogram.hpp"
#include "locmis/tabular.hpp"

namespace locmis {

/// Local misspecification diagnostics of a policy against finite classes.
struct LocalErrorDiagnostics {
    /// inf_T E_{rho^pi_true}[TV(T(s,a), T_true(s,a))], TV as the L1 distance
    double eps_rho = 0.0;
    /// rho^pi_true mass where rho^pi_true / mu_hat > zeta / 2
    double eps_mu = 0.0;
    /// worst local value error over the dynamics class
    double eps_v = 0.0;
    /// index of the dynamics model attaining eps_rho
    std::size_t best_model = 0;
};

/// Population model loss |E_mu[w(s,a) (E_model[g] - E_true[g])]|, the
/// infinite-data limit of the empirical loss on data drawn from mu and T_true.
inline double population_model_loss(const TabularMDP& mdp_true, const TabularMDP& model,
                                    std::span<const double> mu, std::span<const double> w,
                                    std::span<const double> g) {
    require(mdp_true.compatible_with(model), "model and true MDP must share spaces and rewards");
    const std::size_t S = mdp_true.num_states(), A = mdp_true.num_actions();
    require(mu.size() == S * A && w.size() == S * A, "density and weight must be indexed by (s, a)");
    require(g.size() == S, "test function must have one value per state");
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t sa = s * A + a;
            if (mu[sa] == 0.0 || w[sa] == 0.0) continue;
            acc += mu[sa] * w[sa] * (model.expected_next(s, a, g) - mdp_true.expected_next(s, a, g));
        }
    return std::abs(acc);
}

/// E_{(s,a) ~ rho}[TV(T1(s,a), T2(s,a))]
inline double expected_tv(const OccupancyMeasure& rho, const TabularMDP& m1, const TabularMDP& m2) {
    double acc = 0.0;
    for (std::size_t s = 0; s < rho.num_states; ++s)
        for (std::size_t a = 0; a < rho.num_actions; ++a)
            if (rho(s, a) > 0.0) acc += rho(s, a) * tv_distance(m1, m2, s, a);
    return acc;
}

/// eps_rho and the model attaining it.
inline std::pair<double, std::size_t> local_dynamics_error(const TabularMDP& mdp_true,
                                                           std::span<const TabularMDP> dynamics_class,
                                                           const TabularPolicy& policy) {
    require(!dynamics_class.empty(), "dynamics class is empty");
    const auto rho = exact_occupancy(mdp_true, policy);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < dynamics_class.size(); ++i) {
        require(mdp_true.compatible_with(dynamics_class[i]), "dynamics class member is incompatible");
        double e = expected_tv(rho, dynamics_class[i], mdp_true);
        if (e < best) best = e, arg = i;
    }
    return {best, arg};
}

inline double local_coverage_error(const TabularMDP& mdp_true, const TabularPolicy& policy,
                                   std::span<const double> mu_hat, double zeta) {
    require(zeta > 0.0, "zeta must be positive");
    return mismatch_mass(exact_occupancy(mdp_true, policy).mass, mu_hat, zeta / 2.0);
}

/**
 * Local value error of (model, policy):
 *   inf_g |E_mu[w (E_model[(g - V)(s')] - E_true[(g - V)(s')])]|
 * with V = V^pi_true and w the indicator-truncated ratio rho^pi_model / mu_hat.
 * mu is the behavior density, mu_hat its estimate.
 */
inline double local_value_error(const TabularMDP& mdp_true, const TabularMDP& model,
                                std::span<const ValueTable> value_class, const TabularPolicy& policy,
                                std::span<const double> mu, std::span<const double> mu_hat, double zeta) {
    require(!value_class.empty(), "value class is empty");
    const auto v_true = exact_value(mdp_true, policy);
    const auto w = truncated_ratio(exact_occupancy(model, policy).mass, mu_hat, zeta, TruncationMode::indicator);
    double best = std::numeric_limits<double>::infinity();
    numvec residual(mdp_true.num_states());
    for (const auto& g : value_class) {
        require(g.value.size() == residual.size(), "value table has the wrong number of states");
        for (std::size_t s = 0; s < residual.size(); ++s) residual[s] = g.value[s] - v_true.value[s];
        best = std::min(best, population_model_loss(mdp_true, model, mu, w.weight, residual));
    }
    return best;
}

/// eps_rho, eps_mu and eps_v with exact expectations. The behavior density
/// plays both the role of mu and of its estimate mu_hat.
inline LocalErrorDiagnostics local_errors(const TabularMDP& mdp_true, std::span<const TabularMDP> dynamics_class,
                                          std::span<const ValueTable> value_class, const TabularPolicy& policy,
                                          std::span<const double> behavior, double zeta) {
    require(!dynamics_class.empty(), "dynamics class is empty");
    require(!value_class.empty(), "value class is empty");
    LocalErrorDiagnostics out;
    std::tie(out.eps_rho, out.best_model) = local_dynamics_error(mdp_true, dynamics_class, policy);
    out.eps_mu = local_coverage_error(mdp_true, policy, behavior, zeta);
    for (const auto& model : dynamics_class)
        out.eps_v = std::max(out.eps_v,
                             local_value_error(mdp_true, model, value_class, policy, behavior, behavior, zeta));
    return out;
}

} // namespace locmis
