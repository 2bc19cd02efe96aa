#pragma once

#include "locmis/selector.hpp"

namespace locmis {

/// Tabular problem with exactly known behavior density.
struct SpiSetup {
    TabularMDP mdp_true;
    std::vector<TabularMDP> dynamics_class;
    std::vector<TabularPolicy> policies;
    std::vector<ValueTable> value_class;
    /// behavior density mu over (s, a)
    numvec mu;
    /// its estimate; equal to mu in the population setting
    numvec mu_hat;
};

struct SpiPolicyTerms {
    double eta_true = 0.0;
    LocalErrorDiagnostics errors;
    /// eta_true - 6 V_max eps_rho / (1 - gamma)^2 - V_max eps_mu / (1 - gamma)
    double guaranteed = 0.0;
};

struct SpiReport {
    std::size_t chosen_policy = 0;
    std::size_t chosen_model = 0;
    /// eta(T*, chosen policy)
    double lhs = 0.0;
    double rhs = 0.0;
    double eps_v_chosen = 0.0;
    double statistical_term = 0.0;
    double density_term = 0.0;
    std::vector<SpiPolicyTerms> per_policy;

    double slack() const { return lhs - rhs; }
    bool holds(double tolerance = 1e-9) const { return lhs >= rhs - tolerance; }
};

/// Every deterministic policy of a tabular problem, in lexicographic order
/// of the action tuple (state 0 varies slowest).
inline std::vector<TabularPolicy> all_deterministic_policies(std::size_t num_states, std::size_t num_actions,
                                                             std::size_t cap = 4096) {
    require(num_states > 0 && num_actions > 0, "empty state or action space");
    double count = std::pow(static_cast<double>(num_actions), static_cast<double>(num_states));
    require(count <= static_cast<double>(cap), "too many deterministic policies to enumerate");
    std::vector<TabularPolicy> out;
    std::vector<std::size_t> actions(num_states, 0);
    while (true) {
        out.push_back(TabularPolicy::deterministic(num_actions, actions));
        std::size_t i = num_states;
        while (i > 0 && actions[i - 1] + 1 == num_actions) actions[--i] = 0;
        if (i == 0) break;
        ++actions[i - 1];
    }
    return out;
}

namespace detail {

inline numvec random_simplex(std::size_t n, Rng& rng) {
    numvec p(n);
    double total = 0.0;
    for (auto& x : p) total += (x = -std::log(1.0 - uniform01(rng)));
    for (auto& x : p) x /= total;
    return p;
}

} // namespace detail

/// Random tabular problem: the dynamics class holds T* and perturbed copies
/// that replace a random subset of rows; policies are all deterministic ones
/// plus the uniform policy; the value class holds V^pi_{T*} for every policy
/// and a few random tables in [0, V_max]; mu is a random positive density
/// and mu_hat = mu.
inline SpiSetup random_spi_setup(Rng& rng, std::size_t num_states = 4, std::size_t num_actions = 2,
                                 double gamma = 0.8, std::size_t perturbed_models = 3,
                                 std::size_t random_values = 3) {
    const std::size_t S = num_states, A = num_actions;
    numvec transition;
    for (std::size_t sa = 0; sa < S * A; ++sa) {
        const auto row = detail::random_simplex(S, rng);
        transition.insert(transition.end(), row.begin(), row.end());
    }
    numvec reward(S * A);
    for (auto& r : reward) r = uniform01(rng);
    TabularMDP truth(S, A, transition, reward, gamma, 0);

    SpiSetup setup{truth, {truth}, all_deterministic_policies(S, A), {}, {}, {}};
    for (std::size_t k = 0; k < perturbed_models; ++k) {
        numvec p = transition;
        for (std::size_t sa = 0; sa < S * A; ++sa) {
            if (uniform01(rng) < 0.5) continue;
            const auto row = detail::random_simplex(S, rng);
            const double mix = uniform01(rng);
            for (std::size_t s2 = 0; s2 < S; ++s2)
                p[sa * S + s2] = (1.0 - mix) * p[sa * S + s2] + mix * row[s2];
        }
        setup.dynamics_class.emplace_back(S, A, std::move(p), reward, gamma, 0);
    }
    setup.policies.push_back(TabularPolicy::uniform(S, A));
    for (const auto& policy : setup.policies) setup.value_class.push_back(exact_value(truth, policy));
    for (std::size_t k = 0; k < random_values; ++k) {
        ValueTable g{numvec(S)};
        for (auto& v : g.value) v = uniform01(rng) * truth.v_max();
        setup.value_class.push_back(std::move(g));
    }
    setup.mu = detail::random_simplex(S * A, rng);
    for (auto& m : setup.mu) m = 0.5 * m + 0.5 / static_cast<double>(S * A);
    setup.mu_hat = setup.mu;
    return setup;
}

/**
 * Runs the joint lb selection with exact quantities and compares the true
 * value of the chosen policy with the safe-improvement guarantee
 *   sup_pi {eta(T*, pi) - 6 V_max eps_rho(pi) / (1-g)^2 - V_max eps_mu(pi) / (1-g)}
 *     - eps_v(T^, pi^) / (1-g) - 4 V_max sqrt(zeta iota / n) / (1-g)
 *     - 2 zeta V_max TV(mu^, mu) / (1-g).
 * Without n the statistical term is dropped (infinite data).
 */
inline SpiReport verify_spi(const SpiSetup& setup, double zeta, double delta, std::optional<std::size_t> n = {}) {
    require(zeta > 0.0, "zeta must be positive");
    require(!setup.policies.empty() && !setup.dynamics_class.empty() && !setup.value_class.empty(),
            "classes must be nonempty");
    const auto& truth = setup.mdp_true;
    const double gamma = truth.gamma();
    const double v_max = truth.v_max();
    const TabularPopulationEvaluator evaluator{&truth,           setup.policies, setup.dynamics_class,
                                               setup.value_class, setup.mu,       setup.mu_hat,
                                               zeta,             TruncationMode::indicator};
    const auto selection = select_mblb(setup.policies.size(), setup.dynamics_class.size(), evaluator);

    SpiReport report;
    report.chosen_policy = selection.chosen_policy;
    report.chosen_model = selection.chosen_model;
    report.lhs = eta(truth, setup.policies[report.chosen_policy]);

    double best = -std::numeric_limits<double>::infinity();
    for (const auto& policy : setup.policies) {
        SpiPolicyTerms terms;
        terms.eta_true = eta(truth, policy);
        std::tie(terms.errors.eps_rho, terms.errors.best_model) =
            local_dynamics_error(truth, setup.dynamics_class, policy);
        terms.errors.eps_mu = local_coverage_error(truth, policy, setup.mu_hat, zeta);
        terms.guaranteed = terms.eta_true - 6.0 * v_max * terms.errors.eps_rho / ((1.0 - gamma) * (1.0 - gamma)) -
                           v_max * terms.errors.eps_mu / (1.0 - gamma);
        best = std::max(best, terms.guaranteed);
        report.per_policy.push_back(terms);
    }
    report.eps_v_chosen = local_value_error(truth, setup.dynamics_class[report.chosen_model], setup.value_class,
                                            setup.policies[report.chosen_policy], setup.mu, setup.mu_hat, zeta);
    if (n) {
        const ClassSizes sizes{setup.value_class.size(), setup.dynamics_class.size(), setup.policies.size()};
        report.statistical_term = 4.0 * v_max * std::sqrt(zeta * confidence_log_term(sizes, delta) /
                                                          static_cast<double>(*n)) / (1.0 - gamma);
    }
    report.density_term = 2.0 * zeta * v_max * l1_distance(setup.mu_hat, setup.mu) / (1.0 - gamma);
    report.rhs = best - report.eps_v_chosen / (1.0 - gamma) - report.statistical_term - report.density_term;
    return report;
}

} // namespace locmis
