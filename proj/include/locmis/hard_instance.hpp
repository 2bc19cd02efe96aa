#pragma once

#include "locmis/dataset.hpp"
#include "locmis/local_errors.hpp"

#include <ostream>

namespace locmis {

/**
 * Counterexample family where every shared-parameter model is wrong on
 * all but one arm, yet each arm policy has a model that is exact on the
 * pairs it visits.
 *
 * State layout: 0 is the start state, 1..d are the arm states, d + 1 is
 * the rewarding absorbing state and d + 2 the non-rewarding absorbing
 * state. Action j (0-based) is arm j + 1.
 */
struct HardInstanceSpec {
    std::size_t d = 4;
    double gamma = 0.9;

    HardInstanceSpec() = default;
    HardInstanceSpec(std::size_t d_, double gamma_) : d(d_), gamma(gamma_) { validate(); }

    void validate() const {
        require(d >= 2, "hard instance needs d >= 2");
        require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    }
    std::size_t num_states() const { return d + 3; }
    std::size_t num_actions() const { return d; }
    std::size_t start() const { return 0; }
    std::size_t arm(std::size_t i) const { return i; } // 1-based arm index
    std::size_t good() const { return d + 1; }
    std::size_t bad() const { return d + 2; }
};

/// Shared parameter of the misspecified model class: nonnegative, unit norm.
struct ThetaDynamics {
    numvec theta;

    void validate(std::size_t d) const {
        require(theta.size() == d, "theta must have d components");
        double sq = 0.0;
        for (double t : theta) {
            require(std::isfinite(t) && t >= 0.0, "theta components must be nonnegative");
            sq += t * t;
        }
        require(std::abs(std::sqrt(sq) - 1.0) <= 1e-10, "theta must have unit Euclidean norm");
    }

    static ThetaDynamics basis(std::size_t d, std::size_t j) {
        numvec t(d, 0.0);
        t.at(j) = 1.0;
        return {std::move(t)};
    }
    static ThetaDynamics uniform(std::size_t d) { return {numvec(d, 1.0 / std::sqrt(static_cast<double>(d)))}; }
};

struct HardFamily {
    TabularMDP true_mdp;
    /// pi_x plays arm x at the start and arm states, arm 1 elsewhere
    std::vector<TabularPolicy> policies;
    /// V^{pi_x} under the true dynamics
    std::vector<ValueTable> values;
};

namespace detail {

inline numvec hard_reward(const HardInstanceSpec& spec) {
    numvec r(spec.num_states() * spec.num_actions(), 0.0);
    for (std::size_t a = 0; a < spec.num_actions(); ++a) r[spec.good() * spec.num_actions() + a] = 1.0;
    return r;
}

/// Transition table with the arm rows filled by success(i, j), the
/// probability of reaching the good state from arm i with action j.
template <class Success>
numvec hard_transitions(const HardInstanceSpec& spec, Success success) {
    const std::size_t S = spec.num_states(), A = spec.num_actions();
    numvec p(S * A * S, 0.0);
    auto at = [&](std::size_t s, std::size_t a, std::size_t s2) -> double& { return p[(s * A + a) * S + s2]; };
    for (std::size_t a = 0; a < A; ++a) {
        at(spec.start(), a, spec.arm(a + 1)) = 1.0;
        at(spec.good(), a, spec.good()) = 1.0;
        at(spec.bad(), a, spec.bad()) = 1.0;
        for (std::size_t i = 1; i <= spec.d; ++i) {
            const double q = success(i, a);
            at(spec.arm(i), a, spec.good()) = q;
            at(spec.arm(i), a, spec.bad()) = 1.0 - q;
        }
    }
    return p;
}

} // namespace detail

inline TabularMDP build_true_hard_mdp(const HardInstanceSpec& spec) {
    spec.validate();
    auto p = detail::hard_transitions(spec, [](std::size_t i, std::size_t a) { return i == a + 1 ? 1.0 : 0.0; });
    return {spec.num_states(), spec.num_actions(), std::move(p), detail::hard_reward(spec), spec.gamma, spec.start()};
}

/// pi_x for x in 1..d.
inline TabularPolicy arm_policy(const HardInstanceSpec& spec, std::size_t x) {
    require(x >= 1 && x <= spec.d, "arm index out of range");
    std::vector<std::size_t> actions(spec.num_states(), 0);
    for (std::size_t s = 0; s <= spec.d; ++s) actions[s] = x - 1;
    return TabularPolicy::deterministic(spec.num_actions(), actions);
}

inline HardFamily build_hard_family(const HardInstanceSpec& spec) {
    HardFamily family{build_true_hard_mdp(spec), {}, {}};
    for (std::size_t x = 1; x <= spec.d; ++x) {
        family.policies.push_back(arm_policy(spec, x));
        family.values.push_back(exact_value(family.true_mdp, family.policies.back()));
    }
    return family;
}

/// Model T_theta: arm i with action j reaches the good state w.p. (1 + theta_j) / 2.
inline TabularMDP build_theta_mdp(const HardInstanceSpec& spec, const ThetaDynamics& theta) {
    spec.validate();
    theta.validate(spec.d);
    auto p = detail::hard_transitions(spec, [&](std::size_t, std::size_t a) { return 0.5 * (1.0 + theta.theta[a]); });
    return {spec.num_states(), spec.num_actions(), std::move(p), detail::hard_reward(spec), spec.gamma, spec.start()};
}

/// (A - 1) gamma^2 / (A (1 - gamma))
inline double suboptimality_floor(const HardInstanceSpec& spec) {
    const double A = static_cast<double>(spec.num_actions());
    return (A - 1.0) * spec.gamma * spec.gamma / (A * (1.0 - spec.gamma));
}

/// max_pi eta(T*, pi) - eta(T*, greedy policy of T_theta).
inline double suboptimality_gap(const HardInstanceSpec& spec, const ThetaDynamics& theta) {
    const auto truth = build_true_hard_mdp(spec);
    const auto planned = greedy_policy(build_theta_mdp(spec, theta));
    return optimal_eta(truth) - eta(truth, planned);
}

/// gamma / (8 (1 - gamma))
inline double mml_floor(const HardInstanceSpec& spec) { return spec.gamma / (8.0 * (1.0 - spec.gamma)); }

/// Weight w_x = rho^{pi_x}_{T*} / ((1 - gamma) mu) for mu uniform over all pairs.
inline numvec mml_ratio(const HardInstanceSpec& spec, const TabularMDP& truth, std::size_t x) {
    const auto rho = exact_occupancy(truth, arm_policy(spec, x));
    const double mu = 1.0 / static_cast<double>(rho.mass.size());
    numvec w(rho.mass.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rho.mass[i] / ((1.0 - spec.gamma) * mu);
    return w;
}

/// Infinite-data MML loss of T_theta for weight w_x and test function V^{pi_y}_{T*}.
inline double mml_population_loss(const HardInstanceSpec& spec, const ThetaDynamics& theta, std::size_t x,
                                  std::size_t y) {
    const auto truth = build_true_hard_mdp(spec);
    const auto model = build_theta_mdp(spec, theta);
    const numvec mu(spec.num_states() * spec.num_actions(), 1.0 / static_cast<double>(spec.num_states() * spec.num_actions()));
    const auto g = exact_value(truth, arm_policy(spec, y));
    return population_model_loss(truth, model, mu, mml_ratio(spec, truth, x), g.value);
}

/// Diagonal member (w_x, V^{pi_x}) of the MML adversary.
inline double mml_population_loss(const HardInstanceSpec& spec, const ThetaDynamics& theta, std::size_t x) {
    return mml_population_loss(spec, theta, x, x);
}

/// max over (w_x, V^{pi_y}) of the population MML loss of T_theta.
inline double mml_population_max(const HardInstanceSpec& spec, const ThetaDynamics& theta) {
    const auto truth = build_true_hard_mdp(spec);
    const auto model = build_theta_mdp(spec, theta);
    const std::size_t SA = spec.num_states() * spec.num_actions();
    const numvec mu(SA, 1.0 / static_cast<double>(SA));
    std::vector<numvec> weights;
    std::vector<ValueTable> values;
    for (std::size_t x = 1; x <= spec.d; ++x) {
        weights.push_back(mml_ratio(spec, truth, x));
        values.push_back(exact_value(truth, arm_policy(spec, x)));
    }
    double best = 0.0;
    for (const auto& w : weights)
        for (const auto& g : values) best = std::max(best, population_model_loss(truth, model, mu, w, g.value));
    return best;
}

/// Nonnegative grid with the given spacing on [0, 1]^d, projected onto the
/// unit sphere; duplicate directions are removed. Ordered lexicographically
/// by the grid coordinates of the first occurrence.
inline std::vector<ThetaDynamics> theta_grid(std::size_t d, double spacing = 0.1) {
    require(d >= 1, "theta grid needs d >= 1");
    require(spacing > 0.0 && spacing <= 1.0, "grid spacing must lie in (0, 1]");
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / spacing));
    std::vector<std::size_t> counter(d, 0);
    std::vector<ThetaDynamics> grid;
    while (true) {
        // a non-primitive integer vector repeats the direction of its reduction
        std::size_t g = 0;
        for (auto c : counter) g = std::gcd(g, c);
        if (g == 1) {
            double sq = 0.0;
            for (auto c : counter) sq += static_cast<double>(c) * static_cast<double>(c);
            numvec t(d);
            for (std::size_t i = 0; i < d; ++i) t[i] = static_cast<double>(counter[i]) / std::sqrt(sq);
            grid.push_back({std::move(t)});
        }
        std::size_t i = d;
        while (i > 0 && counter[i - 1] == steps) counter[--i] = 0;
        if (i == 0) break;
        ++counter[i - 1];
    }
    return grid;
}

/// Decoupled baseline: the grid member maximizing the likelihood of the
/// arm-state transitions in a tabular dataset of the hard instance.
inline ThetaDynamics fit_theta_by_likelihood(const HardInstanceSpec& spec, const TransitionDataset& data,
                                             std::span<const ThetaDynamics> grid) {
    require(!grid.empty(), "theta grid is empty");
    data.validate(spec.num_states(), spec.num_actions());
    std::vector<std::size_t> success(spec.d, 0), failure(spec.d, 0);
    for (const auto& rec : data.records) {
        const auto s = static_cast<std::size_t>(rec.s);
        if (s < 1 || s > spec.d) continue;
        const auto a = static_cast<std::size_t>(rec.a);
        const auto s2 = static_cast<std::size_t>(rec.s_next);
        if (s2 == spec.good()) ++success[a];
        else if (s2 == spec.bad()) ++failure[a];
    }
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double ll = 0.0;
        for (std::size_t j = 0; j < spec.d; ++j) {
            const double q = 0.5 * (1.0 + grid[k].theta[j]);
            if (success[j] > 0) ll += static_cast<double>(success[j]) * std::log(q);
            if (failure[j] > 0) ll += static_cast<double>(failure[j]) * std::log(1.0 - q);
        }
        if (ll > best) best = ll, arg = k;
    }
    return grid[arg];
}

struct HardSweepRow {
    std::size_t theta_index = 0;
    double gap = 0.0;
    double bound = 0.0;
    double mml_loss = 0.0;
    double mml_floor = 0.0;
};

inline std::vector<HardSweepRow> hard_instance_sweep(const HardInstanceSpec& spec,
                                                     std::span<const ThetaDynamics> grid) {
    std::vector<HardSweepRow> rows(grid.size());
    parallel_for(grid.size(), [&](std::size_t k) {
        rows[k] = {k, suboptimality_gap(spec, grid[k]), suboptimality_floor(spec), mml_population_max(spec, grid[k]),
                   mml_floor(spec)};
    });
    return rows;
}

inline void write_sweep_csv(std::span<const HardSweepRow> rows, std::ostream& out) {
    out << "theta_index,gap,bound,mml_loss,mml_floor\n";
    for (const auto& r : rows)
        out << r.theta_index << ',' << format_double(r.gap) << ',' << format_double(r.bound) << ','
            << format_double(r.mml_loss) << ',' << format_double(r.mml_floor) << '\n';
}

} // namespace locmis
