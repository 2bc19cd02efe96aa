#pragma once

#include "locmis/dataset.hpp"
#include "locmis/histogram.hpp"
#include "locmis/tabular.hpp"

#include <concepts>

namespace locmis {

template <class E>
concept Environment = requires(const E& env, double s, double a, Rng& rng) {
    { env.initial_state(rng) } -> std::convertible_to<double>;
    { env.sample_next(s, a, rng) } -> std::convertible_to<double>;
    { env.reward(s, a) } -> std::convertible_to<double>;
};

template <class P>
concept Policy = requires(const P& policy, double s, Rng& rng) {
    { policy.sample_action(s, rng) } -> std::convertible_to<double>;
};

/// Rollout view of a tabular MDP; states and actions travel as doubles
/// holding integer indices.
struct TabularEnvironment {
    const TabularMDP* mdp;

    explicit TabularEnvironment(const TabularMDP& m) : mdp(&m) {}
    double initial_state(Rng&) const { return static_cast<double>(mdp->initial_state()); }
    double sample_next(double s, double a, Rng& rng) const {
        return static_cast<double>(
            sample_index(mdp->next_distribution(static_cast<std::size_t>(s), static_cast<std::size_t>(a)), rng));
    }
    double reward(double s, double a) const {
        return mdp->reward(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
    }
};

struct TabularActor {
    const TabularPolicy* policy;

    explicit TabularActor(const TabularPolicy& p) : policy(&p) {}
    double sample_action(double s, Rng& rng) const {
        return static_cast<double>(sample_index(policy->action_distribution(static_cast<std::size_t>(s)), rng));
    }
};

namespace detail {

inline constexpr std::size_t kRolloutChunk = 64;

/// Runs body(chunk_index, first, last) over fixed chunks of trajectories so
/// that per-chunk partial results can be reduced in a fixed order.
template <class Body>
void for_each_chunk(std::size_t n_traj, Body body) {
    const std::size_t chunks = (n_traj + kRolloutChunk - 1) / kRolloutChunk;
    parallel_for(chunks, [&](std::size_t c) {
        body(c, c * kRolloutChunk, std::min(n_traj, (c + 1) * kRolloutChunk));
    });
}

} // namespace detail

/// Discount-weighted histogram of (s, a) visits, weights (1 - gamma) gamma^t
/// normalized over the truncated horizon. Trajectory i uses derive_rng(seed, i).
template <Environment Env, Policy Pol>
HistogramDensity estimate_occupancy(const Env& env, const Pol& policy, const Discretizer& disc, std::size_t n_traj,
                                    std::size_t horizon, double gamma, std::uint64_t seed) {
    require(n_traj > 0, "occupancy estimate needs trajectories");
    require(horizon > 0, "horizon must be positive");
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    const std::size_t chunks = (n_traj + detail::kRolloutChunk - 1) / detail::kRolloutChunk;
    std::vector<numvec> partial(chunks, numvec(disc.size(), 0.0));
    detail::for_each_chunk(n_traj, [&](std::size_t c, std::size_t first, std::size_t last) {
        auto& mass = partial[c];
        for (std::size_t i = first; i < last; ++i) {
            Rng rng = derive_rng(seed, i);
            double s = env.initial_state(rng);
            double weight = 1.0 - gamma;
            for (std::size_t t = 0; t < horizon; ++t) {
                const double a = policy.sample_action(s, rng);
                mass[disc.bin(s, a)] += weight;
                weight *= gamma;
                if (weight == 0.0) break;
                s = env.sample_next(s, a, rng);
            }
        }
    });
    HistogramDensity out{disc.state_bins(), disc.action_bins(), numvec(disc.size(), 0.0)};
    for (const auto& p : partial)
        for (std::size_t b = 0; b < p.size(); ++b) out.mass[b] += p[b];
    double total = 0.0;
    for (double m : out.mass) total += m;
    for (auto& m : out.mass) m /= total;
    return out;
}

struct McEstimate {
    double mean = 0.0;
    double std_err = 0.0;
};

/// Monte-Carlo mean of truncated discounted returns sum_t gamma^t r_t.
template <Environment Env, Policy Pol>
McEstimate mc_eta(const Env& env, const Pol& policy, std::size_t n_traj, std::size_t horizon, double gamma,
                  std::uint64_t seed) {
    require(n_traj > 0, "Monte-Carlo estimate needs trajectories");
    require(horizon > 0, "horizon must be positive");
    numvec returns(n_traj);
    detail::for_each_chunk(n_traj, [&](std::size_t, std::size_t first, std::size_t last) {
        for (std::size_t i = first; i < last; ++i) {
            Rng rng = derive_rng(seed, i);
            double s = env.initial_state(rng);
            double discount = 1.0, ret = 0.0;
            for (std::size_t t = 0; t < horizon; ++t) {
                const double a = policy.sample_action(s, rng);
                ret += discount * env.reward(s, a);
                discount *= gamma;
                if (discount == 0.0) break;
                s = env.sample_next(s, a, rng);
            }
            returns[i] = ret;
        }
    });
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(n_traj);
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    const double n = static_cast<double>(n_traj);
    return {mean, n > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0};
}

/// Logs n_traj rollouts of length horizon as a dataset with trajectory ids 0..n_traj-1.
template <Environment Env, Policy Pol>
TransitionDataset collect_trajectories(const Env& env, const Pol& policy, std::size_t n_traj, std::size_t horizon,
                                       std::uint64_t seed, Domain domain = Domain::continuous_1d) {
    require(n_traj > 0 && horizon > 0, "rollouts need trajectories and a positive horizon");
    TransitionDataset data;
    data.domain = domain;
    data.records.resize(n_traj * horizon);
    detail::for_each_chunk(n_traj, [&](std::size_t, std::size_t first, std::size_t last) {
        for (std::size_t i = first; i < last; ++i) {
            Rng rng = derive_rng(seed, i);
            double s = env.initial_state(rng);
            for (std::size_t t = 0; t < horizon; ++t) {
                const double a = policy.sample_action(s, rng);
                const double s2 = env.sample_next(s, a, rng);
                data.records[i * horizon + t] = {static_cast<std::int64_t>(i), static_cast<std::int64_t>(t), s, a,
                                                 env.reward(s, a), s2};
                s = s2;
            }
        }
    });
    return data;
}

/// i.i.d. tabular transitions: (s, a) ~ mu, s' ~ T(s, a). Trajectory id is
/// the record index and t is 0.
inline TransitionDataset sample_tabular_transitions(const TabularMDP& mdp, std::span<const double> mu, std::size_t n,
                                                    Rng& rng) {
    const std::size_t A = mdp.num_actions();
    require(mu.size() == mdp.num_states() * A, "sampling density must be indexed by (s, a)");
    TransitionDataset data;
    data.domain = Domain::tabular;
    data.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t sa = sample_index(mu, rng);
        const std::size_t s = sa / A, a = sa % A;
        const std::size_t s2 = sample_index(mdp.next_distribution(s, a), rng);
        data.records.push_back({static_cast<std::int64_t>(i), 0, static_cast<double>(s), static_cast<double>(a),
                                mdp.reward(s, a), static_cast<double>(s2)});
    }
    return data;
}

} // namespace locmis
