#pragma once

#include "locmis/dataset.hpp"

#include <ostream>

namespace locmis {

/// Rectangular binning of the (state, action) plane.
///
/// Values outside the outer edges are assigned to the nearest edge bin.
class Discretizer {
public:
    Discretizer(numvec state_edges, numvec action_edges)
        : state_edges_(std::move(state_edges)), action_edges_(std::move(action_edges)) {
        check_edges(state_edges_, "state");
        check_edges(action_edges_, "action");
    }

    /// n uniform bins per axis over [s_lo, s_hi] x [a_lo, a_hi].
    static Discretizer uniform(double s_lo, double s_hi, std::size_t s_bins, double a_lo, double a_hi,
                               std::size_t a_bins) {
        return {linspace(s_lo, s_hi, s_bins), linspace(a_lo, a_hi, a_bins)};
    }

    /// One bin per tabular state and action; bin index equals s * A + a.
    static Discretizer tabular(std::size_t num_states, std::size_t num_actions) {
        return {linspace(-0.5, num_states - 0.5, num_states), linspace(-0.5, num_actions - 0.5, num_actions)};
    }

    std::size_t state_bins() const { return state_edges_.size() - 1; }
    std::size_t action_bins() const { return action_edges_.size() - 1; }
    std::size_t size() const { return state_bins() * action_bins(); }
    const numvec& state_edges() const { return state_edges_; }
    const numvec& action_edges() const { return action_edges_; }

    std::size_t state_bin(double s) const { return locate(state_edges_, s); }
    std::size_t action_bin(double a) const { return locate(action_edges_, a); }
    std::size_t bin(double s, double a) const { return state_bin(s) * action_bins() + action_bin(a); }

private:
    static numvec linspace(double lo, double hi, std::size_t bins) {
        require(bins > 0, "need at least one bin");
        numvec edges(bins + 1);
        for (std::size_t i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
        return edges;
    }
    static void check_edges(const numvec& edges, const char* axis) {
        require(edges.size() >= 2, std::string(axis) + " axis needs at least two edges");
        for (std::size_t i = 1; i < edges.size(); ++i)
            require(edges[i] > edges[i - 1], std::string(axis) + " edges must be strictly increasing");
    }
    static std::size_t locate(const numvec& edges, double x) {
        auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
        return static_cast<std::size_t>(it - (edges.begin() + 1));
    }

    numvec state_edges_;
    numvec action_edges_;
};

/// Probability mass per bin of a Discretizer (flattened state-major).
struct HistogramDensity {
    std::size_t state_bins = 0;
    std::size_t action_bins = 0;
    numvec mass;

    double operator[](std::size_t bin) const { return mass[bin]; }
    std::size_t size() const { return mass.size(); }
};

/// Relative bin frequencies of the (s, a) pairs in the dataset.
inline HistogramDensity fit_histogram(const TransitionDataset& data, const Discretizer& disc) {
    require(!data.empty(), "cannot fit a histogram to an empty dataset");
    HistogramDensity h{disc.state_bins(), disc.action_bins(), numvec(disc.size(), 0.0)};
    std::vector<std::size_t> counts(disc.size(), 0);
    for (const auto& rec : data.records) ++counts[disc.bin(rec.s, rec.a)];
    const double n = static_cast<double>(data.size());
    for (std::size_t b = 0; b < counts.size(); ++b) h.mass[b] = static_cast<double>(counts[b]) / n;
    return h;
}

enum class TruncationMode {
    /// w = 1{rho/mu <= zeta} rho/mu
    indicator,
    /// w = max(min(rho/mu, zeta), 0)
    clip
};

/// Truncated density ratio between a target and the behavior density.
struct TruncatedRatio {
    numvec weight;
    double zeta = 0.0;
    TruncationMode mode = TruncationMode::indicator;

    double operator[](std::size_t bin) const { return weight[bin]; }
    std::size_t size() const { return weight.size(); }
};

/// True when rho/mu exceeds zeta; bins with mu = 0 and rho > 0 always exceed.
inline bool ratio_exceeds(double rho, double mu, double zeta) { return rho > zeta * mu; }

inline TruncatedRatio truncated_ratio(std::span<const double> rho, std::span<const double> mu, double zeta,
                                      TruncationMode mode = TruncationMode::indicator) {
    require(zeta > 0.0, "truncation threshold zeta must be positive");
    require(rho.size() == mu.size(), "target and behavior densities differ in size");
    TruncatedRatio w{numvec(rho.size(), 0.0), zeta, mode};
    for (std::size_t b = 0; b < rho.size(); ++b) {
        if (rho[b] <= 0.0) continue;
        const bool exceeds = ratio_exceeds(rho[b], mu[b], zeta);
        if (mode == TruncationMode::indicator)
            w.weight[b] = exceeds ? 0.0 : rho[b] / mu[b];
        else
            w.weight[b] = exceeds ? zeta : rho[b] / mu[b];
    }
    return w;
}

inline TruncatedRatio truncated_ratio(const HistogramDensity& rho_hat, const HistogramDensity& mu_hat, double zeta,
                                      TruncationMode mode = TruncationMode::indicator) {
    return truncated_ratio(rho_hat.mass, mu_hat.mass, zeta, mode);
}

/// rho-mass of the bins whose ratio rho/mu exceeds the threshold.
inline double mismatch_mass(std::span<const double> rho, std::span<const double> mu, double threshold) {
    require(rho.size() == mu.size(), "target and behavior densities differ in size");
    double acc = 0.0;
    for (std::size_t b = 0; b < rho.size(); ++b)
        if (ratio_exceeds(rho[b], mu[b], threshold)) acc += rho[b];
    return acc;
}

inline void write_histogram_csv(const HistogramDensity& h, std::ostream& out) {
    out << "bin_s,bin_a,mass\n";
    for (std::size_t i = 0; i < h.state_bins; ++i)
        for (std::size_t j = 0; j < h.action_bins; ++j)
            out << i << ',' << j << ',' << format_double(h.mass[i * h.action_bins + j]) << '\n';
}

} // namespace locmis
