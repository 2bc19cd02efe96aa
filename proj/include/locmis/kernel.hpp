#pragma once

#include "locmis/core.hpp"

#include <Eigen/Dense>

namespace locmis {

/// Radial basis kernel exp(-||x - y||^2 / (2 bandwidth^2)).
struct KernelSpec {
    double bandwidth = 1.0;

    KernelSpec() = default;
    explicit KernelSpec(double h) : bandwidth(h) { require(h > 0.0 && std::isfinite(h), "kernel bandwidth must be positive"); }

    double operator()(double x, double y) const {
        const double d = x - y;
        return std::exp(-d * d / (2.0 * bandwidth * bandwidth));
    }
    double operator()(std::span<const double> x, std::span<const double> y) const {
        double sq = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
        return std::exp(-sq / (2.0 * bandwidth * bandwidth));
    }
};

inline Eigen::MatrixXd gram_matrix(const KernelSpec& kernel, std::span<const double> points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) g(i, j) = g(j, i) = kernel(points[i], points[j]);
    }
    return g;
}

namespace detail {

inline double median_of(numvec values) {
    require(!values.empty(), "median of an empty set");
    auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

/// Evenly strided subset of at most max_points indices.
inline std::vector<std::size_t> strided_indices(std::size_t n, std::size_t max_points) {
    std::vector<std::size_t> idx;
    const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / max_points);
    for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
    return idx;
}

} // namespace detail

/// Median pairwise distance over (a strided subset of) the points; falls back
/// to 1 when all points coincide.
inline KernelSpec median_heuristic(const std::vector<numvec>& points, std::size_t max_points = 1000) {
    require(points.size() >= 2, "median heuristic needs at least two points");
    const auto idx = detail::strided_indices(points.size(), max_points);
    numvec dist;
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            double sq = 0.0;
            const auto& x = points[idx[i]];
            const auto& y = points[idx[j]];
            for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
            dist.push_back(std::sqrt(sq));
        }
    const double h = dist.empty() ? 0.0 : detail::median_of(std::move(dist));
    return KernelSpec(h > 0.0 ? h : 1.0);
}

} // namespace locmis
