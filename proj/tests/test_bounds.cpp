#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace locmis;

namespace {

/// s' = s + a, no noise.
struct ShiftModel {
    double next(double s, double a) const { return s + a; }
};

/// Reproduces a fixed list of observed next states, keyed by the state.
struct LookupModel {
    std::vector<std::pair<double, double>> table;
    double next(double s, double) const {
        for (auto [key, value] : table)
            if (key == s) return value;
        throw InvalidArgument("state not in lookup table");
    }
};

struct PolyBasis {
    numvec operator()(double s) const { return {1.0, s, s * s}; }
};

TransitionDataset toy_continuous() {
    TransitionDataset d;
    d.records = {{0, 0, -0.8, 0.3, 0.0, -0.4},
                 {0, 1, -0.4, 0.5, 0.0, 0.2},
                 {0, 2, 0.2, -0.1, 0.0, 0.05},
                 {1, 0, 0.6, -0.7, 0.0, -0.2},
                 {1, 1, 0.9, 0.2, 0.0, 1.3}};
    return d;
}

/// Two state bins split at zero, one action bin.
Discretizer two_bins() { return Discretizer({-2.0, 0.0, 2.0}, {-2.0, 2.0}); }

TruncatedRatio hand_weights(double left, double right) { return {{left, right}, 10.0, TruncationMode::indicator}; }

/// Brute-force sum over all records, pair supports and kernel entries.
double rkhs_double_loop(const TransitionDataset& d, const TabularMDP& model, std::span<const double> w,
                        const KernelSpec& k) {
    const double n = static_cast<double>(d.size());
    const std::size_t S = model.num_states();
    double total = 0.0;
    for (const auto& ri : d.records)
        for (const auto& rj : d.records) {
            const double wi = w[static_cast<std::size_t>(ri.s) * model.num_actions() + static_cast<std::size_t>(ri.a)];
            const double wj = w[static_cast<std::size_t>(rj.s) * model.num_actions() + static_cast<std::size_t>(rj.a)];
            const auto pi = model.next_distribution(static_cast<std::size_t>(ri.s), static_cast<std::size_t>(ri.a));
            const auto pj = model.next_distribution(static_cast<std::size_t>(rj.s), static_cast<std::size_t>(rj.a));
            double term = k(ri.s_next, rj.s_next);
            for (std::size_t x = 0; x < S; ++x) {
                term -= pi[x] * k(static_cast<double>(x), rj.s_next);
                term -= pj[x] * k(static_cast<double>(x), ri.s_next);
                for (std::size_t y = 0; y < S; ++y) term += pi[x] * pj[y] * k(static_cast<double>(x), static_cast<double>(y));
            }
            total += wi * wj * term;
        }
    return std::sqrt(std::max(0.0, total)) / n;
}

} // namespace

TEST(ModelLoss, ZeroWeightGivesZero) {
    const auto d = toy_continuous();
    EXPECT_EQ(model_loss(d, two_bins(), hand_weights(0.0, 0.0), ShiftModel{}, [](double s) { return s * s; }), 0.0);
}

TEST(ModelLoss, MatchesBruteForceOnThreeTabularTransitions) {
    // 2 states, 2 actions; one hand-picked model
    const TabularMDP model(2, 2, {0.7, 0.3, 0.1, 0.9, 0.5, 0.5, 1.0, 0.0}, {0.0, 0.0, 0.0, 0.0}, 0.9, 0);
    TransitionDataset d;
    d.domain = Domain::tabular;
    d.records = {{0, 0, 0, 1, 0.0, 1}, {0, 1, 1, 0, 0.0, 1}, {0, 2, 1, 1, 0.0, 0}};
    const TableFn g{{2.0, -1.0}};
    const TruncatedRatio w{{0.5, 2.0, 1.5, 3.0}, 5.0, TruncationMode::indicator};
    // record 1: w=2.0, E[g]=0.1*2 + 0.9*-1 = -0.7, g(s')=-1
    // record 2: w=1.5, E[g]=0.5*2 + 0.5*-1 = 0.5,  g(s')=-1
    // record 3: w=3.0, E[g]=2,                    g(s')=2
    const double expected = std::abs(2.0 * (-0.7 + 1.0) + 1.5 * (0.5 + 1.0) + 3.0 * 0.0) / 3.0;
    EXPECT_NEAR(model_loss(d, Discretizer::tabular(2, 2), w, model, g), expected, 1e-14);
}

TEST(ModelLoss, TrueModelPopulationLossVanishes) {
    std::mt19937_64 rng(61);
    const auto mdp = testgen::mdp(4, 3, 0.9, rng);
    const auto mu = testgen::simplex(12, rng);
    const auto w = testgen::simplex(12, rng);
    const auto g = testgen::simplex(4, rng);
    EXPECT_EQ(population_model_loss(mdp, mdp, mu, w, g), 0.0);
}

TEST(ModelLoss, AnalyticModeRejectsUnsupportedPairs) {
    Lqr1DParams p;
    const LqrTrueDynamics clipped{p};
    const auto d = toy_continuous();
    const auto w = hand_weights(1.0, 1.0);
    EXPECT_THROW(model_loss(d, two_bins(), w, clipped, QuadraticValueFn{-1.0, 0.0}), InvalidArgument);
    // Monte-Carlo mode works for the same pair
    EXPECT_NO_THROW(model_loss(d, two_bins(), w, clipped, QuadraticValueFn{-1.0, 0.0},
                               {ExpectationMode::monte_carlo, 16, 3}));
}

TEST(ModelLoss, GaussianAnalyticMatchesMonteCarlo) {
    Lqr1DParams p;
    p.state_lo = -std::numeric_limits<double>::infinity();
    p.state_hi = std::numeric_limits<double>::infinity();
    const LqrTrueDynamics gaussian{p};
    const auto d = toy_continuous();
    const auto w = hand_weights(1.0, 0.5);
    const QuadraticValueFn g{-0.7, 0.2};
    const double exact = model_loss(d, two_bins(), w, gaussian, g);
    const double mc = model_loss(d, two_bins(), w, gaussian, g, {ExpectationMode::monte_carlo, 200000, 8});
    EXPECT_NEAR(mc, exact, 0.01);
}

TEST(SupModelLoss, SingletonFiniteClassEqualsModelLoss) {
    const auto d = toy_continuous();
    const auto w = hand_weights(1.2, 0.4);
    const QuadraticValueFn g{-1.0, 0.3};
    const FiniteClass<QuadraticValueFn> cls{{g}};
    EXPECT_EQ(sup_model_loss(d, two_bins(), w, ShiftModel{}, cls), model_loss(d, two_bins(), w, ShiftModel{}, g));
    EXPECT_THROW(sup_model_loss(d, two_bins(), w, ShiftModel{}, FiniteClass<QuadraticValueFn>{}), InvalidArgument);
}

TEST(SupModelLoss, FiniteClassIsMaximumOverMembers) {
    const auto d = toy_continuous();
    const auto w = hand_weights(1.2, 0.4);
    std::vector<QuadraticValueFn> members{{-1.0, 0.0}, {0.5, 1.0}, {-3.0, 2.0}};
    double best = 0.0;
    for (const auto& g : members) best = std::max(best, model_loss(d, two_bins(), w, ShiftModel{}, g));
    EXPECT_EQ(sup_model_loss(d, two_bins(), w, ShiftModel{}, FiniteClass<QuadraticValueFn>{members}), best);
}

TEST(SupModelLoss, LinearSpanSupIsAttainedAndNeverExceeded) {
    const auto d = toy_continuous();
    const auto disc = two_bins();
    const auto w = hand_weights(1.2, 0.4);
    const double sup = sup_model_loss(d, disc, w, ShiftModel{}, LinearSpanClass<PolyBasis>{});
    const auto mean = mean_feature_difference(d, disc, w, ShiftModel{}, PolyBasis{});
    std::mt19937_64 rng(62);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 500; ++trial) {
        numvec theta(3);
        double norm = 0.0;
        for (auto& t : theta) t = z(rng), norm += t * t;
        for (auto& t : theta) t /= std::sqrt(norm);
        const auto g = [&](double s) {
            const auto f = PolyBasis{}(s);
            return theta[0] * f[0] + theta[1] * f[1] + theta[2] * f[2];
        };
        EXPECT_LE(model_loss(d, disc, w, ShiftModel{}, g), sup + 1e-12);
    }
    const auto attain = [&](double s) {
        const auto f = PolyBasis{}(s);
        return (mean[0] * f[0] + mean[1] * f[1] + mean[2] * f[2]) / sup;
    };
    EXPECT_NEAR(model_loss(d, disc, w, ShiftModel{}, attain), sup, 1e-12);
}

TEST(SupModelLoss, RkhsVanishesWhenModelReproducesObservations) {
    const auto d = toy_continuous();
    LookupModel model;
    for (const auto& r : d.records) model.table.emplace_back(r.s, r.s_next);
    EXPECT_NEAR(sup_model_loss(d, two_bins(), hand_weights(1.0, 2.0), model, RkhsBallClass{KernelSpec(0.5)}), 0.0,
                1e-7);
}

TEST(SupModelLoss, RkhsMatchesLiteralDoubleLoop) {
    std::mt19937_64 rng(63);
    const auto model = testgen::mdp(3, 2, 0.9, rng);
    const auto truth = testgen::sibling(model, rng);
    const auto mu = testgen::simplex(6, rng);
    Rng sampler = derive_rng(63);
    const auto d = sample_tabular_transitions(truth, mu, 6, sampler);
    const numvec w{0.5, 1.0, 2.0, 0.0, 1.5, 0.7};
    const TruncatedRatio tw{w, 5.0, TruncationMode::indicator};
    const KernelSpec k(0.8);
    EXPECT_NEAR(sup_model_loss(d, Discretizer::tabular(3, 2), tw, model, RkhsBallClass{k}),
                rkhs_double_loop(d, model, w, k), 1e-12);
}

TEST(SupModelLoss, RkhsDominatesProjectedGradientAscent) {
    const auto d = toy_continuous();
    const auto disc = two_bins();
    const auto w = hand_weights(1.2, 0.4);
    const KernelSpec k(0.6);
    const double sup = sup_model_loss(d, disc, w, ShiftModel{}, RkhsBallClass{k});

    // g = sum_j alpha_j K(c_j, .) with alpha^T K alpha <= 1
    std::mt19937_64 rng(64);
    numvec centers(12);
    for (auto& c : centers) c = testgen::uniform(-1.5, 1.5, rng);
    const Eigen::MatrixXd gram = gram_matrix(k, centers);
    Eigen::VectorXd alpha = Eigen::VectorXd::Random(12);
    const auto loss_of = [&](const Eigen::VectorXd& a) {
        const auto g = [&](double s) {
            double v = 0.0;
            for (std::size_t j = 0; j < centers.size(); ++j) v += a[static_cast<Eigen::Index>(j)] * k(centers[j], s);
            return v;
        };
        return model_loss(d, disc, w, ShiftModel{}, g);
    };
    // the loss is |c^T alpha|, so its gradient is sign(c^T alpha) c
    Eigen::VectorXd c(12);
    for (Eigen::Index j = 0; j < 12; ++j) {
        double acc = 0.0;
        for (const auto& rec : d.records) {
            const double wt = w[disc.bin(rec.s, rec.a)];
            acc += wt * (k(centers[static_cast<std::size_t>(j)], rec.s + rec.a) -
                         k(centers[static_cast<std::size_t>(j)], rec.s_next));
        }
        c[j] = acc / static_cast<double>(d.size());
    }
    double best = 0.0;
    for (int step = 0; step < 200; ++step) {
        const double sign = c.dot(alpha) >= 0.0 ? 1.0 : -1.0;
        alpha += 0.5 * sign * c;
        const double norm = std::sqrt(alpha.dot(gram * alpha));
        if (norm > 1.0) alpha /= norm;
        best = std::max(best, loss_of(alpha));
    }
    EXPECT_GT(best, 0.0);
    EXPECT_LE(best, sup + 1e-6);
}

TEST(SupModelLoss, RkhsIsOrderInvariantAndLinearInWeights) {
    const auto d = toy_continuous();
    const auto disc = two_bins();
    const RkhsBallClass cls{KernelSpec(0.7)};
    const double base = sup_model_loss(d, disc, hand_weights(1.0, 0.3), ShiftModel{}, cls);
    auto shuffled = d;
    std::mt19937_64 rng(65);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
        EXPECT_NEAR(sup_model_loss(shuffled, disc, hand_weights(1.0, 0.3), ShiftModel{}, cls), base, 1e-12);
    }
    EXPECT_NEAR(sup_model_loss(d, disc, hand_weights(3.0, 0.9), ShiftModel{}, cls), 3.0 * base, 1e-12);
}

TEST(MismatchPenalty, HandBuiltThreeBins) {
    // ratios 2, 10, 70
    const numvec rho{0.5, 0.3, 0.2};
    const numvec mu{0.25, 0.03, 0.2 / 70.0};
    EXPECT_NEAR(mismatch_penalty(rho, mu, 50.0, 10.0), 2.0, 1e-12);
}

TEST(MismatchPenalty, LimitsAndUnsupportedBins) {
    const numvec rho{0.5, 0.3, 0.2};
    const numvec mu{0.25, 0.03, 0.2 / 70.0};
    EXPECT_EQ(mismatch_penalty(rho, mu, 1e12, 10.0), 0.0);
    EXPECT_EQ(mismatch_penalty(numvec{1.0, 0.0}, numvec{0.0, 1.0}, 50.0, 10.0), 10.0);
    EXPECT_THROW(mismatch_penalty(rho, mu, 0.0, 10.0), InvalidArgument);
}

TEST(LowerBound, Arithmetic) {
    const auto r = lower_bound(8.1, 0.2, 0.3, 0.9);
    EXPECT_NEAR(r.lb, 3.1, 1e-12);
    EXPECT_EQ(lower_bound(8.1, 0.0, 0.0, 0.9).lb, 8.1);
    EXPECT_THROW(lower_bound(1.0, 0.0, 0.0, 1.0), InvalidArgument);
}

TEST(LowerBound, DecompositionAndMonotonicityOnRandomInputs) {
    std::mt19937_64 rng(66);
    for (int trial = 0; trial < 500; ++trial) {
        const double eta_m = testgen::uniform(-20.0, 20.0, rng);
        const double sup = testgen::uniform(0.0, 3.0, rng);
        const double pen = testgen::uniform(0.0, 3.0, rng);
        const double gamma = testgen::uniform(0.0, 0.99, rng);
        const auto r = lower_bound(eta_m, sup, pen, gamma);
        EXPECT_NEAR(r.lb + (r.sup_loss + r.mismatch_penalty) / (1.0 - gamma), r.eta_model, 1e-10);
        EXPECT_LE(lower_bound(eta_m, sup, pen + testgen::uniform(0.0, 1.0, rng), gamma).lb, r.lb);
    }
}

TEST(StatisticalCorrection, Arithmetic) {
    const ClassSizes sizes{10, 10, 10};
    EXPECT_NEAR(confidence_log_term(sizes, 0.1), std::log(20000.0), 1e-12);
    const double c = statistical_correction(5000, 50.0, sizes, 0.1, 10.0);
    EXPECT_NEAR(c, 2.0 * 10.0 * std::sqrt(50.0 * std::log(20000.0) / 5000.0), 1e-12);
    EXPECT_NEAR(c, 6.294, 1e-3);
}

TEST(StatisticalCorrection, ScalingInSampleSize) {
    const ClassSizes sizes{3, 4, 5};
    const double c1 = statistical_correction(1000, 20.0, sizes, 0.05, 7.0);
    EXPECT_NEAR(statistical_correction(2000, 20.0, sizes, 0.05, 7.0), c1 / std::sqrt(2.0), 1e-12);
    EXPECT_LT(statistical_correction(1000000000000ull, 20.0, sizes, 0.05, 7.0), 0.01);
    EXPECT_THROW(statistical_correction(0, 20.0, sizes, 0.05, 7.0), InvalidArgument);
    EXPECT_THROW(statistical_correction(10, 20.0, sizes, 1.0, 7.0), InvalidArgument);
}

TEST(StatisticalCorrection, ConcentrationEventHoldsOnResampledData) {
    std::mt19937_64 gen(67);
    const auto truth = testgen::mdp(3, 2, 0.9, gen);
    const auto model = testgen::sibling(truth, gen);
    const auto mu = testgen::simplex(6, gen);
    const auto pi = testgen::policy(3, 2, gen);
    const double zeta = 5.0;
    const double v_max = 1.0 / (1.0 - truth.gamma());
    const auto w = truncated_ratio(exact_occupancy(model, pi).mass, mu, zeta);
    const TableFn g{exact_value(truth, pi).value};
    const double population = population_model_loss(truth, model, mu, w.weight, g.value);
    const double correction = statistical_correction(5000, zeta, {}, 0.1, v_max);
    const auto disc = Discretizer::tabular(3, 2);
    int failures = 0;
    for (int run = 0; run < 200; ++run) {
        Rng rng = derive_rng(67, static_cast<std::uint64_t>(run));
        const auto d = sample_tabular_transitions(truth, mu, 5000, rng);
        if (std::abs(model_loss(d, disc, w, model, g) - population) > correction) ++failures;
    }
    EXPECT_LE(failures, 40);
}

TEST(LowerBoundGuarantee, PopulationInequalityOnRandomInstances) {
    std::mt19937_64 rng(68);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t S = 3 + trial % 3, A = 2;
        const auto truth = testgen::mdp(S, A, testgen::uniform(0.5, 0.95, rng), rng, trial % 2 == 1);
        const auto model = testgen::sibling(truth, rng, trial % 2 == 1);
        const auto pi = testgen::policy(S, A, rng);
        const auto mu = testgen::simplex(S * A, rng, trial % 4 == 3);
        const double zeta = testgen::uniform(1.0, 10.0, rng);
        const double gamma = truth.gamma();
        const double v_max = 1.0 / (1.0 - gamma);

        std::vector<ValueTable> values{exact_value(truth, pi)};
        for (int k = 0; k < 3; ++k) {
            numvec v(S);
            for (auto& x : v) x = testgen::uniform(0.0, v_max, rng);
            values.push_back({v});
        }
        const auto rho_model = exact_occupancy(model, pi).mass;
        const auto w = truncated_ratio(rho_model, mu, zeta);
        double sup = 0.0;
        for (const auto& g : values) sup = std::max(sup, population_model_loss(truth, model, mu, w.weight, g.value));
        const double pen = mismatch_penalty(rho_model, mu, zeta, v_max);
        const auto report = lower_bound(eta(model, pi), sup, pen, gamma);
        const double eps_v = local_value_error(truth, model, values, pi, mu, mu, zeta);
        EXPECT_GE(eta(truth, pi), report.lb - eps_v / (1.0 - gamma) - 1e-9);
    }
}

TEST(LowerBoundGuarantee, TrueModelWithExactDensitiesRecoversEta) {
    std::mt19937_64 rng(69);
    for (int trial = 0; trial < 20; ++trial) {
        const auto truth = testgen::mdp(4, 2, 0.8, rng);
        const auto pi = testgen::policy(4, 2, rng);
        const auto rho = exact_occupancy(truth, pi).mass;
        const auto w = truncated_ratio(rho, rho, 2.0);
        const double sup = population_model_loss(truth, truth, rho, w.weight, exact_value(truth, pi).value);
        const double pen = mismatch_penalty(rho, rho, 2.0, 5.0);
        EXPECT_EQ(sup, 0.0);
        EXPECT_EQ(pen, 0.0);
        EXPECT_NEAR(lower_bound(eta(truth, pi), sup, pen, 0.8).lb, eta(truth, pi), 1e-12);
    }
}
