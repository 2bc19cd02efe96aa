#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace locmis;

namespace {

/// Deterministic model returning a stored next state for each (s, a).
struct LookupModel {
    std::vector<TransitionRecord> table;
    double next(double s, double a) const {
        for (const auto& r : table)
            if (r.s == s && r.a == a) return r.s_next;
        throw InvalidArgument("pair not in lookup table");
    }
};

struct LinearModel {
    double a_coef = 1.0;
    double b_coef = 0.0;
    double next(double s, double a) const { return a_coef * s + b_coef * a; }
};

/// Indicator features over (s, a, s') of a tabular problem.
struct OneHot {
    std::size_t S = 0;
    std::size_t A = 0;
    numvec operator()(double s, double a, double x) const {
        numvec f(S * A * S, 0.0);
        f[(static_cast<std::size_t>(s) * A + static_cast<std::size_t>(a)) * S + static_cast<std::size_t>(x)] = 1.0;
        return f;
    }
};

TransitionDataset toy(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TransitionDataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = testgen::uniform(-1.0, 1.0, rng);
        const double a = testgen::uniform(-2.0, 2.0, rng);
        d.records.push_back({0, static_cast<std::int64_t>(i), s, a, 0.0, 0.9 * s - 0.4 * a + testgen::uniform(-0.1, 0.1, rng)});
    }
    return d;
}

double triple_k(const KernelSpec& k, double s1, double a1, double x1, double s2, double a2, double x2) {
    const double sq = (s1 - s2) * (s1 - s2) + (a1 - a2) * (a1 - a2) + (x1 - x2) * (x1 - x2);
    return std::exp(-sq / (2.0 * k.bandwidth * k.bandwidth));
}

} // namespace

TEST(MmlScore, ScoreIsNegatedLossAndNegativeLossIsRejected) {
    const auto s = MmlScore::from_loss(2.5);
    EXPECT_EQ(s.score, -2.5);
    EXPECT_THROW(MmlScore::from_loss(-1e-3), InvalidArgument);
}

TEST(PolynomialBasis, Dimensions) {
    EXPECT_EQ(PolynomialBasis{MmlBasisKind::squared}(0.1, 0.2, 0.3).size(), 7u);
    EXPECT_EQ(PolynomialBasis{MmlBasisKind::polynomial2}(0.1, 0.2, 0.3).size(), 10u);
    const auto f = PolynomialBasis{MmlBasisKind::polynomial2}(2.0, 3.0, 5.0);
    EXPECT_EQ(f, (numvec{2.0, 3.0, 5.0, 4.0, 6.0, 10.0, 9.0, 15.0, 25.0, 1.0}));
}

TEST(MmlLinear, ReproducingModelHasZeroClosedFormLoss) {
    const auto d = toy(40, 71);
    const LookupModel model{d.records};
    for (auto kind : {MmlBasisKind::squared, MmlBasisKind::polynomial2})
        EXPECT_EQ(mml_linear_loss(d, model, PolynomialBasis{kind}).loss, 0.0);
}

TEST(MmlLinear, GradientAscentNeverExceedsClosedForm) {
    std::mt19937_64 rng(72);
    for (int trial = 0; trial < 30; ++trial) {
        const auto d = toy(50, 100 + static_cast<std::uint64_t>(trial));
        const LinearModel model{testgen::uniform(-2.0, 2.0, rng), testgen::uniform(-2.0, 2.0, rng)};
        const PolynomialBasis basis{trial % 2 ? MmlBasisKind::squared : MmlBasisKind::polynomial2};
        const double closed = mml_linear_loss(d, model, basis).loss;
        MmlLinearConfig cfg;
        cfg.method = MmlLinearMethod::gradient;
        const double ascent = mml_linear_loss(d, model, basis, cfg).loss;
        EXPECT_LE(ascent, closed + 1e-6);
        // with enough steps the ascent reaches the sphere and attains the sup
        cfg.steps = 20000;
        cfg.rate = 0.05;
        EXPECT_NEAR(mml_linear_loss(d, model, basis, cfg).loss, closed, 1e-6 + 1e-6 * closed);
    }
}

TEST(MmlLinear, ObjectiveIsLinearInCoefficients) {
    const auto d = toy(30, 73);
    const LinearModel model{1.3, -0.2};
    const PolynomialBasis basis{};
    numvec t1(7), t2(7), sum(7);
    std::mt19937_64 rng(73);
    for (std::size_t j = 0; j < 7; ++j) {
        t1[j] = testgen::uniform(-1.0, 1.0, rng);
        t2[j] = testgen::uniform(-1.0, 1.0, rng);
        sum[j] = 2.0 * t1[j] - t2[j];
    }
    EXPECT_NEAR(mml_linear_objective(d, model, basis, sum),
                2.0 * mml_linear_objective(d, model, basis, t1) - mml_linear_objective(d, model, basis, t2), 1e-12);
    EXPECT_THROW(mml_linear_objective(d, model, basis, numvec(3, 0.0)), InvalidArgument);
}

TEST(MmlLinear, OneHotEmbeddingReproducesHardInstancePopulationLoss) {
    const HardInstanceSpec spec(3, 0.9);
    const auto truth = build_true_hard_mdp(spec);
    const std::size_t S = spec.num_states(), A = spec.num_actions();
    const numvec mu(S * A, 1.0 / static_cast<double>(S * A));
    Rng rng = derive_rng(74);
    const auto data = sample_tabular_transitions(truth, mu, 200000, rng);

    std::mt19937_64 gen(74);
    for (int trial = 0; trial < 3; ++trial) {
        numvec t(3);
        for (auto& x : t) x = testgen::uniform(0.0, 1.0, gen);
        const double norm = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
        for (auto& x : t) x /= norm;
        const ThetaDynamics theta{t};
        const auto model = build_theta_mdp(spec, theta);
        for (std::size_t x = 1; x <= 3; ++x) {
            // h(s, a, s') = w_x(s, a) V^{pi_x}(s')
            const auto w = mml_ratio(spec, truth, x);
            const auto v = exact_value(truth, arm_policy(spec, x));
            numvec coef(S * A * S);
            for (std::size_t sa = 0; sa < S * A; ++sa)
                for (std::size_t s2 = 0; s2 < S; ++s2) coef[sa * S + s2] = w[sa] * v.value[s2];
            const double empirical = std::abs(mml_linear_objective(data, model, OneHot{S, A}, coef));

            // per-record terms for the Monte-Carlo error band
            double m1 = 0.0, m2 = 0.0;
            for (const auto& r : data.records) {
                const auto s = static_cast<std::size_t>(r.s), a = static_cast<std::size_t>(r.a);
                const double term = w[s * A + a] * (model.expected_next(s, a, v.value) - v.value[static_cast<std::size_t>(r.s_next)]);
                m1 += term;
                m2 += term * term;
            }
            const double n = static_cast<double>(data.size());
            const double se = std::sqrt(std::max(0.0, m2 / n - (m1 / n) * (m1 / n)) / n);
            EXPECT_NEAR(empirical, mml_population_loss(spec, theta, x), 4.0 * se + 1e-9);
        }
    }
}

TEST(MmlRkhs, ReproducingModelHasZeroLoss) {
    const auto d = toy(25, 75);
    const LookupModel model{d.records};
    EXPECT_NEAR(mml_rkhs_loss(d, model, KernelSpec(0.5)).loss, 0.0, 1e-10);
}

TEST(MmlRkhs, MatchesDirectDoubleLoopOnFourRecords) {
    const auto d = toy(4, 76);
    const LinearModel model{1.1, 0.3};
    const KernelSpec k(0.7);
    double total = 0.0;
    for (const auto& ri : d.records)
        for (const auto& rj : d.records) {
            const double xi = model.next(ri.s, ri.a), xj = model.next(rj.s, rj.a);
            total += triple_k(k, ri.s, ri.a, xi, rj.s, rj.a, xj) + triple_k(k, ri.s, ri.a, ri.s_next, rj.s, rj.a, rj.s_next) -
                     triple_k(k, ri.s, ri.a, xi, rj.s, rj.a, rj.s_next) - triple_k(k, ri.s, ri.a, ri.s_next, rj.s, rj.a, xj);
        }
    EXPECT_NEAR(mml_rkhs_loss(d, model, k).loss, total / 4.0, 1e-12);
}

TEST(MmlRkhs, TabularModelUsesExactSupport) {
    std::mt19937_64 gen(77);
    const auto model = testgen::mdp(3, 2, 0.9, gen);
    const auto truth = testgen::sibling(model, gen);
    Rng rng = derive_rng(77);
    const auto d = sample_tabular_transitions(truth, testgen::simplex(6, gen), 5, rng);
    const KernelSpec k(1.3);
    double total = 0.0;
    for (const auto& ri : d.records)
        for (const auto& rj : d.records) {
            const auto pi = model.next_distribution(static_cast<std::size_t>(ri.s), static_cast<std::size_t>(ri.a));
            const auto pj = model.next_distribution(static_cast<std::size_t>(rj.s), static_cast<std::size_t>(rj.a));
            total += triple_k(k, ri.s, ri.a, ri.s_next, rj.s, rj.a, rj.s_next);
            for (std::size_t x = 0; x < 3; ++x) {
                const double dx = static_cast<double>(x);
                total -= pi[x] * triple_k(k, ri.s, ri.a, dx, rj.s, rj.a, rj.s_next);
                total -= pj[x] * triple_k(k, ri.s, ri.a, ri.s_next, rj.s, rj.a, dx);
                for (std::size_t y = 0; y < 3; ++y)
                    total += pi[x] * pj[y] * triple_k(k, ri.s, ri.a, dx, rj.s, rj.a, static_cast<double>(y));
            }
        }
    EXPECT_NEAR(mml_rkhs_loss(d, model, k).loss, total / 5.0, 1e-12);
}

TEST(MmlRkhs, SymmetricUnderPermutation) {
    auto d = toy(30, 78);
    const LinearModel model{0.7, -0.5};
    const KernelSpec k = triple_bandwidth(d);
    const double base = mml_rkhs_loss(d, model, k).loss;
    std::mt19937_64 rng(78);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(d.records.begin(), d.records.end(), rng);
        EXPECT_NEAR(mml_rkhs_loss(d, model, k).loss, base, 1e-10 * std::max(1.0, base));
    }
}

TEST(MmlRkhs, SampledModelIsSeededAndNonnegative) {
    const auto d = toy(40, 79);
    const LqrTrueDynamics truth{Lqr1DParams{}};
    const KernelSpec k(0.5);
    const auto a = mml_rkhs_loss(d, truth, k, {8, 5});
    const auto b = mml_rkhs_loss(d, truth, k, {8, 5});
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_GE(a.loss, 0.0);
}

TEST(MmlRkhs, BetterModelScoresHigher) {
    const auto d = toy(60, 80);
    const KernelSpec k = triple_bandwidth(d);
    // the data follow s' ~ 0.9 s - 0.4 a
    const auto close = mml_rkhs_loss(d, LinearModel{0.9, -0.4}, k);
    const auto far = mml_rkhs_loss(d, LinearModel{-0.5, 1.0}, k);
    EXPECT_GT(close.score, far.score);
}

TEST(Subsample, StridedAndBounded) {
    const auto d = toy(2500, 81);
    const auto sub = subsample(d, 1000);
    EXPECT_LE(sub.size(), 1000u);
    EXPECT_EQ(sub.records.front(), d.records.front());
    EXPECT_EQ(subsample(d, 5000).size(), 2500u);
}
