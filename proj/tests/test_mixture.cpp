#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gmmvs/kmeans.hpp"
#include "gmmvs/mixture.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gmmvs;

namespace {

GmmModel intercept_model(const std::vector<double>& weights, const std::vector<std::vector<double>>& means,
                         const std::vector<std::vector<double>>& vars) {
    GmmModel m;
    m.k = weights.size();
    m.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    const std::size_t N = means[0].size();
    m.subset = TimepointSet::range(N);
    for (std::size_t n = 0; n < N; ++n) {
        TimepointParams tp{Eigen::MatrixXd(1, static_cast<Eigen::Index>(m.k)), Eigen::VectorXd(static_cast<Eigen::Index>(m.k))};
        for (std::size_t k = 0; k < m.k; ++k) {
            tp.coef(0, static_cast<Eigen::Index>(k)) = means[k][n];
            tp.variance(static_cast<Eigen::Index>(k)) = vars[k][n];
        }
        m.params.push_back(tp);
    }
    return m;
}

}  // namespace

TEST(Bic, LiteralFormula) {
    EXPECT_NEAR(bic_of(-10.0, 3, 10), 16.907755278982137, 1e-12);
    EXPECT_ERROR_KIND(bic_of(0.0, 1, 0), ErrorKind::InvalidArgument);
}

TEST(Bic, ParameterCount) {
    const auto m = intercept_model({0.5, 0.5}, {{0, 0, 0}, {1, 1, 1}}, {{1, 1, 1}, {1, 1, 1}});
    // (K-1) + K * sum(p_n + 2) with p_n = 0, N = 3, K = 2
    EXPECT_EQ(m.n_params(), 1u + 2u * 6u);
}

TEST(Density, GaussianLogpdf) {
    EXPECT_NEAR(gaussian_logpdf(1.0, 0.0, 4.0), -0.5 * std::log(2 * std::numbers::pi * 4.0) - 1.0 / 8.0, 1e-15);
}

TEST(Density, LoglikMatchesDiagonalMixtureOracle) {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd y = oracle::clustered_matrix(rng, 30, 3, 2);
    const auto d = oracle::make_dataset(y);
    const std::vector<double> w{0.3, 0.7};
    const std::vector<std::vector<double>> mu{{0.5, -1.0, 2.0}, {1.5, 0.0, -3.0}};
    const std::vector<std::vector<double>> var{{1.0, 2.0, 0.5}, {3.0, 0.25, 1.5}};
    const auto model = intercept_model(w, mu, var);
    const double expected = oracle::diag_gmm_loglik(y, w, mu, var);
    EXPECT_NEAR(loglik(model, d), expected, 1e-9 * std::abs(expected));
}

TEST(Density, PosteriorRowsSumToOneUnderExtremeSeparation) {
    Eigen::MatrixXd y(2, 1);
    y << -1e3, 1e3;
    const auto d = oracle::make_dataset(y);
    const auto model = intercept_model({0.5, 0.5}, {{-1e3}, {1e3}}, {{1e-4}, {1e-4}});
    const auto post = e_step(model, d);
    for (Eigen::Index s = 0; s < 2; ++s) EXPECT_NEAR(post.row(s).sum(), 1.0, 1e-12);
    EXPECT_EQ(map_assign(post), (std::vector<int>{0, 1}));
}

TEST(MStep, WeightedNormalEquationsOracle) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    const int S = 25;
    Eigen::MatrixXd y(S, 1), x(S, 1), post(S, 2);
    for (int s = 0; s < S; ++s) {
        x(s, 0) = z(rng);
        y(s, 0) = 1.0 + 2.0 * x(s, 0) + z(rng);
        post(s, 0) = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        post(s, 1) = 1.0 - post(s, 0);
    }
    const auto d = oracle::make_dataset(y, {x});
    const auto model = m_step(d, d.all_timepoints(), post);
    for (int c = 0; c < 2; ++c) {
        long double sw = 0, swx = 0, swxx = 0, swy = 0, swxy = 0;
        for (int s = 0; s < S; ++s) {
            const long double w = post(s, c), xv = x(s, 0), yv = y(s, 0);
            sw += w, swx += w * xv, swxx += w * xv * xv, swy += w * yv, swxy += w * xv * yv;
        }
        const auto beta = oracle::solve({{sw, swx}, {swx, swxx}}, {swy, swxy});
        ASSERT_TRUE(beta);
        EXPECT_NEAR(model.params[0].coef(0, c), static_cast<double>((*beta)[0]), 1e-10);
        EXPECT_NEAR(model.params[0].coef(1, c), static_cast<double>((*beta)[1]), 1e-10);
        long double rss = 0;
        for (int s = 0; s < S; ++s) {
            const long double r = y(s, 0) - (*beta)[0] - (*beta)[1] * x(s, 0);
            rss += post(s, c) * r * r;
        }
        EXPECT_NEAR(model.params[0].variance(c), static_cast<double>(rss / sw), 1e-10);
        EXPECT_NEAR(model.weights(c), static_cast<double>(sw / S), 1e-14);
    }
}

TEST(MStep, SingleComponentEqualsOls) {
    Eigen::MatrixXd y(4, 1), x(4, 1);
    x << 0, 1, 2, 3;
    y << 1, 3, 5, 7;
    const auto d = oracle::make_dataset(y, {x});
    const auto model = m_step(d, d.all_timepoints(), Eigen::MatrixXd::Ones(4, 1));
    EXPECT_NEAR(model.params[0].coef(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(model.params[0].coef(1, 0), 2.0, 1e-12);
    // Exact fit: variance sits on the floor.
    EXPECT_DOUBLE_EQ(model.params[0].variance(0), variance_floor(d, 0));
}

TEST(MStep, TinyComponentIsDegenerate) {
    Eigen::MatrixXd y(5, 1);
    y << 0, 1, 2, 3, 4;
    const auto d = oracle::make_dataset(y);
    Eigen::MatrixXd post = Eigen::MatrixXd::Zero(5, 2);
    post.col(0).setOnes();
    post(4, 0) = 0.0;
    post(4, 1) = 1.0;  // effective size 1 < p_n + 2
    EXPECT_ERROR_KIND(m_step(d, d.all_timepoints(), post), ErrorKind::DegenerateComponent);
}

TEST(Em, LikelihoodAscentAndNormalisedPosteriors) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t K = 1 + trial % 3;
        const auto d = oracle::make_dataset(oracle::clustered_matrix(rng, 40, 3, K, 2.0));
        const auto init = kmeans_init(d, d.all_timepoints(), K, static_cast<std::uint64_t>(trial), {5, 300, 1});
        const auto fit = fit_em(d, d.all_timepoints(), K, init);
        for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
            EXPECT_GE(fit.loglik_trace[i], fit.loglik_trace[i - 1] - 1e-8);
        for (Eigen::Index s = 0; s < fit.posteriors.rows(); ++s) EXPECT_NEAR(fit.posteriors.row(s).sum(), 1.0, 1e-10);
        EXPECT_TRUE(fit.converged);
        EXPECT_NEAR(fit.bic, bic_of(fit.loglik, fit.n_params, 40), 1e-9);
    }
}

TEST(Em, PermutingInitialLabelsPermutesTheFit) {
    std::mt19937_64 rng(4);
    const auto d = oracle::make_dataset(oracle::clustered_matrix(rng, 45, 2, 3, 1.5));
    const auto init = kmeans_init(d, d.all_timepoints(), 3, 1);
    const std::vector<int> perm{2, 0, 1};
    InitAssignment permuted = init;
    for (auto& l : permuted.labels) l = perm[static_cast<std::size_t>(l)];
    const auto a = fit_em(d, d.all_timepoints(), 3, init);
    const auto b = fit_em(d, d.all_timepoints(), 3, permuted);
    EXPECT_NEAR(a.loglik, b.loglik, 1e-9 * std::abs(a.loglik));
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(a.model.weights(c), b.model.weights(perm[static_cast<std::size_t>(c)]), 1e-9);
        EXPECT_NEAR(a.model.params[1].coef(0, c), b.model.params[1].coef(0, perm[static_cast<std::size_t>(c)]), 1e-8);
    }
}

TEST(Em, FinalLoglikMatchesOracleAtFittedParameters) {
    std::mt19937_64 rng(13);
    const Eigen::MatrixXd y = oracle::clustered_matrix(rng, 50, 4, 2);
    const auto d = oracle::make_dataset(y);
    const auto fit = fit_em(d, d.all_timepoints(), 2, kmeans_init(d, d.all_timepoints(), 2, 3));
    std::vector<double> w{fit.model.weights(0), fit.model.weights(1)};
    std::vector<std::vector<double>> mu(2, std::vector<double>(4)), var = mu;
    for (int c = 0; c < 2; ++c)
        for (int n = 0; n < 4; ++n) {
            mu[c][n] = fit.model.params[n].coef(0, c);
            var[c][n] = fit.model.params[n].variance(c);
        }
    const double expected = oracle::diag_gmm_loglik(y, w, mu, var);
    EXPECT_NEAR(fit.loglik, expected, 1e-9 * std::abs(expected));
}

TEST(SelectK, RecoversWellSeparatedGroups) {
    std::mt19937_64 rng(17);
    const auto d = oracle::make_dataset(oracle::clustered_matrix(rng, 90, 3, 3, 5.0));
    SelectKOptions opts;
    opts.k_range = {1, 5};
    opts.n_restarts = 10;
    const auto fit = select_k(d, d.all_timepoints(), 7, opts);
    EXPECT_EQ(fit.model.k, 3u);
    const auto again = select_k(d, d.all_timepoints(), 7, opts);
    EXPECT_EQ(fit.map_labels, again.map_labels);
    EXPECT_EQ(fit.bic, again.bic);
}

TEST(SelectK, SingleComponentAlwaysSucceeds) {
    std::mt19937_64 rng(1);
    const auto d = oracle::make_dataset(oracle::clustered_matrix(rng, 12, 2, 2));
    SelectKOptions opts;
    opts.k_range = {1, 1};
    const auto fit = select_k(d, d.all_timepoints(), 0, opts);
    EXPECT_EQ(fit.model.k, 1u);
    for (auto l : fit.map_labels) EXPECT_EQ(l, 0);
}

TEST(SelectK, AllFitsFailedWhenEveryKIsImpossible) {
    Eigen::MatrixXd y(3, 1);
    y << 0, 1, 2;
    const auto d = oracle::make_dataset(y);
    SelectKOptions opts;
    opts.k_range = {4, 5};
    EXPECT_ERROR_KIND(select_k(d, d.all_timepoints(), 0, opts), ErrorKind::AllFitsFailed);
    EXPECT_ERROR_KIND(select_k(d, TimepointSet(), 0, opts), ErrorKind::EmptySubset);
}
