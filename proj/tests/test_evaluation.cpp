#include <random>

#include <gtest/gtest.h>

#include "gmmvs/evaluation.hpp"
#include "gmmvs/kmeans.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gmmvs;

TEST(Ari, IdentityPermutationAndSymmetry) {
    const Partition a{0, 0, 1, 1, 2, 2, 2};
    const Partition relabeled{5, 5, 3, 3, 9, 9, 9};
    EXPECT_EQ(ari(a, a), 1.0);
    EXPECT_EQ(ari(a, relabeled), 1.0);
    const Partition b{0, 1, 0, 1, 2, 2, 0};
    EXPECT_EQ(ari(a, b), ari(b, a));
}

TEST(Ari, AlternatingPairMatchesPairCounting) {
    const Partition a{1, 1, 2, 2}, b{1, 2, 1, 2};
    // Pairs: no pair together in both; 2 together in each; 6 total.
    // expected = 2*2/6, max = 2, index = 0 -> (0 - 2/3) / (2 - 2/3) = -0.5
    EXPECT_NEAR(ari(a, b), -0.5, 1e-15);
    EXPECT_NEAR(ari(a, b), oracle::ari_pairs(a, b), 1e-15);
}

TEST(Ari, RandomInstancesMatchPairCounting) {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        const int S = 2 + static_cast<int>(rng() % 29);
        std::uniform_int_distribution<int> la(0, 1 + static_cast<int>(rng() % 4)), lb(0, 1 + static_cast<int>(rng() % 4));
        Partition a(S), b(S);
        for (int s = 0; s < S; ++s) a[s] = la(rng), b[s] = lb(rng);
        EXPECT_NEAR(ari(a, b), oracle::ari_pairs(a, b), 1e-12);
    }
}

TEST(Ari, TrivialPartitionsAndErrors) {
    EXPECT_EQ(ari({0, 0, 0}, {1, 1, 1}), 1.0);
    EXPECT_EQ(ari({0}, {0}), 1.0);
    EXPECT_ERROR_KIND(ari({0, 1}, {0}), ErrorKind::LengthMismatch);
}

TEST(Rmse, HandValuesAndErrors) {
    Eigen::MatrixXd p(2, 2), r(2, 2);
    p << 1, 2, 3, 4;
    r << 1, 0, 3, 8;
    // squared errors 0, 4, 0, 16 -> sqrt(20 / 4)
    EXPECT_NEAR(rmse(p, r), std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(rmse(r, p), rmse(p, r), 0.0);
    EXPECT_EQ(rmse(p, p), 0.0);
    EXPECT_NEAR(rmse(p.array() + 0.25, p), 0.25, 1e-15);
    EXPECT_ERROR_KIND(rmse(p, Eigen::MatrixXd(2, 3)), ErrorKind::ShapeMismatch);
}

TEST(FittedValues, PosteriorWeightedComponentLines) {
    Eigen::MatrixXd y(2, 2), x0(2, 1);
    y << 1, 5, 2, 6;
    x0 << 0.5, -1.0;
    const auto d = oracle::make_dataset(y, {x0, Eigen::MatrixXd(2, 0)});
    FitResult fit;
    fit.model.k = 2;
    fit.model.weights = Eigen::Vector2d(0.5, 0.5);
    fit.model.subset = TimepointSet(std::vector<std::size_t>{0});
    TimepointParams tp{Eigen::MatrixXd(2, 2), Eigen::VectorXd::Ones(2)};
    tp.coef << 1.0, -1.0,  // intercepts
        2.0, 4.0;          // slopes
    fit.model.params = {tp};
    fit.posteriors.resize(2, 2);
    fit.posteriors << 0.25, 0.75, 1.0, 0.0;
    fit.map_labels = {1, 0};
    const auto soft = fitted_values(fit, d, d.all_timepoints(), true);
    // subject 0: 0.25*(1 + 2*0.5) + 0.75*(-1 + 4*0.5) = 0.5 + 0.75
    EXPECT_NEAR(soft(0, 0), 1.25, 1e-15);
    EXPECT_NEAR(soft(1, 0), 1.0 + 2.0 * -1.0, 1e-15);
    // Unselected point: intercept-only OLS is the column mean.
    EXPECT_NEAR(soft(0, 1), 5.5, 1e-12);
    EXPECT_NEAR(soft(1, 1), 5.5, 1e-12);
    const auto hard = fitted_values(fit, d, d.all_timepoints(), false, true);
    EXPECT_NEAR(hard(0, 0), 1.0, 1e-15);
    EXPECT_TRUE(std::isnan(hard(0, 1)));
}

TEST(Compare, IdenticalModelsGiveZeroDifferences) {
    std::mt19937_64 rng(3);
    const auto d = oracle::make_dataset(oracle::clustered_matrix(rng, 30, 2, 2));
    const auto fit = fit_em(d, d.all_timepoints(), 2, kmeans_init(d, d.all_timepoints(), 2, 1));
    SelectionResult sel;
    sel.selected = d.all_timepoints();
    sel.final_fit = fit;
    sel.full_fit = fit;
    const auto no_truth = compare_models(sel, d);
    EXPECT_FALSE(no_truth.ari_selected.has_value());
    EXPECT_EQ(no_truth.rmse_diff, 0.0);
    GroundTruth truth{Partition(30), d.outcomes()};
    for (int s = 0; s < 30; ++s) truth.labels[static_cast<std::size_t>(s)] = s % 2;
    const auto with_truth = compare_models(sel, d, truth);
    ASSERT_TRUE(with_truth.ari_diff.has_value());
    EXPECT_EQ(*with_truth.ari_diff, 0.0);
    EXPECT_EQ(with_truth.k_selected, 2u);
}
