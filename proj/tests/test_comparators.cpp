#include <gtest/gtest.h>

#include <cmath>

#include "mmp/comparators.hpp"
#include "mmp/soc.hpp"
#include "oracles.hpp"

using namespace mmp;

namespace {

MatchedBinaryTable three_subjects() {
  // d = (1, 0, 0) on a single set.
  BinaryMatrix x(3, 2);
  x << 1, 0, 0, 0, 1, 1;
  return MatchedBinaryTable(x);
}

}  // namespace

TEST(Gee, PointEstimatesAreMeanDifferences) {
  const auto t = soc::table();
  const auto r = gee_estimate(t);
  const auto m = t.column_means();
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(r.rho_hat(k), m(k) - m(5 + k));
  EXPECT_EQ(r.rho_hat(4), -29.0 / 74.0);
  EXPECT_EQ(r.rho_hat(0), 3.0 / 74.0);
}

TEST(Gee, SandwichVarianceByHand) {
  // MH: d takes +1 four times, -1 twelve times, 0 otherwise.
  const auto r = gee_estimate(soc::table());
  const double n = 74.0;
  const double mean = (4.0 - 12.0) / n;
  const double ss = 4.0 * std::pow(1.0 - mean, 2) + 12.0 * std::pow(-1.0 - mean, 2) + 58.0 * mean * mean;
  const double se = std::sqrt(ss / (n - 1.0) / n);
  EXPECT_NEAR(r.std_error(1), se, 1e-14);
  EXPECT_NEAR(r.interval_low(1), mean - kZ975 * se, 1e-14);
  EXPECT_NEAR(r.p_value(1), std::erfc(std::fabs(mean / se) / std::sqrt(2.0)), 1e-12);
}

TEST(Gee, IntervalIsCentred) {
  const auto r = gee_estimate(soc::table());
  for (Eigen::Index k = 0; k < r.K(); ++k) {
    EXPECT_LE(r.interval_low(k), r.rho_hat(k));
    EXPECT_GE(r.interval_high(k), r.rho_hat(k));
    EXPECT_NEAR(r.rho_hat(k) - r.interval_low(k), r.interval_high(k) - r.rho_hat(k), 1e-15);
  }
}

TEST(Gee, DegenerateOnZeroColumn) {
  const auto r = gee_estimate(soc::table());
  EXPECT_TRUE(r.degenerate[0]);  // specialty DD column is all zero
  EXPECT_FALSE(r.degenerate[1]);
  EXPECT_FALSE(r.degenerate[4]);
}

TEST(Gee, ZeroVarianceDifference) {
  BinaryMatrix x = BinaryMatrix::Zero(4, 2);
  x.col(0).setOnes();
  x.col(1).setOnes();
  const auto r = gee_estimate(MatchedBinaryTable(x));
  EXPECT_EQ(r.std_error(0), 0.0);
  EXPECT_EQ(r.interval_low(0), r.interval_high(0));
  EXPECT_TRUE(r.degenerate[0]);
  EXPECT_EQ(r.p_value(0), 1.0);
  EXPECT_EQ(r.joint_df, 0);
}

TEST(Gee, JointTestMatchesSingleSetWald) {
  BinaryMatrix x(5, 2);
  x << 1, 0, 1, 0, 0, 1, 1, 1, 0, 0;
  const auto r = gee_estimate(MatchedBinaryTable(x));
  EXPECT_EQ(r.joint_df, 1);
  const double z = r.rho_hat(0) / r.std_error(0);
  EXPECT_NEAR(r.joint_statistic, z * z, 1e-10);
  EXPECT_NEAR(r.joint_p_value, r.p_value(0), 1e-10);
}

TEST(Gee, NeedsTwoSubjects) {
  EXPECT_THROW(gee_estimate(MatchedBinaryTable(BinaryMatrix::Zero(1, 2))), std::invalid_argument);
}

TEST(Bootstrap, PointEstimateEqualsGee) {
  RngStream rng(3);
  const auto t = soc::table();
  const auto b = bootstrap_estimate(t, 2000, rng);
  const auto g = gee_estimate(t);
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_EQ(b.rho_hat(k), g.rho_hat(k));
}

TEST(Bootstrap, EnumerationOracleAtThreeSubjects) {
  // All 27 equally likely resamples of d = (1, 0, 0).
  const auto dist = oracle::bootstrap_mean_distribution({1, 0, 0});
  double exact_mean = 0.0;
  for (const auto& [v, w] : dist) exact_mean += v * w;
  EXPECT_NEAR(exact_mean, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(dist.front().second, 8.0 / 27.0, 1e-12);
  EXPECT_EQ(oracle::discrete_quantile(dist, 0.025), 0.0);
  EXPECT_EQ(oracle::discrete_quantile(dist, 0.975), 1.0);

  const auto t = three_subjects();
  RngStream rng(17);
  const auto draws = bootstrap_means(t, 20000, rng);
  EXPECT_NEAR(draws.col(0).mean(), exact_mean, 0.01);
  EXPECT_NEAR((draws.col(0).array() == 0.0).cast<double>().mean(), dist.front().second, 0.01);

  RngStream rng2(17);
  const auto r = bootstrap_estimate(t, 10000, rng2);
  EXPECT_EQ(r.interval_low(0), oracle::discrete_quantile(dist, 0.025));
  EXPECT_EQ(r.interval_high(0), oracle::discrete_quantile(dist, 0.975));
  EXPECT_FALSE(r.reject[0]);
}

TEST(Bootstrap, OneSidedOnSparseSet) {
  RngStream rng(5);
  const auto r = bootstrap_estimate(soc::table(), 10000, rng);
  // DD: d is never negative, so the lower percentile sits on zero.
  EXPECT_EQ(r.interval_low(0), 0.0);
  EXPECT_GT(r.interval_high(0), 0.0);
  EXPECT_FALSE(r.reject[0]);
  EXPECT_TRUE(r.reject[4]);
}

TEST(Bootstrap, PValuesAreHolmAdjusted) {
  RngStream rng(5);
  const auto r = bootstrap_estimate(soc::table(), 5000, rng);
  EXPECT_TRUE(r.p_value.isApprox(holm_adjust(r.raw_p_value)));
  for (Eigen::Index k = 0; k < r.K(); ++k) {
    EXPECT_GE(r.p_value(k), r.raw_p_value(k));
    EXPECT_LE(r.p_value(k), 1.0);
    EXPECT_GT(r.raw_p_value(k), 0.0);
  }
}

TEST(Bootstrap, Reproducible) {
  RngStream a(9), b(9);
  const auto x = bootstrap_means(soc::table(), 2500, a);
  const auto y = bootstrap_means(soc::table(), 2500, b);
  EXPECT_TRUE(x == y);
}

TEST(Bootstrap, IndependentOfWorkerCount) {
  RngStream rng(9);
  const auto t = soc::table();
  const Eigen::MatrixXd d = difference_matrix(t);
  const auto all = bootstrap_means(t, 2500, rng);
  // Recompute block 2 serially.
  RngStream local = rng.derive(2);
  for (long r = 2000; r < 2500; ++r) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(t.K());
    for (Eigen::Index i = 0; i < t.n(); ++i) acc += d.row(static_cast<Eigen::Index>(local.below(74))).transpose();
    ASSERT_TRUE(all.row(r).transpose().isApprox(acc / 74.0, 0.0)) << r;
  }
}

TEST(Bootstrap, Errors) {
  RngStream rng(1);
  EXPECT_THROW(bootstrap_estimate(soc::table(), 0, rng), std::invalid_argument);
}

TEST(Holm, KnownValues) {
  Eigen::VectorXd p(4);
  p << 0.01, 0.04, 0.03, 0.005;
  const auto h = holm_adjust(p);
  EXPECT_NEAR(h(3), 0.02, 1e-15);
  EXPECT_NEAR(h(0), 0.03, 1e-15);
  EXPECT_NEAR(h(2), 0.06, 1e-15);
  EXPECT_NEAR(h(1), 0.06, 1e-15);
}

TEST(Erm, CorrectedRiskRatioForDD) {
  const auto r = erm_estimate(soc::table());
  EXPECT_EQ(r.risk_ratio(0), 7.0);
  EXPECT_TRUE(r.corrected[0]);
  EXPECT_TRUE(r.corrected[2]);
  EXPECT_FALSE(r.corrected[1]);
}

TEST(Erm, UncorrectedSetMatchesRawRiskRatio) {
  const auto r = erm_estimate(soc::table());
  EXPECT_DOUBLE_EQ(r.risk_ratio(1), 4.0 / 12.0);
  EXPECT_DOUBLE_EQ(r.rho_hat(1), -8.0 / 74.0);
  EXPECT_NEAR(r.p_value(1), std::erfc(std::fabs(std::log(1.0 / 3.0)) / std::sqrt(1.0 / 4 + 1.0 / 12) / std::sqrt(2.0)),
              1e-12);
}

TEST(Erm, IntervalContainsEstimate) {
  const auto r = erm_estimate(soc::table());
  for (Eigen::Index k = 0; k < r.K(); ++k) {
    EXPECT_LT(r.interval_low(k), r.rho_hat(k));
    EXPECT_GT(r.interval_high(k), r.rho_hat(k));
  }
}

TEST(Erm, BothDiscordantCellsEmpty) {
  PairedCounts pc{{"a"}, {{5, 0, 0, 5}}, 10};
  const auto r = erm_estimate(pc);
  EXPECT_EQ(r.risk_ratio(0), 1.0);
  EXPECT_EQ(r.rho_hat(0), 0.0);
  EXPECT_EQ(r.p_value(0), 1.0);
}
