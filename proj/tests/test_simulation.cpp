#include <gtest/gtest.h>

#include "mmp/normal.hpp"
#include "mmp/simulation.hpp"

using namespace mmp;

TEST(Design, ThetaVectors) {
  EXPECT_EQ(design_theta(2, 0.1).size(), 4);
  EXPECT_EQ(design_theta(5, 0.1).size(), 10);
  for (int K : kKGrid) {
    const auto th = design_theta(K, 0.15);
    EXPECT_EQ(th(1), 0.15);
    EXPECT_EQ(th(0), 0.05);
    EXPECT_EQ(th(K + 1), 0.005);  // the sparse partner of theta_12
  }
  EXPECT_THROW(design_theta(6, 0.1), std::invalid_argument);
}

TEST(Generate, ShapeAndDeterminism) {
  SimScenario s;
  s.K = 3;
  RngStream a(5), b(5);
  const auto x = generate_dataset(s, a);
  const auto y = generate_dataset(s, b);
  EXPECT_EQ(x.table.n(), 75);
  EXPECT_EQ(x.table.K(), 3);
  EXPECT_TRUE(x.table.matrix() == y.table.matrix());
  EXPECT_TRUE(x.generating_theta == y.generating_theta);
}

TEST(Generate, ZeroSpreadUsesDesign) {
  SimScenario s;
  s.theta_draw_sd = 0.0;
  RngStream rng(1);
  const auto d = generate_dataset(s, rng);
  EXPECT_TRUE(d.generating_theta.isApprox(s.theta_true()));
  EXPECT_NEAR(d.truth_rho(s, 1), 0.05 - 0.005, 1e-15);
}

TEST(Generate, PerDatasetDrawSharesProbabilities) {
  SimScenario s;
  s.draw = ThetaDraw::per_dataset;
  s.n = 20000;
  RngStream rng(2);
  const auto d = generate_dataset(s, rng);
  const Eigen::VectorXd m = d.table.column_means();
  EXPECT_LT((m - d.generating_theta).cwiseAbs().maxCoeff(), 0.015);
}

TEST(Generate, MarginalProportions) {
  SimScenario s;
  s.n = 50000;
  RngStream rng(3);
  const auto d = generate_dataset(s, rng);
  // Clamping at zero lifts the mean: E max(0, X) = mu Phi(mu/sd) + sd phi(mu/sd).
  const Eigen::VectorXd th = s.theta_true();
  const double sd = s.theta_draw_sd;
  for (Eigen::Index c = 0; c < th.size(); ++c) {
    const double z = th(c) / sd;
    const double expected = th(c) * normal_cdf(z) + sd * normal_pdf(z);
    EXPECT_NEAR(d.table.column_means()(c), expected, 0.008) << c;
  }
}

TEST(Scenario, AggregateByHand) {
  std::vector<ReplicateOutcome> o = {
      {Method::gee, 0, 0.1, 0.12, 0.05, 0.2, true},
      {Method::gee, 1, 0.1, 0.02, -0.05, 0.09, false},
      {Method::erm, 0, 0.1, 0.1, -0.5, 0.9, false},
  };
  const auto rows = aggregate(o, {Method::gee, Method::erm});
  EXPECT_DOUBLE_EQ(rows[0].coverage, 0.5);
  EXPECT_DOUBLE_EQ(rows[0].power, 0.5);
  EXPECT_NEAR(rows[0].bias, -0.03, 1e-15);
  EXPECT_NEAR(rows[0].width, 0.145, 1e-15);
  EXPECT_EQ(rows[1].replicates, 1);
  EXPECT_DOUBLE_EQ(rows[1].coverage, 1.0);
}

TEST(Scenario, SmallRunIsReproducibleAndSparse) {
  SimScenario s;
  s.replicates = 6;
  s.batch_size = 100;
  s.max_batches = 2;
  s.seed = 3;
  MethodSettings m;
  m.sampler.total_iterations = 300;
  m.sampler.burn_in = 100;
  m.bootstrap_resamples = 200;
  const std::vector<Method> methods = {Method::gee, Method::erm, Method::penalized};
  const auto a = run_scenario(s, methods, m);
  const auto b = run_scenario(s, methods, m);
  EXPECT_EQ(a.achieved, 6);
  ASSERT_EQ(a.outcomes.size(), 18u);
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
    EXPECT_EQ(a.outcomes[i].estimate, b.outcomes[i].estimate);
    EXPECT_EQ(a.outcomes[i].low, b.outcomes[i].low);
  }
  EXPECT_EQ(a.row(Method::gee).replicates, 6);
}

TEST(Scenario, ShortfallWarns) {
  SimScenario s;
  s.replicates = 500;
  s.batch_size = 50;
  s.max_batches = 1;
  std::string seen;
  const auto old = warning_sink();
  warning_sink() = [&](std::string_view m) { seen += m; };
  const auto t = run_scenario(s, {Method::gee}, MethodSettings{});
  warning_sink() = old;
  EXPECT_LT(t.achieved, 500);
  EXPECT_EQ(t.achieved, t.sparse_found);
  EXPECT_NE(seen.find("shortfall"), std::string::npos);
}

TEST(Scenario, RequiresMethods) {
  EXPECT_THROW(run_scenario(SimScenario{}, {}, MethodSettings{}), std::invalid_argument);
}

TEST(Generate, AllZeroSpecialtyColumnRate) {
  // Under the design with no perturbation, P(all 75 draws are 0) = 0.995^75.
  SimScenario s;
  s.theta_draw_sd = 0.0;
  RngStream rng(8);
  int zero = 0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto d = generate_dataset(s, rng);
    zero += d.table.matrix().col(s.K + 1).cast<int>().sum() == 0;
  }
  EXPECT_NEAR(static_cast<double>(zero) / reps, std::pow(0.995, 75), 0.01);
}

TEST(Generate, ClampingRate) {
  // Per-dataset draws around 0.005 with sd 0.05 clamp at 0 with
  // probability Phi(-0.1).
  SimScenario s;
  s.draw = ThetaDraw::per_dataset;
  s.theta_draw_sd = 0.05;
  s.n = 1;
  RngStream rng(9);
  int clamped = 0;
  const int reps = 40000;
  for (int r = 0; r < reps; ++r) clamped += generate_dataset(s, rng).generating_theta(s.K + 1) == 0.0;
  EXPECT_NEAR(static_cast<double>(clamped) / reps, normal_cdf(-0.1), 0.01);
}

TEST(Yield, DegenerateDesigns) {
  // theta_22 = 0.5: both discordant cells are almost surely occupied.
  int sparse = 0;
  RngStream local(5);
  Eigen::MatrixXd p(75, 4);
  p.rowwise() = Eigen::RowVector4d(0.05, 0.5, 0.25, 0.5);
  for (int r = 0; r < 500; ++r) sparse += is_sparse_on(MatchedBinaryTable(draw_bernoulli_matrix(p, local)), 1);
  EXPECT_LT(sparse, 5);

  // Nothing ever generated in the specialty column: always sparse.
  SimScenario s;
  s.theta_draw_sd = 0.0;
  s.batch_size = 300;
  int always = 0;
  RngStream g(6);
  for (int r = 0; r < 300; ++r) {
    Eigen::MatrixXd q(75, 4);
    q.rowwise() = Eigen::RowVector4d(0.05, 0.2, 0.25, 0.0);
    always += is_sparse_on(MatchedBinaryTable(draw_bernoulli_matrix(q, g)), 1);
  }
  EXPECT_EQ(always, 300);
}

TEST(Yield, CalibratedRange) {
  // Default perturbation keeps the sparse yield inside the published range.
  for (double th : {0.05, 0.20}) {
    SimScenario s;
    s.theta12 = th;
    const double y = sparsity_yield(s, 1, RngStream(6));
    EXPECT_GE(y, 0.294) << th;
    EXPECT_LE(y, 0.422) << th;
  }
}
