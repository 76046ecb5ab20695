#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "mmp/fpca_gibbs.hpp"
#include "mmp/soc.hpp"
#include "oracles.hpp"

using namespace mmp;

namespace {

// Textbook recursive definition, used as an oracle for the iterative one.
double bspline_recursive(const std::vector<double>& t, int i, int p, double x, bool last_span) {
  if (p == 0) {
    const bool inside = t[i] <= x && x < t[i + 1];
    const bool right_end = last_span && x == t[i + 1] && t[i] < t[i + 1];
    return (inside || right_end) ? 1.0 : 0.0;
  }
  double out = 0.0;
  if (t[i + p] > t[i]) out += (x - t[i]) / (t[i + p] - t[i]) * bspline_recursive(t, i, p - 1, x, last_span);
  if (t[i + p + 1] > t[i + 1])
    out += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * bspline_recursive(t, i + 1, p - 1, x, last_span);
  return out;
}

using oracle::kron;

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

}  // namespace

TEST(Basis, SquareAndPartitionOfUnity) {
  for (Eigen::Index K : {2, 3, 5, 8}) {
    const auto b = build_basis(K);
    ASSERT_EQ(b.omega.rows(), 2 * K);
    ASSERT_EQ(b.omega.cols(), 2 * K);
    for (Eigen::Index r = 0; r < b.omega.rows(); ++r) EXPECT_NEAR(b.omega.row(r).sum(), 1.0, 1e-14);
    EXPECT_GE(b.omega.minCoeff(), 0.0);
    EXPECT_EQ(b.degree, 3);
  }
}

TEST(Basis, MatchesRecursiveDefinition) {
  const auto b = build_basis(5);
  const int D = 10;
  for (int r = 0; r < D; ++r) {
    const double x = static_cast<double>(r) / (D - 1);
    for (int i = 0; i < D; ++i)
      EXPECT_NEAR(b.omega(r, i), bspline_recursive(b.knots, i, 3, x, i == D - 1 || x == 1.0), 1e-13) << r << "," << i;
  }
}

TEST(Basis, KnotsGiveExactCount) {
  const auto k = clamped_uniform_knots(10, 3);
  EXPECT_EQ(k.size(), 14u);
  EXPECT_EQ(k.front(), 0.0);
  EXPECT_EQ(k.back(), 1.0);
}

TEST(Basis, PenaltyMixing) {
  const auto b = build_basis(2, 0.01);
  Eigen::MatrixXd d2(2, 4);
  d2 << 1, -2, 1, 0, 0, 1, -2, 1;
  const Eigen::MatrixXd expected = 0.01 * Eigen::MatrixXd::Identity(4, 4) + 0.99 * d2.transpose() * d2;
  EXPECT_LT((b.P - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_TRUE(b.P.isApprox(b.P.transpose(), 0.0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.P);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(b.P2);
  EXPECT_GT(es2.eigenvalues().minCoeff(), -1e-12);
}

TEST(Basis, PureRidge) {
  const auto b = build_basis(5, 1.0);
  EXPECT_TRUE(b.P == Eigen::MatrixXd::Identity(10, 10));
}

TEST(Basis, LowOrderFallbackWarns) {
  std::string seen;
  const auto old = warning_sink();
  warning_sink() = [&](std::string_view m) { seen += m; };
  const auto b = build_basis(1);
  warning_sink() = old;
  EXPECT_EQ(b.degree, 1);
  EXPECT_EQ(b.omega.rows(), 2);
  EXPECT_NE(seen.find("cubic"), std::string::npos);
  EXPECT_EQ(b.P2.rows(), 2);
  EXPECT_TRUE(b.P2.isZero());
}

TEST(Basis, Errors) {
  EXPECT_THROW(build_basis(0), std::invalid_argument);
  EXPECT_THROW(build_basis(2, 0.0), std::invalid_argument);
  EXPECT_THROW(build_basis(2, 1.5), std::invalid_argument);
}

TEST(ScoreContribution, ZeroCases) {
  RngStream rng(1);
  const auto b = build_basis(3);
  const Eigen::MatrixXd psi = random_matrix(6, 2, rng);
  EXPECT_TRUE(score_contribution(psi, b.omega, Eigen::Vector2d::Zero()).isZero());
  EXPECT_TRUE(score_contribution(Eigen::MatrixXd::Zero(6, 2), b.omega, Eigen::Vector2d(1, 2)).isZero());
  EXPECT_THROW(score_contribution(psi, b.omega, Eigen::Vector3d::Zero()), std::invalid_argument);
}

TEST(ScoreContribution, KroneckerIdentity) {
  RngStream rng(2);
  const auto b = build_basis(3);
  const Eigen::MatrixXd psi = random_matrix(6, 2, rng);
  const Eigen::MatrixXd C = random_matrix(7, 2, rng);
  const Eigen::VectorXd stacked = kron(C, b.omega) * vec(psi);  // vec(Omega Psi C')
  const Eigen::MatrixXd e = expansion_matrix(psi, b.omega, C);
  for (Eigen::Index i = 0; i < 7; ++i) {
    const Eigen::VectorXd direct = score_contribution(psi, b.omega, C.row(i).transpose());
    EXPECT_LT((direct - stacked.segment(i * 6, 6)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((direct - e.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Loadings, KroneckerCovarianceMatchesDenseInverse) {
  RngStream rng(3);
  for (Eigen::Index K : {1, 2, 3}) {
    for (int L : {1, 2, 3}) {
      const auto b = build_basis(K);
      const auto D = 2 * K;
      const Eigen::MatrixXd C = random_matrix(25, L, rng);
      Eigen::VectorXd lam(L);
      for (int l = 0; l < L; ++l) lam(l) = 0.5 + l;
      const double s2 = 0.7;
      const Eigen::MatrixXd R = random_matrix(25, D, rng);

      const Eigen::MatrixXd CO = kron(C, b.omega);
      const Eigen::MatrixXd dense_q =
          CO.transpose() * CO / s2 + kron(lam.cwiseInverse().asDiagonal().toDenseMatrix(), b.P);
      const Eigen::MatrixXd dense_cov = dense_q.inverse();
      const Eigen::VectorXd dense_mean = dense_cov * CO.transpose() * vec(R.transpose()) / s2;

      const auto m = loadings_update_moments(C, b.omega, b.P, lam, s2, R);
      const double rel_cov = (m.covariance - dense_cov).norm() / dense_cov.norm();
      const double rel_mean = (m.mean - dense_mean).norm() / dense_mean.norm();
      EXPECT_LE(rel_cov, 1e-8) << "K=" << K << " L=" << L;
      EXPECT_LE(rel_mean, 1e-8) << "K=" << K << " L=" << L;
    }
  }
}

TEST(FpcaBeta, ReducesToPenalizedMoments) {
  RngStream rng(4);
  const Eigen::MatrixXd Z = random_matrix(30, 6, rng);
  const auto a = fpca_beta_update_moments(Z, Eigen::MatrixXd::Zero(30, 6), 1.0, 0.25);
  const auto b = beta_update_moments(Z, 0.25);
  EXPECT_TRUE(a.mean == b.mean);
  EXPECT_TRUE(a.covariance == b.covariance);
}

TEST(FpcaBeta, ResidualVarianceScalesMean) {
  RngStream rng(5);
  const Eigen::MatrixXd Z = random_matrix(30, 4, rng);
  const Eigen::MatrixXd psi = random_matrix(30, 4, rng);
  const double s2 = 2.5, li = 0.1;
  const auto m = fpca_beta_update_moments(Z, psi, s2, li);
  const double v = 1.0 / (30.0 / s2 + li);
  const Eigen::VectorXd expected = v * (Z - psi).colwise().sum().transpose() / s2;
  EXPECT_LT((m.mean - expected).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(m.covariance(2, 2), v, 1e-15);
}

TEST(FpcaSweep, ZeroLoadingsReduceToPenalizedSweep) {
  const auto t = soc::table();
  RngStream ra(9), rb(9);
  PenalizedSampler pen(t, 10.0, ra);
  FpcaSampler fp(t, FpcaOptions{}, rb);

  // Start both from the penalized sampler's state with Psi = 0, sigma2 = 1.
  fp.state() = pen.state();
  fp.penalty() = pen.penalty();
  FpcaState zero;
  zero.Psi = Eigen::MatrixXd::Zero(10, 2);
  zero.C = Eigen::MatrixXd::Zero(74, 2);
  zero.sigma_eps2 = 1.0;
  zero.lambda_ell = Eigen::VectorXd::Ones(2);
  fp.set_fpca(zero);

  RngStream sa(31), sb(31);
  pen.sweep(sa);
  fp.draw_latent(sb);
  fp.draw_beta(sb);
  fp.draw_shrinkage(sb);
  EXPECT_TRUE(pen.state().Z == fp.state().Z);
  EXPECT_TRUE(pen.state().beta == fp.state().beta);
  EXPECT_EQ(pen.penalty().lambda, fp.penalty().lambda);
  EXPECT_EQ(pen.penalty().mu, fp.penalty().mu);
}

TEST(FpcaSweep, ChainInvariants) {
  SamplerConfig cfg;
  cfg.total_iterations = 1500;
  cfg.burn_in = 500;
  cfg.chains = 2;
  cfg.check_invariants = true;
  const auto pc = gibbs_fpca(soc::table(), cfg);
  ASSERT_TRUE(pc.has_fpca_blocks());
  for (const auto& b : pc.chains) {
    EXPECT_LE(b.rho.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE(b.rho_marginal.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_GT(b.sigma_eps2.minCoeff(), 0.0);
    EXPECT_GT(b.lambda_ell.minCoeff(), 0.0);
    EXPECT_GT(b.lambda.minCoeff(), 0.0);
    EXPECT_TRUE(b.psi.allFinite());
    EXPECT_EQ(b.psi.cols(), 20);
  }
}

TEST(FpcaSweep, FixedSeedIsBitExact) {
  SamplerConfig cfg;
  cfg.total_iterations = 400;
  cfg.burn_in = 100;
  cfg.chains = 2;
  cfg.seed = 12;
  const auto a = gibbs_fpca(soc::table(), cfg);
  const auto b = gibbs_fpca(soc::table(), cfg);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_TRUE(a.chains[c].beta == b.chains[c].beta);
    EXPECT_TRUE(a.chains[c].psi == b.chains[c].psi);
    EXPECT_TRUE(a.chains[c].sigma_eps2 == b.chains[c].sigma_eps2);
  }
}

TEST(FpcaSweep, KeepsScoreBlocksOnRequest) {
  SamplerConfig cfg;
  cfg.total_iterations = 50;
  cfg.burn_in = 40;
  FpcaOptions opt;
  opt.keep_fpca_blocks = true;
  const auto pc = gibbs_fpca(soc::table(), cfg, opt);
  ASSERT_EQ(pc.chains[0].scores.size(), 10u);
  EXPECT_EQ(pc.chains[0].scores[0].rows(), 74);
  EXPECT_EQ(pc.chains[0].scores[0].cols(), 2);
}

TEST(FpcaSweep, OptionErrors) {
  RngStream rng(1);
  const auto t = soc::table();
  FpcaOptions bad;
  bad.scores = 0;
  EXPECT_THROW(FpcaSampler(t, bad, rng), std::invalid_argument);
  bad = FpcaOptions{};
  bad.A = -1;
  EXPECT_THROW(FpcaSampler(t, bad, rng), std::invalid_argument);
}

TEST(LatentCovariance, ZeroLoadingsGiveScaledIdentity) {
  PosteriorChain pc;
  pc.model = Model::mvp;
  pc.set_labels = {"a", "b"};
  pc.scores = 2;
  pc.omega = build_basis(2).omega;
  ChainBlock b;
  b.rho = Eigen::MatrixXd::Zero(3, 2);
  b.psi = Eigen::MatrixXd::Zero(3, 8);
  b.sigma_eps2 = Eigen::Vector3d(1.0, 2.0, 3.0);
  pc.chains.push_back(b);
  const auto s = latent_covariance_summary(pc);
  EXPECT_TRUE(s.isApprox(2.0 * Eigen::MatrixXd::Identity(4, 4)));
}

TEST(LatentCovariance, RequiresBlocks) {
  PosteriorChain pc;
  pc.model = Model::penalized;
  EXPECT_THROW(latent_covariance_summary(pc), std::invalid_argument);
}

TEST(LatentCovariance, DetectsExchangeableCorrelation) {
  // Latent z ~ N(0, 0.5 I + 0.5 11'), 2K = 4, n = 500, versus independent z.
  RngStream rng(21);
  const int n = 500;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(4, 4, 0.5);
  corr.diagonal().setOnes();
  auto simulate = [&](const Eigen::MatrixXd& cov) {
    BinaryMatrix x(n, 4);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd z = draw_mvn(Eigen::VectorXd::Zero(4), cov, rng);
      for (int c = 0; c < 4; ++c) x(i, c) = z(c) >= 0.0;
    }
    return MatchedBinaryTable(x);
  };
  SamplerConfig cfg = SamplerConfig::fast();
  cfg.seed = 4;
  const auto dep = latent_covariance_summary(gibbs_fpca(simulate(corr), cfg));
  const auto ind = latent_covariance_summary(gibbs_fpca(simulate(Eigen::MatrixXd::Identity(4, 4)), cfg));
  EXPECT_LT((dep - dep.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  auto mean_off = [](const Eigen::MatrixXd& m) { return (m.sum() - m.trace()) / 12.0; };
  double min_dep = 1e9;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) min_dep = std::min(min_dep, dep(i, j));
  EXPECT_GT(min_dep, 0.0);
  EXPECT_GT(mean_off(dep), mean_off(ind));
}
