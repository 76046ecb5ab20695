#pragma once

// Multivariate probit with a Bayesian FPCA on the latent errors:
//   z_i = beta + Omega Psi c_i' + eps_i,  eps_i ~ N(0, sigma_eps2 I_2K)
//   Psi ~ N(0, (Lambda_psi (x) P)^{-1}),  c_i ~ N(0, I_L)
// beta keeps the half-Cauchy shrinkage prior of the penalized model.
// Latent z draws use unit variance; sigma_eps2 is sampled and used by every
// other conditional.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmp/basis.hpp"
#include "mmp/chain.hpp"
#include "mmp/probit_gibbs.hpp"

namespace mmp {

struct FpcaOptions {
  double A = 10.0;
  int scores = 2;  // L_scores
  double xi = 0.01;
  RhoScale rho_scale = RhoScale::marginal;
  bool keep_fpca_blocks = false;
};

struct FpcaState {
  Eigen::MatrixXd Psi;         // 2K x L
  Eigen::MatrixXd C;           // n x L
  double sigma_eps2 = 1.0;
  Eigen::VectorXd lambda_ell;  // L

  Eigen::VectorXd lambda_psi_diag() const { return lambda_ell.cwiseInverse(); }
};

/// Omega Psi c_i' for one subject's score row.
inline Eigen::VectorXd score_contribution(const Eigen::Ref<const Eigen::MatrixXd>& Psi,
                                          const Eigen::Ref<const Eigen::MatrixXd>& Omega,
                                          const Eigen::Ref<const Eigen::VectorXd>& c) {
  if (Omega.cols() != Psi.rows() || Psi.cols() != c.size())
    throw std::invalid_argument("score_contribution: shape mismatch");
  return Omega * (Psi * c);
}

/// psi for every subject: n x 2K matrix whose row i is (Omega Psi c_i')'.
inline Eigen::MatrixXd expansion_matrix(const Eigen::MatrixXd& Psi, const Eigen::MatrixXd& Omega,
                                        const Eigen::MatrixXd& C) {
  return C * (Omega * Psi).transpose();
}

/// Beta conditional moments with the FPCA offset removed:
/// Sigma = (n / s2 + 1/lambda)^{-1} I, mean = Sigma colsum(Z - psi) / s2.
inline BetaMoments fpca_beta_update_moments(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                                            const Eigen::Ref<const Eigen::MatrixXd>& psi,
                                            double sigma_eps2, double lambda_inv) {
  const double n = static_cast<double>(Z.rows());
  const double v = 1.0 / (n / sigma_eps2 + lambda_inv);
  BetaMoments m;
  m.mean = (v / sigma_eps2) * (Z - psi).colwise().sum().transpose();
  m.covariance = v * Eigen::MatrixXd::Identity(Z.cols(), Z.cols());
  return m;
}

/// Precision of vec(Psi) (column-major, 2K*L):
///   (C'C (x) Omega'Omega) / s2 + Lambda_psi (x) P,
/// assembled block by block from the Kronecker structure.
inline Eigen::MatrixXd loadings_precision(const Eigen::MatrixXd& C, const Eigen::MatrixXd& Omega,
                                          const Eigen::MatrixXd& P, const Eigen::VectorXd& lambda_ell,
                                          double sigma_eps2) {
  const auto D = Omega.cols();
  const auto L = C.cols();
  const Eigen::MatrixXd ctc = C.transpose() * C;
  const Eigen::MatrixXd oto = Omega.transpose() * Omega;
  Eigen::MatrixXd q(D * L, D * L);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index m = 0; m < L; ++m) {
      auto blk = q.block(l * D, m * D, D, D);
      blk = (ctc(l, m) / sigma_eps2) * oto;
      if (l == m) blk += P / lambda_ell(l);
    }
  return q;
}

/// (C (x) Omega)'(Z - W beta) / s2 = vec(Omega' R' C) / s2 with R = Z - 1 beta'.
inline Eigen::VectorXd loadings_rhs(const Eigen::MatrixXd& C, const Eigen::MatrixXd& Omega,
                                    const Eigen::MatrixXd& residual, double sigma_eps2) {
  const Eigen::MatrixXd g = Omega.transpose() * residual.transpose() * C / sigma_eps2;
  return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
}

struct LoadingsMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

inline LoadingsMoments loadings_update_moments(const Eigen::MatrixXd& C, const Eigen::MatrixXd& Omega,
                                               const Eigen::MatrixXd& P, const Eigen::VectorXd& lambda_ell,
                                               double sigma_eps2, const Eigen::MatrixXd& residual) {
  const Eigen::MatrixXd q = loadings_precision(C, Omega, P, lambda_ell, sigma_eps2);
  const Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) throw NumericError("loadings precision is not positive definite");
  LoadingsMoments m;
  m.covariance = llt.solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));
  m.mean = llt.solve(loadings_rhs(C, Omega, residual, sigma_eps2));
  return m;
}

class FpcaSampler {
 public:
  FpcaSampler(const MatchedBinaryTable& t, const FpcaOptions& opt, RngStream& rng)
      : table_(t), opt_(opt), basis_(build_basis(t.K(), opt.xi)) {
    if (!(opt.A > 0.0)) throw std::invalid_argument("A must be positive");
    if (opt.scores < 1) throw std::invalid_argument("L_scores must be >= 1");
    penalty_.A = opt.A;
    const auto D = t.columns();
    const auto L = static_cast<Eigen::Index>(opt.scores);
    state_.beta = gibbs::initial_beta(t);
    gibbs::draw_latent(t, state_.beta, {}, state_.Z, rng);
    fpca_.Psi.resize(D, L);
    for (Eigen::Index l = 0; l < L; ++l)
      for (Eigen::Index r = 0; r < D; ++r) fpca_.Psi(r, l) = 0.1 * rng.normal();
    fpca_.C = Eigen::MatrixXd::Zero(t.n(), L);
    fpca_.lambda_ell = Eigen::VectorXd::Ones(L);
    fpca_.sigma_eps2 = 1.0;
    psi_ = expansion_matrix(fpca_.Psi, basis_.omega, fpca_.C);
  }

  // Conditional updates, in sweep order.

  void draw_latent(RngStream& rng) { gibbs::draw_latent(table_, state_.beta, psi_, state_.Z, rng); }

  void draw_beta(RngStream& rng) {
    const auto m = fpca_beta_update_moments(state_.Z, psi_, fpca_.sigma_eps2, 1.0 / penalty_.lambda);
    gibbs::draw_beta_diagonal(m.mean, m.covariance(0, 0), state_.beta, rng);
  }

  void draw_shrinkage(RngStream& rng) { gibbs::draw_shrinkage(state_.beta, penalty_, rng); }

  void draw_loadings(RngStream& rng) {
    const Eigen::MatrixXd residual = state_.Z.rowwise() - state_.beta.transpose();
    Eigen::MatrixXd q = loadings_precision(fpca_.C, basis_.omega, basis_.P, fpca_.lambda_ell, fpca_.sigma_eps2);
    const Eigen::VectorXd b = loadings_rhs(fpca_.C, basis_.omega, residual, fpca_.sigma_eps2);
    Eigen::VectorXd v;
    try {
      v = draw_mvn_canonical(q, b, rng);
    } catch (const NumericError&) {
      ++jitter_events_;
      warn("loadings precision not positive definite; adding 1e-8 I");
      q.diagonal().array() += 1e-8;
      v = draw_mvn_canonical(q, b, rng);
    }
    fpca_.Psi = Eigen::Map<const Eigen::MatrixXd>(v.data(), basis_.dimension(), fpca_.Psi.cols());
  }

  void draw_scores(RngStream& rng) {
    const Eigen::MatrixXd load = basis_.omega * fpca_.Psi;  // 2K x L
    const auto L = load.cols();
    Eigen::MatrixXd q = load.transpose() * load / fpca_.sigma_eps2;
    q.diagonal().array() += 1.0;
    const Eigen::MatrixXd chol = cholesky_lower(q);
    const auto tl = chol.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd residual = state_.Z.rowwise() - state_.beta.transpose();
    const Eigen::MatrixXd rhs = residual * load / fpca_.sigma_eps2;  // n x L
    for (Eigen::Index i = 0; i < table_.n(); ++i) {
      Eigen::VectorXd mean = tl.solve(rhs.row(i).transpose());
      mean = tl.transpose().solve(mean);
      const Eigen::VectorXd noise = tl.transpose().solve(standard_normal_vector(L, rng));
      fpca_.C.row(i) = (mean + noise).transpose();
    }
    psi_ = fpca_.C * load.transpose();
  }

  void draw_residual_variance(RngStream& rng) {
    const double n = static_cast<double>(table_.n());
    const double K = static_cast<double>(table_.K());
    const double ssr = ((state_.Z.rowwise() - state_.beta.transpose()) - psi_).squaredNorm();
    fpca_.sigma_eps2 = draw_inverse_gamma(1.0 + n * K, 1.0 + 0.5 * ssr, rng);
  }

  void draw_smoothing(RngStream& rng) {
    const double K = static_cast<double>(table_.K());
    for (Eigen::Index l = 0; l < fpca_.Psi.cols(); ++l) {
      const auto col = fpca_.Psi.col(l);
      const double quad = col.dot(basis_.P * col);
      fpca_.lambda_ell(l) = draw_inverse_gamma(2.0 * K, K + 0.5 * quad, rng);
    }
  }

  void sweep(RngStream& rng) {
    draw_latent(rng);
    draw_beta(rng);
    draw_shrinkage(rng);
    draw_loadings(rng);
    draw_scores(rng);
    draw_residual_variance(rng);
    draw_smoothing(rng);
  }

  void allocate(ChainBlock& b, Eigen::Index draws) const {
    const auto K = table_.K();
    const auto L = fpca_.Psi.cols();
    b.rho.resize(draws, K);
    b.beta.resize(draws, 2 * K);
    b.lambda.resize(draws);
    b.sigma_eps2.resize(draws);
    b.lambda_ell.resize(draws, L);
    b.psi.resize(draws, 2 * K * L);
    b.rho_marginal.resize(draws, K);
    if (opt_.keep_fpca_blocks) b.scores.reserve(static_cast<std::size_t>(draws));
  }

  void record(ChainBlock& b, Eigen::Index row) const {
    gibbs::record_rho(state_.beta, b, row);
    b.lambda(row) = penalty_.lambda;
    b.sigma_eps2(row) = fpca_.sigma_eps2;
    b.lambda_ell.row(row) = fpca_.lambda_ell.transpose();
    b.psi.row(row) = Eigen::Map<const Eigen::RowVectorXd>(fpca_.Psi.data(), fpca_.Psi.size());
    b.rho_marginal.row(row) = marginal_rho().transpose();
    b.jitter_events = jitter_events_;
    if (opt_.keep_fpca_blocks) b.scores.push_back(fpca_.C);
  }

  /// rho from subject-averaged probabilities Phi(beta + psi_i).
  Eigen::VectorXd marginal_rho() const {
    Eigen::VectorXd theta(table_.columns());
    for (Eigen::Index c = 0; c < table_.columns(); ++c) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < table_.n(); ++i) s += normal_cdf(state_.beta(c) + psi_(i, c));
      theta(c) = s / static_cast<double>(table_.n());
    }
    return rho_from_theta(theta);
  }

  const MatchedBinaryTable& table() const { return table_; }
  const LatentState& state() const { return state_; }
  LatentState& state() { return state_; }
  const PenaltyState& penalty() const { return penalty_; }
  PenaltyState& penalty() { return penalty_; }
  const FpcaState& fpca() const { return fpca_; }
  const BasisSystem& basis() const { return basis_; }
  const Eigen::MatrixXd& expansion() const { return psi_; }
  long jitter_events() const { return jitter_events_; }

  /// Overwrites the FPCA block (tests and warm starts).
  void set_fpca(FpcaState s) {
    fpca_ = std::move(s);
    psi_ = expansion_matrix(fpca_.Psi, basis_.omega, fpca_.C);
  }

 private:
  const MatchedBinaryTable& table_;
  FpcaOptions opt_;
  BasisSystem basis_;
  LatentState state_;
  PenaltyState penalty_;
  FpcaState fpca_;
  Eigen::MatrixXd psi_;  // n x 2K, row i = Omega Psi c_i'
  long jitter_events_ = 0;
};

inline PosteriorChain gibbs_fpca(const MatchedBinaryTable& t, const SamplerConfig& cfg,
                                 const FpcaOptions& opt = {}) {
  auto pc = detail::make_chain(Model::mvp, t, cfg);
  pc.A = opt.A;
  pc.xi = opt.xi;
  pc.scores = opt.scores;
  pc.rho_scale = opt.rho_scale;
  pc.omega = build_basis(t.K(), opt.xi).omega;
  pc.chains = detail::run_chains(cfg, [&](RngStream& rng) { return FpcaSampler(t, opt, rng); });
  return pc;
}

/// Posterior mean of Omega Psi Psi' Omega' + sigma_eps2 I over all draws.
inline Eigen::MatrixXd latent_covariance_summary(const PosteriorChain& pc) {
  if (!pc.has_fpca_blocks()) throw std::invalid_argument("chain lacks FPCA blocks");
  const auto D = pc.omega.rows();
  const auto L = static_cast<Eigen::Index>(pc.scores);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(D, D);
  long count = 0;
  for (const auto& b : pc.chains)
    for (Eigen::Index d = 0; d < b.draws(); ++d) {
      const Eigen::RowVectorXd flat = b.psi.row(d);
      const Eigen::Map<const Eigen::MatrixXd> psi(flat.data(), D, L);
      const Eigen::MatrixXd load = pc.omega * psi;
      acc.noalias() += load * load.transpose();
      acc.diagonal().array() += b.sigma_eps2(d);
      ++count;
    }
  acc /= static_cast<double>(count);
  return 0.5 * (acc + acc.transpose());
}

}  // namespace mmp
