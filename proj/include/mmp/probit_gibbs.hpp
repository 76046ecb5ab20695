#pragma once

// Data-augmentation Gibbs samplers for the saturated probit model
// z_ijk = beta_jk + e_ijk, e ~ N(0, 1), x_ijk = 1{z_ijk >= 0}.
//
// The design W stacks n copies of I_2K, so W'W = n I and W'Z is the vector of
// column sums of Z. Neither W nor W'W is ever formed.

#include <algorithm>
#include <string>

#include <Eigen/Dense>

#include "mmp/chain.hpp"
#include "mmp/data.hpp"
#include "mmp/parallel.hpp"
#include "mmp/random.hpp"

namespace mmp {

/// Latent variance; fixed for identifiability.
inline constexpr double kLatentVariance = 1.0;

struct LatentState {
  Eigen::MatrixXd Z;     // n x 2K
  Eigen::VectorXd beta;  // 2K
};

/// Global shrinkage beta_jk ~ N(0, lambda), sqrt(lambda) ~ half-Cauchy(A),
/// via lambda | mu ~ IG(1/2, 1/mu), mu ~ IG(1/2, 1/A^2).
struct PenaltyState {
  double lambda = 1.0;
  double mu = 1.0;
  double A = 10.0;
};

struct BetaMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Conditional moments of beta given Z under a N(0, lambda I) prior:
/// covariance (n + 1/lambda)^{-1} I, mean covariance * colsum(Z).
/// lambda_inv = 0 is the flat prior.
inline BetaMoments beta_update_moments(const Eigen::Ref<const Eigen::MatrixXd>& Z, double lambda_inv) {
  if (!Z.allFinite()) throw NumericError("non-finite latent matrix");
  if (lambda_inv < 0.0) throw std::invalid_argument("lambda_inv must be nonnegative");
  const double v = 1.0 / (static_cast<double>(Z.rows()) + lambda_inv);
  BetaMoments m;
  m.mean = v * Z.colwise().sum().transpose();
  m.covariance = v * Eigen::MatrixXd::Identity(Z.cols(), Z.cols());
  return m;
}

namespace gibbs {

/// beta^0 = Phi^{-1} of column means clamped to [1/(2n), 1 - 1/(2n)].
inline Eigen::VectorXd initial_beta(const MatchedBinaryTable& t) {
  const double n = static_cast<double>(t.n());
  const double lo = 1.0 / (2.0 * n);
  Eigen::VectorXd p = t.column_means();
  return p.unaryExpr([&](double q) { return normal_quantile(std::clamp(q, lo, 1.0 - lo)); });
}

/// z_ijk ~ N(beta_jk + offset_ijk, 1) truncated to the side given by x_ijk.
/// `offset` may be empty (all zero).
inline void draw_latent(const MatchedBinaryTable& t, const Eigen::VectorXd& beta,
                        const Eigen::MatrixXd& offset, Eigen::MatrixXd& Z, RngStream& rng) {
  const bool has_offset = offset.size() > 0;
  Z.resize(t.n(), t.columns());
  for (Eigen::Index c = 0; c < t.columns(); ++c) {
    const double b = beta(c);
    for (Eigen::Index i = 0; i < t.n(); ++i) {
      const double m = has_offset ? b + offset(i, c) : b;
      Z(i, c) = draw_truncated_normal(m, 1.0, region_for(t(i, c)), rng);
    }
  }
}

inline bool sign_pattern_holds(const MatchedBinaryTable& t, const Eigen::MatrixXd& Z) {
  for (Eigen::Index c = 0; c < t.columns(); ++c)
    for (Eigen::Index i = 0; i < t.n(); ++i) {
      const bool ok = t(i, c) ? Z(i, c) >= 0.0 : Z(i, c) < 0.0;
      if (!ok) return false;
    }
  return true;
}

inline void check_sign_pattern(const MatchedBinaryTable& t, const Eigen::MatrixXd& Z, long sweep) {
  if (!sign_pattern_holds(t, Z))
    throw InvariantError("latent sign pattern violated at sweep " + std::to_string(sweep));
}

/// beta ~ N(mean, v I) from the sufficient statistic colsum and scalar v.
inline void draw_beta_diagonal(const Eigen::VectorXd& mean, double v, Eigen::VectorXd& beta, RngStream& rng) {
  const double sd = std::sqrt(v);
  beta.resize(mean.size());
  for (Eigen::Index c = 0; c < mean.size(); ++c) beta(c) = mean(c) + sd * rng.normal();
}

/// lambda | beta, mu ~ IG(K + 1/2, 1/mu + beta'beta/2); mu | lambda ~ IG(1, 1/A^2 + 1/lambda).
inline void draw_shrinkage(const Eigen::VectorXd& beta, PenaltyState& p, RngStream& rng) {
  const double K = static_cast<double>(beta.size()) / 2.0;
  p.lambda = draw_inverse_gamma(K + 0.5, 1.0 / p.mu + 0.5 * beta.squaredNorm(), rng);
  p.mu = draw_inverse_gamma(1.0, 1.0 / (p.A * p.A) + 1.0 / p.lambda, rng);
}

inline void record_rho(const Eigen::VectorXd& beta, ChainBlock& out, Eigen::Index row) {
  const auto m = rho_from_beta(beta);
  out.beta.row(row) = beta.transpose();
  out.rho.row(row) = m.rho.transpose();
}

}  // namespace gibbs

/// Flat-prior sampler.
class NaiveSampler {
 public:
  NaiveSampler(const MatchedBinaryTable& t, RngStream& rng) : table_(t) {
    state_.beta = gibbs::initial_beta(t);
    gibbs::draw_latent(t, state_.beta, {}, state_.Z, rng);
  }

  void sweep(RngStream& rng) {
    gibbs::draw_latent(table_, state_.beta, {}, state_.Z, rng);
    const auto m = beta_update_moments(state_.Z, 0.0);
    gibbs::draw_beta_diagonal(m.mean, m.covariance(0, 0), state_.beta, rng);
  }

  void allocate(ChainBlock& b, Eigen::Index draws) const {
    b.rho.resize(draws, table_.K());
    b.beta.resize(draws, table_.columns());
  }
  void record(ChainBlock& b, Eigen::Index row) const { gibbs::record_rho(state_.beta, b, row); }

  const LatentState& state() const { return state_; }
  LatentState& state() { return state_; }
  const MatchedBinaryTable& table() const { return table_; }

 private:
  const MatchedBinaryTable& table_;
  LatentState state_;
};

/// Half-Cauchy global shrinkage sampler.
class PenalizedSampler {
 public:
  PenalizedSampler(const MatchedBinaryTable& t, double A, RngStream& rng) : table_(t) {
    if (!(A > 0.0)) throw std::invalid_argument("A must be positive");
    penalty_.A = A;
    state_.beta = gibbs::initial_beta(t);
    gibbs::draw_latent(t, state_.beta, {}, state_.Z, rng);
  }

  void sweep(RngStream& rng) {
    gibbs::draw_latent(table_, state_.beta, {}, state_.Z, rng);
    const double lambda_inv = force_flat_ ? 0.0 : 1.0 / penalty_.lambda;
    const auto m = beta_update_moments(state_.Z, lambda_inv);
    gibbs::draw_beta_diagonal(m.mean, m.covariance(0, 0), state_.beta, rng);
    gibbs::draw_shrinkage(state_.beta, penalty_, rng);
  }

  /// Drops the prior precision from the beta update (the A -> infinity limit).
  void force_flat_beta(bool on) { force_flat_ = on; }

  void allocate(ChainBlock& b, Eigen::Index draws) const {
    b.rho.resize(draws, table_.K());
    b.beta.resize(draws, table_.columns());
    b.lambda.resize(draws);
  }
  void record(ChainBlock& b, Eigen::Index row) const {
    gibbs::record_rho(state_.beta, b, row);
    b.lambda(row) = penalty_.lambda;
  }

  const LatentState& state() const { return state_; }
  LatentState& state() { return state_; }
  const PenaltyState& penalty() const { return penalty_; }
  PenaltyState& penalty() { return penalty_; }
  const MatchedBinaryTable& table() const { return table_; }

 private:
  const MatchedBinaryTable& table_;
  LatentState state_;
  PenaltyState penalty_;
  bool force_flat_ = false;
};

/// Runs one chain: total_iterations sweeps, recording the kept ones.
template <class Sampler>
ChainBlock run_chain(Sampler& s, const SamplerConfig& cfg, RngStream& rng) {
  ChainBlock out;
  s.allocate(out, cfg.retained());
  Eigen::Index row = 0;
  for (long t = 0; t < cfg.total_iterations; ++t) {
    s.sweep(rng);
    if (cfg.check_invariants) gibbs::check_sign_pattern(s.table(), s.state().Z, t);
    if (cfg.keeps(t)) s.record(out, row++);
  }
  return out;
}

namespace detail {

/// Runs cfg.chains chains of the sampler built by `make(rng)`. Chain c uses
/// stream (seed, c).
template <class Make>
std::vector<ChainBlock> run_chains(const SamplerConfig& cfg, Make&& make) {
  cfg.validate();
  std::vector<ChainBlock> blocks(static_cast<std::size_t>(cfg.chains));
  parallel_for(blocks.size(), [&](std::size_t c) {
    RngStream rng(cfg.seed, c);
    auto sampler = make(rng);
    blocks[c] = run_chain(sampler, cfg, rng);
  });
  return blocks;
}

inline PosteriorChain make_chain(Model m, const MatchedBinaryTable& t, const SamplerConfig& cfg) {
  PosteriorChain pc;
  pc.model = m;
  pc.config = cfg;
  pc.set_labels = t.set_labels();
  return pc;
}

}  // namespace detail

inline PosteriorChain gibbs_naive(const MatchedBinaryTable& t, const SamplerConfig& cfg) {
  auto pc = detail::make_chain(Model::naive, t, cfg);
  pc.chains = detail::run_chains(cfg, [&](RngStream& rng) { return NaiveSampler(t, rng); });
  return pc;
}

inline PosteriorChain gibbs_penalized(const MatchedBinaryTable& t, const SamplerConfig& cfg, double A = 10.0) {
  auto pc = detail::make_chain(Model::penalized, t, cfg);
  pc.A = A;
  pc.chains = detail::run_chains(cfg, [&](RngStream& rng) { return PenalizedSampler(t, A, rng); });
  return pc;
}

}  // namespace mmp
