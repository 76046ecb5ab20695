#pragma once

// Chain summaries: medians, equal-tailed intervals, exceedance
// probabilities and the Gelman-Rubin potential scale reduction factor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>

#include "mmp/chain.hpp"

namespace mmp {

/// Linear interpolation between order statistics (type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

struct PsrfResult {
  double r_hat = std::numeric_limits<double>::quiet_NaN();
  double upper_95 = std::numeric_limits<double>::quiet_NaN();
};

struct SummaryRow {
  std::string label;
  double median = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
  double prob_positive = 0.0;
  PsrfResult psrf;
};

/// Classic potential scale reduction factor with the 97.5% F-quantile upper
/// bound (the construction used by coda's gelman.diag). Chains must share a
/// length of at least 10.
inline PsrfResult gelman_rubin(const std::vector<Eigen::VectorXd>& chains) {
  const auto m = chains.size();
  if (m < 2) throw std::invalid_argument("gelman_rubin needs at least 2 chains");
  const auto n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("gelman_rubin chains must have equal length");
  if (n < 10) throw std::invalid_argument("gelman_rubin needs chains of length >= 10");

  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  Eigen::VectorXd mean(static_cast<Eigen::Index>(m));
  Eigen::VectorXd s2(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    const auto& c = chains[j];
    const double mu = c.mean();
    mean(static_cast<Eigen::Index>(j)) = mu;
    s2(static_cast<Eigen::Index>(j)) = (c.array() - mu).square().sum() / (dn - 1.0);
  }
  auto var = [&](const Eigen::VectorXd& a) {
    return (a.array() - a.mean()).square().sum() / (dm - 1.0);
  };
  auto cov = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / (dm - 1.0);
  };

  const double w = s2.mean();
  const double b = dn * var(mean);
  const double muhat = mean.mean();
  const double var_w = var(s2) / dm;
  const double var_b = 2.0 * b * b / (dm - 1.0);
  const Eigen::VectorXd mean_sq = mean.array().square();
  const double cov_wb = (dn / dm) * (cov(s2, mean_sq) - 2.0 * muhat * cov(s2, mean));

  PsrfResult out;
  if (!(w > 0.0)) {
    // Constant chains: no within-chain spread to compare against.
    out.r_hat = b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    out.upper_95 = out.r_hat;
    return out;
  }
  const double v = (dn - 1.0) * w / dn + (1.0 + 1.0 / dm) * b / dn;
  const double var_v = ((dn - 1.0) * (dn - 1.0) * var_w + (1.0 + 1.0 / dm) * (1.0 + 1.0 / dm) * var_b +
                        2.0 * (dn - 1.0) * (1.0 + 1.0 / dm) * cov_wb) /
                       (dn * dn);
  const double df_v = var_v > 0.0 ? 2.0 * v * v / var_v : std::numeric_limits<double>::infinity();
  const double df_adj = std::isfinite(df_v) ? (df_v + 3.0) / (df_v + 1.0) : 1.0;
  const double r2_fixed = (dn - 1.0) / dn;
  const double r2_random = (1.0 + 1.0 / dm) * (1.0 / dn) * (b / w);
  out.r_hat = std::sqrt(df_adj * (r2_fixed + r2_random));

  double fq = 1.0;
  if (r2_random > 0.0) {
    const double w_df = var_w > 0.0 ? 2.0 * w * w / var_w : 1e12;
    const boost::math::fisher_f_distribution<double> f(dm - 1.0, std::min(w_df, 1e12));
    fq = boost::math::quantile(f, 0.975);
  }
  out.upper_95 = std::sqrt(df_adj * (r2_fixed + fq * r2_random));
  return out;
}

/// Split mode: the first and second halves of one chain (odd middle draw dropped).
inline PsrfResult gelman_rubin_split(const Eigen::VectorXd& chain) {
  const auto half = chain.size() / 2;
  if (half < 10) throw std::invalid_argument("split gelman_rubin needs at least 20 draws");
  return gelman_rubin({chain.head(half), chain.tail(half)});
}

/// R-hat for column `col` of per-chain draw matrices: multi-chain when more
/// than one chain is present, split otherwise.
inline PsrfResult gelman_rubin_column(const std::vector<Eigen::MatrixXd>& chains, Eigen::Index col) {
  if (chains.size() == 1) return gelman_rubin_split(chains.front().col(col));
  std::vector<Eigen::VectorXd> v;
  for (const auto& c : chains) v.emplace_back(c.col(col));
  return gelman_rubin(v);
}

inline SummaryRow summarize_draws(std::string label, const Eigen::Ref<const Eigen::VectorXd>& draws) {
  if (draws.size() == 0) throw std::invalid_argument("cannot summarize an empty chain");
  std::vector<double> v(draws.data(), draws.data() + draws.size());
  std::sort(v.begin(), v.end());
  SummaryRow r;
  r.label = std::move(label);
  r.median = quantile_sorted(v, 0.5);
  r.lower = quantile_sorted(v, 0.025);
  r.upper = quantile_sorted(v, 0.975);
  const auto positive = std::count_if(v.begin(), v.end(), [](double d) { return d > 0.0; });
  r.prob_positive = static_cast<double>(positive) / static_cast<double>(v.size());
  return r;
}

/// One row per set: pooled-draw quantiles and P(rho > 0), plus R-hat when the
/// chains are long enough.
inline std::vector<SummaryRow> summarize(const PosteriorChain& pc) {
  if (pc.total_draws() == 0) throw std::invalid_argument("cannot summarize an empty chain");
  const Eigen::MatrixXd pooled = pc.pooled_rho();
  std::vector<Eigen::MatrixXd> per_chain;
  for (std::size_t c = 0; c < pc.chains.size(); ++c) per_chain.push_back(pc.rho(c));
  const bool diagnosable = per_chain.size() > 1 ? pc.draws_per_chain() >= 10 : pc.draws_per_chain() >= 20;

  std::vector<SummaryRow> rows;
  for (Eigen::Index k = 0; k < pc.K(); ++k) {
    auto row = summarize_draws(pc.set_labels[static_cast<std::size_t>(k)], pooled.col(k));
    if (diagnosable) row.psrf = gelman_rubin_column(per_chain, k);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mmp
