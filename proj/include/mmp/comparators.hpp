#pragma once

// Non-Bayesian baselines: GEE marginal model (identity link, working
// independence), subject bootstrap of pre-differenced pairs, and the
// exponential risk model with the 1/2 sparsity correction.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "mmp/data.hpp"
#include "mmp/normal.hpp"
#include "mmp/parallel.hpp"
#include "mmp/posterior.hpp"
#include "mmp/random.hpp"

namespace mmp {

enum class FrequentistMethod { gee, bootstrap, erm };

inline std::string_view method_tag(FrequentistMethod m) {
  switch (m) {
    case FrequentistMethod::gee: return "gee";
    case FrequentistMethod::bootstrap: return "bootstrap";
    case FrequentistMethod::erm: return "erm";
  }
  return "?";
}

inline constexpr double kZ975 = 1.959963984540054;

struct FrequentistResult {
  FrequentistMethod method = FrequentistMethod::gee;
  std::vector<std::string> set_labels;
  Eigen::VectorXd rho_hat;
  Eigen::VectorXd interval_low;
  Eigen::VectorXd interval_high;
  Eigen::VectorXd p_value;  // bootstrap: Holm-adjusted
  std::vector<bool> reject;  // H0: rho_k = 0 at the 5% level
  std::vector<bool> degenerate;  // gee: a zero-variance column; bootstrap: point interval
  std::vector<bool> corrected;   // erm: the 1/2 correction was applied

  // gee
  Eigen::VectorXd std_error;
  Eigen::VectorXd column_variance;  // 2K sample variances; 0 marks a constant column
  double joint_statistic = 0.0;
  int joint_df = 0;
  double joint_p_value = 1.0;
  // bootstrap
  Eigen::VectorXd raw_p_value;
  long resamples = 0;
  // erm
  Eigen::VectorXd risk_ratio;

  Eigen::Index K() const { return rho_hat.size(); }
};

/// Mean of d_ik = x_i1k - x_i2k per set, from integer sums, so every
/// estimator that uses it returns bit-identical values.
inline Eigen::VectorXd difference_means(const MatchedBinaryTable& t) {
  Eigen::VectorXd out(t.K());
  for (Eigen::Index k = 0; k < t.K(); ++k) {
    long s = 0;
    for (Eigen::Index i = 0; i < t.n(); ++i)
      s += static_cast<long>(t.at(i, Observation::first, k)) - static_cast<long>(t.at(i, Observation::second, k));
    out(k) = static_cast<double>(s) / static_cast<double>(t.n());
  }
  return out;
}

inline Eigen::MatrixXd difference_matrix(const MatchedBinaryTable& t) {
  Eigen::MatrixXd d(t.n(), t.K());
  for (Eigen::Index k = 0; k < t.K(); ++k)
    for (Eigen::Index i = 0; i < t.n(); ++i)
      d(i, k) = static_cast<double>(t.at(i, Observation::first, k)) -
                static_cast<double>(t.at(i, Observation::second, k));
  return d;
}

inline double two_sided_normal_p(double z) { return 2.0 * normal_sf(std::fabs(z)); }

/// Holm step-down adjustment.
inline Eigen::VectorXd holm_adjust(const Eigen::Ref<const Eigen::VectorXd>& p) {
  const auto m = p.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p(a) < p(b); });
  Eigen::VectorXd out(m);
  double running = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto idx = order[static_cast<std::size_t>(r)];
    running = std::max(running, std::min(1.0, static_cast<double>(m - r) * p(idx)));
    out(idx) = running;
  }
  return out;
}

inline FrequentistResult gee_estimate(const MatchedBinaryTable& t) {
  if (t.n() < 2) throw std::invalid_argument("GEE needs n >= 2");
  const auto K = t.K();
  const double n = static_cast<double>(t.n());
  FrequentistResult r;
  r.method = FrequentistMethod::gee;
  r.set_labels = t.set_labels();
  r.rho_hat = difference_means(t);

  const Eigen::MatrixXd d = difference_matrix(t);
  const Eigen::MatrixXd centered = d.rowwise() - d.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1.0) / n;
  const Eigen::MatrixXd x = t.matrix().cast<double>();
  const Eigen::RowVectorXd col_mean = x.colwise().mean();
  const Eigen::VectorXd col_var = (x.rowwise() - col_mean).colwise().squaredNorm().transpose() / (n - 1.0);

  r.column_variance = col_var;
  r.std_error.resize(K);
  r.interval_low.resize(K);
  r.interval_high.resize(K);
  r.p_value.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double se = std::sqrt(std::max(0.0, cov(k, k)));
    r.std_error(k) = se;
    r.interval_low(k) = r.rho_hat(k) - kZ975 * se;
    r.interval_high(k) = r.rho_hat(k) + kZ975 * se;
    if (se > 0.0) r.p_value(k) = two_sided_normal_p(r.rho_hat(k) / se);
    else r.p_value(k) = r.rho_hat(k) == 0.0 ? 1.0 : 0.0;
    r.reject.push_back(r.p_value(k) < 0.05);
    r.degenerate.push_back(se == 0.0 || col_var(k) == 0.0 || col_var(K + k) == 0.0);
  }

  // Simultaneous marginal homogeneity: rho' V^+ rho ~ chi^2(rank V).
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cov);
  r.joint_df = static_cast<int>(cod.rank());
  if (r.joint_df > 0) {
    r.joint_statistic = r.rho_hat.dot(cod.pseudoInverse() * r.rho_hat);
    const boost::math::chi_squared_distribution<double> chi(r.joint_df);
    r.joint_p_value = boost::math::cdf(boost::math::complement(chi, std::max(0.0, r.joint_statistic)));
  }
  return r;
}

/// Means of pre-differenced outcomes over `resamples` subject resamples;
/// returns resamples x K. Blocks of 1000 resamples use derived streams, so
/// the result does not depend on the worker count.
inline Eigen::MatrixXd bootstrap_means(const MatchedBinaryTable& t, long resamples, const RngStream& rng) {
  constexpr long kBlock = 1000;
  const Eigen::MatrixXd d = difference_matrix(t);
  const auto n = t.n();
  Eigen::MatrixXd out(resamples, t.K());
  const auto blocks = static_cast<std::size_t>((resamples + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::size_t b) {
    RngStream local = rng.derive(b);
    const long begin = static_cast<long>(b) * kBlock;
    const long end = std::min(resamples, begin + kBlock);
    Eigen::VectorXd acc(t.K());
    for (long r = begin; r < end; ++r) {
      acc.setZero();
      for (Eigen::Index i = 0; i < n; ++i)
        acc += d.row(static_cast<Eigen::Index>(local.below(static_cast<std::uint64_t>(n)))).transpose();
      out.row(r) = (acc / static_cast<double>(n)).transpose();
    }
  });
  return out;
}

inline FrequentistResult bootstrap_estimate(const MatchedBinaryTable& t, long resamples, RngStream& rng) {
  if (t.n() < 2) throw std::invalid_argument("bootstrap needs n >= 2");
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  const auto K = t.K();
  FrequentistResult r;
  r.method = FrequentistMethod::bootstrap;
  r.set_labels = t.set_labels();
  r.rho_hat = difference_means(t);
  r.resamples = resamples;
  const Eigen::MatrixXd m = bootstrap_means(t, resamples, rng);
  r.interval_low.resize(K);
  r.interval_high.resize(K);
  r.raw_p_value.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    std::vector<double> v(static_cast<std::size_t>(resamples));
    long at_or_below = 0;
    long at_or_above = 0;
    for (long b = 0; b < resamples; ++b) {
      const double x = m(b, k);
      v[static_cast<std::size_t>(b)] = x;
      at_or_below += x <= 0.0;
      at_or_above += x >= 0.0;
    }
    std::sort(v.begin(), v.end());
    r.interval_low(k) = quantile_sorted(v, 0.025);
    r.interval_high(k) = quantile_sorted(v, 0.975);
    const double tail = static_cast<double>(2 * std::min(at_or_below, at_or_above) + 1);
    r.raw_p_value(k) = std::min(1.0, tail / static_cast<double>(resamples + 1));
    r.reject.push_back(r.interval_low(k) > 0.0 || r.interval_high(k) < 0.0);
    r.degenerate.push_back(r.interval_low(k) == r.interval_high(k));
  }
  r.p_value = holm_adjust(r.raw_p_value);
  return r;
}

inline FrequentistResult bootstrap_estimate(const MatchedBinaryTable& t, RngStream& rng) {
  return bootstrap_estimate(t, 10000, rng);
}

/// Risk ratio (n21 + c)/(n12 + c), c = 1/2 when a discordant cell is empty.
/// The risk difference is the difference of the corrected marginal risks
/// over n + 2c subjects; its interval maps the log-RR Wald interval through
/// RD(r) = (n12 + c)(r - 1)/(n + 2c).
inline FrequentistResult erm_estimate(const PairedCounts& counts) {
  const auto K = static_cast<Eigen::Index>(counts.K());
  FrequentistResult r;
  r.method = FrequentistMethod::erm;
  r.set_labels = counts.set_labels;
  r.rho_hat.resize(K);
  r.interval_low.resize(K);
  r.interval_high.resize(K);
  r.p_value.resize(K);
  r.risk_ratio.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& c = counts.cells[static_cast<std::size_t>(k)];
    const double corr = (c.n12 == 0 || c.n21 == 0) ? 0.5 : 0.0;
    const double a = static_cast<double>(c.n21) + corr;
    const double b = static_cast<double>(c.n12) + corr;
    const double n = static_cast<double>(c.total()) + 2.0 * corr;
    const double rr = a / b;
    const double se = std::sqrt(1.0 / a + 1.0 / b);
    r.risk_ratio(k) = rr;
    r.rho_hat(k) = (a - b) / n;
    const double lo = rr * std::exp(-kZ975 * se);
    const double hi = rr * std::exp(kZ975 * se);
    r.interval_low(k) = b * (lo - 1.0) / n;
    r.interval_high(k) = b * (hi - 1.0) / n;
    r.p_value(k) = two_sided_normal_p(std::log(rr) / se);
    r.reject.push_back(r.p_value(k) < 0.05);
    r.degenerate.push_back(false);
    r.corrected.push_back(corr > 0.0);
  }
  return r;
}

inline FrequentistResult erm_estimate(const MatchedBinaryTable& t) { return erm_estimate(paired_counts(t)); }

}  // namespace mmp
