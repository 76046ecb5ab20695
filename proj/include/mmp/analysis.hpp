#pragma once

// One entry point for all six estimators and a common report shape.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmp/comparators.hpp"
#include "mmp/fpca_gibbs.hpp"
#include "mmp/posterior.hpp"
#include "mmp/probit_gibbs.hpp"

namespace mmp {

enum class Method { naive, penalized, mvp, gee, bootstrap, erm };

inline constexpr Method kAllMethods[] = {Method::naive, Method::penalized, Method::mvp,
                                         Method::gee,   Method::bootstrap, Method::erm};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::naive: return "naive";
    case Method::penalized: return "penalized";
    case Method::mvp: return "mvp";
    case Method::gee: return "gee";
    case Method::bootstrap: return "bootstrap";
    case Method::erm: return "erm";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (auto m : kAllMethods)
    if (method_name(m) == s) return m;
  if (s == "fpca") return Method::mvp;
  return std::nullopt;
}

inline bool is_bayesian(Method m) { return m == Method::naive || m == Method::penalized || m == Method::mvp; }

struct MethodSettings {
  SamplerConfig sampler;
  FpcaOptions fpca;  // A is shared with the penalized model
  long bootstrap_resamples = 10000;
};

struct EstimateRow {
  std::string label;
  double estimate = 0.0;  // posterior median or point estimate
  double low = 0.0;
  double high = 0.0;
  double prob_positive = std::numeric_limits<double>::quiet_NaN();  // Bayesian only
  double p_value = std::numeric_limits<double>::quiet_NaN();        // frequentist only
  bool reject = false;  // 95% interval excludes 0 (Bayes, bootstrap) or p < 0.05 (gee, erm)
  bool degenerate = false;
  PsrfResult psrf;
};

struct EstimateReport {
  Method method = Method::gee;
  std::vector<EstimateRow> rows;
  std::optional<PosteriorChain> chain;
  std::optional<FrequentistResult> frequentist;
};

inline EstimateReport report_from_chain(Method m, PosteriorChain chain) {
  EstimateReport r;
  r.method = m;
  for (const auto& s : summarize(chain)) {
    EstimateRow row;
    row.label = s.label;
    row.estimate = s.median;
    row.low = s.lower;
    row.high = s.upper;
    row.prob_positive = s.prob_positive;
    row.reject = s.lower > 0.0 || s.upper < 0.0;
    row.degenerate = !(s.upper > s.lower);
    row.psrf = s.psrf;
    r.rows.push_back(std::move(row));
  }
  r.chain = std::move(chain);
  return r;
}

inline EstimateReport report_from_frequentist(Method m, FrequentistResult f) {
  EstimateReport r;
  r.method = m;
  for (Eigen::Index k = 0; k < f.K(); ++k) {
    EstimateRow row;
    row.label = f.set_labels[static_cast<std::size_t>(k)];
    row.estimate = f.rho_hat(k);
    row.low = f.interval_low(k);
    row.high = f.interval_high(k);
    row.p_value = f.p_value(k);
    row.reject = f.reject[static_cast<std::size_t>(k)];
    row.degenerate = f.degenerate[static_cast<std::size_t>(k)];
    r.rows.push_back(std::move(row));
  }
  r.frequentist = std::move(f);
  return r;
}

inline EstimateReport run_method(Method m, const MatchedBinaryTable& t, const MethodSettings& s, RngStream& rng) {
  switch (m) {
    case Method::naive: return report_from_chain(m, gibbs_naive(t, s.sampler));
    case Method::penalized: return report_from_chain(m, gibbs_penalized(t, s.sampler, s.fpca.A));
    case Method::mvp: return report_from_chain(m, gibbs_fpca(t, s.sampler, s.fpca));
    case Method::gee: return report_from_frequentist(m, gee_estimate(t));
    case Method::bootstrap: return report_from_frequentist(m, bootstrap_estimate(t, s.bootstrap_resamples, rng));
    case Method::erm: return report_from_frequentist(m, erm_estimate(t));
  }
  throw std::logic_error("unhandled method");
}

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const EstimateReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"label", row.label},
                     {"estimate", row.estimate},
                     {"interval_low", row.low},
                     {"interval_high", row.high},
                     {"reject", row.reject},
                     {"degenerate", row.degenerate}};
    if (is_bayesian(r.method)) {
      j["prob_positive"] = row.prob_positive;
      j["r_hat"] = number_or_null(row.psrf.r_hat);
      j["r_hat_upper_95"] = number_or_null(row.psrf.upper_95);
    } else {
      j["p_value"] = row.p_value;
    }
    rows.push_back(std::move(j));
  }
  nlohmann::json out{{"method", std::string(method_name(r.method))}, {"rows", rows}};
  if (r.frequentist) {
    const auto& f = *r.frequentist;
    if (f.method == FrequentistMethod::gee)
      out["joint_test"] = {{"statistic", f.joint_statistic}, {"df", f.joint_df}, {"p_value", f.joint_p_value}};
    if (f.method == FrequentistMethod::bootstrap) {
      out["resamples"] = f.resamples;
      out["raw_p_value"] = std::vector<double>(f.raw_p_value.data(), f.raw_p_value.data() + f.raw_p_value.size());
    }
    if (f.method == FrequentistMethod::erm) {
      out["risk_ratio"] = std::vector<double>(f.risk_ratio.data(), f.risk_ratio.data() + f.risk_ratio.size());
      out["corrected"] = f.corrected;
    }
  }
  if (r.chain) {
    const auto& c = r.chain->config;
    out["sampler"] = {{"iterations", c.total_iterations}, {"burn_in", c.burn_in}, {"thinning", c.thinning},
                      {"chains", c.chains},           {"seed", c.seed}};
    if (r.method == Method::mvp) {
      out["sampler"]["rho_scale"] = r.chain->rho_scale == RhoScale::marginal ? "marginal" : "latent";
      long jitter = 0;
      for (const auto& b : r.chain->chains) jitter += b.jitter_events;
      out["sampler"]["jitter_events"] = jitter;
    }
  }
  return out;
}

}  // namespace mmp
