#pragma once

// Tabular output: summary CSVs, the aligned per-component table, simulation
// metrics and long-format figure data.

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmp/analysis.hpp"
#include "mmp/simulation.hpp"

namespace mmp {

using Metadata = std::map<std::string, std::string>;

inline void write_metadata(std::ostream& out, const Metadata& meta) {
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
}

inline std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s(buf);
  // Avoid printing "-0.000".
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline std::string full(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

inline void write_summary_header(std::ostream& out) {
  out << "method,label,estimate,interval_low,interval_high,prob_positive,p_value,reject,degenerate,r_hat,"
         "r_hat_upper_95\n";
}

inline void write_summary_rows(std::ostream& out, const EstimateReport& r) {
  for (const auto& row : r.rows)
    out << method_name(r.method) << ',' << row.label << ',' << full(row.estimate) << ',' << full(row.low) << ','
        << full(row.high) << ',' << full(row.prob_positive) << ',' << full(row.p_value) << ','
        << (row.reject ? 1 : 0) << ',' << (row.degenerate ? 1 : 0) << ',' << full(row.psrf.r_hat) << ','
        << full(row.psrf.upper_95) << '\n';
}

inline void write_summary_csv(std::ostream& out, const std::vector<EstimateReport>& reports,
                              const Metadata& meta = {}) {
  write_metadata(out, meta);
  write_summary_header(out);
  for (const auto& r : reports) write_summary_rows(out, r);
}

/// Aligned text table, one row per component. Bayesian reports carry the
/// credible interval, P(rho > 0) and Gelman-Rubin columns; frequentist ones
/// the confidence interval, p-value and flags.
inline std::string format_table(const EstimateReport& r) {
  std::ostringstream o;
  char line[256];
  o << "method: " << method_name(r.method) << '\n';
  if (is_bayesian(r.method)) {
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s %8s %10s\n", "Component", "rho", "2.5%", "97.5%",
                  "P(rho>0)", "R-hat", "Upper 95%");
    o << line;
    for (const auto& row : r.rows) {
      std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s %8s %10s\n", row.label.c_str(),
                    fixed(row.estimate).c_str(), fixed(row.low).c_str(), fixed(row.high).c_str(),
                    fixed(row.prob_positive).c_str(), fixed(row.psrf.r_hat).c_str(),
                    fixed(row.psrf.upper_95).c_str());
      o << line;
    }
  } else {
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s %7s %11s\n", "Component", "rho", "low", "high",
                  "p-value", "reject", "degenerate");
    o << line;
    for (const auto& row : r.rows) {
      std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s %7s %11s\n", row.label.c_str(),
                    fixed(row.estimate).c_str(), fixed(row.low).c_str(), fixed(row.high).c_str(),
                    fixed(row.p_value, 4).c_str(), row.reject ? "yes" : "no", row.degenerate ? "yes" : "no");
      o << line;
    }
  }
  return o.str();
}

inline void write_metrics_csv(std::ostream& out, const MetricsTable& t, const Metadata& meta = {}) {
  write_metadata(out, meta);
  out << "# generated=" << t.generated << "\n# sparse_found=" << t.sparse_found << '\n';
  out << "method,K,theta12,coverage,power,bias,width,replicates\n";
  for (const auto& r : t.rows)
    out << method_name(r.method) << ',' << t.scenario.K << ',' << t.scenario.theta12 << ',' << full(r.coverage)
        << ',' << full(r.power) << ',' << full(r.bias) << ',' << full(r.width) << ',' << r.replicates << '\n';
}

/// Per-replicate raw outcomes (the bias histograms are drawn from these).
inline void write_replicates_csv(std::ostream& out, const MetricsTable& t, const Metadata& meta = {}) {
  write_metadata(out, meta);
  out << "method,K,theta12,replicate,truth,estimate,interval_low,interval_high,reject\n";
  for (const auto& o : t.outcomes)
    out << method_name(o.method) << ',' << t.scenario.K << ',' << t.scenario.theta12 << ',' << o.replicate << ','
        << full(o.truth) << ',' << full(o.estimate) << ',' << full(o.low) << ',' << full(o.high) << ','
        << (o.reject ? 1 : 0) << '\n';
}

/// Long format for one K: metric vs theta12 per method.
inline void write_figure_data(std::ostream& out, const std::vector<MetricsTable>& cells, int K,
                              const Metadata& meta = {}) {
  write_metadata(out, meta);
  out << "K,theta12,method,metric,value\n";
  for (const auto& t : cells) {
    if (t.scenario.K != K) continue;
    for (const auto& r : t.rows) {
      const std::pair<const char*, double> metrics[] = {
          {"coverage", r.coverage}, {"power", r.power}, {"bias", r.bias}, {"width", r.width}};
      for (const auto& [name, v] : metrics)
        out << K << ',' << t.scenario.theta12 << ',' << method_name(r.method) << ',' << name << ',' << full(v)
            << '\n';
    }
  }
}

inline nlohmann::json to_json(const MetricsTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"method", std::string(method_name(r.method))},
                    {"coverage", r.coverage},
                    {"power", r.power},
                    {"bias", r.bias},
                    {"width", r.width},
                    {"replicates", r.replicates}});
  return {{"K", t.scenario.K},
          {"theta12", t.scenario.theta12},
          {"generated", t.generated},
          {"sparse_found", t.sparse_found},
          {"achieved", t.achieved},
          {"rows", rows}};
}

}  // namespace mmp
