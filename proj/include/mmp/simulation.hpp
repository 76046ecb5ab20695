#pragma once

// Sparse-response simulation study: generate, keep datasets whose second set
// is sparse, subsample, run every method, aggregate coverage / power / bias /
// width for rho_2.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmp/analysis.hpp"
#include "mmp/data.hpp"
#include "mmp/parallel.hpp"
#include "mmp/random.hpp"

namespace mmp {

/// How the generating probabilities are perturbed around theta_true.
enum class ThetaDraw { per_subject, per_dataset };

/// Target for coverage and bias: the probabilities that generated the
/// dataset, or the design values.
enum class TruthMode { dataset, design };

/// Design theta for K in {2, 3, 4, 5}, with theta_12 at position 1.
inline Eigen::VectorXd design_theta(int K, double theta12) {
  std::vector<double> v;
  switch (K) {
    case 2: v = {0.05, theta12, 0.25, 0.005}; break;
    case 3: v = {0.05, theta12, 0.1, 0.25, 0.005, 0.15}; break;
    case 4: v = {0.05, theta12, 0.005, 0.1, 0.25, 0.005, 0.05, 0.15}; break;
    case 5: v = {0.05, theta12, 0.005, 0.1, 0.25, 0.25, 0.005, 0.05, 0.15, 0.35}; break;
    default: throw std::invalid_argument("simulation designs exist for K = 2..5 only");
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline constexpr double kThetaGrid[] = {0.05, 0.10, 0.15, 0.20};
inline constexpr int kKGrid[] = {2, 3, 4, 5};

struct SimScenario {
  int n = 75;
  int K = 2;
  double theta12 = 0.05;
  double theta_draw_sd = 0.035;
  ThetaDraw draw = ThetaDraw::per_subject;
  TruthMode truth = TruthMode::dataset;
  int replicates = 200;
  int batch_size = 1000;
  int max_batches = 10;
  std::uint64_t seed = 1;
  /// Set whose sparsity is required (0-based); the designed sparse set.
  int sparse_set = 1;

  Eigen::VectorXd theta_true() const { return design_theta(K, theta12); }
};

struct SimDataset {
  MatchedBinaryTable table;
  Eigen::VectorXd generating_theta;  // per-dataset draw, or subject average

  double truth_rho(const SimScenario& s, Eigen::Index k) const {
    const Eigen::VectorXd th = s.truth == TruthMode::design ? s.theta_true() : generating_theta;
    return th(k) - th(s.K + k);
  }
};

inline SimDataset generate_dataset(const SimScenario& s, RngStream& rng) {
  const Eigen::VectorXd theta = s.theta_true();
  const auto D = theta.size();
  Eigen::MatrixXd p(s.n, D);
  auto draw_row = [&] {
    Eigen::RowVectorXd r(D);
    for (Eigen::Index c = 0; c < D; ++c) r(c) = std::clamp(theta(c) + s.theta_draw_sd * rng.normal(), 0.0, 1.0);
    return r;
  };
  if (s.draw == ThetaDraw::per_dataset) {
    p.rowwise() = draw_row();
  } else {
    for (int i = 0; i < s.n; ++i) p.row(i) = draw_row();
  }
  SimDataset out{MatchedBinaryTable(draw_bernoulli_matrix(p, rng)), p.colwise().mean().transpose()};
  return out;
}

inline bool is_sparse_on(const MatchedBinaryTable& t, int set) {
  return sparsity_flags(paired_counts(t)).at(static_cast<std::size_t>(set));
}

/// Fraction of generated datasets that are sparse on the designated set.
inline double sparsity_yield(const SimScenario& s, int batches, const RngStream& rng) {
  long sparse = 0;
  long total = 0;
  for (int b = 0; b < batches; ++b) {
    for (int d = 0; d < s.batch_size; ++d) {
      RngStream local = rng.derive(static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(s.batch_size) + d);
      sparse += is_sparse_on(generate_dataset(s, local).table, s.sparse_set);
      ++total;
    }
  }
  return static_cast<double>(sparse) / static_cast<double>(total);
}

struct ReplicateOutcome {
  Method method;
  int replicate = 0;
  double truth = 0.0;
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  bool reject = false;
};

struct MethodMetrics {
  Method method;
  double coverage = 0.0;
  double power = 0.0;
  double bias = 0.0;
  double width = 0.0;
  int replicates = 0;
};

struct MetricsTable {
  SimScenario scenario;
  long generated = 0;
  long sparse_found = 0;
  int achieved = 0;  // replicates actually evaluated
  std::vector<MethodMetrics> rows;
  std::vector<ReplicateOutcome> outcomes;

  const MethodMetrics& row(Method m) const {
    for (const auto& r : rows)
      if (r.method == m) return r;
    throw std::out_of_range("method not in metrics table");
  }
};

inline std::vector<MethodMetrics> aggregate(const std::vector<ReplicateOutcome>& outcomes,
                                            const std::vector<Method>& methods) {
  std::vector<MethodMetrics> rows;
  for (auto m : methods) {
    MethodMetrics mm{m};
    for (const auto& o : outcomes) {
      if (o.method != m) continue;
      ++mm.replicates;
      mm.coverage += (o.low <= o.truth && o.truth <= o.high);
      mm.power += o.reject;
      mm.bias += o.estimate - o.truth;
      mm.width += o.high - o.low;
    }
    if (mm.replicates > 0) {
      const double r = mm.replicates;
      mm.coverage /= r;
      mm.power /= r;
      mm.bias /= r;
      mm.width /= r;
    }
    rows.push_back(mm);
  }
  return rows;
}

/// Full protocol for one (K, theta12) cell. Deterministic given the scenario
/// seed and method settings.
inline MetricsTable run_scenario(const SimScenario& s, const std::vector<Method>& methods,
                                 const MethodSettings& settings) {
  if (methods.empty()) throw std::invalid_argument("run_scenario needs at least one method");
  const RngStream root(s.seed, 0);
  const RngStream gen_root = root.derive(1);
  const RngStream method_root = root.derive(2);

  MetricsTable out;
  out.scenario = s;
  std::vector<SimDataset> pool;
  for (int b = 0; b < s.max_batches && static_cast<int>(pool.size()) < s.replicates; ++b) {
    std::vector<std::optional<SimDataset>> batch(static_cast<std::size_t>(s.batch_size));
    parallel_for(batch.size(), [&](std::size_t d) {
      RngStream local = gen_root.derive(static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(s.batch_size) + d);
      auto ds = generate_dataset(s, local);
      if (is_sparse_on(ds.table, s.sparse_set)) batch[d] = std::move(ds);
    });
    out.generated += s.batch_size;
    for (auto& d : batch)
      if (d) pool.push_back(std::move(*d));
  }
  out.sparse_found = static_cast<long>(pool.size());
  if (static_cast<int>(pool.size()) < s.replicates)
    warn("sparse yield shortfall: " + std::to_string(pool.size()) + " of " + std::to_string(s.replicates) +
         " requested replicates after " + std::to_string(out.generated) + " datasets");

  // Uniform subsample without replacement (partial Fisher-Yates).
  RngStream pick = root.derive(3);
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto take = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(s.replicates));
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + pick.below(idx.size() - i)]);
  out.achieved = static_cast<int>(take);

  std::vector<std::vector<ReplicateOutcome>> per_rep(take);
  parallel_for(take, [&](std::size_t r) {
    const auto& ds = pool[idx[r]];
    const double truth = ds.truth_rho(s, s.sparse_set);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      RngStream rng = method_root.derive(r * 16 + mi);
      MethodSettings local = settings;
      local.sampler.seed = rng.derive(0).seed();
      local.sampler.chains = 1;
      const auto rep = run_method(methods[mi], ds.table, local, rng);
      const auto& row = rep.rows[static_cast<std::size_t>(s.sparse_set)];
      per_rep[r].push_back({methods[mi], static_cast<int>(r), truth, row.estimate, row.low, row.high, row.reject});
    }
  });
  for (auto& v : per_rep) out.outcomes.insert(out.outcomes.end(), v.begin(), v.end());
  out.rows = aggregate(out.outcomes, methods);
  return out;
}

}  // namespace mmp
