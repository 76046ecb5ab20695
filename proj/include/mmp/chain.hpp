#pragma once

// Retained MCMC draws plus the sampler settings that produced them.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mmp/core.hpp"

namespace mmp {

enum class Model { naive, penalized, mvp };

inline std::string_view model_tag(Model m) {
  switch (m) {
    case Model::naive: return "naive";
    case Model::penalized: return "penalized";
    case Model::mvp: return "mvp";
  }
  return "?";
}

inline Model parse_model(std::string_view s) {
  if (s == "naive") return Model::naive;
  if (s == "penalized") return Model::penalized;
  if (s == "mvp" || s == "fpca") return Model::mvp;
  throw std::invalid_argument("unknown Bayesian model '" + std::string(s) + "'");
}

/// Scale on which rho draws are reported for the FPCA model.
///  - latent:   rho = L Phi(beta)
///  - marginal: rho = L (1/n) sum_i Phi(beta + Omega Psi c_i')
enum class RhoScale { latent, marginal };

struct SamplerConfig {
  long total_iterations = 20000;
  long burn_in = 10000;
  long thinning = 1;
  int chains = 1;
  std::uint64_t seed = 1;
  /// Verify the latent sign pattern after every sweep.
  bool check_invariants = false;

  void validate() const {
    if (total_iterations < 1) throw std::invalid_argument("total_iterations must be >= 1");
    if (burn_in < 0 || burn_in >= total_iterations)
      throw std::invalid_argument("burn_in must satisfy 0 <= burn_in < total_iterations");
    if (thinning < 1) throw std::invalid_argument("thinning must be >= 1");
    if (chains < 1) throw std::invalid_argument("chains must be >= 1");
  }

  long retained() const { return (total_iterations - burn_in) / thinning; }

  /// Iteration t (0-based) is kept when past burn-in and on the thinning grid.
  bool keeps(long t) const { return t >= burn_in && (t - burn_in + 1) % thinning == 0; }

  static SamplerConfig fast() {
    SamplerConfig c;
    c.total_iterations = 4000;
    c.burn_in = 2000;
    return c;
  }
};

/// Draws from one chain. Rows are retained iterations.
struct ChainBlock {
  Eigen::MatrixXd rho;           // draws x K, L Phi(beta)
  Eigen::MatrixXd beta;          // draws x 2K
  Eigen::VectorXd lambda;        // penalized, mvp
  Eigen::VectorXd sigma_eps2;    // mvp
  Eigen::MatrixXd lambda_ell;    // mvp: draws x L_scores
  Eigen::MatrixXd psi;           // mvp: draws x (2K * L_scores), column-major vec(Psi)
  Eigen::MatrixXd rho_marginal;  // mvp: draws x K
  std::vector<Eigen::MatrixXd> scores;  // mvp with keep_fpca_blocks: n x L_scores per draw
  long jitter_events = 0;

  Eigen::Index draws() const { return rho.rows(); }
};

struct PosteriorChain {
  Model model = Model::naive;
  SamplerConfig config;
  std::vector<std::string> set_labels;
  std::vector<ChainBlock> chains;
  RhoScale rho_scale = RhoScale::latent;

  // Model settings echoed for reports.
  double A = 10.0;
  double xi = 0.01;
  int scores = 2;
  Eigen::MatrixXd omega;  // mvp only

  Eigen::Index K() const { return static_cast<Eigen::Index>(set_labels.size()); }
  Eigen::Index draws_per_chain() const { return chains.empty() ? 0 : chains.front().draws(); }
  Eigen::Index total_draws() const {
    Eigen::Index n = 0;
    for (const auto& c : chains) n += c.draws();
    return n;
  }
  bool has_fpca_blocks() const { return model == Model::mvp && !chains.empty() && chains[0].psi.size() > 0; }

  /// The rho draws of chain `c` on the reported scale.
  const Eigen::MatrixXd& rho(std::size_t c) const {
    const auto& b = chains.at(c);
    if (rho_scale == RhoScale::marginal && b.rho_marginal.size() > 0) return b.rho_marginal;
    return b.rho;
  }

  /// All chains stacked, reported scale.
  Eigen::MatrixXd pooled_rho() const {
    Eigen::MatrixXd out(total_draws(), K());
    Eigen::Index r = 0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto& m = rho(c);
      out.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Columnar CSV serialization. Metadata lines start with '#'.

inline void write_chain_csv(std::ostream& out, const PosteriorChain& pc,
                            const std::map<std::string, std::string>& extra_meta = {}) {
  out << "# model=" << model_tag(pc.model) << '\n'
      << "# version=" << version() << '\n'
      << "# seed=" << pc.config.seed << '\n'
      << "# iterations=" << pc.config.total_iterations << '\n'
      << "# burn_in=" << pc.config.burn_in << '\n'
      << "# thinning=" << pc.config.thinning << '\n'
      << "# chains=" << pc.chains.size() << '\n'
      << "# rho_scale=" << (pc.rho_scale == RhoScale::marginal ? "marginal" : "latent") << '\n';
  for (const auto& [k, v] : extra_meta) out << "# " << k << '=' << v << '\n';

  const auto K = pc.K();
  const bool pen = pc.model != Model::naive;
  const bool mvp = pc.model == Model::mvp;
  const int L = pc.scores;
  out << "chain,draw";
  for (const auto& l : pc.set_labels) out << ",rho_" << l;
  for (int j = 1; j <= 2; ++j)
    for (const auto& l : pc.set_labels) out << ",beta_j" << j << '_' << l;
  if (pen) out << ",lambda";
  if (mvp) {
    out << ",sigma_eps2";
    for (int l = 1; l <= L; ++l) out << ",lambda_ell_" << l;
    for (const auto& l : pc.set_labels) out << ",rho_marginal_" << l;
  }
  out << '\n';
  std::ostringstream row;
  row.precision(17);
  for (std::size_t c = 0; c < pc.chains.size(); ++c) {
    const auto& b = pc.chains[c];
    for (Eigen::Index d = 0; d < b.draws(); ++d) {
      row.str("");
      row << c << ',' << d;
      for (Eigen::Index k = 0; k < K; ++k) row << ',' << b.rho(d, k);
      for (Eigen::Index k = 0; k < 2 * K; ++k) row << ',' << b.beta(d, k);
      if (pen) row << ',' << b.lambda(d);
      if (mvp) {
        row << ',' << b.sigma_eps2(d);
        for (int l = 0; l < L; ++l) row << ',' << b.lambda_ell(d, l);
        for (Eigen::Index k = 0; k < K; ++k) row << ',' << b.rho_marginal(d, k);
      }
      out << row.str() << '\n';
    }
  }
}

/// Loadings and (when kept) subject scores, long format.
inline void write_fpca_blocks_csv(std::ostream& out, const PosteriorChain& pc) {
  if (!pc.has_fpca_blocks()) throw std::invalid_argument("chain has no FPCA blocks");
  const auto D = 2 * pc.K();
  out.precision(17);
  out << "# model=" << model_tag(pc.model) << '\n'
      << "# version=" << version() << '\n'
      << "# seed=" << pc.config.seed << '\n'
      << "chain,draw,block,row,col,value\n";
  for (std::size_t c = 0; c < pc.chains.size(); ++c) {
    const auto& b = pc.chains[c];
    for (Eigen::Index d = 0; d < b.draws(); ++d) {
      for (Eigen::Index e = 0; e < b.psi.cols(); ++e)
        out << c << ',' << d << ",Psi," << (e % D) << ',' << (e / D) << ',' << b.psi(d, e) << '\n';
      if (static_cast<std::size_t>(d) < b.scores.size()) {
        const auto& s = b.scores[static_cast<std::size_t>(d)];
        for (Eigen::Index i = 0; i < s.rows(); ++i)
          for (Eigen::Index l = 0; l < s.cols(); ++l)
            out << c << ',' << d << ",C," << i << ',' << l << ',' << s(i, l) << '\n';
      }
    }
  }
}

/// Generic chain table read back from write_chain_csv output: metadata plus
/// every numeric column, split by chain.
struct ChainTable {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;  // excluding chain,draw
  std::vector<Eigen::MatrixXd> chains;
};

inline ChainTable read_chain_csv(std::istream& in) {
  ChainTable t;
  std::string line;
  bool have_header = false;
  std::vector<std::vector<std::vector<double>>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(' '));
        t.meta[key] = line.substr(eq + 1);
      }
      continue;
    }
    std::vector<std::string> cells;
    {
      std::istringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
    }
    if (!have_header) {
      if (cells.size() < 3 || cells[0] != "chain" || cells[1] != "draw")
        throw DataError("chain file header must start with chain,draw");
      t.columns.assign(cells.begin() + 2, cells.end());
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size() + 2)
      throw DataError("chain file line " + std::to_string(line_no) + ": wrong cell count");
    std::size_t c = 0;
    try {
      c = static_cast<std::size_t>(std::stoul(cells[0]));
    } catch (const std::exception&) {
      throw DataError("chain file line " + std::to_string(line_no) + ": bad chain index");
    }
    if (rows.size() <= c) rows.resize(c + 1);
    std::vector<double> v;
    v.reserve(t.columns.size());
    for (std::size_t i = 2; i < cells.size(); ++i) {
      try {
        v.push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw DataError("chain file line " + std::to_string(line_no) + ": malformed number");
      }
    }
    rows[c].push_back(std::move(v));
  }
  if (!have_header) throw DataError("chain file has no header");
  for (const auto& chain : rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(chain.size()), static_cast<Eigen::Index>(t.columns.size()));
    for (std::size_t r = 0; r < chain.size(); ++r)
      for (std::size_t k = 0; k < chain[r].size(); ++k)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = chain[r][k];
    t.chains.push_back(std::move(m));
  }
  return t;
}

}  // namespace mmp
