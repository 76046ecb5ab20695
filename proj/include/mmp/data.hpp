#pragma once

// MMP data model: the n x 2K binary table, per-set 2x2 counts, the contrast
// L = (I_K | -I_K) and the beta -> theta -> rho transform.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mmp/core.hpp"
#include "mmp/normal.hpp"

namespace mmp {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Observation index j. Column (j, k) of the table lives at j * K + k.
enum class Observation : int { first = 0, second = 1 };

/// Subjects x (observation, set) binary responses.
///
/// Columns are ordered (j=1, k=1..K, j=2, k=1..K). Immutable once built.
class MatchedBinaryTable {
 public:
  MatchedBinaryTable(BinaryMatrix x, std::vector<std::string> set_labels,
                     std::vector<std::string> observation_labels = {"j1", "j2"})
      : x_(std::move(x)),
        set_labels_(std::move(set_labels)),
        observation_labels_(std::move(observation_labels)) {
    if (x_.rows() == 0) throw DataError("no subjects");
    if (x_.cols() == 0 || x_.cols() % 2 != 0)
      throw DataError("column count " + std::to_string(x_.cols()) + " is not 2K for K >= 1");
    const auto k = x_.cols() / 2;
    if (static_cast<Eigen::Index>(set_labels_.size()) != k)
      throw DataError("expected " + std::to_string(k) + " set labels, got " +
                      std::to_string(set_labels_.size()));
    std::set<std::string> seen;
    for (const auto& l : set_labels_)
      if (!seen.insert(l).second) throw DataError("duplicate set label '" + l + "'");
    if (observation_labels_.size() != 2) throw DataError("need exactly two observation labels");
    for (Eigen::Index c = 0; c < x_.cols(); ++c)
      for (Eigen::Index i = 0; i < x_.rows(); ++i)
        if (x_(i, c) > 1) throw DataError("non-binary entry");
  }

  /// Unlabelled convenience constructor; sets are named S1..SK.
  explicit MatchedBinaryTable(BinaryMatrix x) : MatchedBinaryTable(x, default_labels(x.cols())) {}

  Eigen::Index n() const { return x_.rows(); }
  Eigen::Index K() const { return x_.cols() / 2; }
  Eigen::Index columns() const { return x_.cols(); }

  Eigen::Index column_index(Observation j, Eigen::Index k) const {
    return static_cast<int>(j) * K() + k;
  }

  std::uint8_t operator()(Eigen::Index i, Eigen::Index c) const { return x_(i, c); }
  std::uint8_t at(Eigen::Index i, Observation j, Eigen::Index k) const {
    return x_(i, column_index(j, k));
  }

  const BinaryMatrix& matrix() const { return x_; }
  const std::vector<std::string>& set_labels() const { return set_labels_; }
  const std::vector<std::string>& observation_labels() const { return observation_labels_; }

  /// Sample proportion of every column, in table column order.
  Eigen::VectorXd column_means() const {
    return x_.cast<double>().colwise().mean().transpose();
  }

  /// Rows permuted by `order` (order[i] = source row of new row i).
  MatchedBinaryTable permuted(const std::vector<Eigen::Index>& order) const {
    BinaryMatrix y(x_.rows(), x_.cols());
    for (Eigen::Index i = 0; i < x_.rows(); ++i) y.row(i) = x_.row(order.at(i));
    return {std::move(y), set_labels_, observation_labels_};
  }

 private:
  static std::vector<std::string> default_labels(Eigen::Index cols) {
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < cols / 2; ++k) out.push_back("S" + std::to_string(k + 1));
    return out;
  }

  BinaryMatrix x_;
  std::vector<std::string> set_labels_;
  std::vector<std::string> observation_labels_;
};

/// One 2x2 table. First index is observation j=2 (rows), second is j=1
/// (columns), index 1 = "yes". So n21 counts (j2 no, j1 yes) and n12 counts
/// (j2 yes, j1 no).
struct CellCounts {
  long n11 = 0;
  long n12 = 0;
  long n21 = 0;
  long n22 = 0;

  long total() const { return n11 + n12 + n21 + n22; }
  friend bool operator==(const CellCounts&, const CellCounts&) = default;
};

struct PairedCounts {
  std::vector<std::string> set_labels;
  std::vector<CellCounts> cells;
  long n = 0;

  std::size_t K() const { return cells.size(); }
};

inline PairedCounts paired_counts(const MatchedBinaryTable& t) {
  PairedCounts out;
  out.set_labels = t.set_labels();
  out.n = static_cast<long>(t.n());
  out.cells.resize(static_cast<std::size_t>(t.K()));
  for (Eigen::Index k = 0; k < t.K(); ++k) {
    auto& c = out.cells[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < t.n(); ++i) {
      const bool first = t.at(i, Observation::first, k) != 0;
      const bool second = t.at(i, Observation::second, k) != 0;
      if (second && first) ++c.n11;
      else if (second) ++c.n12;
      else if (first) ++c.n21;
      else ++c.n22;
    }
  }
  return out;
}

/// A set is sparse when either discordant cell is empty.
inline std::vector<bool> sparsity_flags(const PairedCounts& counts) {
  std::vector<bool> out;
  out.reserve(counts.K());
  for (const auto& c : counts.cells) out.push_back(std::min(c.n12, c.n21) == 0);
  return out;
}

/// L = (I_K | -I_K).
inline Eigen::MatrixXd contrast_matrix(Eigen::Index K) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(K, 2 * K);
  L.leftCols(K).setIdentity();
  L.rightCols(K) = -Eigen::MatrixXd::Identity(K, K);
  return L;
}

struct MarginalEstimates {
  Eigen::VectorXd theta;
  Eigen::VectorXd rho;
};

/// rho = L applied to theta, without forming L.
inline Eigen::VectorXd rho_from_theta(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const auto K = theta.size() / 2;
  return theta.head(K) - theta.tail(K);
}

inline MarginalEstimates rho_from_beta(const Eigen::Ref<const Eigen::VectorXd>& beta) {
  if (beta.size() == 0 || beta.size() % 2 != 0)
    throw NumericError("beta must have even length 2K");
  if (!beta.allFinite()) throw NumericError("non-finite beta");
  MarginalEstimates m;
  m.theta = beta.unaryExpr([](double b) { return normal_cdf(b); });
  m.rho = rho_from_theta(m.theta);
  return m;
}

inline nlohmann::json to_json(const PairedCounts& pc) {
  nlohmann::json sets = nlohmann::json::array();
  for (std::size_t k = 0; k < pc.K(); ++k) {
    const auto& c = pc.cells[k];
    sets.push_back({{"label", pc.set_labels[k]},
                    {"n11", c.n11},
                    {"n12", c.n12},
                    {"n21", c.n21},
                    {"n22", c.n22}});
  }
  return {{"n", pc.n}, {"sets", sets}};
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// How rows are laid out. Pattern-count files carry a trailing `count` column
/// and each row stands for that many identical subjects.
enum class CsvLayout { subjects, pattern_counts };

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses CSV text. Header columns are `j1_<label>` / `j2_<label>` in any
/// order; each label must appear once per observation.
inline MatchedBinaryTable parse_csv(std::istream& in, CsvLayout layout = CsvLayout::subjects) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw DataError("missing header row");

  const bool counted = layout == CsvLayout::pattern_counts;
  if (counted) {
    if (header.back() != "count") throw DataError("pattern-count CSV needs a trailing 'count' column");
    header.pop_back();
  }
  if (header.size() % 2 != 0)
    throw DataError("dimension error: " + std::to_string(header.size()) +
                    " response columns is not 2K");
  const std::size_t K = header.size() / 2;

  // Map header position -> table column.
  std::vector<std::string> labels;
  std::vector<std::string> second_labels;
  std::vector<std::size_t> source_first;
  std::vector<std::size_t> source_second;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.rfind("j1_", 0) == 0) {
      labels.push_back(h.substr(3));
      source_first.push_back(c);
    } else if (h.rfind("j2_", 0) == 0) {
      second_labels.push_back(h.substr(3));
      source_second.push_back(c);
    } else {
      throw DataError("header column '" + h + "' is not of the form j1_<label> or j2_<label>");
    }
  }
  if (labels.size() != K || second_labels.size() != K)
    throw DataError("dimension error: unequal j1_/j2_ column counts");
  {
    std::set<std::string> seen;
    for (const auto& l : labels)
      if (!seen.insert(l).second) throw DataError("label collision: '" + l + "'");
  }
  std::vector<std::size_t> column_source(2 * K);
  for (std::size_t k = 0; k < K; ++k) {
    column_source[k] = source_first[k];
    const auto it = std::find(second_labels.begin(), second_labels.end(), labels[k]);
    if (it == second_labels.end()) throw DataError("label '" + labels[k] + "' has no j2_ column");
    if (std::count(second_labels.begin(), second_labels.end(), labels[k]) > 1)
      throw DataError("label collision: '" + labels[k] + "'");
    column_source[K + k] = source_second[static_cast<std::size_t>(it - second_labels.begin())];
  }

  std::vector<std::vector<std::uint8_t>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = detail::split_csv_line(line);
    const std::size_t expected = 2 * K + (counted ? 1 : 0);
    if (cells.size() != expected)
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                      " cells, got " + std::to_string(cells.size()));
    std::vector<std::uint8_t> row(2 * K);
    for (std::size_t c = 0; c < 2 * K; ++c) {
      const auto& cell = cells[column_source[c]];
      if (cell == "0") row[c] = 0;
      else if (cell == "1") row[c] = 1;
      else
        throw DataError("line " + std::to_string(line_no) + ": malformed cell '" + cell + "'");
    }
    long repeat = 1;
    if (counted) {
      const auto& cs = cells.back();
      std::size_t used = 0;
      try {
        repeat = std::stol(cs, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cs.size() || cs.empty() || repeat < 0)
        throw DataError("line " + std::to_string(line_no) + ": malformed count '" + cs + "'");
    }
    for (long r = 0; r < repeat; ++r) rows.push_back(row);
  }
  if (rows.empty()) throw DataError("no subjects");

  BinaryMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(2 * K));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < 2 * K; ++c)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return {std::move(x), std::move(labels)};
}

inline MatchedBinaryTable ingest_csv(const std::string& path, CsvLayout layout = CsvLayout::subjects) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, layout);
}

/// Writes the subject-level CSV layout accepted by ingest_csv.
inline void write_csv(std::ostream& out, const MatchedBinaryTable& t) {
  const auto& labels = t.set_labels();
  for (int j = 0; j < 2; ++j)
    for (Eigen::Index k = 0; k < t.K(); ++k)
      out << (j + k == 0 ? "" : ",") << "j" << (j + 1) << "_" << labels[static_cast<std::size_t>(k)];
  out << '\n';
  for (Eigen::Index i = 0; i < t.n(); ++i) {
    for (Eigen::Index c = 0; c < t.columns(); ++c) out << (c ? "," : "") << int(t(i, c));
    out << '\n';
  }
}

}  // namespace mmp
