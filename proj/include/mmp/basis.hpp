#pragma once

// Square B-spline basis over the 2K latent positions with a mixed
// ridge / second-difference penalty.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmp/core.hpp"

namespace mmp {

struct BasisSystem {
  Eigen::MatrixXd omega;  // D x D, row r = all basis functions at grid point r
  Eigen::MatrixXd P0;     // identity
  Eigen::MatrixXd P2;     // D2' D2
  Eigen::MatrixXd P;      // xi P0 + (1 - xi) P2
  double xi = 0.01;
  int degree = 3;
  std::vector<double> knots;

  Eigen::Index dimension() const { return omega.rows(); }
};

/// Clamped knot vector on [0, 1] giving exactly `count` functions of `degree`.
inline std::vector<double> clamped_uniform_knots(int count, int degree) {
  std::vector<double> t;
  const int interior = count - degree - 1;
  for (int i = 0; i <= degree; ++i) t.push_back(0.0);
  for (int j = 1; j <= interior; ++j) t.push_back(static_cast<double>(j) / (interior + 1));
  for (int i = 0; i <= degree; ++i) t.push_back(1.0);
  return t;
}

/// Values of all `count` B-splines at x (Cox-de Boor, right end closed).
inline Eigen::VectorXd bspline_row(const std::vector<double>& t, int count, int degree, double x) {
  // Span s with t[s] <= x < t[s+1]; x at the right end uses the last span.
  int s = degree;
  while (s + 1 < count && x >= t[static_cast<std::size_t>(s + 1)]) ++s;

  std::vector<double> n(static_cast<std::size_t>(degree + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(degree + 1));
  std::vector<double> right(static_cast<std::size_t>(degree + 1));
  n[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[static_cast<std::size_t>(j)] = x - t[static_cast<std::size_t>(s + 1 - j)];
    right[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(s + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
      const double temp = denom == 0.0 ? 0.0 : n[static_cast<std::size_t>(r)] / denom;
      n[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - r)] * temp;
    }
    n[static_cast<std::size_t>(j)] = saved;
  }
  Eigen::VectorXd row = Eigen::VectorXd::Zero(count);
  for (int r = 0; r <= degree; ++r) row(s - degree + r) = n[static_cast<std::size_t>(r)];
  return row;
}

/// (D-2) x D second-difference operator; empty when D < 3.
inline Eigen::MatrixXd second_difference(Eigen::Index D) {
  if (D < 3) return Eigen::MatrixXd::Zero(0, D);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(D - 2, D);
  for (Eigen::Index r = 0; r < D - 2; ++r) {
    d(r, r) = 1.0;
    d(r, r + 1) = -2.0;
    d(r, r + 2) = 1.0;
  }
  return d;
}

/// 2K cubic B-splines evaluated at 2K evenly spaced points on [0, 1]. Below
/// four functions the spline degree drops to 2K - 1.
inline BasisSystem build_basis(Eigen::Index K, double xi = 0.01) {
  if (K < 1) throw std::invalid_argument("build_basis needs K >= 1");
  if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("xi must lie in (0, 1]");
  const int D = static_cast<int>(2 * K);
  BasisSystem b;
  b.xi = xi;
  b.degree = std::min(3, D - 1);
  if (b.degree < 3)
    warn("2K = " + std::to_string(D) + " is too small for a cubic basis; using degree " +
         std::to_string(b.degree));
  b.knots = clamped_uniform_knots(D, b.degree);
  b.omega.resize(D, D);
  for (int r = 0; r < D; ++r) {
    const double x = static_cast<double>(r) / (D - 1);
    b.omega.row(r) = bspline_row(b.knots, D, b.degree, x).transpose();
  }
  if (Eigen::FullPivLU<Eigen::MatrixXd>(b.omega).rank() != D)
    throw NumericError("basis matrix is rank deficient");
  b.P0 = Eigen::MatrixXd::Identity(D, D);
  const Eigen::MatrixXd d2 = second_difference(D);
  b.P2 = d2.transpose() * d2;
  b.P = xi * b.P0 + (1.0 - xi) * b.P2;
  return b;
}

}  // namespace mmp
