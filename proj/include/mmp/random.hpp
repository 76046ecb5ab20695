#pragma once

// Seedable random variates for the Gibbs conditionals.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "mmp/core.hpp"
#include "mmp/data.hpp"
#include "mmp/normal.hpp"

namespace mmp {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed = 0) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  explicit Xoshiro256pp(const std::array<std::uint64_t, 4>& state) : s_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Advances by 2^128 draws.
  void jump() {
    static constexpr std::array<std::uint64_t, 4> kJump = {
        0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL, 0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
    std::array<std::uint64_t, 4> acc{};
    for (auto word : kJump) {
      for (int b = 0; b < 64; ++b) {
        if (word & (std::uint64_t{1} << b))
          for (int i = 0; i < 4; ++i) acc[static_cast<std::size_t>(i)] ^= s_[static_cast<std::size_t>(i)];
        (*this)();
      }
    }
    s_ = acc;
  }

  friend bool operator==(const Xoshiro256pp&, const Xoshiro256pp&) = default;

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

/// A single-owner random stream identified by (seed, stream_id).
///
/// Streams with the same seed and different ids are non-overlapping segments
/// of one xoshiro sequence (the id counts jumps). derive() makes a fresh,
/// unrelated stream for nested work such as per-replicate method runs.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id), engine_(seed) {
    for (std::uint64_t j = 0; j < stream_id; ++j) engine_.jump();
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  RngStream derive(std::uint64_t tag) const {
    std::uint64_t sm = seed_ ^ (0xa0761d6478bd642fULL * (stream_id_ + 1));
    const auto a = splitmix64(sm);
    sm ^= tag * 0xe7037ed1a0b428dbULL;
    return RngStream(a ^ splitmix64(sm), 0);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  double gamma(double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(engine_);
  }

  std::uint64_t below(std::uint64_t bound) {
    std::uniform_int_distribution<std::uint64_t> d(0, bound - 1);
    return d(engine_);
  }

  Xoshiro256pp& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  Xoshiro256pp engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Which side of zero a latent draw is confined to: x = 0 means z < 0,
/// x = 1 means z >= 0.
enum class TruncationRegion : std::uint8_t { below_zero = 0, at_or_above_zero = 1 };

inline TruncationRegion region_for(std::uint8_t x) {
  return x ? TruncationRegion::at_or_above_zero : TruncationRegion::below_zero;
}

namespace detail {

/// Standard normal restricted to [a, inf).
inline double std_normal_above(double a, RngStream& rng) {
  constexpr double kTailMass = 1e-5;
  const double mass = normal_sf(a);
  if (mass >= kTailMass) {
    double y;
    if (a > 0.0) {
      // Work in the upper tail: P(Y >= y) = u * Phi(-a).
      y = -normal_quantile(rng.uniform() * mass);
    } else {
      const double lo = normal_cdf(a);
      y = normal_quantile(lo + rng.uniform() * (1.0 - lo));
    }
    return y < a ? a : y;
  }
  // Exponential rejection with the optimal rate for the tail start.
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a + rng.exponential(alpha);
    const double d = z - alpha;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
  }
}

}  // namespace detail

/// N(mean, sd^2) restricted to the region. Stable deep in either tail.
inline double draw_truncated_normal(double mean, double sd, TruncationRegion region, RngStream& rng) {
  if (!(sd > 0.0)) throw std::invalid_argument("truncated normal needs sd > 0");
  if (region == TruncationRegion::at_or_above_zero) {
    const double y = detail::std_normal_above(-mean / sd, rng);
    const double z = mean + sd * y;
    return z < 0.0 ? 0.0 : z;
  }
  const double y = detail::std_normal_above(mean / sd, rng);
  const double z = mean - sd * y;
  return z < 0.0 ? z : -std::numeric_limits<double>::denorm_min();
}

/// 1/g with g ~ Gamma(shape, rate = scale).
inline double draw_inverse_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("inverse gamma needs shape > 0 and scale > 0");
  return 1.0 / rng.gamma(shape, scale);
}

/// Lower Cholesky factor; reports the first leading minor that is not
/// positive definite.
inline Eigen::MatrixXd cholesky_lower(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  const auto d = a.rows();
  if (a.cols() != d) throw NumericError("cholesky of a non-square matrix");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double diag = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NumericError("matrix is not positive definite: leading minor " + std::to_string(j + 1) +
                         " of " + std::to_string(d));
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < d; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
  }
  return l;
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index d, RngStream& rng) {
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  return z;
}

inline Eigen::VectorXd draw_mvn(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::MatrixXd>& covariance, RngStream& rng) {
  if (covariance.rows() != mean.size()) throw std::invalid_argument("draw_mvn: shape mismatch");
  const Eigen::MatrixXd l = cholesky_lower(covariance);
  return mean + l * standard_normal_vector(mean.size(), rng);
}

/// Draws from N(Q^{-1} b, Q^{-1}) given the precision Q and b. The mean and
/// covariance are never formed explicitly.
inline Eigen::VectorXd draw_mvn_canonical(const Eigen::Ref<const Eigen::MatrixXd>& precision,
                                          const Eigen::Ref<const Eigen::VectorXd>& b, RngStream& rng) {
  const Eigen::MatrixXd l = cholesky_lower(precision);
  const auto tl = l.triangularView<Eigen::Lower>();
  Eigen::VectorXd mean = tl.solve(b);
  mean = tl.transpose().solve(mean);
  const Eigen::VectorXd noise = tl.transpose().solve(standard_normal_vector(b.size(), rng));
  return mean + noise;
}

inline BinaryMatrix draw_bernoulli_matrix(const Eigen::Ref<const Eigen::MatrixXd>& p, RngStream& rng) {
  BinaryMatrix x(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double q = p(i, c);
      if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
      x(i, c) = rng.uniform() < q ? 1 : 0;
    }
  return x;
}

}  // namespace mmp
