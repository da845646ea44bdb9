#pragma once

// Square Gray-coded QAM and the scalar AWGN denoiser shared by the EP
// detector (CPU module) and the state-evolution predictor.
//
// Labeling: symbol index i carries the bit label given by the binary digits of
// i, MSB first. The first half of the label selects the in-phase level, the
// second half the quadrature level; per axis the bits are Gray coded with
// bit value 0 on the positive side. QPSK index 0 (bits 00) is (+1+j)/sqrt(2).

#include "cfmimo/linalg.hpp"
#include "cfmimo/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace cfmimo {

class Constellation {
 public:
  explicit Constellation(int order) : order_(order) {
    int side = 1, bits_axis = 0;
    while (side * side < order) {
      side *= 2;
      ++bits_axis;
    }
    if (order < 4 || side * side != order) throw std::invalid_argument("Constellation: order must be 4, 16, 64, ...");
    side_ = side;
    bits_axis_ = bits_axis;
    const double scale = 1.0 / std::sqrt(2.0 * (order - 1) / 3.0);
    axis_levels_.resize(side_);
    for (int g = 0; g < side_; ++g) {
      const int pos = gray_decode(g);
      axis_levels_[g] = scale * static_cast<double>(side_ - 1 - 2 * pos);
    }
    points_.resize(order_);
    double e = 0.0;
    for (int i = 0; i < order_; ++i) {
      points_[i] = {axis_levels_[i >> bits_axis_], axis_levels_[i & (side_ - 1)]};
      e += std::norm(points_[i]);
    }
    energy_ = e / order_;
  }

  static Constellation qpsk() { return Constellation(4); }

  int order() const { return order_; }
  int side() const { return side_; }
  int bits_per_symbol() const { return 2 * bits_axis_; }
  int bits_per_axis() const { return bits_axis_; }
  /// Average symbol energy (1/M) sum |s_i|^2.
  double energy() const { return energy_; }
  const std::vector<cd>& points() const { return points_; }
  const cd& point(int i) const { return points_.at(static_cast<std::size_t>(i)); }
  /// Per-axis amplitudes indexed by the axis label value.
  const std::vector<double>& axis_levels() const { return axis_levels_; }

  /// Bit b (0 = MSB) of the label of symbol i.
  int bit(int i, int b) const { return (i >> (bits_per_symbol() - 1 - b)) & 1; }

  int bit_errors(int a, int b) const { return std::popcount(static_cast<unsigned>(a ^ b)); }

  static int gray_decode(int g) {
    int b = 0;
    for (; g; g >>= 1) b ^= g;
    return b;
  }

 private:
  int order_ = 0;
  int side_ = 0;
  int bits_axis_ = 0;
  double energy_ = 0.0;
  std::vector<double> axis_levels_;
  std::vector<cd> points_;
};

inline std::vector<cd> modulate(std::span<const std::uint8_t> bits, const Constellation& cons) {
  const int bps = cons.bits_per_symbol();
  if (bits.size() % static_cast<std::size_t>(bps) != 0)
    throw std::invalid_argument("modulate: bit count is not a multiple of log2(M)");
  std::vector<cd> out(bits.size() / bps);
  for (std::size_t s = 0; s < out.size(); ++s) {
    int idx = 0;
    for (int b = 0; b < bps; ++b) idx = (idx << 1) | (bits[s * bps + b] & 1);
    out[s] = cons.point(idx);
  }
  return out;
}

/// Nearest constellation point; ties resolve to the lowest index.
inline int demodulate_hard(cd y, const Constellation& cons) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const auto& pts = cons.points();
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const double d = std::norm(pts[i] - y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline std::vector<std::uint8_t> demodulate_bits(std::span<const cd> symbols, const Constellation& cons) {
  const int bps = cons.bits_per_symbol();
  std::vector<std::uint8_t> out;
  out.reserve(symbols.size() * bps);
  for (cd y : symbols) {
    const int idx = demodulate_hard(y, cons);
    for (int b = 0; b < bps; ++b) out.push_back(static_cast<std::uint8_t>(cons.bit(idx, b)));
  }
  return out;
}

struct PosteriorMoments {
  cd mean;
  double var;
};

namespace detail {

inline constexpr double kVarianceFloor = 1e-12;

struct AxisMoments {
  double mean;
  double second;
};

// Posterior of one PAM axis under y = a + w, w ~ N(0, v/2), uniform prior.
inline AxisMoments axis_posterior(double y, double v, const std::vector<double>& levels) {
  double max_log = -std::numeric_limits<double>::infinity();
  for (double a : levels) max_log = std::max(max_log, -(a - y) * (a - y) / v);
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (double a : levels) {
    const double w = std::exp(-(a - y) * (a - y) / v - max_log);
    z += w;
    m1 += w * a;
    m2 += w * a * a;
  }
  return {m1 / z, m2 / z};
}

}  // namespace detail

/// Mean and variance of x ~ uniform(S) given the observation x_ext = x + n,
/// n ~ CN(0, v_ext). The product prior of a square QAM lets the sum split into
/// the two axes exactly.
inline PosteriorMoments posterior_moments(cd x_ext, double v_ext, const Constellation& cons) {
  if (!(v_ext > 0.0)) throw std::invalid_argument("posterior_moments: v_ext must be positive");
  if (!is_finite(x_ext) || !std::isfinite(v_ext)) throw std::invalid_argument("posterior_moments: non-finite input");
  const auto re = detail::axis_posterior(x_ext.real(), v_ext, cons.axis_levels());
  const auto im = detail::axis_posterior(x_ext.imag(), v_ext, cons.axis_levels());
  const double var = (re.second - re.mean * re.mean) + (im.second - im.mean * im.mean);
  return {{re.mean, im.mean}, std::max(var, detail::kVarianceFloor)};
}

/// MMSE of the scalar channel y = x + CN(0, v), x ~ uniform(S), by Gauss-Hermite
/// quadrature over the per-axis noise.
inline double awgn_mmse_mse(double v, const Constellation& cons) {
  if (!(v > 0.0)) throw std::invalid_argument("awgn_mmse_mse: v must be positive");
  const auto& rule = gauss_hermite<300>();
  const auto& levels = cons.axis_levels();
  const double sd = std::sqrt(0.5 * v);
  double acc = 0.0;
  for (double a : levels) {
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double w = rule.weights[q];
      if (w < 1e-300) continue;
      const double f = detail::axis_posterior(a + sd * rule.nodes[q], v, levels).mean;
      acc += w * (a - f) * (a - f);
    }
  }
  return 2.0 * acc / static_cast<double>(levels.size());
}

/// Closed form for unit-energy QPSK: 1 - \int Dz tanh(1/v + z/sqrt(v)).
inline double qpsk_mse_tanh_form(double v) {
  if (!(v > 0.0)) throw std::invalid_argument("qpsk_mse_tanh_form: v must be positive");
  using boost::math::quadrature::gauss_kronrod;
  const double snr = 1.0 / v, root = std::sqrt(snr);
  auto f = [&](double z) { return std::exp(-0.5 * z * z) * std::tanh(snr + root * z); };
  const double lo = -40.0, hi = 40.0;
  const double split = std::clamp(-root, lo + 1.0, hi - 1.0);
  const double i1 = gauss_kronrod<double, 61>::integrate(f, lo, split, 20, 1e-14);
  const double i2 = gauss_kronrod<double, 61>::integrate(f, split, hi, 20, 1e-14);
  return 1.0 - (i1 + i2) / std::sqrt(2.0 * M_PI);
}

inline double qfunc(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Symbol error rate of Gray square QAM on AWGN at SNR = E_x / v. For QPSK this
/// is 2Q(sqrt(snr)) - Q(sqrt(snr))^2.
inline double qam_ser_awgn(double snr, const Constellation& cons) {
  if (!(snr > 0.0)) throw std::invalid_argument("qam_ser_awgn: snr must be positive");
  const double m = cons.side();
  const double arg = std::sqrt(3.0 * snr / (cons.order() - 1.0));
  const double q = qfunc(arg);
  if (cons.order() == 4) return 2.0 * q - q * q;
  const double p_axis = 2.0 * (1.0 - 1.0 / m) * q;
  return 1.0 - (1.0 - p_axis) * (1.0 - p_axis);
}

/// Bit error rate of Gray square QAM with per-axis nearest-level decisions,
/// summed exactly over all (sent, decided) level pairs. QPSK reduces to Q(sqrt(snr)).
inline double qam_ber_awgn(double snr, const Constellation& cons) {
  if (!(snr > 0.0)) throw std::invalid_argument("qam_ber_awgn: snr must be positive");
  const auto& levels = cons.axis_levels();
  const int m = cons.side();
  // ascending order of levels with their labels
  std::vector<int> label_at(m);
  for (int g = 0; g < m; ++g) label_at[m - 1 - Constellation::gray_decode(g)] = g;
  const double sd = std::sqrt(0.5 * cons.energy() / snr);
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double a = levels[label_at[i]];
    for (int j = 0; j < m; ++j) {
      const int errs = std::popcount(static_cast<unsigned>(label_at[i] ^ label_at[j]));
      if (errs == 0) continue;
      const double lo = j == 0 ? -std::numeric_limits<double>::infinity()
                               : 0.5 * (levels[label_at[j - 1]] + levels[label_at[j]]);
      const double hi = j == m - 1 ? std::numeric_limits<double>::infinity()
                                   : 0.5 * (levels[label_at[j]] + levels[label_at[j + 1]]);
      const double p = qfunc((lo - a) / sd) - qfunc((hi - a) / sd);
      acc += p * errs;
    }
  }
  return acc / (static_cast<double>(m) * cons.bits_per_axis());
}

}  // namespace cfmimo
