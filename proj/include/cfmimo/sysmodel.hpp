#pragma once

// Scenario realization: large-scale fading, spatial correlation, small-scale
// channels, user-AP clustering and pilot matrices.

#include "cfmimo/config.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/modem.hpp"
#include "cfmimo/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cfmimo {

struct Clustering {
  std::vector<std::vector<int>> serve_sets;  // D_l, ascending user indices
  std::vector<std::vector<int>> user_sets;   // M_k, ascending AP indices
  std::vector<int> master;                   // master AP per user (DCC); -1 if unused
  std::vector<int> pilot;                    // pilot index per user (DCC); -1 if unused

  int num_aps() const { return static_cast<int>(serve_sets.size()); }
  int num_users() const { return static_cast<int>(user_sets.size()); }

  bool serves(int l, int k) const {
    const auto& d = serve_sets[l];
    return std::binary_search(d.begin(), d.end(), k);
  }

  static Clustering all_serve_all(int L, int K) {
    Clustering c;
    std::vector<int> users(K), aps(L);
    std::iota(users.begin(), users.end(), 0);
    std::iota(aps.begin(), aps.end(), 0);
    c.serve_sets.assign(L, users);
    c.user_sets.assign(K, aps);
    c.master.assign(K, -1);
    c.pilot.assign(K, -1);
    return c;
  }

  /// Builds M_k from D_l.
  void rebuild_user_sets(int K) {
    user_sets.assign(K, {});
    for (int l = 0; l < num_aps(); ++l)
      for (int k : serve_sets[l]) user_sets[k].push_back(l);
  }
};

struct ChannelSet {
  int L = 0, N = 0, K = 0;
  CMat H;                 // (L*N) x K, AP blocks stacked
  std::vector<CMat> R;    // spatial correlation, index k * L + l
  RMat beta;              // K x L, linear
  Clustering clustering;

  auto ap_block(int l) const { return H.middleRows(static_cast<Eigen::Index>(l) * N, N); }
  const CMat& correlation(int k, int l) const { return R[static_cast<std::size_t>(k) * L + l]; }

  /// Channel of AP l restricted to its served users (N x |D_l|).
  CMat served_block(int l) const {
    const auto& d = clustering.serve_sets[l];
    CMat h(N, static_cast<Eigen::Index>(d.size()));
    for (std::size_t j = 0; j < d.size(); ++j) h.col(j) = H.block(static_cast<Eigen::Index>(l) * N, d[j], N, 1);
    return h;
  }
};

/// Node positions of an urban drop (meters).
struct Layout {
  std::vector<double> ap_x, ap_y, user_x, user_y;
};

// ---------------------------------------------------------------------------
// Large-scale fading

/// Deterministic pathloss part in dB: -30.5 - 36.7 log10(d / 1 m).
inline double pathloss_db(double d_m) {
  if (!(d_m > 0.0)) throw std::invalid_argument("pathloss_db: distance must be positive");
  return -30.5 - 36.7 * std::log10(d_m);
}

/// Covariance (dB^2) between shadowing terms g_kl and g_ij at user distance delta.
inline double shadowing_cov(double delta_m, bool same_ap) {
  if (delta_m < 0.0) throw std::invalid_argument("shadowing_cov: negative distance");
  if (!same_ap) return 0.0;
  return 16.0 * std::pow(2.0, -delta_m / 9.0);
}

// ---------------------------------------------------------------------------
// Spatial correlation

/// Gaussian local scattering correlation of a half-wavelength ULA:
/// C[m, n] = E[exp(j pi (m - n) sin(phi))], phi ~ N(phi0, sigma^2).
/// Unit diagonal; off-diagonals by adaptive Gauss-Kronrod over +-8 sigma.
inline CMat local_scattering_correlation(int N, double phi0, double sigma_rad) {
  using boost::math::quadrature::gauss_kronrod;
  std::vector<cd> lag(N);
  lag[0] = 1.0;
  for (int d = 1; d < N; ++d) {
    if (sigma_rad <= 0.0) {
      lag[d] = std::exp(cd(0.0, M_PI * d * std::sin(phi0)));
      continue;
    }
    const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * sigma_rad);
    auto f = [&](double phi) {
      const double u = (phi - phi0) / sigma_rad;
      const double w = norm * std::exp(-0.5 * u * u);
      const double arg = M_PI * d * std::sin(phi);
      return cd(w * std::cos(arg), w * std::sin(arg));
    };
    lag[d] = gauss_kronrod<double, 31>::integrate(f, phi0 - 8.0 * sigma_rad, phi0 + 8.0 * sigma_rad, 15, 1e-10);
  }
  CMat c(N, N);
  for (int m = 0; m < N; ++m)
    for (int n = 0; n < N; ++n) c(m, n) = m >= n ? lag[m - n] : std::conj(lag[n - m]);
  return c;
}

// ---------------------------------------------------------------------------
// Clustering

/// all_serve_all: every AP serves every user. dcc: each user takes the AP with the
/// largest beta as master and the least-loaded pilot (ties to the lowest index);
/// each AP then serves, per pilot, the strongest user it hears within
/// cfg.dcc_threshold_db of its strongest user; masters always serve their users.
inline Clustering form_clusters(const RMat& beta, const SystemConfig& cfg) {
  const int K = static_cast<int>(beta.rows());
  const int L = static_cast<int>(beta.cols());
  if (K < 1 || L < 1) throw std::invalid_argument("form_clusters: empty beta");
  if (cfg.clustering == ClusteringMode::all_serve_all) return Clustering::all_serve_all(L, K);

  Clustering c;
  c.master.assign(K, 0);
  c.pilot.assign(K, 0);
  std::vector<int> load(cfg.tau_p, 0);
  for (int k = 0; k < K; ++k) {
    int best = 0;
    for (int l = 1; l < L; ++l)
      if (beta(k, l) > beta(k, best)) best = l;
    c.master[k] = best;
    const int t = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
    c.pilot[k] = t;
    ++load[t];
  }

  c.serve_sets.assign(L, {});
  for (int l = 0; l < L; ++l) {
    std::vector<char> serve(K, 0);
    for (int k = 0; k < K; ++k)
      if (c.master[k] == l) serve[k] = 1;
    const double strongest = beta.col(l).maxCoeff();
    const double floor = strongest * std::pow(10.0, -cfg.dcc_threshold_db / 10.0);
    for (int t = 0; t < cfg.tau_p; ++t) {
      int pick = -1;
      for (int k = 0; k < K; ++k) {
        if (c.pilot[k] != t || beta(k, l) < floor) continue;
        if (pick < 0 || beta(k, l) > beta(pick, l)) pick = k;
      }
      if (pick >= 0) serve[pick] = 1;
    }
    for (int k = 0; k < K; ++k)
      if (serve[k]) c.serve_sets[l].push_back(k);
  }
  c.rebuild_user_sets(K);
  return c;
}

// ---------------------------------------------------------------------------
// Channel generation

namespace detail {

// Draws h_kl ~ CN(0, R_kl) for served links and zeroes the rest.
inline void draw_small_scale(ChannelSet& cs, RandomStream& rng) {
  cs.H = CMat::Zero(static_cast<Eigen::Index>(cs.L) * cs.N, cs.K);
  CVec z(cs.N);
  for (int k = 0; k < cs.K; ++k) {
    for (int l = 0; l < cs.L; ++l) {
      for (int i = 0; i < cs.N; ++i) z(i) = rng.complex_normal();
      if (!cs.clustering.serves(l, k)) continue;
      const CMat& r = cs.correlation(k, l);
      CVec h;
      if (r.isDiagonal()) h = r.diagonal().real().cwiseSqrt().cast<cd>().cwiseProduct(z);
      else h = psd_sqrt(r) * z;
      cs.H.block(static_cast<Eigen::Index>(l) * cs.N, k, cs.N, 1) = h;
    }
  }
}

inline ChannelSet empty_channel_set(const SystemConfig& cfg) {
  ChannelSet cs;
  cs.L = cfg.L;
  cs.N = cfg.N;
  cs.K = cfg.K;
  cs.beta = RMat::Ones(cfg.K, cfg.L);
  cs.R.assign(static_cast<std::size_t>(cfg.K) * cfg.L, CMat::Identity(cfg.N, cfg.N));
  return cs;
}

// Signed displacement on the wrap-around square.
inline double wrap(double d, double side) { return d - side * std::round(d / side); }

}  // namespace detail

/// i.i.d. CN(0,1) entries (R_kl = I, beta = 1); unserved columns are zero.
inline ChannelSet gen_iid_rayleigh(const SystemConfig& cfg, RandomStream& rng) {
  ChannelSet cs = detail::empty_channel_set(cfg);
  cs.clustering = form_clusters(cs.beta, cfg);
  detail::draw_small_scale(cs, rng);
  return cs;
}

/// Unit large-scale gain with local-scattering correlation at a uniform random
/// nominal angle per link.
inline ChannelSet gen_corr_rayleigh(const SystemConfig& cfg, RandomStream& rng) {
  ChannelSet cs = detail::empty_channel_set(cfg);
  const double sigma = cfg.angular_std_deg * M_PI / 180.0;
  for (int k = 0; k < cfg.K; ++k)
    for (int l = 0; l < cfg.L; ++l)
      cs.R[static_cast<std::size_t>(k) * cfg.L + l] = local_scattering_correlation(cfg.N, rng.uniform(-M_PI, M_PI), sigma);
  cs.clustering = form_clusters(cs.beta, cfg);
  detail::draw_small_scale(cs, rng);
  return cs;
}

/// APs on a regular grid, users uniform in the square area; distances and
/// angles are taken on the wrap-around square.
inline Layout make_layout(const SystemConfig& cfg, RandomStream& rng) {
  Layout lay;
  const double side = cfg.area_side_m;
  const int gx = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.L))));
  const int gy = (cfg.L + gx - 1) / gx;
  for (int l = 0; l < cfg.L; ++l) {
    lay.ap_x.push_back((l % gx + 0.5) * side / gx);
    lay.ap_y.push_back((l / gx + 0.5) * side / gy);
  }
  for (int k = 0; k < cfg.K; ++k) {
    lay.user_x.push_back(rng.uniform(0.0, side));
    lay.user_y.push_back(rng.uniform(0.0, side));
  }
  return lay;
}

/// Urban microcell drop: pathloss + per-AP correlated shadowing, local
/// scattering correlation R_kl = beta_kl C(phi_kl), h_kl ~ CN(0, R_kl).
inline ChannelSet gen_3gpp_urban(const SystemConfig& cfg, RandomStream& rng, Layout* layout_out = nullptr) {
  ChannelSet cs = detail::empty_channel_set(cfg);
  const Layout lay = make_layout(cfg, rng);
  const double side = cfg.area_side_m;
  const double sigma = cfg.angular_std_deg * M_PI / 180.0;

  RMat user_dist(cfg.K, cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    for (int i = 0; i < cfg.K; ++i)
      user_dist(k, i) = std::hypot(detail::wrap(lay.user_x[k] - lay.user_x[i], side),
                                   detail::wrap(lay.user_y[k] - lay.user_y[i], side));
  RMat shadow_cov(cfg.K, cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    for (int i = 0; i < cfg.K; ++i) shadow_cov(k, i) = shadowing_cov(user_dist(k, i), true);
  shadow_cov.diagonal().array() += 1e-9;
  Eigen::LLT<RMat> llt(shadow_cov);
  if (llt.info() != Eigen::Success) throw NumericalError("gen_3gpp_urban: shadowing covariance is not positive definite");
  const RMat shadow_factor = llt.matrixL();

  RVec z(cfg.K);
  for (int l = 0; l < cfg.L; ++l) {
    for (int k = 0; k < cfg.K; ++k) z(k) = rng.normal();
    const RVec g = shadow_factor * z;
    for (int k = 0; k < cfg.K; ++k) {
      const double dx = detail::wrap(lay.user_x[k] - lay.ap_x[l], side);
      const double dy = detail::wrap(lay.user_y[k] - lay.ap_y[l], side);
      const double d = std::sqrt(dx * dx + dy * dy + cfg.ap_height_m * cfg.ap_height_m);
      const double beta = std::pow(10.0, (pathloss_db(d) + g(k)) / 10.0);
      cs.beta(k, l) = beta;
      cs.R[static_cast<std::size_t>(k) * cfg.L + l] = beta * local_scattering_correlation(cfg.N, std::atan2(dy, dx), sigma);
    }
  }
  cs.clustering = form_clusters(cs.beta, cfg);
  detail::draw_small_scale(cs, rng);
  if (layout_out) *layout_out = lay;
  return cs;
}

inline ChannelSet generate_channels(const SystemConfig& cfg, RandomStream& rng) {
  switch (cfg.channel_model) {
    case ChannelModel::iid_rayleigh: return gen_iid_rayleigh(cfg, rng);
    case ChannelModel::corr_rayleigh: return gen_corr_rayleigh(cfg, rng);
    case ChannelModel::urban_3gpp: return gen_3gpp_urban(cfg, rng);
  }
  throw std::invalid_argument("generate_channels: unknown channel model");
}

// ---------------------------------------------------------------------------
// Pilots

struct PilotMatrix {
  CMat X;  // K_l x tau_p
  PilotKind kind = PilotKind::dft;
};

/// dft: the first K_l rows of the tau_p-point DFT matrix; random_qam: i.i.d.
/// uniform 64-QAM entries. Both scaled so the mean symbol power equals `power`.
inline PilotMatrix gen_pilots(PilotKind kind, int tau_p, int K_l, double power, RandomStream& rng) {
  if (tau_p < 1 || K_l < 0 || !(power > 0.0)) throw std::invalid_argument("gen_pilots: bad dimensions or power");
  PilotMatrix pm;
  pm.kind = kind;
  pm.X.resize(K_l, tau_p);
  const double amp = std::sqrt(power);
  if (kind == PilotKind::dft) {
    if (tau_p < K_l) throw std::invalid_argument("gen_pilots: DFT pilots need tau_p >= K_l");
    for (int k = 0; k < K_l; ++k)
      for (int n = 0; n < tau_p; ++n)
        pm.X(k, n) = amp * std::exp(cd(0.0, -2.0 * M_PI * static_cast<double>(k) * n / tau_p));
  } else {
    static const Constellation qam64(64);
    for (int k = 0; k < K_l; ++k)
      for (int n = 0; n < tau_p; ++n) pm.X(k, n) = amp * qam64.point(rng.uniform_int(64));
  }
  return pm;
}

}  // namespace cfmimo
