#pragma once

// Per-AP LMMSE channel estimation from pilots (and optionally detected data),
// detection under estimation error, and the estimate/detect/feedback loop.
//
// Vectorized model of one AP over tau columns: vec(Y) = (X^T kron I_N) vec(h) + n,
// with vec(h) stacking the served users' channels (index k * N + i) and noise
// variance w[i, n] per antenna i and column n.

#include "cfmimo/ep_detector.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/modem.hpp"
#include "cfmimo/sysmodel.hpp"

#include <stdexcept>
#include <vector>

namespace cfmimo {

/// Gaussian prior CN(0, cov) on vec(h) of one AP.
struct ChannelPrior {
  int N = 0;
  int users = 0;
  CMat cov;   // (N*users) square
  CMat root;  // cov^{1/2}
  RMat entry_power;  // N x users, E|h_ik|^2

  static ChannelPrior from_matrix(const CMat& r, int N) {
    if (N < 1 || r.rows() != r.cols() || r.rows() % N != 0) throw std::invalid_argument("ChannelPrior: bad covariance shape");
    ChannelPrior p;
    p.N = N;
    p.users = static_cast<int>(r.rows() / N);
    p.cov = hermitian_part(r);
    p.root = psd_sqrt(p.cov);
    p.entry_power = p.cov.diagonal().real().reshaped(N, p.users);
    return p;
  }

  static ChannelPrior from_blocks(const std::vector<CMat>& blocks, int N) {
    const auto n = static_cast<Eigen::Index>(N);
    ChannelPrior p;
    p.N = N;
    p.users = static_cast<int>(blocks.size());
    const Eigen::Index dim = n * p.users;
    p.cov = CMat::Zero(dim, dim);
    p.root = CMat::Zero(dim, dim);
    p.entry_power.resize(N, p.users);
    for (int k = 0; k < p.users; ++k) {
      if (blocks[k].rows() != n || blocks[k].cols() != n) throw std::invalid_argument("ChannelPrior: block must be N x N");
      const CMat b = hermitian_part(blocks[k]);
      p.cov.block(k * n, k * n, n, n) = b;
      p.root.block(k * n, k * n, n, n) = b.isDiagonal() ? CMat(b.diagonal().real().cwiseMax(0.0).cwiseSqrt().cast<cd>().asDiagonal())
                                                         : psd_sqrt(b);
      p.entry_power.col(k) = b.diagonal().real();
    }
    return p;
  }

  /// Prior over the users served by AP l.
  static ChannelPrior for_ap(const ChannelSet& cs, int l) {
    std::vector<CMat> blocks;
    for (int k : cs.clustering.serve_sets[l]) blocks.push_back(cs.correlation(k, l));
    return from_blocks(blocks, cs.N);
  }
};

struct ChannelEstimate {
  int N = 0;
  int users = 0;
  CVec h_hat;           // N * users
  CMat err_cov;         // (N*users) square
  RMat per_entry_var;   // N x users

  CMat h_matrix() const { return h_hat.reshaped(N, users); }
};

/// LMMSE estimate of vec(h) given Y (N x tau) = h X + noise, X (users x tau),
/// noise variances w (N x tau). Computed as S (I + S J S)^-1 S b with S the
/// prior root, J = A^H W^-1 A and b = A^H W^-1 vec(Y); J is block diagonal in
/// the antenna index, which keeps its assembly at O(N users^2 tau).
inline ChannelEstimate lmmse_estimate(const CMat& Y, const CMat& X, const ChannelPrior& prior, const RMat& w) {
  const Eigen::Index N = prior.N, K = prior.users, tau = X.cols();
  if (X.rows() != K || Y.rows() != N || Y.cols() != tau || w.rows() != N || w.cols() != tau)
    throw std::invalid_argument("lmmse_estimate: dimension mismatch");
  if (!(w.array() > 0.0).all() || !w.allFinite()) throw std::invalid_argument("lmmse_estimate: noise variances must be positive");
  if (!Y.allFinite() || !X.allFinite()) throw std::invalid_argument("lmmse_estimate: non-finite input");
  const Eigen::Index dim = N * K;
  ChannelEstimate e;
  e.N = static_cast<int>(N);
  e.users = static_cast<int>(K);
  if (dim == 0) {
    e.h_hat = CVec(0);
    e.err_cov = CMat(0, 0);
    e.per_entry_var = RMat(N, 0);
    return e;
  }
  CMat J = CMat::Zero(dim, dim);
  CVec b(dim);
  const CMat Xc = X.conjugate();
  for (Eigen::Index i = 0; i < N; ++i) {
    const RVec inv_w = w.row(i).transpose().cwiseInverse();
    const CMat xw = Xc * inv_w.cast<cd>().asDiagonal();   // K x tau
    const CMat ji = xw * X.transpose();                    // K x K
    const CVec bi = xw * Y.row(i).transpose();             // K
    for (Eigen::Index k = 0; k < K; ++k) {
      b(k * N + i) = bi(k);
      for (Eigen::Index k2 = 0; k2 < K; ++k2) J(k * N + i, k2 * N + i) = ji(k, k2);
    }
  }
  const CMat& S = prior.root;
  CMat M = S * J * S;
  M.diagonal().array() += 1.0;
  M = hermitian_part(M);
  Eigen::LLT<CMat> llt(M);
  if (llt.info() != Eigen::Success) throw NumericalError("lmmse_estimate: singular innovation matrix");
  e.h_hat = S * llt.solve(S * b);
  e.err_cov = hermitian_part(S * llt.solve(S));
  e.per_entry_var = e.err_cov.diagonal().real().cwiseMax(0.0).reshaped(N, K);
  return e;
}

/// Pilot-only estimate with white noise sigma2.
inline ChannelEstimate lmmse_pilot_estimate(const CMat& Yp, const CMat& Xp, const ChannelPrior& prior, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("lmmse_pilot_estimate: sigma2 must be positive");
  return lmmse_estimate(Yp, Xp, prior, RMat::Constant(Yp.rows(), Xp.cols(), sigma2));
}

/// Equivalent per-antenna detection noise sigma2 + sum_j var(dh_ij).
inline RVec detection_noise_cov(const RMat& per_entry_var, double sigma2) {
  if ((per_entry_var.array() < 0.0).any()) throw std::invalid_argument("detection_noise_cov: negative variance");
  return per_entry_var.rowwise().sum().array() + sigma2;
}

/// Noise seen by the estimator when detected symbols act as pilots:
/// w[i, n] = sigma2 + sum_j E|h_ij|^2 err_var[j, n]. `entry_power` is N x users,
/// `err_var` users x tau_d.
inline RMat feedback_noise_cov(const RMat& err_var, const RMat& entry_power, double sigma2) {
  if (err_var.rows() != entry_power.cols()) throw std::invalid_argument("feedback_noise_cov: user count mismatch");
  if ((err_var.array() < 0.0).any()) throw std::invalid_argument("feedback_noise_cov: negative variance");
  return (entry_power * err_var).array() + sigma2;
}

/// Re-estimation over pilots and detected data columns [X_p, X_d] with noise
/// blocks [sigma2, V_det].
inline ChannelEstimate data_aided_estimate(const CMat& Yp, const CMat& Yd, const CMat& Xp, const CMat& Xd,
                                           const ChannelPrior& prior, double sigma2, const RMat& v_det) {
  const Eigen::Index N = Yp.rows(), tp = Xp.cols(), td = Xd.cols();
  if (Yd.rows() != N || Yd.cols() != td || Xd.rows() != Xp.rows() || v_det.rows() != N || v_det.cols() != td)
    throw std::invalid_argument("data_aided_estimate: dimension mismatch");
  if (td == 0) return lmmse_pilot_estimate(Yp, Xp, prior, sigma2);
  CMat Y(N, tp + td), X(Xp.rows(), tp + td);
  Y << Yp, Yd;
  X << Xp, Xd;
  RMat w(N, tp + td);
  w << RMat::Constant(N, tp, sigma2), v_det;
  return lmmse_estimate(Y, X, prior, w);
}

/// Received block of one coherence interval, split per AP.
struct BlockObservation {
  std::vector<CMat> pilots;  // per AP, N x tau_p
  std::vector<CMat> data;    // per AP, N x tau_d
};

struct JcdRound {
  std::vector<ChannelEstimate> estimates;  // per AP, the estimate used for detection in this round
  Eigen::MatrixXi decisions;               // K x tau_d constellation indices
  CMat x_post;                             // K x tau_d
  RMat v_post;                             // K x tau_d
  long clamps = 0;
};

struct JcdResult {
  std::vector<JcdRound> rounds;
};

/// Estimate/detect/feedback loop. Round 1 detects with the pilot-only estimate;
/// each later round re-estimates with the previous soft decisions as extra
/// pilots and detects again. `x_pilot` is K x tau_p (global user indices).
inline JcdResult jcd_run(const BlockObservation& obs, const CMat& x_pilot, const std::vector<ChannelPrior>& priors,
                         const Clustering& c, double sigma2, const Constellation& cons, const EpOptions& opt, int rounds) {
  if (rounds < 1) throw std::invalid_argument("jcd_run: rounds must be >= 1");
  const std::size_t L = c.serve_sets.size();
  if (obs.pilots.size() != L || obs.data.size() != L || priors.size() != L)
    throw std::invalid_argument("jcd_run: per-AP inputs must match the AP count");
  const int K = c.num_users();
  const Eigen::Index td = obs.data.front().cols();

  auto rows_of = [](const CMat& m, const std::vector<int>& idx) {
    CMat out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = m.row(idx[j]);
    return out;
  };
  auto real_rows_of = [](const RMat& m, const std::vector<int>& idx) {
    RMat out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = m.row(idx[j]);
    return out;
  };

  std::vector<CMat> xp_ap(L);
  std::vector<ChannelEstimate> est(L);
  for (std::size_t l = 0; l < L; ++l) {
    xp_ap[l] = rows_of(x_pilot, c.serve_sets[l]);
    est[l] = lmmse_pilot_estimate(obs.pilots[l], xp_ap[l], priors[l], sigma2);
  }

  JcdResult res;
  for (int r = 0; r < rounds; ++r) {
    std::vector<ApLinearModule> mods;
    mods.reserve(L);
    for (std::size_t l = 0; l < L; ++l) mods.emplace_back(est[l].h_matrix(), detection_noise_cov(est[l].per_entry_var, sigma2));

    JcdRound round;
    round.estimates = est;
    round.decisions.resize(K, td);
    round.x_post.resize(K, td);
    round.v_post.resize(K, td);
    std::vector<CVec> y(L);
    for (Eigen::Index n = 0; n < td; ++n) {
      for (std::size_t l = 0; l < L; ++l) y[l] = obs.data[l].col(n);
      const DetectionOutput d = detect(mods, y, c, cons, opt);
      for (int k = 0; k < K; ++k) round.decisions(k, n) = d.x_hat[k];
      round.x_post.col(n) = d.x_post;
      round.v_post.col(n) = d.v_post;
      round.clamps += d.clamps;
    }

    if (r + 1 < rounds) {
      for (std::size_t l = 0; l < L; ++l) {
        const auto& d = c.serve_sets[l];
        const RMat v_det = feedback_noise_cov(real_rows_of(round.v_post, d), priors[l].entry_power, sigma2);
        est[l] = data_aided_estimate(obs.pilots[l], obs.data[l], xp_ap[l], rows_of(round.x_post, d), priors[l], sigma2, v_det);
      }
    }
    res.rounds.push_back(std::move(round));
  }
  return res;
}

}  // namespace cfmimo
