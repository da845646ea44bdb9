#pragma once

// Linear reference receivers: centralized MMSE, per-AP local MMSE with
// average decoding at the CPU, and large-scale fading decoding (LSFD) with
// weights calibrated from sample statistics.

#include "cfmimo/ep_detector.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/modem.hpp"
#include "cfmimo/sysmodel.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo {

namespace detail {

// Hard decisions after removing the per-user real gain of a linear estimator.
inline std::vector<int> debiased_decisions(const CVec& x, const RVec& gain, const Constellation& cons) {
  std::vector<int> out(static_cast<std::size_t>(x.size()));
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double g = gain(k) > 1e-12 ? gain(k) : 1.0;
    out[static_cast<std::size_t>(k)] = demodulate_hard(x(k) / g, cons);
  }
  return out;
}

}  // namespace detail

/// x = (H^H H + sigma2 diag(1/p))^-1 H^H y. Decisions are taken on x_k / (W H)_kk.
inline DetectionOutput centralized_mmse(const CMat& H, const CVec& y, double sigma2, const RVec& p, const Constellation& cons) {
  const Eigen::Index K = H.cols();
  if (y.size() != H.rows() || p.size() != K) throw std::invalid_argument("centralized_mmse: dimension mismatch");
  if (!(sigma2 > 0.0) || !(p.array() > 0.0).all()) throw std::invalid_argument("centralized_mmse: sigma2 and p must be positive");
  CMat g = H.adjoint() * H;
  g.diagonal() += (sigma2 * p.cwiseInverse()).cast<cd>();
  Eigen::LLT<CMat> llt(g);
  if (llt.info() != Eigen::Success) throw NumericalError("centralized_mmse: singular normal matrix");
  const CMat ginv = llt.solve(CMat::Identity(K, K));
  DetectionOutput out;
  out.x_post = ginv * (H.adjoint() * y);
  out.v_post = sigma2 * ginv.diagonal().real();
  const RVec gain = (ginv * (H.adjoint() * H)).diagonal().real();
  out.x_hat = detail::debiased_decisions(out.x_post, gain, cons);
  return out;
}

inline DetectionOutput centralized_mmse(const CMat& H, const CVec& y, double sigma2, double p, const Constellation& cons) {
  return centralized_mmse(H, y, sigma2, RVec::Constant(H.cols(), p), cons);
}

/// Local LMMSE estimate of the served users at one AP and its per-user gain
/// diag(W h), W = (h^H h + sigma2/E_x I)^-1 h^H.
struct LocalEstimate {
  CVec x;
  RVec gain;
};

inline LocalEstimate local_lmmse(const CMat& h, const CVec& y, double sigma2, double energy) {
  const Eigen::Index k = h.cols();
  LocalEstimate e;
  if (k == 0) {
    e.x = CVec(0);
    e.gain = RVec(0);
    return e;
  }
  CMat g = h.adjoint() * h;
  g.diagonal().array() += sigma2 / energy;
  Eigen::LLT<CMat> llt(g);
  if (llt.info() != Eigen::Success) throw NumericalError("local_lmmse: singular normal matrix");
  e.x = llt.solve(h.adjoint() * y);
  e.gain = llt.solve(h.adjoint() * h).diagonal().real();
  return e;
}

inline std::vector<LocalEstimate> local_estimates(const ChannelSet& cs, const CVec& y, double sigma2, double energy) {
  std::vector<LocalEstimate> out;
  out.reserve(static_cast<std::size_t>(cs.L));
  for (int l = 0; l < cs.L; ++l)
    out.push_back(local_lmmse(cs.served_block(l), y.segment(static_cast<Eigen::Index>(l) * cs.N, cs.N), sigma2, energy));
  return out;
}

/// Average decoding: each user's estimate is the mean of the local estimates
/// of its serving APs.
inline DetectionOutput average_decoding(const std::vector<LocalEstimate>& local, const Clustering& c, const Constellation& cons) {
  const int K = c.num_users();
  if (local.size() != c.serve_sets.size()) throw std::invalid_argument("average_decoding: one estimate per AP required");
  CVec sum = CVec::Zero(K);
  RVec gain = RVec::Zero(K);
  std::vector<int> count(K, 0);
  for (std::size_t l = 0; l < local.size(); ++l) {
    const auto& d = c.serve_sets[l];
    for (std::size_t j = 0; j < d.size(); ++j) {
      sum(d[j]) += local[l].x(static_cast<Eigen::Index>(j));
      gain(d[j]) += local[l].gain(static_cast<Eigen::Index>(j));
      ++count[d[j]];
    }
  }
  for (int k = 0; k < K; ++k) {
    if (count[k] == 0) throw std::invalid_argument("average_decoding: user " + std::to_string(k) + " has no serving AP");
    sum(k) /= count[k];
    gain(k) /= count[k];
  }
  DetectionOutput out;
  out.x_post = sum;
  out.x_hat = detail::debiased_decisions(sum, gain, cons);
  return out;
}

/// Local MMSE at every AP followed by average decoding.
inline DetectionOutput distributed_mmse_avg(const ChannelSet& cs, const CVec& y, double sigma2, const Constellation& cons) {
  return average_decoding(local_estimates(cs, y, sigma2, cons.energy()), cs.clustering, cons);
}

/// Fully distributed receiver: each user is decoded from the local estimate
/// of a single AP (its master AP, or the AP with the largest beta), without
/// any CPU combining.
inline DetectionOutput local_mmse_decoding(const std::vector<LocalEstimate>& local, const ChannelSet& cs, const Constellation& cons) {
  DetectionOutput out;
  out.x_post = CVec::Zero(cs.K);
  RVec gain = RVec::Ones(cs.K);
  for (int k = 0; k < cs.K; ++k) {
    int ap = cs.clustering.master.empty() ? -1 : cs.clustering.master[k];
    if (ap < 0) {
      ap = 0;
      for (int l = 1; l < cs.L; ++l)
        if (cs.beta(k, l) > cs.beta(k, ap)) ap = l;
    }
    const auto& d = cs.clustering.serve_sets[ap];
    const auto it = std::lower_bound(d.begin(), d.end(), k);
    if (it == d.end() || *it != k) throw std::invalid_argument("local_mmse_decoding: selected AP does not serve the user");
    const auto j = static_cast<Eigen::Index>(it - d.begin());
    out.x_post(k) = local[ap].x(j);
    gain(k) = local[ap].gain(j);
  }
  out.x_hat = detail::debiased_decisions(out.x_post, gain, cons);
  return out;
}

/// Per-user combining weights a_k over the serving APs of user k.
struct LsfdWeights {
  std::vector<CVec> a;      // a[k] has length |M_k|
  RVec gain;                // a_k^H E[g_k x_k^*] / E|x_k|^2
  std::vector<CVec> share;  // per-AP terms of gain: the weights applied to unit-gain local estimates
};

/// Accumulates E[g_k g_k^H] and E[g_k x_k^*] from calibration trials, where g_k
/// stacks the local estimates of user k at its serving APs.
class LsfdCalibrator {
 public:
  explicit LsfdCalibrator(const Clustering& c) : clustering_(c) {
    const int K = c.num_users();
    for (int k = 0; k < K; ++k) {
      const auto m = static_cast<Eigen::Index>(c.user_sets[k].size());
      second_.push_back(CMat::Zero(m, m));
      cross_.push_back(CVec::Zero(m));
    }
    energy_ = RVec::Zero(K);
  }

  void add(const std::vector<LocalEstimate>& local, const CVec& x) {
    const int K = clustering_.num_users();
    if (x.size() != K || local.size() != clustering_.serve_sets.size())
      throw std::invalid_argument("LsfdCalibrator::add: dimension mismatch");
    for (int k = 0; k < K; ++k) {
      const CVec g = gather(local, k);
      second_[k] += g * g.adjoint();
      cross_[k] += g * std::conj(x(k));
      energy_(k) += std::norm(x(k));
    }
    ++samples_;
  }

  long samples() const { return samples_; }

  /// Solves a_k = E[g g^H]^-1 E[g x^*]. Requires at least `min_samples` trials
  /// and well-conditioned statistics.
  LsfdWeights finalize(long min_samples) const {
    if (samples_ < min_samples)
      throw std::runtime_error("LSFD calibration: " + std::to_string(samples_) + " samples, need " + std::to_string(min_samples));
    LsfdWeights w;
    const int K = clustering_.num_users();
    w.gain = RVec::Zero(K);
    for (int k = 0; k < K; ++k) {
      const CMat s = second_[k] / static_cast<double>(samples_);
      const CVec r = cross_[k] / static_cast<double>(samples_);
      Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(s), Eigen::EigenvaluesOnly);
      const RVec& ev = es.eigenvalues();
      if (ev.size() == 0 || ev.minCoeff() <= 1e-12 * std::max(ev.maxCoeff(), 1e-300))
        throw NumericalError("LSFD calibration: rank-deficient statistics for user " + std::to_string(k));
      w.a.push_back(s.ldlt().solve(r));
      const double ex = energy_(k) / static_cast<double>(samples_);
      w.share.push_back(w.a.back().conjugate().cwiseProduct(r) / ex);
      w.gain(k) = w.share.back().sum().real();
    }
    return w;
  }

  CVec gather(const std::vector<LocalEstimate>& local, int k) const {
    const auto& m = clustering_.user_sets[k];
    CVec g(static_cast<Eigen::Index>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto& d = clustering_.serve_sets[m[i]];
      const auto j = std::lower_bound(d.begin(), d.end(), k) - d.begin();
      g(static_cast<Eigen::Index>(i)) = local[m[i]].x(j);
    }
    return g;
  }

 private:
  Clustering clustering_;
  std::vector<CMat> second_;
  std::vector<CVec> cross_;
  RVec energy_;
  long samples_ = 0;
};

/// Combined estimate a_k^H g_k per user.
inline DetectionOutput lsfd_combine(const std::vector<LocalEstimate>& local, const LsfdWeights& w, const LsfdCalibrator& layout,
                                    const Constellation& cons) {
  const auto K = static_cast<Eigen::Index>(w.a.size());
  DetectionOutput out;
  out.x_post.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) out.x_post(k) = (w.a[k].adjoint() * layout.gather(local, static_cast<int>(k)))(0);
  out.x_hat = detail::debiased_decisions(out.x_post, w.gain, cons);
  return out;
}

}  // namespace cfmimo
