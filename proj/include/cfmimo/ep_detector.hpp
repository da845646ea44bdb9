#pragma once

// Distributed expectation-propagation detector. Each AP runs an LMMSE module
// over its served users; the CPU combines the AP extrinsics, denoises against
// the constellation and returns one Gaussian message (gamma_l, lambda_l) per AP.

#include "cfmimo/config.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/modem.hpp"
#include "cfmimo/sysmodel.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cfmimo {

inline constexpr double kPrecisionFloor = 1e-8;
inline constexpr double kPrecisionCeil = 1e8;

struct ApMessage {
  CVec x_post;
  double v_post = 0.0;  // tr(Sigma) / |D_l|
};

struct ExtrinsicMessage {
  CVec x;
  double v = 0.0;
};

struct ExtrinsicState {
  std::vector<CVec> gamma;     // per AP, length |D_l|
  std::vector<double> lambda;  // per AP precision

  static ExtrinsicState initial(const Clustering& c, double energy) {
    ExtrinsicState s;
    for (const auto& d : c.serve_sets) {
      s.gamma.push_back(CVec::Zero(static_cast<Eigen::Index>(d.size())));
      s.lambda.push_back(1.0 / energy);
    }
    return s;
  }
};

struct EpOptions {
  int iterations = 5;
  double damping = 0.0;
  FeedbackForm feedback = FeedbackForm::extrinsic;
  bool early_stop = false;
  double early_stop_tol = 1e-6;

  static EpOptions from(const SystemConfig& cfg) {
    EpOptions o;
    o.iterations = cfg.T;
    o.damping = cfg.damping;
    o.feedback = cfg.feedback;
    o.early_stop = cfg.early_stop;
    return o;
  }
};

struct IterationTrace {
  double v_ext = 0.0;             // combined AP extrinsic variance (mean over users)
  std::vector<double> v_ext_ap;   // per-AP extrinsic variance
};

struct DetectionOutput {
  std::vector<int> x_hat;  // constellation indices
  CVec x_post;
  RVec v_post;
  std::vector<IterationTrace> trace;
  long clamps = 0;
};

enum class SolvePath { automatic, direct, woodbury };

/// Per-AP linear module. Rows of (h, y) are whitened by the per-antenna noise
/// variance, so Sigma = (h^H W^-1 h + lambda I)^-1, mu = Sigma (h^H W^-1 y + gamma).
/// The Gram matrix A^H A (direct path) or its N x N dual A A^H (Woodbury path,
/// used when N < K_l) is diagonalized once; each step then costs O(N K_l) and
/// any lambda can be applied without refactoring.
class ApLinearModule {
 public:
  ApLinearModule(const CMat& h, const RVec& noise_var, SolvePath path = SolvePath::automatic) {
    if (noise_var.size() != h.rows()) throw std::invalid_argument("ApLinearModule: noise variance length must equal N");
    if (!(noise_var.array() > 0.0).all() || !noise_var.allFinite())
      throw std::invalid_argument("ApLinearModule: noise variances must be positive and finite");
    if (!h.allFinite()) throw std::invalid_argument("ApLinearModule: non-finite channel");
    inv_sd_ = noise_var.cwiseSqrt().cwiseInverse();
    a_ = inv_sd_.cast<cd>().asDiagonal() * h;
    const Eigen::Index n = a_.rows(), k = a_.cols();
    woodbury_ = path == SolvePath::woodbury || (path == SolvePath::automatic && n < k);
    if (k == 0) return;
    const CMat gram = woodbury_ ? CMat(a_ * a_.adjoint()) : CMat(a_.adjoint() * a_);
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(gram));
    if (es.info() != Eigen::Success) throw NumericalError("ApLinearModule: eigendecomposition failed");
    basis_ = es.eigenvectors();
    eig_ = es.eigenvalues().cwiseMax(0.0);
  }

  ApLinearModule(const CMat& h, double sigma2, SolvePath path = SolvePath::automatic)
      : ApLinearModule(h, RVec::Constant(h.rows(), sigma2), path) {}

  Eigen::Index users() const { return a_.cols(); }
  Eigen::Index antennas() const { return a_.rows(); }
  bool uses_woodbury() const { return woodbury_; }
  /// Whitened channel W^{-1/2} h.
  const CMat& whitened() const { return a_; }

  ApMessage step(const CVec& y, const CVec& gamma, double lambda) const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw NumericalError("ap_lmmse_step: lambda must be positive and finite");
    if (y.size() != antennas() || gamma.size() != users()) throw std::invalid_argument("ap_lmmse_step: dimension mismatch");
    if (!y.allFinite() || !gamma.allFinite()) throw NumericalError("ap_lmmse_step: non-finite input");
    const Eigen::Index k = users();
    ApMessage out;
    if (k == 0) {
      out.x_post = CVec(0);
      out.v_post = 1.0 / lambda;
      return out;
    }
    const CVec b = a_.adjoint() * (inv_sd_.cast<cd>().asDiagonal() * y) + gamma;
    const RVec shrink = (eig_.array() + lambda).inverse();
    if (!woodbury_) {
      out.x_post = basis_ * (shrink.cast<cd>().asDiagonal() * (basis_.adjoint() * b));
      out.v_post = shrink.sum() / static_cast<double>(k);
    } else {
      // Sigma = (I - A^H (lambda I + A A^H)^-1 A) / lambda
      const CVec w = basis_ * (shrink.cast<cd>().asDiagonal() * (basis_.adjoint() * (a_ * b)));
      out.x_post = (b - a_.adjoint() * w) / lambda;
      out.v_post = (static_cast<double>(k) - eig_.cwiseProduct(shrink).sum()) / (lambda * static_cast<double>(k));
    }
    if (!(out.v_post > 0.0) || !out.x_post.allFinite()) throw NumericalError("ap_lmmse_step: non-finite posterior");
    return out;
  }

 private:
  RVec inv_sd_;
  CMat a_;
  CMat basis_;
  RVec eig_;
  bool woodbury_ = false;
};

/// Posterior of x_l under y_l = h_l x_l + n, n ~ CN(0, sigma2 I) or CN(0, diag(noise_var)),
/// with Gaussian prior CN(gamma/lambda, 1/lambda).
inline ApMessage ap_lmmse_step(const CMat& h, const CVec& y, double sigma2, const std::optional<RVec>& noise_var,
                               const CVec& gamma, double lambda, SolvePath path = SolvePath::automatic) {
  const ApLinearModule mod = noise_var ? ApLinearModule(h, *noise_var, path) : ApLinearModule(h, sigma2, path);
  return mod.step(y, gamma, lambda);
}

/// Gaussian division of the posterior by the prior (gamma, lambda). The
/// extrinsic precision is clamped to [1e-8, 1e8]; each clamp increments *clamps.
/// A clamped message keeps its mean (the posterior mean if the precision was not positive).
inline ExtrinsicMessage extrinsic_from_posterior(const CVec& x_post, double v_post, const CVec& gamma, double lambda,
                                                 long* clamps = nullptr) {
  if (!(v_post > 0.0) || !std::isfinite(v_post) || !std::isfinite(lambda) || !x_post.allFinite() || !gamma.allFinite())
    throw NumericalError("extrinsic_from_posterior: invalid input");
  const double prec = 1.0 / v_post - lambda;
  ExtrinsicMessage e;
  if (prec >= kPrecisionFloor && prec <= kPrecisionCeil) {
    e.v = 1.0 / prec;
    e.x = e.v * (x_post / v_post - gamma);
    return e;
  }
  // Clamping changes the precision only; the mean is kept where it is defined.
  if (clamps) ++*clamps;
  e.v = 1.0 / std::clamp(prec, kPrecisionFloor, kPrecisionCeil);
  e.x = prec > 0.0 ? CVec((x_post / v_post - gamma) / prec) : x_post;
  return e;
}

struct CombinedMessage {
  CVec x;          // per user
  RVec v;          // per-user combined variance
  double v_mean = 0.0;
};

/// Precision-weighted combination of the AP extrinsics, per user over the APs
/// serving it.
inline CombinedMessage mrc_combine(const std::vector<ExtrinsicMessage>& messages, const Clustering& c) {
  const int K = c.num_users();
  if (messages.size() != c.serve_sets.size()) throw std::invalid_argument("mrc_combine: one message per AP required");
  CVec num = CVec::Zero(K);
  RVec prec = RVec::Zero(K);
  for (std::size_t l = 0; l < messages.size(); ++l) {
    const auto& d = c.serve_sets[l];
    const auto& m = messages[l];
    if (!(m.v > 0.0)) throw std::invalid_argument("mrc_combine: variances must be positive");
    for (std::size_t j = 0; j < d.size(); ++j) {
      num(d[j]) += m.x(static_cast<Eigen::Index>(j)) / m.v;
      prec(d[j]) += 1.0 / m.v;
    }
  }
  CombinedMessage out;
  out.x.resize(K);
  out.v.resize(K);
  for (int k = 0; k < K; ++k) {
    if (prec(k) <= 0.0) throw std::invalid_argument("mrc_combine: user " + std::to_string(k) + " has no serving AP");
    out.v(k) = 1.0 / prec(k);
    out.x(k) = num(k) * out.v(k);
  }
  out.v_mean = out.v.mean();
  return out;
}

struct DenoisedMessage {
  CVec x;
  RVec v;
};

/// Element-wise constellation posterior under x_ext = x + CN(0, v_ext).
inline DenoisedMessage cpu_denoise(const CVec& x_ext, const RVec& v_ext, const Constellation& cons) {
  if (x_ext.size() != v_ext.size()) throw std::invalid_argument("cpu_denoise: size mismatch");
  DenoisedMessage out{CVec(x_ext.size()), RVec(x_ext.size())};
  for (Eigen::Index k = 0; k < x_ext.size(); ++k) {
    const auto pm = posterior_moments(x_ext(k), v_ext(k), cons);
    out.x(k) = pm.mean;
    out.v(k) = pm.var;
  }
  return out;
}

inline DenoisedMessage cpu_denoise(const CVec& x_ext, double v_ext, const Constellation& cons) {
  return cpu_denoise(x_ext, RVec::Constant(x_ext.size(), v_ext), cons);
}

/// Messages back to the APs: lambda_l = 1/mean_{D_l}(v_B) - 1/v_{A,l},
/// gamma_l = x_B[D_l]/mean_{D_l}(v_B) - x_{A,l}/v_{A,l}, where x_{A,l} is the AP
/// extrinsic mean (or the AP posterior mean with FeedbackForm::literal).
/// `previous`, when given with damping > 0, is blended in convexly.
inline ExtrinsicState cpu_feedback(const DenoisedMessage& cpu, const Clustering& c, const std::vector<ApMessage>& posts,
                                   const std::vector<ExtrinsicMessage>& exts, FeedbackForm form = FeedbackForm::extrinsic,
                                   double damping = 0.0, const ExtrinsicState* previous = nullptr, long* clamps = nullptr) {
  const std::size_t L = c.serve_sets.size();
  if (posts.size() != L || exts.size() != L) throw std::invalid_argument("cpu_feedback: one message per AP required");
  if (!cpu.x.allFinite() || !cpu.v.allFinite()) throw NumericalError("cpu_feedback: non-finite CPU posterior");
  ExtrinsicState s;
  s.gamma.resize(L);
  s.lambda.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& d = c.serve_sets[l];
    const Eigen::Index n = static_cast<Eigen::Index>(d.size());
    if (n == 0) {
      s.gamma[l] = CVec(0);
      s.lambda[l] = previous ? previous->lambda[l] : 1.0;
      continue;
    }
    CVec xb(n);
    double vb = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      xb(j) = cpu.x(d[j]);
      vb += cpu.v(d[j]);
    }
    vb /= static_cast<double>(n);
    const ExtrinsicMessage& e = exts[l];
    double lam = 1.0 / vb - 1.0 / e.v;
    if (!std::isfinite(lam)) throw NumericalError("cpu_feedback: non-finite precision");
    const CVec& xa = form == FeedbackForm::extrinsic ? e.x : posts[l].x_post;
    CVec g = xb / vb - xa / e.v;
    if (lam < kPrecisionFloor || lam > kPrecisionCeil) {
      // keep the message mean g / lam (the CPU mean when lam is not positive)
      const double clamped = std::clamp(lam, kPrecisionFloor, kPrecisionCeil);
      g = lam > 0.0 ? CVec(g * (clamped / lam)) : CVec(clamped * xb);
      lam = clamped;
      if (clamps) ++*clamps;
    }
    if (previous && damping > 0.0) {
      lam = (1.0 - damping) * lam + damping * previous->lambda[l];
      g = (1.0 - damping) * g + damping * previous->gamma[l];
    }
    s.gamma[l] = std::move(g);
    s.lambda[l] = lam;
  }
  return s;
}

/// Runs the detector on prepared AP modules. y[l] is the received vector of AP l.
inline DetectionOutput detect(const std::vector<ApLinearModule>& modules, const std::vector<CVec>& y, const Clustering& c,
                              const Constellation& cons, const EpOptions& opt) {
  const std::size_t L = c.serve_sets.size();
  if (modules.size() != L || y.size() != L) throw std::invalid_argument("detect: one module and one observation per AP");
  if (opt.iterations < 1) throw std::invalid_argument("detect: iterations must be >= 1");
  for (std::size_t l = 0; l < L; ++l)
    if (modules[l].users() != static_cast<Eigen::Index>(c.serve_sets[l].size()))
      throw std::invalid_argument("detect: module width does not match the serving set");

  DetectionOutput out;
  ExtrinsicState state = ExtrinsicState::initial(c, cons.energy());
  std::vector<ApMessage> posts(L);
  std::vector<ExtrinsicMessage> exts(L);
  DenoisedMessage cpu;
  for (int t = 0; t < opt.iterations; ++t) {
    for (std::size_t l = 0; l < L; ++l) {
      posts[l] = modules[l].step(y[l], state.gamma[l], state.lambda[l]);
      exts[l] = extrinsic_from_posterior(posts[l].x_post, posts[l].v_post, state.gamma[l], state.lambda[l], &out.clamps);
    }
    const CombinedMessage comb = mrc_combine(exts, c);
    cpu = cpu_denoise(comb.x, comb.v, cons);

    IterationTrace tr;
    tr.v_ext = comb.v_mean;
    for (const auto& e : exts) tr.v_ext_ap.push_back(e.v);
    out.trace.push_back(std::move(tr));

    const bool last = t + 1 == opt.iterations;
    const bool settled = opt.early_stop && t > 0 &&
                         std::abs(out.trace[t].v_ext - out.trace[t - 1].v_ext) < opt.early_stop_tol;
    if (last || settled) break;
    state = cpu_feedback(cpu, c, posts, exts, opt.feedback, opt.damping, &state, &out.clamps);
  }
  out.x_post = cpu.x;
  out.v_post = cpu.v;
  out.x_hat.resize(static_cast<std::size_t>(cpu.x.size()));
  for (Eigen::Index k = 0; k < cpu.x.size(); ++k) out.x_hat[static_cast<std::size_t>(k)] = demodulate_hard(cpu.x(k), cons);
  return out;
}

/// Builds one module per AP from the served channel blocks.
inline std::vector<ApLinearModule> make_ap_modules(const ChannelSet& cs, double sigma2) {
  std::vector<ApLinearModule> mods;
  mods.reserve(static_cast<std::size_t>(cs.L));
  for (int l = 0; l < cs.L; ++l) mods.emplace_back(cs.served_block(l), sigma2);
  return mods;
}

/// Splits a stacked (L*N) received vector into per-AP vectors.
inline std::vector<CVec> split_by_ap(const CVec& y, int L, int N) {
  if (y.size() != static_cast<Eigen::Index>(L) * N) throw std::invalid_argument("split_by_ap: length must be L*N");
  std::vector<CVec> out;
  for (int l = 0; l < L; ++l) out.emplace_back(y.segment(static_cast<Eigen::Index>(l) * N, N));
  return out;
}

inline DetectionOutput detect(const ChannelSet& cs, const CVec& y, double sigma2, const Constellation& cons,
                              const EpOptions& opt) {
  return detect(make_ap_modules(cs, sigma2), split_by_ap(y, cs.L, cs.N), cs.clustering, cons, opt);
}

}  // namespace cfmimo
