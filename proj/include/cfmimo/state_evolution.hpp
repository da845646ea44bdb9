#pragma once

// Large-system predictor of the detector's per-iteration variances, MSE and
// BER. Each iteration applies three maps: AP extrinsic variance from the
// channel spectrum, precision-additive combining, and the CPU feedback
// precision from the scalar-channel MSE.

#include "cfmimo/config.hpp"
#include "cfmimo/ep_detector.hpp"
#include "cfmimo/modem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cfmimo {

struct SeStep {
  double v = 0.0;
  bool clamped = false;
};

namespace detail {

inline SeStep clamp_precision(double prec) {
  if (!std::isfinite(prec)) throw NumericalError("state evolution: non-finite precision");
  if (prec < kPrecisionFloor || prec > kPrecisionCeil) return {1.0 / std::clamp(prec, kPrecisionFloor, kPrecisionCeil), true};
  return {1.0 / prec, false};
}

}  // namespace detail

/// AP extrinsic variance from the eigenvalues of h^H h (K_l values, zeros
/// included): v = (1 / mean_k 1/(tau_k/sigma2 + lambda) - lambda)^-1.
inline SeStep se_step_empirical(const RVec& eigs, double sigma2, double lambda) {
  if (eigs.size() == 0) throw std::invalid_argument("se_step_empirical: empty spectrum");
  if ((eigs.array() < 0.0).any() || !(sigma2 > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("se_step_empirical: need eigs >= 0, sigma2 > 0, lambda > 0");
  const double v_post = (eigs.array() / sigma2 + lambda).inverse().mean();
  return detail::clamp_precision(1.0 / v_post - lambda);
}

/// Closed form for i.i.d. Gaussian h_l with load alpha = K_l / N:
/// v = [a + sqrt(a^2 + 4 alpha s q)] / 2, a = alpha s + (alpha - 1) q, where s is
/// the noise level and q the prior variance, both in the normalization of
/// se_step_iid_physical. Results below 1e-8 are floored.
inline double se_step_iid(double alpha, double sigma2, double q) {
  if (!(alpha > 0.0) || sigma2 < 0.0 || !(q > 0.0)) throw std::invalid_argument("se_step_iid: need alpha > 0, sigma2 >= 0, q > 0");
  const double a = alpha * sigma2 + (alpha - 1.0) * q;
  const double v = 0.5 * (a + std::sqrt(a * a + 4.0 * alpha * sigma2 * q));
  return std::max(v, 1.0 / kPrecisionCeil);
}

/// se_step_iid for an N x K_l channel with i.i.d. CN(0, entry_var) entries,
/// physical noise variance sigma2 and prior precision lambda: the closed form
/// is evaluated with prior variance 1/lambda and noise sigma2 / (K_l entry_var).
inline SeStep se_step_iid_physical(int N, int K_l, double entry_var, double sigma2, double lambda) {
  if (N < 1 || K_l < 1 || !(entry_var > 0.0) || !(sigma2 > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("se_step_iid_physical: parameters must be positive");
  const double alpha = static_cast<double>(K_l) / N;
  const double v = se_step_iid(alpha, sigma2 / (K_l * entry_var), 1.0 / lambda);
  return detail::clamp_precision(1.0 / v);
}

/// (sum_l 1/v_l)^-1
inline double se_combine(const std::vector<double>& v_ext) {
  if (v_ext.empty()) throw std::invalid_argument("se_combine: empty list");
  double prec = 0.0;
  for (double v : v_ext) {
    if (!(v > 0.0)) throw std::invalid_argument("se_combine: variances must be positive");
    prec += 1.0 / v;
  }
  return 1.0 / prec;
}

/// lambda_l = 1/mse - 1/v_l, clamped to [1e-8, 1e8].
inline SeStep se_lambda_update(double mse, double v_ext_l) {
  if (!(mse > 0.0) || !(v_ext_l > 0.0)) throw std::invalid_argument("se_lambda_update: inputs must be positive");
  const double lam = 1.0 / mse - 1.0 / v_ext_l;
  if (lam < kPrecisionFloor || lam > kPrecisionCeil) return {std::clamp(lam, kPrecisionFloor, kPrecisionCeil), true};
  return {lam, false};
}

/// Channel description for the predictor: either the i.i.d. closed form
/// (per-AP load and entry variance) or measured per-AP spectra.
struct SeModel {
  enum class Kind { iid, empirical } kind = Kind::iid;
  int N = 1;
  std::vector<int> users_per_ap;  // iid: K_l per AP
  double entry_var = 1.0;         // iid: E|h_ik|^2
  std::vector<RVec> spectra;      // empirical: eigenvalues of h_l^H h_l per AP

  static SeModel iid(int L, int N, int K, double entry_var = 1.0) {
    SeModel m;
    m.kind = Kind::iid;
    m.N = N;
    m.users_per_ap.assign(static_cast<std::size_t>(L), K);
    m.entry_var = entry_var;
    return m;
  }

  static SeModel empirical(std::vector<RVec> spectra) {
    SeModel m;
    m.kind = Kind::empirical;
    m.spectra = std::move(spectra);
    return m;
  }

  std::size_t num_aps() const { return kind == Kind::iid ? users_per_ap.size() : spectra.size(); }
};

struct SeTrace {
  std::vector<std::vector<double>> v_ext_ap;  // [t][l]
  std::vector<double> v_ext;                  // [t]
  std::vector<std::vector<double>> lambda;    // [t][l], precision fed into iteration t
  std::vector<double> mse;
  std::vector<double> ber;
  std::vector<double> ser;
  long clamps = 0;
};

inline SeTrace run_se(const SeModel& model, double sigma2, const Constellation& cons, int T) {
  if (T < 1) throw std::invalid_argument("run_se: T must be >= 1");
  const std::size_t L = model.num_aps();
  if (L == 0) throw std::invalid_argument("run_se: no APs");
  SeTrace tr;
  std::vector<double> lam(L, 1.0 / cons.energy());
  for (int t = 0; t < T; ++t) {
    tr.lambda.push_back(lam);
    std::vector<double> v(L);
    for (std::size_t l = 0; l < L; ++l) {
      const SeStep s = model.kind == SeModel::Kind::iid
                           ? se_step_iid_physical(model.N, model.users_per_ap[l], model.entry_var, sigma2, lam[l])
                           : se_step_empirical(model.spectra[l], sigma2, lam[l]);
      v[l] = s.v;
      tr.clamps += s.clamped;
    }
    const double vc = se_combine(v);
    // same floor as the detector's posterior variance
    const double mse = std::max(awgn_mmse_mse(vc, cons), detail::kVarianceFloor);
    for (std::size_t l = 0; l < L; ++l) {
      const SeStep s = se_lambda_update(mse, v[l]);
      lam[l] = s.v;
      tr.clamps += s.clamped;
    }
    tr.v_ext_ap.push_back(std::move(v));
    tr.v_ext.push_back(vc);
    tr.mse.push_back(mse);
    tr.ber.push_back(qam_ber_awgn(cons.energy() / vc, cons));
    tr.ser.push_back(qam_ser_awgn(cons.energy() / vc, cons));
  }
  return tr;
}

/// Predictor for a scenario with i.i.d. channels whose entries carry the
/// mean transmit power (all-serve-all).
inline SeTrace run_se(const SystemConfig& cfg, double sigma2) {
  return run_se(SeModel::iid(cfg.L, cfg.N, cfg.K, cfg.mean_power()), sigma2, Constellation(cfg.M), cfg.T);
}

}  // namespace cfmimo
