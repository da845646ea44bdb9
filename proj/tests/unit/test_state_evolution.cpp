#include "cfmimo/ep_detector.hpp"
#include "cfmimo/state_evolution.hpp"
#include "cfmimo/sysmodel.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cfmimo;

namespace {

CMat gaussian(int r, int c, RandomStream& rng, double var = 1.0) {
  CMat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.complex_normal(var);
  return m;
}

RVec gram_spectrum(const CMat& h) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h.adjoint() * h), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0);
}

// Fixed-point iteration of the three maps on the i.i.d. model, written out
// with the closed form and the tanh expression of the QPSK MSE.
double qpsk_fixed_point(int L, int N, int K, double sigma2, double* lambda_out = nullptr) {
  double lam = 1.0, vc = 0.0;
  for (int it = 0; it < 10000; ++it) {
    const double alpha = static_cast<double>(K) / N, s = sigma2 / K, q = 1.0 / lam;
    const double a = alpha * s + (alpha - 1.0) * q;
    const double vl = 0.5 * (a + std::sqrt(a * a + 4.0 * alpha * s * q));
    const double next = vl / L;
    lam = 1.0 / qpsk_mse_tanh_form(next) - 1.0 / vl;
    if (std::abs(next - vc) < 1e-14 * next) {
      vc = next;
      break;
    }
    vc = next;
  }
  if (lambda_out) *lambda_out = lam;
  return vc;
}

}  // namespace

TEST(SeClosedForm, NoiselessLimits) {
  EXPECT_DOUBLE_EQ(se_step_iid(0.5, 0.0, 1.0), 1e-8);
  EXPECT_NEAR(se_step_iid(3.0, 0.0, 0.7), 2.0 * 0.7, 1e-15);
  EXPECT_NEAR(se_step_iid(1.5, 0.0, 2.0), 0.5 * 2.0, 1e-15);
}

TEST(SeClosedForm, HandArithmetic) {
  EXPECT_NEAR(se_step_iid(2.0, 1.0, 1.0), 1.5 + std::sqrt(17.0) / 2.0, 1e-14);
  EXPECT_THROW(se_step_iid(0.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(se_step_iid(1.0, -1.0, 1.0), std::invalid_argument);
}

TEST(SeEmpirical, DegenerateSpectrumClamps) {
  const auto s = se_step_empirical(RVec::Zero(4), 1.0, 1.0);
  EXPECT_TRUE(s.clamped);
  EXPECT_DOUBLE_EQ(s.v, 1e8);
}

TEST(SeEmpirical, ScalarSpectrum) {
  RVec e(1);
  e << 2.5;
  const auto s = se_step_empirical(e, 0.5, 3.0);
  EXPECT_FALSE(s.clamped);
  EXPECT_NEAR(s.v, 0.5 / 2.5, 1e-15);
}

TEST(SeEmpirical, SampledSpectrumMatchesClosedForm) {
  RandomStream rng(1);
  // The closed form is the large-system mean, so compare it with the average over
  // 50 draws. Square shapes are left out: their Gram spectra reach the hard edge
  // at zero and converge slowly.
  for (auto [n, k] : {std::pair{64, 32}, {32, 64}, {64, 16}}) {
    std::vector<RVec> spectra;
    for (int rep = 0; rep < 50; ++rep) spectra.push_back(gram_spectrum(gaussian(n, k, rng)));
    for (double lam : {1.0, 4.0, 30.0})
      for (double s2 : {0.1, 1.0, 10.0}) {
        double emp = 0.0;
        for (const auto& e : spectra) emp += se_step_empirical(e, s2, lam).v / 50.0;
        const double cf = se_step_iid_physical(n, k, 1.0, s2, lam).v;
        EXPECT_NEAR(emp / cf, 1.0, 0.03) << n << "x" << k << " lambda=" << lam << " sigma2=" << s2;
      }
  }
}

TEST(SeEmpirical, EqualsDetectorFirstIteration) {
  RandomStream rng(2);
  SystemConfig cfg;
  cfg.L = 3;
  cfg.N = 4;
  cfg.K = 6;
  cfg.tau_p = 6;
  const auto cs = gen_iid_rayleigh(cfg, rng);
  const auto q = Constellation::qpsk();
  CVec y(12);
  for (int i = 0; i < 12; ++i) y(i) = rng.complex_normal(1.0);
  EpOptions opt;
  opt.iterations = 1;
  const double s2 = 0.4;
  const auto out = detect(cs, y, s2, q, opt);
  for (int l = 0; l < 3; ++l) {
    const double se = se_step_empirical(gram_spectrum(cs.ap_block(l)), s2, 1.0).v;
    EXPECT_NEAR(out.trace[0].v_ext_ap[l], se, 1e-10 * se);
  }
}

TEST(SeCombine, AlgebraAndBoundary) {
  EXPECT_NEAR(se_combine({0.6, 0.6, 0.6}), 0.2, 1e-15);
  const auto s = se_lambda_update(0.3, 0.3);
  EXPECT_TRUE(s.clamped);
  EXPECT_DOUBLE_EQ(s.v, 1e-8);
  const auto t = se_lambda_update(0.1, 0.5);
  EXPECT_FALSE(t.clamped);
  EXPECT_NEAR(t.v, 8.0, 1e-14);
}

TEST(SeRun, SingleStepIsClosedForm) {
  const auto q = Constellation::qpsk();
  const auto tr = run_se(SeModel::iid(1, 8, 4), 0.5, q, 1);
  ASSERT_EQ(tr.v_ext.size(), 1u);
  EXPECT_NEAR(tr.v_ext[0], se_step_iid(0.5, 0.5 / 4, 1.0), 1e-15);
  EXPECT_NEAR(tr.ber[0], qfunc(std::sqrt(1.0 / tr.v_ext[0])), 1e-15);
}

TEST(SeRun, TwoIterationQpskTraceRecomputed) {
  const auto q = Constellation::qpsk();
  const int L = 4, N = 8, K = 16;
  const double s2 = 0.8;
  const auto tr = run_se(SeModel::iid(L, N, K), s2, q, 2);
  // iteration 1
  const double alpha = 2.0, s = s2 / K;
  auto closed = [&](double prior) {
    const double a = alpha * s + (alpha - 1.0) * prior;
    return 0.5 * (a + std::sqrt(a * a + 4.0 * alpha * s * prior));
  };
  const double v1 = closed(1.0), c1 = v1 / L;
  const double lam1 = 1.0 / qpsk_mse_tanh_form(c1) - 1.0 / v1;
  const double v2 = closed(1.0 / lam1), c2 = v2 / L;
  EXPECT_NEAR(tr.v_ext[0], c1, 1e-12 * c1);
  EXPECT_NEAR(tr.lambda[1][0], lam1, 1e-7 * lam1);
  EXPECT_NEAR(tr.v_ext[1], c2, 1e-7 * c2);
  EXPECT_NEAR(tr.mse[1], qpsk_mse_tanh_form(c2), 1e-8);
}

TEST(SeRun, FixedPointSatisfiesAllMaps) {
  const auto q = Constellation::qpsk();
  const int L = 4, N = 8, K = 16;
  const double s2 = 4.0;
  const auto tr = run_se(SeModel::iid(L, N, K), s2, q, 200);
  const std::size_t t = tr.v_ext.size() - 1;
  ASSERT_LT(std::abs(tr.v_ext[t] - tr.v_ext[t - 1]), 1e-10);
  const double vstar = tr.v_ext[t];
  const double lam = se_lambda_update(awgn_mmse_mse(vstar, q), tr.v_ext_ap[t][0]).v;
  const double vl = se_step_iid_physical(N, K, 1.0, s2, lam).v;
  EXPECT_NEAR(se_combine(std::vector<double>(L, vl)), vstar, 1e-8);
  EXPECT_NEAR(vstar, qpsk_fixed_point(L, N, K, s2), 1e-8);
}

TEST(SeRun, FixedPointIncreasesWithNoise) {
  const auto q = Constellation::qpsk();
  double prev = 0.0;
  for (double s2 : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0}) {
    const auto tr = run_se(SeModel::iid(4, 8, 16), s2, q, 100);
    EXPECT_GT(tr.v_ext.back(), prev) << "sigma2=" << s2;
    prev = tr.v_ext.back();
  }
}

TEST(SeRun, PredictedBerMonotoneInSnr) {
  SystemConfig cfg;
  cfg.L = 8;
  cfg.N = 16;
  cfg.K = 32;
  cfg.tau_p = 32;
  double prev = 1.0;
  for (double snr = -20.0; snr <= 10.0; snr += 1.0) {
    const double ber = run_se(cfg, std::pow(10.0, -snr / 10.0)).ber.back();
    EXPECT_LE(ber, prev) << "snr=" << snr;
    prev = ber;
  }
}

TEST(SeRun, EmpiricalModelTracksDetectorAverage) {
  // per-AP spectra of the actual channel reproduce the measured first-iteration variance
  RandomStream rng(3);
  SystemConfig cfg;
  cfg.L = 4;
  cfg.N = 16;
  cfg.K = 8;
  cfg.tau_p = 8;
  const auto cs = gen_iid_rayleigh(cfg, rng);
  std::vector<RVec> spectra;
  for (int l = 0; l < 4; ++l) spectra.push_back(gram_spectrum(cs.ap_block(l)));
  const auto q = Constellation::qpsk();
  const auto tr = run_se(SeModel::empirical(spectra), 0.3, q, 1);
  EpOptions opt;
  opt.iterations = 1;
  const auto out = detect(cs, CVec::Zero(64), 0.3, q, opt);
  EXPECT_NEAR(tr.v_ext[0], out.trace[0].v_ext, 1e-10 * tr.v_ext[0]);
}
