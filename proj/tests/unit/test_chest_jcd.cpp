#include "cfmimo/chest_jcd.hpp"
#include "cfmimo/sysmodel.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace cfmimo;

namespace {

CMat random_matrix(Eigen::Index r, Eigen::Index c, RandomStream& rng, double var = 1.0) {
  CMat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.complex_normal(var);
  return m;
}

CMat random_psd(Eigen::Index n, RandomStream& rng) {
  const CMat a = random_matrix(n, n, rng);
  return a * a.adjoint() / static_cast<double>(n) + 0.1 * CMat::Identity(n, n);
}

CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Explicit vectorized LMMSE with A = X^T kron I_N and noise covariance diag(vec(w)).
struct Oracle {
  CVec h;
  CMat err;
};

Oracle explicit_lmmse(const CMat& Y, const CMat& X, const CMat& R, const RMat& w) {
  const Eigen::Index N = Y.rows();
  const CMat A = kron(X.transpose(), CMat::Identity(N, N));
  const CVec y = Y.reshaped();
  const CMat rnn = w.reshaped().cast<cd>().asDiagonal();
  const CMat gain = R * A.adjoint() * (A * R * A.adjoint() + rnn).inverse();
  return {gain * y, R - gain * A * R};
}

double min_eig(const CMat& m) { return min_eigenvalue(hermitian_part(m)); }

CMat dft_pilots(int users, int tau) {
  RandomStream unused(0);
  return gen_pilots(PilotKind::dft, tau, users, 1.0, unused).X;
}

}  // namespace

TEST(PilotEstimate, NoiselessOrthogonalPilotsRecoverChannel) {
  RandomStream rng(1);
  const int N = 3, K = 2;
  const auto prior = ChannelPrior::from_blocks({CMat::Identity(N, N), 2.0 * CMat::Identity(N, N)}, N);
  const CMat h = random_matrix(N, K, rng);
  const CMat X = dft_pilots(K, 4);
  const auto e = lmmse_pilot_estimate(h * X, X, prior, 1e-12);
  EXPECT_LT((e.h_matrix() - h).norm(), 1e-6);
  EXPECT_LT(e.err_cov.norm(), 1e-10);
}

TEST(PilotEstimate, ZeroPriorGivesZeroEstimate) {
  RandomStream rng(2);
  const auto prior = ChannelPrior::from_matrix(CMat::Zero(4, 4), 2);
  const CMat X = dft_pilots(2, 2);
  const auto e = lmmse_pilot_estimate(random_matrix(2, 2, rng), X, prior, 0.5);
  EXPECT_EQ(e.h_hat.norm(), 0.0);
  EXPECT_EQ(e.err_cov.norm(), 0.0);
}

TEST(PilotEstimate, MatchesKroneckerOracle) {
  RandomStream rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const int N = 2, K = 2, tau = 2;
    const CMat R = random_psd(N * K, rng);  // full covariance, coupling users and antennas
    const auto prior = ChannelPrior::from_matrix(R, N);
    const CMat X = random_matrix(K, tau, rng);
    const CMat Y = random_matrix(N, tau, rng);
    const auto e = lmmse_pilot_estimate(Y, X, prior, 0.3);
    const auto o = explicit_lmmse(Y, X, R, RMat::Constant(N, tau, 0.3));
    EXPECT_LT((e.h_hat - o.h).norm(), 1e-9);
    EXPECT_LT((e.err_cov - o.err).norm(), 1e-9);
  }
}

TEST(PilotEstimate, HeterogeneousNoiseMatchesOracle) {
  RandomStream rng(4);
  const int N = 3, K = 2, tau = 5;
  const auto prior = ChannelPrior::from_blocks({random_psd(N, rng), random_psd(N, rng)}, N);
  const CMat X = random_matrix(K, tau, rng);
  const CMat Y = random_matrix(N, tau, rng);
  RMat w(N, tau);
  for (int i = 0; i < N; ++i)
    for (int n = 0; n < tau; ++n) w(i, n) = rng.uniform(0.05, 2.0);
  const auto e = lmmse_estimate(Y, X, prior, w);
  const auto o = explicit_lmmse(Y, X, prior.cov, w);
  EXPECT_LT((e.h_hat - o.h).norm(), 1e-9);
  EXPECT_LT((e.err_cov - o.err).norm(), 1e-9);
  EXPECT_LT((e.per_entry_var.reshaped() - o.err.diagonal().real()).norm(), 1e-9);
}

TEST(PilotEstimate, ErrorCovariancePsdAndDominatedByPrior) {
  RandomStream rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int N = 4, K = 3;
    std::vector<CMat> blocks;
    for (int k = 0; k < K; ++k) blocks.push_back(local_scattering_correlation(N, rng.uniform(-M_PI, M_PI), 0.2) * rng.uniform(0.1, 2.0));
    const auto prior = ChannelPrior::from_blocks(blocks, N);
    const CMat X = random_matrix(K, 2, rng);  // fewer pilots than users
    const auto e = lmmse_pilot_estimate(random_matrix(N, 2, rng), X, prior, rng.uniform(0.01, 1.0));
    EXPECT_LT((e.err_cov - e.err_cov.adjoint()).norm(), 1e-12);
    EXPECT_GE(min_eig(e.err_cov), -1e-9);
    EXPECT_GE(min_eig(prior.cov - e.err_cov), -1e-9);
  }
}

TEST(PilotEstimate, RejectsBadInput) {
  const auto prior = ChannelPrior::from_matrix(CMat::Identity(4, 4), 2);
  EXPECT_THROW(lmmse_pilot_estimate(CMat::Zero(2, 3), CMat::Zero(2, 2), prior, 1.0), std::invalid_argument);
  EXPECT_THROW(lmmse_pilot_estimate(CMat::Zero(2, 2), CMat::Zero(2, 2), prior, 0.0), std::invalid_argument);
  CMat bad = -CMat::Identity(4, 4);
  EXPECT_THROW(ChannelPrior::from_matrix(bad, 2), std::invalid_argument);
  EXPECT_THROW(ChannelPrior::from_matrix(CMat::Identity(3, 3), 2), std::invalid_argument);
}

TEST(DetectionNoise, RowSums) {
  EXPECT_TRUE(detection_noise_cov(RMat::Zero(3, 4), 0.2).isApproxToConstant(0.2, 1e-15));
  EXPECT_TRUE(detection_noise_cov(RMat::Constant(3, 5, 0.05), 0.2).isApproxToConstant(5 * 0.05 + 0.2, 1e-15));

  RandomStream rng(6);
  const auto prior = ChannelPrior::from_blocks({random_psd(3, rng), random_psd(3, rng), random_psd(3, rng)}, 3);
  const auto e = lmmse_pilot_estimate(random_matrix(3, 3, rng), dft_pilots(3, 3), prior, 0.4);
  const RVec v = detection_noise_cov(e.per_entry_var, 0.4);
  for (int i = 0; i < 3; ++i) {
    double s = 0.4;
    for (int j = 0; j < 3; ++j) s += e.err_cov(j * 3 + i, j * 3 + i).real();
    EXPECT_NEAR(v(i), s, 1e-14);
  }
  EXPECT_THROW(detection_noise_cov(RMat::Constant(1, 1, -1.0), 1.0), std::invalid_argument);
}

TEST(FeedbackNoise, PerfectDetectionAndArithmetic) {
  EXPECT_TRUE(feedback_noise_cov(RMat::Zero(2, 3), RMat::Ones(4, 2), 0.2).isApproxToConstant(0.2, 1e-15));
  const RMat one = feedback_noise_cov(RMat::Constant(1, 1, 0.1), RMat::Ones(2, 1), 0.2);
  EXPECT_NEAR(one(0, 0), 0.3, 1e-15);
  EXPECT_NEAR(one(1, 0), 0.3, 1e-15);
  RMat err(2, 2), pw(1, 2);
  err << 0.1, 0.0, 0.2, 0.5;
  pw << 2.0, 3.0;
  const RMat w = feedback_noise_cov(err, pw, 1.0);
  EXPECT_NEAR(w(0, 0), 1.0 + 2.0 * 0.1 + 3.0 * 0.2, 1e-15);
  EXPECT_NEAR(w(0, 1), 1.0 + 3.0 * 0.5, 1e-15);
}

TEST(DataAided, BlockNoiseLayoutMatchesExplicitConstruction) {
  RandomStream rng(7);
  const int N = 2, K = 2, tp = 2, td = 3;
  const auto prior = ChannelPrior::from_blocks({random_psd(N, rng), random_psd(N, rng)}, N);
  const CMat Xp = dft_pilots(K, tp), Xd = random_matrix(K, td, rng);
  const CMat Yp = random_matrix(N, tp, rng), Yd = random_matrix(N, td, rng);
  RMat err(K, td);
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < td; ++n) err(k, n) = rng.uniform(0.0, 0.3);
  const double s2 = 0.25;
  const RMat vdet = feedback_noise_cov(err, prior.entry_power, s2);
  const auto e = data_aided_estimate(Yp, Yd, Xp, Xd, prior, s2, vdet);

  // R_nn = blkdiag(sigma2 I_{N tau_p}, V_p[1], ..., V_p[tau_d]) built entry by entry
  CMat X(K, tp + td), Y(N, tp + td);
  X << Xp, Xd;
  Y << Yp, Yd;
  const CMat A = kron(X.transpose(), CMat::Identity(N, N));
  CMat rnn = CMat::Zero(N * (tp + td), N * (tp + td));
  for (int n = 0; n < tp + td; ++n)
    for (int i = 0; i < N; ++i) {
      double v = s2;
      if (n >= tp)
        for (int j = 0; j < K; ++j) v += prior.cov(j * N + i, j * N + i).real() * err(j, n - tp);
      rnn(n * N + i, n * N + i) = v;
    }
  const CMat& R = prior.cov;
  const CMat gain = R * A.adjoint() * (A * R * A.adjoint() + rnn).inverse();
  EXPECT_LT((e.h_hat - gain * Y.reshaped()).norm(), 1e-9);
  EXPECT_LT((e.err_cov - (R - gain * A * R)).norm(), 1e-9);
}

TEST(DataAided, ExactDataEqualsExtendedPilot) {
  RandomStream rng(8);
  const int N = 3, K = 2, tp = 2, td = 4;
  const auto prior = ChannelPrior::from_blocks({random_psd(N, rng), random_psd(N, rng)}, N);
  const CMat Xp = dft_pilots(K, tp), Xd = random_matrix(K, td, rng);
  const CMat Yp = random_matrix(N, tp, rng), Yd = random_matrix(N, td, rng);
  const double s2 = 0.3;
  const auto a = data_aided_estimate(Yp, Yd, Xp, Xd, prior, s2, RMat::Constant(N, td, s2));
  CMat X(K, tp + td), Y(N, tp + td);
  X << Xp, Xd;
  Y << Yp, Yd;
  const auto b = lmmse_pilot_estimate(Y, X, prior, s2);
  EXPECT_LT((a.h_hat - b.h_hat).norm(), 1e-12);
  EXPECT_LT((a.err_cov - b.err_cov).norm(), 1e-12);
}

TEST(DataAided, EmptyDataIsBitIdenticalToPilotOnly) {
  RandomStream rng(9);
  const auto prior = ChannelPrior::from_blocks({random_psd(2, rng), random_psd(2, rng)}, 2);
  const CMat Xp = random_matrix(2, 3, rng), Yp = random_matrix(2, 3, rng);
  const auto a = data_aided_estimate(Yp, CMat(2, 0), Xp, CMat(2, 0), prior, 0.2, RMat(2, 0));
  const auto b = lmmse_pilot_estimate(Yp, Xp, prior, 0.2);
  EXPECT_TRUE(a.h_hat == b.h_hat);
  EXPECT_TRUE(a.err_cov == b.err_cov);
}

TEST(DataAided, ErrorCovarianceNoLargerThanPilotOnly) {
  RandomStream rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    const int N = 3, K = 3, tp = 2, td = 5;
    const auto prior = ChannelPrior::from_blocks({random_psd(N, rng), random_psd(N, rng), random_psd(N, rng)}, N);
    const CMat Xp = random_matrix(K, tp, rng), Xd = random_matrix(K, td, rng);
    const CMat Yp = random_matrix(N, tp, rng), Yd = random_matrix(N, td, rng);
    RMat err(K, td);
    for (int k = 0; k < K; ++k)
      for (int n = 0; n < td; ++n) err(k, n) = rng.uniform(0.0, 1.0);
    const double s2 = rng.uniform(0.05, 1.0);
    const auto a = data_aided_estimate(Yp, Yd, Xp, Xd, prior, s2, feedback_noise_cov(err, prior.entry_power, s2));
    const auto b = lmmse_pilot_estimate(Yp, Xp, prior, s2);
    EXPECT_GE(min_eig(b.err_cov - a.err_cov), -1e-9);
    EXPECT_GE(min_eig(prior.cov - a.err_cov), -1e-9);
  }
}

TEST(DataAided, ErrorFallsWithMoreExactData) {
  // median per-entry error variance over trials, perfect data, growing tau_d
  RandomStream rng(11);
  const int N = 2, K = 4, tp = 2, trials = 51;
  const auto q = Constellation::qpsk();
  double prev = 1e300;
  for (int td : {0, 4, 16, 64}) {
    std::vector<double> med;
    for (int t = 0; t < trials; ++t) {
      const auto prior = ChannelPrior::from_blocks(std::vector<CMat>(K, CMat::Identity(N, N)), N);
      CMat Xd(K, td);
      for (int k = 0; k < K; ++k)
        for (int n = 0; n < td; ++n) Xd(k, n) = q.point(rng.uniform_int(4));
      const CMat Xp = random_matrix(K, tp, rng);
      const auto e = data_aided_estimate(random_matrix(N, tp, rng), random_matrix(N, td, rng), Xp, Xd, prior, 0.1,
                                         RMat::Constant(N, td, 0.1));
      med.push_back(e.per_entry_var.mean());
    }
    std::nth_element(med.begin(), med.begin() + trials / 2, med.end());
    EXPECT_LT(med[trials / 2], prev) << "tau_d=" << td;
    prev = med[trials / 2];
  }
}

namespace {

struct JcdCase {
  ChannelSet cs;
  CMat x_pilot;
  CMat x_data;
  std::vector<std::vector<int>> truth;
  BlockObservation obs;
  std::vector<ChannelPrior> priors;
};

JcdCase make_case(int L, int N, int K, int tp, int td, double s2, RandomStream& rng, const Constellation& q,
                  PilotKind pilots = PilotKind::dft) {
  JcdCase c;
  SystemConfig cfg;
  cfg.L = L;
  cfg.N = N;
  cfg.K = K;
  cfg.tau_p = tp;
  c.cs = gen_iid_rayleigh(cfg, rng);
  c.x_pilot = gen_pilots(pilots, tp, K, 1.0, rng).X;
  c.x_data.resize(K, td);
  c.truth.assign(K, std::vector<int>(td));
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < td; ++n) c.x_data(k, n) = q.point(c.truth[k][n] = rng.uniform_int(q.order()));
  for (int l = 0; l < L; ++l) {
    const CMat h = c.cs.ap_block(l);
    c.obs.pilots.push_back(h * c.x_pilot + random_matrix(N, tp, rng, s2));
    c.obs.data.push_back(h * c.x_data + random_matrix(N, td, rng, s2));
    c.priors.push_back(ChannelPrior::for_ap(c.cs, l));
  }
  return c;
}

}  // namespace

TEST(Jcd, SingleRoundIsPilotOnlyReceiver) {
  RandomStream rng(12);
  const auto q = Constellation::qpsk();
  const double s2 = 0.1;
  auto jc = make_case(3, 4, 4, 4, 6, s2, rng, q);
  EpOptions opt;
  const auto res = jcd_run(jc.obs, jc.x_pilot, jc.priors, jc.cs.clustering, s2, q, opt, 1);
  ASSERT_EQ(res.rounds.size(), 1u);
  for (int l = 0; l < 3; ++l) {
    const auto e = lmmse_pilot_estimate(jc.obs.pilots[l], jc.x_pilot, jc.priors[l], s2);
    EXPECT_TRUE(res.rounds[0].estimates[l].h_hat == e.h_hat);
  }
  // detection column by column with the same estimates
  std::vector<ApLinearModule> mods;
  for (int l = 0; l < 3; ++l) {
    const auto& e = res.rounds[0].estimates[l];
    mods.emplace_back(e.h_matrix(), detection_noise_cov(e.per_entry_var, s2));
  }
  for (int n = 0; n < 6; ++n) {
    std::vector<CVec> y;
    for (int l = 0; l < 3; ++l) y.push_back(jc.obs.data[l].col(n));
    const auto d = detect(mods, y, jc.cs.clustering, q, opt);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(res.rounds[0].decisions(k, n), d.x_hat[k]);
  }
}

TEST(Jcd, NoiselessOrthogonalPilotsRecoverData) {
  RandomStream rng(13);
  const auto q = Constellation::qpsk();
  const double s2 = 1e-10;
  auto jc = make_case(2, 4, 3, 3, 8, s2, rng, q);
  EpOptions opt;
  const auto res = jcd_run(jc.obs, jc.x_pilot, jc.priors, jc.cs.clustering, s2, q, opt, 2);
  for (const auto& round : res.rounds)
    for (int k = 0; k < 3; ++k)
      for (int n = 0; n < 8; ++n) EXPECT_EQ(round.decisions(k, n), jc.truth[k][n]);
}

TEST(Jcd, SecondRoundDoesNotIncreaseChannelError) {
  RandomStream rng(14);
  const auto q = Constellation::qpsk();
  const double s2 = 0.05;
  std::vector<double> r1, r2;
  for (int t = 0; t < 21; ++t) {
    auto jc = make_case(2, 4, 4, 2, 20, s2, rng, q, PilotKind::random_qam);  // two pilots for four users
    EpOptions opt;
    const auto res = jcd_run(jc.obs, jc.x_pilot, jc.priors, jc.cs.clustering, s2, q, opt, 2);
    double e1 = 0.0, e2 = 0.0;
    for (int l = 0; l < 2; ++l) {
      e1 += (res.rounds[0].estimates[l].h_matrix() - jc.cs.ap_block(l)).squaredNorm();
      e2 += (res.rounds[1].estimates[l].h_matrix() - jc.cs.ap_block(l)).squaredNorm();
    }
    r1.push_back(e1);
    r2.push_back(e2);
  }
  std::nth_element(r1.begin(), r1.begin() + 10, r1.end());
  std::nth_element(r2.begin(), r2.begin() + 10, r2.end());
  EXPECT_LT(r2[10], r1[10]);
}
