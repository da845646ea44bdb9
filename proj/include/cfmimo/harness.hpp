#pragma once

// Monte Carlo BER sweeps. Trials are the outer loop: each trial draws one
// channel realization, symbol block and unit noise shape from streams keyed by
// (seed, trial) and evaluates every active SNR point on them. Counts are merged
// in trial order, so results do not depend on the worker count.

#include "cfmimo/accounting.hpp"
#include "cfmimo/baselines.hpp"
#include "cfmimo/chest_jcd.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/ep_detector.hpp"
#include "cfmimo/modem.hpp"
#include "cfmimo/results_io.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/state_evolution.hpp"
#include "cfmimo/sysmodel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cfmimo {

enum class DetectorKind { deep, centralized_mmse, distributed_mmse, lsfd, jcd_deep, local_mmse };
enum class CsiMode { perfect, estimated };

inline const char* to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::deep: return "deep";
    case DetectorKind::centralized_mmse: return "centralized_mmse";
    case DetectorKind::distributed_mmse: return "distributed_mmse";
    case DetectorKind::lsfd: return "lsfd";
    case DetectorKind::jcd_deep: return "jcd_deep";
    case DetectorKind::local_mmse: return "local_mmse";
  }
  return "?";
}

inline const char* to_string(CsiMode c) { return c == CsiMode::perfect ? "perfect" : "estimated"; }

inline DetectorKind parse_detector(const std::string& s) {
  for (auto d : {DetectorKind::deep, DetectorKind::centralized_mmse, DetectorKind::distributed_mmse, DetectorKind::lsfd,
                 DetectorKind::jcd_deep, DetectorKind::local_mmse})
    if (s == to_string(d)) return d;
  throw std::invalid_argument("unknown detector '" + s + "'");
}

/// Row of the fronthaul table that a detector tag is charged with. The
/// `distributed_mmse` tag runs local MMSE with average decoding at the CPU;
/// `local_mmse` is the receiver without any CPU combining.
inline Receiver fronthaul_row(DetectorKind d) {
  switch (d) {
    case DetectorKind::deep:
    case DetectorKind::jcd_deep: return Receiver::distributed_ep;
    case DetectorKind::centralized_mmse: return Receiver::centralized_mmse;
    case DetectorKind::distributed_mmse: return Receiver::average_decoding;
    case DetectorKind::lsfd: return Receiver::lsfd;
    case DetectorKind::local_mmse: return Receiver::distributed_mmse;
  }
  throw std::invalid_argument("fronthaul_row: unknown detector");
}

struct RunSpec {
  SystemConfig cfg;
  DetectorKind detector = DetectorKind::deep;
  long long trials = 1000;       // trials run at every SNR point
  long long max_trials = 0;      // cap for auto-extension; 0 means `trials`
  long long min_bit_errors = 100;
  CsiMode csi = CsiMode::perfect;
  bool se_predict = false;
  int threads = 1;
  bool timing = true;

  long long trial_cap() const { return max_trials > 0 ? std::max(max_trials, trials) : trials; }

  void validate() const {
    cfg.validate();
    if (trials < 1) throw std::invalid_argument("invalid run: trials must be >= 1");
    if (threads < 1) throw std::invalid_argument("invalid run: threads must be >= 1");
    if (detector == DetectorKind::jcd_deep && csi != CsiMode::estimated)
      throw std::invalid_argument("invalid run: jcd_deep requires estimated CSI");
    if (detector == DetectorKind::lsfd && csi != CsiMode::perfect)
      throw std::invalid_argument("invalid run: lsfd is calibrated for perfect CSI only");
    if (csi == CsiMode::estimated && cfg.tau_d() < 1) throw std::invalid_argument("invalid run: estimated CSI needs tau_c > tau_p");
    if (csi == CsiMode::estimated && cfg.pilot_kind == PilotKind::dft && cfg.clustering != ClusteringMode::dcc && cfg.tau_p < cfg.K)
      throw std::invalid_argument("invalid run: DFT pilots need tau_p >= K");
  }
};

// ---------------------------------------------------------------------------
// Scenario realization

namespace stream {
inline constexpr std::uint64_t channel = 1, symbols = 2, noise = 3, pilots = 4, calibration = 5;
}

/// Noise variance at an SNR point. i.i.d. and correlated Rayleigh:
/// SNR = mean(p) E_x / sigma2. Urban: channels are normalized so that the
/// median user has unit mean per-antenna receive gain, and SNR = E_x / sigma2
/// is the median per-user receive SNR.
inline double noise_variance(const SystemConfig& cfg, double snr_db, double energy) {
  const double ref = cfg.channel_model == ChannelModel::urban_3gpp ? 1.0 : cfg.mean_power();
  return ref * energy / std::pow(10.0, snr_db / 10.0);
}

/// Scales user k's channel, correlation and beta by g_k.
inline void scale_users(ChannelSet& cs, const RVec& g) {
  for (int k = 0; k < cs.K; ++k) {
    cs.H.col(k) *= std::sqrt(g(k));
    for (int l = 0; l < cs.L; ++l) {
      cs.R[static_cast<std::size_t>(k) * cs.L + l] *= g(k);
      cs.beta(k, l) *= g(k);
    }
  }
}

/// Channel of one trial with transmit powers folded in (and, for the urban
/// model, normalized to unit median receive gain).
inline ChannelSet trial_channel(const SystemConfig& cfg, std::uint64_t trial) {
  RandomStream rng = RandomStream::derive(cfg.seed, {trial, stream::channel});
  ChannelSet cs = generate_channels(cfg, rng);
  RVec g(cfg.K);
  for (int k = 0; k < cfg.K; ++k) g(k) = cfg.power(k);
  if (cfg.channel_model == ChannelModel::urban_3gpp) {
    std::vector<double> gain(cfg.K);
    for (int k = 0; k < cfg.K; ++k) gain[k] = g(k) * cs.beta.row(k).mean();
    std::nth_element(gain.begin(), gain.begin() + cfg.K / 2, gain.end());
    double median = gain[cfg.K / 2];
    if (cfg.K % 2 == 0) median = 0.5 * (median + *std::max_element(gain.begin(), gain.begin() + cfg.K / 2));
    g /= median;
  }
  scale_users(cs, g);
  return cs;
}

/// Pilot matrix (K x tau_p). DFT pilots follow the DCC pilot assignment when
/// one exists, otherwise user k takes DFT row k.
inline CMat trial_pilots(const SystemConfig& cfg, const Clustering& c, std::uint64_t trial) {
  RandomStream rng = RandomStream::derive(cfg.seed, {trial, stream::pilots});
  if (cfg.pilot_kind == PilotKind::dft && !c.pilot.empty() && c.pilot.front() >= 0) {
    const CMat rows = gen_pilots(PilotKind::dft, cfg.tau_p, cfg.tau_p, cfg.pilot_power, rng).X;
    CMat x(cfg.K, cfg.tau_p);
    for (int k = 0; k < cfg.K; ++k) x.row(k) = rows.row(c.pilot[k]);
    return x;
  }
  return gen_pilots(cfg.pilot_kind, cfg.tau_p, cfg.K, cfg.pilot_power, rng).X;
}

// ---------------------------------------------------------------------------
// Error counting

struct ErrorCounts {
  long long bit_errors = 0;
  long long symbol_errors = 0;
  long long symbols = 0;
  long long clamps = 0;
  double seconds = 0.0;
  std::vector<double> v_ext_sum;  // per iteration
  long long v_ext_n = 0;

  void add_decisions(const std::vector<int>& sent, const std::vector<int>& got, const Constellation& cons) {
    for (std::size_t k = 0; k < sent.size(); ++k) {
      const int e = cons.bit_errors(sent[k], got[k]);
      bit_errors += e;
      symbol_errors += e > 0;
    }
    symbols += static_cast<long long>(sent.size());
  }

  void add_trace(const std::vector<IterationTrace>& tr) {
    if (v_ext_sum.size() < tr.size()) v_ext_sum.resize(tr.size(), 0.0);
    for (std::size_t t = 0; t < tr.size(); ++t) v_ext_sum[t] += tr[t].v_ext;
    ++v_ext_n;
  }

  void merge(const ErrorCounts& o) {
    bit_errors += o.bit_errors;
    symbol_errors += o.symbol_errors;
    symbols += o.symbols;
    clamps += o.clamps;
    seconds += o.seconds;
    if (v_ext_sum.size() < o.v_ext_sum.size()) v_ext_sum.resize(o.v_ext_sum.size(), 0.0);
    for (std::size_t t = 0; t < o.v_ext_sum.size(); ++t) v_ext_sum[t] += o.v_ext_sum[t];
    v_ext_n += o.v_ext_n;
  }
};

/// Number of result rows a detector produces per SNR point.
inline int outputs_per_point(const RunSpec& spec) { return spec.detector == DetectorKind::jcd_deep ? spec.cfg.R : 1; }

inline std::string output_tag(const RunSpec& spec, int out) {
  if (spec.detector == DetectorKind::jcd_deep) return "jcd_deep@r" + std::to_string(out + 1);
  return to_string(spec.detector);
}

/// LSFD weights for one channel realization, calibrated on fresh symbols and
/// noise. With `fresh_channels`, every calibration sample also draws a new
/// channel (statistics over the fading distribution).
inline std::pair<LsfdWeights, LsfdCalibrator> calibrate_lsfd(const SystemConfig& cfg, const ChannelSet& cs, double sigma2,
                                                             const Constellation& cons, std::uint64_t key, bool fresh_channels) {
  LsfdCalibrator cal(cs.clustering);
  const long long samples = 100LL * cfg.L;
  for (long long i = 0; i < samples; ++i) {
    RandomStream rng = RandomStream::derive(cfg.seed, {stream::calibration, key, static_cast<std::uint64_t>(i)});
    const ChannelSet fresh = fresh_channels ? trial_channel(cfg, (key << 32) ^ (0x5bd1e995ULL + i)) : ChannelSet{};
    const ChannelSet& ch = fresh_channels ? fresh : cs;
    CVec x(cfg.K);
    for (int k = 0; k < cfg.K; ++k) x(k) = cons.point(rng.uniform_int(cons.order()));
    CVec y = ch.H * x;
    for (Eigen::Index r = 0; r < y.size(); ++r) y(r) += rng.complex_normal(sigma2);
    cal.add(local_estimates(ch, y, sigma2, cons.energy()), x);
  }
  return {cal.finalize(samples), cal};
}

/// Runs one trial at the given SNR indices. Returns counts[snr_slot][output].
inline std::vector<std::vector<ErrorCounts>> run_trial(const RunSpec& spec, const Constellation& cons, std::uint64_t trial,
                                                       const std::vector<double>& sigma2,
                                                       const std::vector<std::optional<std::pair<LsfdWeights, LsfdCalibrator>>>& lsfd) {
  using clock = std::chrono::steady_clock;
  const SystemConfig& cfg = spec.cfg;
  const ChannelSet cs = trial_channel(cfg, trial);
  const int n_out = outputs_per_point(spec);
  std::vector<std::vector<ErrorCounts>> res(sigma2.size(), std::vector<ErrorCounts>(static_cast<std::size_t>(n_out)));
  RandomStream sym_rng = RandomStream::derive(cfg.seed, {trial, stream::symbols});
  RandomStream noise_rng = RandomStream::derive(cfg.seed, {trial, stream::noise});
  const EpOptions opt = EpOptions::from(cfg);
  const Eigen::Index LN = static_cast<Eigen::Index>(cfg.L) * cfg.N;

  if (spec.csi == CsiMode::perfect) {
    std::vector<int> sent(cfg.K);
    CVec x(cfg.K), z(LN);
    for (int k = 0; k < cfg.K; ++k) {
      sent[k] = sym_rng.uniform_int(cons.order());
      x(k) = cons.point(sent[k]);
    }
    for (Eigen::Index r = 0; r < LN; ++r) z(r) = noise_rng.complex_normal();
    const CVec hx = cs.H * x;
    for (std::size_t s = 0; s < sigma2.size(); ++s) {
      const auto t0 = clock::now();
      const CVec y = hx + std::sqrt(sigma2[s]) * z;
      ErrorCounts& c = res[s][0];
      DetectionOutput d;
      switch (spec.detector) {
        case DetectorKind::deep:
          d = detect(cs, y, sigma2[s], cons, opt);
          c.add_trace(d.trace);
          break;
        case DetectorKind::centralized_mmse: d = centralized_mmse(cs.H, y, sigma2[s], cons.energy(), cons); break;
        case DetectorKind::distributed_mmse: d = distributed_mmse_avg(cs, y, sigma2[s], cons); break;
        case DetectorKind::local_mmse: d = local_mmse_decoding(local_estimates(cs, y, sigma2[s], cons.energy()), cs, cons); break;
        case DetectorKind::lsfd: {
          const auto& w = lsfd[s] ? *lsfd[s] : calibrate_lsfd(cfg, cs, sigma2[s], cons, trial * 1024 + s, false);
          d = lsfd_combine(local_estimates(cs, y, sigma2[s], cons.energy()), w.first, w.second, cons);
          break;
        }
        case DetectorKind::jcd_deep: throw std::logic_error("jcd_deep needs estimated CSI");
      }
      c.add_decisions(sent, d.x_hat, cons);
      c.clamps += d.clamps;
      c.seconds += std::chrono::duration<double>(clock::now() - t0).count();
    }
    return res;
  }

  // Estimated CSI: one coherence block of tau_p pilots and tau_d data symbols.
  const int tp = cfg.tau_p, td = cfg.tau_d();
  const CMat xp = trial_pilots(cfg, cs.clustering, trial);
  Eigen::MatrixXi sent(cfg.K, td);
  CMat xd(cfg.K, td);
  for (int n = 0; n < td; ++n)
    for (int k = 0; k < cfg.K; ++k) {
      sent(k, n) = sym_rng.uniform_int(cons.order());
      xd(k, n) = cons.point(sent(k, n));
    }
  CMat zp(LN, tp), zd(LN, td);
  for (Eigen::Index j = 0; j < tp; ++j)
    for (Eigen::Index r = 0; r < LN; ++r) zp(r, j) = noise_rng.complex_normal();
  for (Eigen::Index j = 0; j < td; ++j)
    for (Eigen::Index r = 0; r < LN; ++r) zd(r, j) = noise_rng.complex_normal();
  const CMat hp = cs.H * xp, hd = cs.H * xd;
  std::vector<ChannelPrior> priors;
  for (int l = 0; l < cfg.L; ++l) priors.push_back(ChannelPrior::for_ap(cs, l));

  for (std::size_t s = 0; s < sigma2.size(); ++s) {
    const auto t0 = clock::now();
    const double sd = std::sqrt(sigma2[s]);
    BlockObservation obs;
    for (int l = 0; l < cfg.L; ++l) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(l) * cfg.N;
      obs.pilots.push_back(hp.middleRows(r0, cfg.N) + sd * zp.middleRows(r0, cfg.N));
      obs.data.push_back(hd.middleRows(r0, cfg.N) + sd * zd.middleRows(r0, cfg.N));
    }
    auto count_block = [&](ErrorCounts& c, const Eigen::MatrixXi& got) {
      for (int n = 0; n < td; ++n) {
        std::vector<int> a(cfg.K), b(cfg.K);
        for (int k = 0; k < cfg.K; ++k) {
          a[k] = sent(k, n);
          b[k] = got(k, n);
        }
        c.add_decisions(a, b, cons);
      }
    };
    if (spec.detector == DetectorKind::deep || spec.detector == DetectorKind::jcd_deep) {
      const int rounds = spec.detector == DetectorKind::jcd_deep ? cfg.R : 1;
      const JcdResult jr = jcd_run(obs, xp, priors, cs.clustering, sigma2[s], cons, opt, rounds);
      for (int r = 0; r < rounds; ++r) {
        count_block(res[s][r], jr.rounds[r].decisions);
        res[s][r].clamps += jr.rounds[r].clamps;
      }
    } else {
      // Linear receivers use the pilot-only estimate as if it were exact.
      ChannelSet est = cs;
      for (int l = 0; l < cfg.L; ++l) {
        const auto& d = cs.clustering.serve_sets[l];
        CMat xpl(static_cast<Eigen::Index>(d.size()), tp);
        for (std::size_t j = 0; j < d.size(); ++j) xpl.row(static_cast<Eigen::Index>(j)) = xp.row(d[j]);
        const CMat hhat = lmmse_pilot_estimate(obs.pilots[l], xpl, priors[l], sigma2[s]).h_matrix();
        est.H.middleRows(static_cast<Eigen::Index>(l) * cfg.N, cfg.N).setZero();
        for (std::size_t j = 0; j < d.size(); ++j)
          est.H.block(static_cast<Eigen::Index>(l) * cfg.N, d[j], cfg.N, 1) = hhat.col(static_cast<Eigen::Index>(j));
      }
      Eigen::MatrixXi got(cfg.K, td);
      for (int n = 0; n < td; ++n) {
        CVec y(LN);
        for (int l = 0; l < cfg.L; ++l) y.segment(static_cast<Eigen::Index>(l) * cfg.N, cfg.N) = obs.data[l].col(n);
        DetectionOutput d;
        if (spec.detector == DetectorKind::centralized_mmse) d = centralized_mmse(est.H, y, sigma2[s], cons.energy(), cons);
        else if (spec.detector == DetectorKind::distributed_mmse) d = distributed_mmse_avg(est, y, sigma2[s], cons);
        else d = local_mmse_decoding(local_estimates(est, y, sigma2[s], cons.energy()), est, cons);
        for (int k = 0; k < cfg.K; ++k) got(k, n) = d.x_hat[k];
      }
      count_block(res[s][0], got);
    }
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    for (auto& c : res[s]) c.seconds += dt / static_cast<double>(n_out);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sweep

/// Runs the sweep described by `spec`. Each SNR point runs spec.trials trials,
/// then keeps extending in blocks of spec.trials until it has collected
/// spec.min_bit_errors bit errors in every output or reaches the trial cap.
inline std::vector<ResultRecord> run_sweep(const RunSpec& spec) {
  spec.validate();
  const SystemConfig& cfg = spec.cfg;
  const Constellation cons(cfg.M);
  const std::size_t P = cfg.snr_grid.size();
  const int n_out = outputs_per_point(spec);
  std::vector<double> sigma2(P);
  for (std::size_t s = 0; s < P; ++s) sigma2[s] = noise_variance(cfg, cfg.snr_grid[s], cons.energy());

  // Global LSFD calibration for i.i.d. channels; other models calibrate per drop.
  std::vector<std::optional<std::pair<LsfdWeights, LsfdCalibrator>>> lsfd(P);
  if (spec.detector == DetectorKind::lsfd && cfg.channel_model == ChannelModel::iid_rayleigh) {
    const ChannelSet cs0 = trial_channel(cfg, 0);
    for (std::size_t s = 0; s < P; ++s) lsfd[s] = calibrate_lsfd(cfg, cs0, sigma2[s], cons, 0xca11b000ULL + s, true);
  }

  std::vector<std::vector<ErrorCounts>> total(P, std::vector<ErrorCounts>(static_cast<std::size_t>(n_out)));
  std::vector<long long> done(P, 0);
  std::vector<char> active(P, 1);
  const long long cap = spec.trial_cap();
  long long next = 0;
  while (std::any_of(active.begin(), active.end(), [](char a) { return a != 0; })) {
    const long long chunk = std::min(spec.trials, cap - next);
    std::vector<std::size_t> slots;
    std::vector<double> s2;
    std::vector<std::optional<std::pair<LsfdWeights, LsfdCalibrator>>> cal;
    for (std::size_t s = 0; s < P; ++s)
      if (active[s]) {
        slots.push_back(s);
        s2.push_back(sigma2[s]);
        cal.push_back(lsfd[s]);
      }

    std::vector<std::vector<std::vector<ErrorCounts>>> per_trial(static_cast<std::size_t>(chunk));
    const int workers = static_cast<int>(std::min<long long>(spec.threads, chunk));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    auto work = [&](int w) {
      try {
        for (long long i = w; i < chunk; i += workers)
          per_trial[static_cast<std::size_t>(i)] = run_trial(spec, cons, static_cast<std::uint64_t>(next + i), s2, cal);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    };
    if (workers <= 1) work(0);
    else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    for (const auto& tr : per_trial)
      for (std::size_t j = 0; j < slots.size(); ++j)
        for (int o = 0; o < n_out; ++o) total[slots[j]][o].merge(tr[j][o]);
    next += chunk;
    for (std::size_t s : slots) {
      done[s] = next;
      long long min_err = total[s][0].bit_errors;
      for (int o = 1; o < n_out; ++o) min_err = std::min(min_err, total[s][o].bit_errors);
      if (next >= cap || min_err >= spec.min_bit_errors) active[s] = 0;
    }
  }

  // Fronthaul per coherence block, evaluated on the clustering of trial 0.
  const ChannelSet cs0 = trial_channel(cfg, 0);
  const bool clustered = cfg.clustering == ClusteringMode::dcc;
  const FronthaulCount fh = count_fronthaul(cfg, fronthaul_row(spec.detector), cfg.T, clustered ? &cs0.clustering : nullptr);

  std::vector<ResultRecord> out;
  for (std::size_t s = 0; s < P; ++s) {
    for (int o = 0; o < n_out; ++o) {
      const ErrorCounts& c = total[s][o];
      ResultRecord r;
      r.snr_db = cfg.snr_grid[s];
      r.detector = output_tag(spec, o);
      r.trials = done[s];
      r.symbols = c.symbols;
      r.bit_errors = c.bit_errors;
      r.symbol_errors = c.symbol_errors;
      r.ber = c.symbols ? static_cast<double>(c.bit_errors) / (static_cast<double>(c.symbols) * cons.bits_per_symbol()) : 0.0;
      r.ser = c.symbols ? static_cast<double>(c.symbol_errors) / static_cast<double>(c.symbols) : 0.0;
      r.fronthaul = spec.detector == DetectorKind::jcd_deep ? fh.total() * (o + 1) : fh.total();
      r.clamps = c.clamps;
      r.wall_time_s = spec.timing ? c.seconds : 0.0;
      r.seed = cfg.seed;
      for (double v : c.v_ext_sum) r.v_ext_trace.push_back(v / static_cast<double>(std::max<long long>(c.v_ext_n, 1)));
      out.push_back(std::move(r));
    }
    if (spec.se_predict) {
      SeModel model;
      if (cfg.channel_model == ChannelModel::iid_rayleigh) {
        model = SeModel::iid(cfg.L, cfg.N, cfg.K, cfg.mean_power());
        for (int l = 0; l < cfg.L; ++l) model.users_per_ap[l] = static_cast<int>(cs0.clustering.serve_sets[l].size());
      } else {
        std::vector<RVec> spectra;
        for (int l = 0; l < cfg.L; ++l) {
          const CMat h = cs0.served_block(l);
          Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h.adjoint() * h), Eigen::EigenvaluesOnly);
          spectra.push_back(es.eigenvalues().cwiseMax(0.0));
        }
        model = SeModel::empirical(std::move(spectra));
      }
      const SeTrace tr = run_se(model, sigma2[s], cons, cfg.T);
      ResultRecord r;
      r.snr_db = cfg.snr_grid[s];
      r.detector = "se";
      r.ber = tr.ber.back();
      r.ser = tr.ser.back();
      r.clamps = tr.clamps;
      r.seed = cfg.seed;
      r.v_ext_trace = tr.v_ext;
      out.push_back(std::move(r));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ResultRecord& a, const ResultRecord& b) {
    return a.snr_db != b.snr_db ? a.snr_db < b.snr_db : a.detector < b.detector;
  });
  return out;
}

/// Description of the sweep conventions, written alongside JSON output.
inline nlohmann::json sweep_metadata(const RunSpec& spec) {
  const SystemConfig& c = spec.cfg;
  nlohmann::json m;
  m["detector"] = to_string(spec.detector);
  m["csi"] = to_string(spec.csi);
  m["channel_model"] = to_string(c.channel_model);
  m["clustering"] = to_string(c.clustering);
  m["snr_definition"] = c.channel_model == ChannelModel::urban_3gpp
                            ? "median over users of p_k * mean_l(beta_kl) * E_x / sigma2"
                            : "mean(p) * E_x / sigma2";
  m["tau_c"] = c.tau_c;
  m["tau_p"] = c.tau_p;
  m["T"] = c.T;
  m["R"] = c.R;
  m["M"] = c.M;
  m["trials"] = spec.trials;
  m["max_trials"] = spec.trial_cap();
  m["min_bit_errors"] = spec.min_bit_errors;
  m["scenario"] = to_scenario_text(c);
  return m;
}

/// SNR at which a BER curve crosses `target`, by linear interpolation of
/// log10(BER) between grid points. Returns nullopt if the curve never crosses.
inline std::optional<double> snr_at_ber(const std::vector<double>& snr, const std::vector<double>& ber, double target) {
  for (std::size_t i = 0; i + 1 < snr.size(); ++i) {
    const double a = ber[i], b = ber[i + 1];
    if (a >= target && b <= target && a > 0.0) {
      if (b <= 0.0) return snr[i + 1];
      const double la = std::log10(a), lb = std::log10(b), lt = std::log10(target);
      if (la == lb) return snr[i];
      return snr[i] + (snr[i + 1] - snr[i]) * (la - lt) / (la - lb);
    }
  }
  return std::nullopt;
}

}  // namespace cfmimo
