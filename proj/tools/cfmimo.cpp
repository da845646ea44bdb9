// Command-line front end for BER sweeps.

#include "cfmimo/cfmimo.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo BER sweeps for distributed EP detection in cell-free massive MIMO"};
  std::string config_path, detector = "deep", snr, out_path, format = "csv", csi;
  long long trials = 1000, max_trials = 0, min_errors = 100;
  long long seed = -1;
  int jcd_rounds = 0, threads = 1;
  bool se = false, no_timing = false;

  app.add_option("--config", config_path, "scenario file (key = value)");
  app.add_option("--detector", detector, "deep | centralized_mmse | distributed_mmse | lsfd | jcd_deep | local_mmse");
  app.add_option("--snr", snr, "SNR grid in dB as start:step:stop");
  app.add_option("--trials", trials, "trials per SNR point");
  app.add_option("--max-trials", max_trials, "trial cap when extending to reach --min-errors (0: no extension)");
  app.add_option("--min-errors", min_errors, "bit errors to collect before stopping an SNR point");
  app.add_option("--seed", seed, "RNG seed (overrides the scenario)");
  app.add_option("--out", out_path, "output file (default: stdout)");
  app.add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--csi", csi, "perfect | estimated (default: estimated for jcd_deep)")->check(CLI::IsMember({"perfect", "estimated"}));
  app.add_option("--jcd-rounds", jcd_rounds, "JCD rounds R (overrides the scenario)");
  app.add_option("--threads", threads, "worker threads");
  app.add_flag("--se", se, "also emit the state-evolution prediction");
  app.add_flag("--no-timing", no_timing, "write wall_time_s = 0 so repeated runs are byte-identical");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    cfmimo::RunSpec spec;
    if (!config_path.empty()) spec.cfg = cfmimo::load_scenario(config_path);
    if (!snr.empty()) spec.cfg.snr_grid = cfmimo::parse_snr_range(snr);
    if (seed >= 0) spec.cfg.seed = static_cast<std::uint64_t>(seed);
    if (jcd_rounds > 0) spec.cfg.R = jcd_rounds;
    spec.detector = cfmimo::parse_detector(detector);
    spec.csi = csi.empty() ? (spec.detector == cfmimo::DetectorKind::jcd_deep ? cfmimo::CsiMode::estimated : cfmimo::CsiMode::perfect)
                           : (csi == "perfect" ? cfmimo::CsiMode::perfect : cfmimo::CsiMode::estimated);
    spec.trials = trials;
    spec.max_trials = max_trials;
    spec.min_bit_errors = min_errors;
    spec.threads = threads;
    spec.se_predict = se;
    spec.timing = !no_timing;

    const auto records = cfmimo::run_sweep(spec);
    const auto fmt = format == "json" ? cfmimo::OutputFormat::json : cfmimo::OutputFormat::csv;
    if (out_path.empty()) {
      if (fmt == cfmimo::OutputFormat::csv) cfmimo::write_csv(std::cout, records);
      else cfmimo::write_json(std::cout, records, cfmimo::sweep_metadata(spec));
    } else {
      cfmimo::emit_results(records, out_path, fmt, cfmimo::sweep_metadata(spec));
    }
  } catch (const std::exception& e) {
    std::cerr << "cfmimo: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
