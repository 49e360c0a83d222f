#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rsp/report.hpp"

namespace rsp::cli {

using report::json;

/// Exit codes shared by the command line tool and the library entry
/// points.
enum Status : int {
  kOk = 0,
  kError = 1,
  kAuditFailed = 2,
  kReplayMismatch = 3,
  kUsage = 64,
  kSchemaMismatch = 65,
};

/// One experiment invocation. Fields not used by a command are ignored
/// but always echoed, so a config round-trips losslessly through the
/// result document.
struct ExperimentConfig {
  std::string command;

  int d = 0, k = 0;
  int d1 = 0, d2 = 0;
  int r = 0, n = 0;
  int trials = 0;
  int adversarial_sweep = 0;
  int sample_m = 0;
  int n_bits = 0;
  int cases = 0;
  int restarts = 50;
  int pairs = 0;
  int net_budget = 0;
  int prior_size = 0;
  int prefix_l = 1;
  int rb = 2;
  int grid = 10000;

  double eps = 0.0;
  double delta = 0.0;
  double gamma = 0.5;
  double net_radius = 0.0;
  double overlap_budget = 0.0;
  double density_k = 1.0;
  double eps_r_synthetic = -1.0;
  int m_synthetic = -1;

  std::string proto;  // kraus | reject | synthetic
  std::string kind;   // trace | spectral ; decouple state kind: maxmixed | pure | mixed

  std::uint64_t seed = 0;
  int threads = 1;
  bool dump_states = false;
  std::map<std::string, double> calib;

  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  Calibration calibration() const;
};

struct RunResult {
  int status = kOk;
  json document;
};

/// Executes the configured experiment and builds the result document
/// {schema_version, command, config_echo, seed, metrics, audits,
/// calibration, wall_time_ms}. Deterministic given (config, seed) up to
/// wall_time_ms for any thread count.
RunResult run(const ExperimentConfig& cfg);

/// Runs and persists the document (and optional per-trial CSV).
int run_to_file(const ExperimentConfig& cfg, const std::string& out_path,
                const std::string& csv_path = "");

/// Re-executes a persisted result from its config echo and compares the
/// metrics and audits subtrees bit-exactly.
int replay(const std::string& result_path, int threads);

}  // namespace rsp::cli
