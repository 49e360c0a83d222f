#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "rsp/cli.hpp"

namespace {

using rsp::cli::ExperimentConfig;

void add_common(CLI::App* cmd, ExperimentConfig& cfg, std::string& out_path, std::string& csv_path) {
  cmd->add_option("--seed", cfg.seed, "64-bit master seed (default 0, always explicit)");
  cmd->add_option("--threads", cfg.threads, "worker threads; results are thread-count independent");
  cmd->add_option("--out", out_path, "result JSON path (stdout when omitted)");
  cmd->add_option("--csv", csv_path, "optional per-trial CSV path");
  cmd->add_flag("--dump-states", cfg.dump_states, "embed matrices/net data in the result");
  cmd->add_option("--calib", [&cfg](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto pos = kv.find('=');
          if (pos == std::string::npos) return false;
          cfg.calib[kv.substr(0, pos)] = std::stod(kv.substr(pos + 1));
        }
        return true;
      },
      "calibration override key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rspsim: simulation and verification toolkit for remote preparation of flat states"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string out_path, csv_path, replay_path;

  auto* kraus = app.add_subcommand("kraus", "build the measurement-operator protocol and estimate errors");
  kraus->add_option("--d", cfg.d)->required();
  kraus->add_option("--k", cfg.k)->required();
  kraus->add_option("--eps", cfg.eps, "average-error target for auto sizing");
  kraus->add_option("--n", cfg.n, "explicit unitary count (skips validation)");
  kraus->add_option("--trials", cfg.trials);
  kraus->add_option("--sweep", cfg.adversarial_sweep);

  auto* reject = app.add_subcommand("reject", "build the rejection-sampling protocol and estimate errors");
  reject->add_option("--d", cfg.d)->required();
  reject->add_option("--k", cfg.k)->required();
  reject->add_option("--eps", cfg.eps);
  reject->add_option("--r", cfg.r, "explicit ancilla dimension");
  reject->add_option("--n", cfg.n, "explicit round count");
  reject->add_option("--trials", cfg.trials);
  reject->add_option("--sweep", cfg.adversarial_sweep);

  auto* a2w = app.add_subcommand("avg2worst", "wrap the measurement-operator protocol for worst-case error");
  a2w->add_option("--d", cfg.d)->required();
  a2w->add_option("--k", cfg.k)->required();
  a2w->add_option("--eps", cfg.eps)->required();
  a2w->add_option("--delta", cfg.delta)->required();
  a2w->add_option("--n", cfg.n);
  a2w->add_option("--net-budget", cfg.net_budget);
  a2w->add_option("--net-radius", cfg.net_radius, "defaults to delta/4");
  a2w->add_option("--trials", cfg.trials);
  a2w->add_option("--sweep", cfg.adversarial_sweep);

  auto* eq = app.add_subcommand("eq", "entanglement-assisted equality protocol experiment");
  eq->add_option("--n-bits", cfg.n_bits)->required();
  eq->add_option("--eps", cfg.eps)->required();
  eq->add_option("--d", cfg.d, "0 = auto ceil(sqrt(n)/eps^1.5)");
  eq->add_option("--k", cfg.k, "0 = auto ceil(eps*d/2)");
  eq->add_option("--sample-m", cfg.sample_m)->required();
  eq->add_option("--pairs", cfg.pairs);
  eq->add_option("--n", cfg.n, "explicit RSP unitary count");
  eq->add_option("--overlap-budget", cfg.overlap_budget, "codebook validation threshold (0 = eps/2)");

  auto* vsdp = app.add_subcommand("verify-sdp", "closed form vs oracle for the projector-overlap program");
  vsdp->add_option("--d", cfg.d, "max dimension (cases cycle 2..d)");
  vsdp->add_option("--cases", cfg.cases);
  vsdp->add_option("--restarts", cfg.restarts);
  vsdp->add_option("--grid", cfg.grid);

  auto* vmaj = app.add_subcommand("verify-majorize", "finite-prior majorization check");
  vmaj->add_option("--proto", cfg.proto, "kraus | reject")->required();
  vmaj->add_option("--d", cfg.d)->required();
  vmaj->add_option("--k", cfg.k)->required();
  vmaj->add_option("--eps", cfg.eps);
  vmaj->add_option("--r", cfg.r);
  vmaj->add_option("--n", cfg.n);
  vmaj->add_option("--prior", cfg.prior_size);

  auto* vdec = app.add_subcommand("verify-decouple", "plain and post-selected decoupling experiment");
  vdec->add_option("--d1", cfg.d1);
  vdec->add_option("--d2", cfg.d2);
  vdec->add_option("--k", cfg.k);
  vdec->add_option("--trials", cfg.trials);
  vdec->add_option("--state", cfg.kind, "maxmixed | pure | mixed");

  auto* vcon = app.add_subcommand("verify-concentration", "tail table for Haar functionals");
  vcon->add_option("--d", cfg.d)->required();
  vcon->add_option("--k", cfg.k)->required();
  vcon->add_option("--kind", cfg.kind, "trace | spectral");
  vcon->add_option("--trials", cfg.trials);
  vcon->add_option("--rb", cfg.rb);
  vcon->add_option("--l", cfg.prefix_l);

  auto* veig = app.add_subcommand("verify-eigval", "eigenvalue-sum bound audit");
  veig->add_option("--d", cfg.d)->required();
  veig->add_option("--k", cfg.k)->required();
  veig->add_option("--points", cfg.cases);
  veig->add_option("--rb", cfg.rb);
  veig->add_option("--l", cfg.prefix_l);
  veig->add_option("--density-k", cfg.density_k);

  auto* audit = app.add_subcommand("audit", "communication and entanglement lower-bound audits");
  audit->add_option("--proto", cfg.proto, "kraus | reject | synthetic")->required();
  audit->add_option("--d", cfg.d)->required();
  audit->add_option("--k", cfg.k)->required();
  audit->add_option("--eps", cfg.eps);
  audit->add_option("--r", cfg.r);
  audit->add_option("--n", cfg.n);
  audit->add_option("--trials", cfg.trials);
  audit->add_option("--gamma", cfg.gamma);
  audit->add_option("--m", cfg.m_synthetic, "synthetic report: message bits");
  audit->add_option("--eps-r", cfg.eps_r_synthetic, "synthetic report: relaxed error");

  auto* rep = app.add_subcommand("replay", "re-execute a result file and compare bit-exactly");
  rep->add_option("file", replay_path)->required();
  int replay_threads = 1;
  rep->add_option("--threads", replay_threads);

  for (auto* cmd : {kraus, reject, a2w, eq, vsdp, vmaj, vdec, vcon, veig, audit})
    add_common(cmd, cfg, out_path, csv_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rsp::cli::kUsage;
  }

  if (rep->parsed()) return rsp::cli::replay(replay_path, replay_threads);

  for (auto* cmd : {kraus, reject, a2w, eq, vsdp, vmaj, vdec, vcon, veig, audit}) {
    if (cmd->parsed()) {
      cfg.command = cmd->get_name();
      try {
        return rsp::cli::run_to_file(cfg, out_path, csv_path);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rsp::cli::kError;
      }
    }
  }
  return rsp::cli::kUsage;
}
