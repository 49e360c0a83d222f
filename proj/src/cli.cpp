#include "rsp/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include "rsp/entropy.hpp"
#include "rsp/grassmann.hpp"
#include "rsp/parallel.hpp"

namespace rsp::cli {

namespace {

using protocols::Codebook;
using protocols::ErrorEstimate;
using protocols::KrausProtocol;
using protocols::RejectionProtocol;
using protocols::RspProtocol;
using qcore::FlatInput;
using qcore::Matrix;
using qcore::Spectrum;
using report::ResourceReport;

struct CommandOutput {
  json metrics;
  json audits = json::array();
  bool audit_failed = false;
  bool has_estimate = false;  // estimate_storage holds per-trial data for CSV
  ErrorEstimate estimate_storage;
  json extra;  // merged into the document root (e.g. dumped states)
};

ResourceReport make_resource_report(const RspProtocol& proto, ErrorEstimate est) {
  ResourceReport rep;
  rep.d = proto.d();
  rep.k = proto.k();
  rep.m_bits = proto.message_bits();
  rep.ebits = proto.ebits();
  rep.shared_spectrum = proto.shared_state_spectrum();
  rep.estimate = std::move(est);
  return rep;
}

CommandOutput cmd_kraus(const ExperimentConfig& cfg, const Calibration& cal) {
  KrausProtocol::Params params;
  params.d = cfg.d;
  params.k = cfg.k;
  params.eps_a = cfg.eps;
  params.n_override = cfg.n;
  params.seed = cfg.seed;
  params.validate = cfg.n == 0;
  const KrausProtocol proto = KrausProtocol::build(params, cal, cfg.threads);
  const int trials = cfg.trials > 0 ? cfg.trials : 100;
  ErrorEstimate est = protocols::estimate_errors(proto, trials, SeedStream::child(cfg.seed, 1).bits(),
                                                 cfg.adversarial_sweep, cfg.threads);
  CommandOutput out;
  out.estimate_storage = est;
  out.has_estimate = true;
  ResourceReport rep = make_resource_report(proto, std::move(est));
  out.metrics = report::resource_report_json(rep);
  out.metrics["n_unitaries"] = proto.n_unitaries();
  return out;
}

CommandOutput cmd_reject(const ExperimentConfig& cfg, const Calibration& cal) {
  RejectionProtocol::Params params;
  params.d = cfg.d;
  params.k = cfg.k;
  params.eps_a = cfg.eps;
  params.r_override = cfg.r;
  params.n_override = cfg.n;
  params.seed = cfg.seed;
  const RejectionProtocol proto = RejectionProtocol::build(params, cal);
  const int trials = cfg.trials > 0 ? cfg.trials : 50;
  ErrorEstimate est = protocols::estimate_errors(proto, trials, SeedStream::child(cfg.seed, 1).bits(),
                                                 cfg.adversarial_sweep, cfg.threads);
  CommandOutput out;
  out.estimate_storage = est;
  out.has_estimate = true;
  ResourceReport rep = make_resource_report(proto, std::move(est));
  out.metrics = report::resource_report_json(rep);
  out.metrics["r"] = proto.r();
  out.metrics["n_rounds"] = proto.n_rounds();
  return out;
}

CommandOutput cmd_avg2worst(const ExperimentConfig& cfg, const Calibration& cal) {
  KrausProtocol::Params params;
  params.d = cfg.d;
  params.k = cfg.k;
  params.eps_a = cfg.eps;
  params.n_override = cfg.n;
  params.seed = cfg.seed;
  params.validate = cfg.n == 0;
  auto base = std::make_shared<const KrausProtocol>(KrausProtocol::build(params, cal, cfg.threads));

  const double radius = cfg.net_radius > 0.0 ? cfg.net_radius : cfg.delta / 4.0;
  const int budget = cfg.net_budget > 0 ? cfg.net_budget : 500;
  SeedStream net_rng = SeedStream::child(cfg.seed, 2);
  grassmann::RandomNet net = grassmann::build_random_net(cfg.d, cfg.k, radius, budget, net_rng);
  SeedStream cov_rng = SeedStream::child(cfg.seed, 3);
  const double coverage = grassmann::net_coverage(net, 200, cov_rng);

  json net_points;
  if (cfg.dump_states) {
    net_points = json::array();
    for (const auto& point : net.points) net_points.push_back(report::matrix_json(point.projector));
  }

  auto wrapped = protocols::WorstCaseProtocol::wrap(base, cfg.delta, std::move(net),
                                                    SeedStream::child(cfg.seed, 4).bits(), cal,
                                                    cfg.threads);
  const int trials = cfg.trials > 0 ? cfg.trials : 50;
  ErrorEstimate est = protocols::estimate_errors(*wrapped, trials, SeedStream::child(cfg.seed, 5).bits(),
                                                 cfg.adversarial_sweep, cfg.threads);
  CommandOutput out;
  out.estimate_storage = est;
  out.has_estimate = true;
  ResourceReport rep = make_resource_report(*wrapped, std::move(est));
  out.metrics = report::resource_report_json(rep);
  out.metrics["net_coverage"] = coverage;
  out.metrics["net_budget"] = budget;
  out.metrics["net_radius"] = radius;
  out.metrics["base_m_bits"] = base->message_bits();
  const auto* w = dynamic_cast<const protocols::WorstCaseProtocol*>(wrapped.get());
  out.metrics["n_rotations"] = w ? w->n_rotations() : 0;
  if (cfg.dump_states) {
    const auto* wc = dynamic_cast<const protocols::WorstCaseProtocol*>(wrapped.get());
    json errs = json::array();
    if (wc)
      for (const auto& e : wc->net_errors()) errs.push_back(e);
    out.extra["net"] = json{{"target_radius", radius},
                            {"budget", budget},
                            {"points", std::move(net_points)},
                            {"base_errors", std::move(errs)}};
  }
  return out;
}

CommandOutput cmd_eq(const ExperimentConfig& cfg, const Calibration& cal) {
  const int pairs = cfg.pairs > 0 ? cfg.pairs : 500;
  Codebook cb = protocols::build_codebook(cfg.n_bits, cfg.eps, cfg.d, cfg.k,
                                          SeedStream::child(cfg.seed, 1).bits(), cfg.sample_m,
                                          cfg.overlap_budget, cal, cfg.threads);
  KrausProtocol::Params params;
  params.d = cb.d;
  params.k = cb.k;
  params.eps_a = cfg.eps;
  params.n_override = cfg.n;
  params.seed = SeedStream::child(cfg.seed, 2).bits();
  params.validate = false;  // hardened below by the exact codebook sweep
  const KrausProtocol proto = KrausProtocol::build(params, cal, cfg.threads);

  // worst-case validation over the protocol's actual input family: the
  // exact per-input error for every codeword
  const std::vector<double> norms = proto.batch_m_norms(cb.points, cfg.threads);
  double eps_w_codebook = 0.0;
  for (double nm : norms)
    eps_w_codebook = std::max(eps_w_codebook, proto.stats_given_norm(nm).err);

  SeedStream pair_rng = SeedStream::child(cfg.seed, 3);
  const auto count = static_cast<std::uint32_t>(cb.points.size());
  double max_accept_neq = 0.0, mean_accept_neq = 0.0, max_reject_eq = 0.0;
  int neq_over_eps = 0;
  std::unordered_map<std::uint32_t, protocols::OutcomeEnsemble> cache;
  auto ensemble_for = [&](std::uint32_t x) -> const protocols::OutcomeEnsemble& {
    auto it = cache.find(x);
    if (it == cache.end()) it = cache.emplace(x, proto.ensemble_given_norm(cb.points[x], norms[x])).first;
    return it->second;
  };
  for (int t = 0; t < pairs; ++t) {
    auto x = static_cast<std::uint32_t>(pair_rng.below(count));
    auto y = static_cast<std::uint32_t>(pair_rng.below(count));
    if (y == x) y = (y + 1) % count;
    const auto res = protocols::run_equality(cb, proto, x, y, pair_rng, &ensemble_for(x));
    max_accept_neq = std::max(max_accept_neq, res.accept_prob);
    mean_accept_neq += res.accept_prob / pairs;
    if (res.accept_prob > cfg.eps) ++neq_over_eps;
    const auto res_eq = protocols::run_equality(cb, proto, x, x, pair_rng, &ensemble_for(x));
    max_reject_eq = std::max(max_reject_eq, 1.0 - res_eq.accept_prob);
  }

  CommandOutput out;
  out.metrics = json{{"d", cb.d},
                     {"k", cb.k},
                     {"sample_m", cb.sample_m},
                     {"codebook_size", cb.points.size()},
                     {"max_overlap", cb.max_overlap},
                     {"overlap_budget", cb.overlap_budget},
                     {"all_pairs_checked", cb.all_pairs_checked},
                     {"n_unitaries", proto.n_unitaries()},
                     {"rsp_m_bits", proto.message_bits()},
                     {"communication_bits", proto.message_bits()},
                     {"ebits", proto.ebits()},
                     {"eps_w_codebook", eps_w_codebook},
                     {"pairs", pairs},
                     {"max_accept_neq", max_accept_neq},
                     {"mean_accept_neq", mean_accept_neq},
                     {"neq_accept_over_eps", neq_over_eps},
                     {"max_reject_eq", max_reject_eq}};
  return out;
}

CommandOutput cmd_verify_sdp(const ExperimentConfig& cfg, const Calibration& cal) {
  (void)cal;
  const int cases = cfg.cases > 0 ? cfg.cases : 200;
  const int dmax = cfg.d > 1 ? cfg.d : 6;
  struct CaseOut {
    double closed, oracle, bloch = -1.0;
  };
  std::vector<CaseOut> rows(cases);
  parallel_for(cases, cfg.threads, [&](std::size_t t) {
    SeedStream s = SeedStream::child(cfg.seed, t);
    const int d = 2 + static_cast<int>(s.below(dmax - 1));
    const int kp = 1 + static_cast<int>(s.below(std::max(1, d - 1)));
    const int kq = 1 + static_cast<int>(s.below(std::max(1, d - 1)));
    const Matrix p = qcore::sample_flat(d, kp, s).projector;
    const Matrix q = qcore::sample_flat(d, kq, s).projector;
    const double tt = 0.05 + 0.9 * s.uniform();
    rows[t].closed = verify::sdp_closed_form(p, q, tt);
    rows[t].oracle = verify::sdp_oracle(p, q, tt, cfg.restarts, s);
    if (d == 2) rows[t].bloch = verify::sdp_bloch_brute_force(p, q, tt, cfg.grid);
  });
  double worst_overshoot = -1.0, worst_undershoot = -1.0, worst_bloch_gap = 0.0;
  json cases_json = json::array();
  for (const auto& r : rows) {
    worst_overshoot = std::max(worst_overshoot, r.oracle - r.closed);
    worst_undershoot = std::max(worst_undershoot, r.closed - r.oracle);
    if (r.bloch >= 0.0) worst_bloch_gap = std::max(worst_bloch_gap, std::abs(r.bloch - r.closed));
    // feasibility margin: the oracle only reports values attained by
    // feasible states, so closed - oracle stays above -tolerance
    json rec{{"closed", r.closed}, {"oracle", r.oracle}, {"margin", r.closed - r.oracle}};
    if (r.bloch >= 0.0) rec["bloch"] = r.bloch;
    cases_json.push_back(std::move(rec));
  }
  verify::AuditReport feasibility;
  feasibility.name = "sdp_oracle_feasible";
  feasibility.lhs = worst_overshoot;
  feasibility.rhs = 0.0;
  feasibility.finish(1e-9);
  verify::AuditReport completeness;
  completeness.name = "sdp_oracle_reaches_optimum";
  completeness.lhs = worst_undershoot;
  completeness.rhs = 0.0;
  completeness.finish(1e-4);
  verify::AuditReport bloch;
  bloch.name = "sdp_bloch_agreement";
  bloch.lhs = worst_bloch_gap;
  bloch.rhs = 0.0;
  bloch.finish(1e-4);

  CommandOutput out;
  out.metrics = json{{"cases", cases},
                     {"restarts", cfg.restarts},
                     {"worst_overshoot", worst_overshoot},
                     {"worst_undershoot", worst_undershoot},
                     {"worst_bloch_gap", worst_bloch_gap},
                     {"case_records", std::move(cases_json)}};
  out.audits = json::array({report::audit_json(feasibility), report::audit_json(completeness),
                            report::audit_json(bloch)});
  out.audit_failed = !(feasibility.pass && completeness.pass && bloch.pass);
  return out;
}

std::shared_ptr<const RspProtocol> build_named_protocol(const ExperimentConfig& cfg,
                                                        const Calibration& cal) {
  if (cfg.proto == "kraus" || cfg.proto.empty()) {
    KrausProtocol::Params params;
    params.d = cfg.d;
    params.k = cfg.k;
    params.eps_a = cfg.eps > 0 ? cfg.eps : 0.25;
    params.n_override = cfg.n;
    params.seed = cfg.seed;
    params.validate = cfg.n == 0;
    return std::make_shared<const KrausProtocol>(KrausProtocol::build(params, cal, cfg.threads));
  }
  if (cfg.proto == "reject") {
    RejectionProtocol::Params params;
    params.d = cfg.d;
    params.k = cfg.k;
    params.eps_a = cfg.eps > 0 ? cfg.eps : 0.25;
    params.r_override = cfg.r;
    params.n_override = cfg.n;
    params.seed = cfg.seed;
    return std::make_shared<const RejectionProtocol>(RejectionProtocol::build(params, cal));
  }
  throw DomainError("unknown protocol: " + cfg.proto);
}

CommandOutput cmd_verify_majorize(const ExperimentConfig& cfg, const Calibration& cal) {
  auto proto = build_named_protocol(cfg, cal);
  const int prior_size = cfg.prior_size > 0 ? cfg.prior_size : 16;
  std::vector<FlatInput> prior(prior_size);
  for (int i = 0; i < prior_size; ++i) {
    SeedStream s = SeedStream::child(cfg.seed, 100 + i);
    prior[i] = qcore::sample_flat(cfg.d, cfg.k, s);
  }
  verify::AuditReport audit = verify::check_majorization_bound(*proto, prior);
  CommandOutput out;
  out.metrics = json{{"min_slack", audit.margin}, {"prior_size", prior_size},
                     {"messages", audit.parameters["messages"]}};
  out.audits.push_back(report::audit_json(audit));
  out.audit_failed = !audit.pass;
  return out;
}

CommandOutput cmd_verify_decouple(const ExperimentConfig& cfg, const Calibration& cal) {
  const int d1 = cfg.d1 > 0 ? cfg.d1 : 8;
  const int d2 = cfg.d2 > 0 ? cfg.d2 : 8;
  const int k = cfg.k > 0 ? cfg.k : 2;
  const int trials = cfg.trials > 0 ? cfg.trials : 200;
  const int dim = d1 * d2;
  Matrix rho;
  if (cfg.kind == "pure") {
    SeedStream s = SeedStream::child(cfg.seed, 7);
    qcore::Vector psi(dim);
    for (int i = 0; i < dim; ++i) psi(i) = qcore::Cplx(s.gaussian(), s.gaussian());
    psi.normalize();
    rho = psi * psi.adjoint();
  } else if (cfg.kind == "mixed") {
    SeedStream s = SeedStream::child(cfg.seed, 7);
    Matrix g(dim, dim);
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i < dim; ++i) g(i, j) = qcore::Cplx(s.gaussian(), s.gaussian());
    rho = g * g.adjoint();
    rho /= rho.trace().real();
  } else {
    rho = Matrix::Identity(dim, dim) / dim;
  }
  const qcore::DensityMatrix state(qcore::Operator(rho, {d1, d2, 1}));
  const auto rep = verify::decoupling_experiment(d1, d2, k, state, 1, trials,
                                                 SeedStream::child(cfg.seed, 8).bits(), cfg.threads);

  verify::AuditReport plain;
  plain.name = "plain_decoupling_2norm";
  plain.lhs = rep.plain_lhs2;
  plain.rhs = rep.plain_rhs2 + 3.0 * rep.plain_lhs2_stderr;
  plain.trials = trials;
  plain.finish(1e-12);
  verify::AuditReport post;
  post.name = "post_selected_ratio";
  post.lhs = rep.post_ratio;
  post.rhs = cal.decouple_c_total;
  post.trials = trials;
  post.finish(1e-12);

  CommandOutput out;
  out.metrics = report::decoupling_json(rep);
  out.metrics["state_kind"] = cfg.kind.empty() ? "maxmixed" : cfg.kind;
  out.audits.push_back(report::audit_json(plain));
  out.audits.push_back(report::audit_json(post));
  out.audit_failed = !(plain.pass && post.pass);
  return out;
}

CommandOutput cmd_verify_concentration(const ExperimentConfig& cfg, const Calibration& cal) {
  (void)cal;
  const auto kind = cfg.kind == "spectral" ? verify::ConcentrationKind::SpectralFunctional
                                           : verify::ConcentrationKind::TraceFunctional;
  const int trials = cfg.trials > 0 ? cfg.trials : 2000;
  const auto table = verify::concentration_experiment(cfg.d, cfg.k, kind, trials, cfg.seed,
                                                      cfg.threads, cfg.rb, cfg.prefix_l);
  verify::AuditReport audit;
  audit.name = "concentration";
  audit.lhs = table.mean_within_3sigma && table.tails_monotone ? 0.0 : 1.0;
  audit.rhs = 0.0;
  audit.trials = trials;
  audit.finish(1e-12);
  CommandOutput out;
  out.metrics = report::tail_table_json(table);
  out.metrics["kind"] = cfg.kind.empty() ? "trace" : cfg.kind;
  out.audits.push_back(report::audit_json(audit));
  out.audit_failed = !audit.pass;
  return out;
}

CommandOutput cmd_verify_eigval(const ExperimentConfig& cfg, const Calibration& cal) {
  const int points = cfg.cases > 0 ? cfg.cases : 64;
  const int rb = cfg.rb > 0 ? cfg.rb : 2;
  std::vector<verify::WeightedState> family;
  family.reserve(points);
  for (int i = 0; i < points; ++i) {
    SeedStream s = SeedStream::child(cfg.seed, i);
    FlatInput p = qcore::sample_flat(cfg.d, cfg.k, s);
    Matrix omega = qcore::kron_identity_left(rb, p.projector) / (static_cast<double>(rb) * cfg.k);
    family.push_back({1.0 / points, std::move(p),
                      qcore::DensityMatrix(qcore::Operator(std::move(omega), {rb, cfg.d}))});
  }
  const auto audit =
      verify::check_eigval_bound(family, cfg.density_k, cfg.prefix_l, cal.eigval_a);
  CommandOutput out;
  out.metrics = json{{"points", points}, {"rb", rb}, {"l", cfg.prefix_l},
                     {"K", cfg.density_k}, {"lhs", audit.lhs}, {"rhs", audit.rhs}};
  out.audits.push_back(report::audit_json(audit));
  out.audit_failed = !audit.pass;
  return out;
}

CommandOutput cmd_audit(const ExperimentConfig& cfg, const Calibration& cal) {
  CommandOutput out;
  std::pair<verify::AuditReport, verify::AuditReport> audits;
  if (cfg.proto == "synthetic") {
    if (cfg.m_synthetic < 0 || cfg.eps_r_synthetic < 0.0)
      throw DomainError("synthetic audit needs --m and --eps-r");
    audits = verify::audit_resource_bounds(cfg.d, cfg.k, cfg.m_synthetic,
                                           Spectrum::uniform(cfg.d), cfg.eps_r_synthetic,
                                           cfg.gamma, cal.eigval_a, cal.entropy_slack);
    out.metrics = json{{"synthetic", true}, {"m_bits", cfg.m_synthetic},
                       {"eps_r", cfg.eps_r_synthetic}};
  } else {
    auto proto = build_named_protocol(cfg, cal);
    const int trials = cfg.trials > 0 ? cfg.trials : 50;
    ErrorEstimate est = protocols::estimate_errors(*proto, trials,
                                                   SeedStream::child(cfg.seed, 1).bits(),
                                                   cfg.adversarial_sweep, cfg.threads);
    ResourceReport rep = make_resource_report(*proto, est);
    audits = report::audit_resource_report(rep, cfg.gamma, cal.eigval_a, cal.entropy_slack);
    out.metrics = report::resource_report_json(rep);
    out.estimate_storage = std::move(est);
    out.has_estimate = true;
  }
  out.audits.push_back(report::audit_json(audits.first));
  out.audits.push_back(report::audit_json(audits.second));
  out.audit_failed = !(audits.first.pass && audits.second.pass);
  return out;
}

CommandOutput dispatch(const ExperimentConfig& cfg, const Calibration& cal) {
  if (cfg.command == "kraus") return cmd_kraus(cfg, cal);
  if (cfg.command == "reject") return cmd_reject(cfg, cal);
  if (cfg.command == "avg2worst") return cmd_avg2worst(cfg, cal);
  if (cfg.command == "eq") return cmd_eq(cfg, cal);
  if (cfg.command == "verify-sdp") return cmd_verify_sdp(cfg, cal);
  if (cfg.command == "verify-majorize") return cmd_verify_majorize(cfg, cal);
  if (cfg.command == "verify-decouple") return cmd_verify_decouple(cfg, cal);
  if (cfg.command == "verify-concentration") return cmd_verify_concentration(cfg, cal);
  if (cfg.command == "verify-eigval") return cmd_verify_eigval(cfg, cal);
  if (cfg.command == "audit") return cmd_audit(cfg, cal);
  throw DomainError("unknown command: " + cfg.command);
}

}  // namespace

json ExperimentConfig::to_json() const {
  return json{{"command", command},
              {"d", d},
              {"k", k},
              {"d1", d1},
              {"d2", d2},
              {"r", r},
              {"n", n},
              {"trials", trials},
              {"adversarial_sweep", adversarial_sweep},
              {"sample_m", sample_m},
              {"n_bits", n_bits},
              {"cases", cases},
              {"restarts", restarts},
              {"pairs", pairs},
              {"net_budget", net_budget},
              {"prior_size", prior_size},
              {"prefix_l", prefix_l},
              {"rb", rb},
              {"grid", grid},
              {"eps", eps},
              {"delta", delta},
              {"gamma", gamma},
              {"net_radius", net_radius},
              {"overlap_budget", overlap_budget},
              {"density_k", density_k},
              {"eps_r_synthetic", eps_r_synthetic},
              {"m_synthetic", m_synthetic},
              {"proto", proto},
              {"kind", kind},
              {"seed", seed},
              {"dump_states", dump_states},
              {"calib", calib}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.command = j.at("command").get<std::string>();
  c.d = j.value("d", 0);
  c.k = j.value("k", 0);
  c.d1 = j.value("d1", 0);
  c.d2 = j.value("d2", 0);
  c.r = j.value("r", 0);
  c.n = j.value("n", 0);
  c.trials = j.value("trials", 0);
  c.adversarial_sweep = j.value("adversarial_sweep", 0);
  c.sample_m = j.value("sample_m", 0);
  c.n_bits = j.value("n_bits", 0);
  c.cases = j.value("cases", 0);
  c.restarts = j.value("restarts", 50);
  c.pairs = j.value("pairs", 0);
  c.net_budget = j.value("net_budget", 0);
  c.prior_size = j.value("prior_size", 0);
  c.prefix_l = j.value("prefix_l", 1);
  c.rb = j.value("rb", 2);
  c.grid = j.value("grid", 10000);
  c.eps = j.value("eps", 0.0);
  c.delta = j.value("delta", 0.0);
  c.gamma = j.value("gamma", 0.5);
  c.net_radius = j.value("net_radius", 0.0);
  c.overlap_budget = j.value("overlap_budget", 0.0);
  c.density_k = j.value("density_k", 1.0);
  c.eps_r_synthetic = j.value("eps_r_synthetic", -1.0);
  c.m_synthetic = j.value("m_synthetic", -1);
  c.proto = j.value("proto", std::string{});
  c.kind = j.value("kind", std::string{});
  c.seed = j.value("seed", std::uint64_t{0});
  c.dump_states = j.value("dump_states", false);
  c.calib = j.value("calib", std::map<std::string, double>{});
  return c;
}

Calibration ExperimentConfig::calibration() const {
  Calibration cal;
  for (const auto& [key, value] : calib) cal.set(key, value);
  return cal;
}

RunResult run(const ExperimentConfig& cfg) {
  RunResult result;
  const auto start = std::chrono::steady_clock::now();
  const Calibration cal = cfg.calibration();
  CommandOutput out;
  try {
    out = dispatch(cfg, cal);
  } catch (const DomainError& e) {
    result.status = kUsage;
    result.document = json{{"error", e.what()}};
    return result;
  } catch (const Error& e) {
    result.status = kError;
    result.document = json{{"error", e.what()}};
    return result;
  }
  const auto stop = std::chrono::steady_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(stop - start).count();

  json calj;
  for (const auto& [key, value] : cal.named()) calj[key] = value;
  result.document = json{{"schema_version", report::kSchemaVersion},
                         {"command", cfg.command},
                         {"config_echo", cfg.to_json()},
                         {"seed", cfg.seed},
                         {"metrics", out.metrics},
                         {"audits", out.audits},
                         {"calibration", calj},
                         {"wall_time_ms", ms}};
  for (auto& [key, value] : out.extra.items()) result.document[key] = value;
  result.status = out.audit_failed ? kAuditFailed : kOk;

  if (out.has_estimate) {
    json csv = json::array();
    const auto& est = out.estimate_storage;
    for (std::size_t t = 0; t < est.per_trial_err.size(); ++t)
      csv.push_back(json::array({t, est.input_hash[t], est.per_trial_err[t], est.per_trial_entropy[t]}));
    result.document["per_trial"] = std::move(csv);
  }
  return result;
}

int run_to_file(const ExperimentConfig& cfg, const std::string& out_path,
                const std::string& csv_path) {
  RunResult result = run(cfg);
  json doc = result.document;
  json per_trial;
  if (doc.contains("per_trial")) {
    per_trial = doc["per_trial"];
    doc.erase("per_trial");
  }
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) {
      std::cerr << "cannot open output path " << out_path << "\n";
      return kError;
    }
    f << doc.dump(2) << "\n";
  } else {
    std::cout << doc.dump(2) << "\n";
  }
  if (!csv_path.empty() && per_trial.is_array()) {
    std::ofstream f(csv_path);
    if (!f) {
      std::cerr << "cannot open csv path " << csv_path << "\n";
      return kError;
    }
    f << "trial_index,input_hash,per_input_error,message_index_distribution_entropy\n";
    for (const auto& row : per_trial)
      f << row[0].get<std::uint64_t>() << "," << row[1].get<std::uint64_t>() << ","
        << row[2].dump() << "," << row[3].dump() << "\n";
  }
  return result.status;
}

int replay(const std::string& result_path, int threads) {
  std::ifstream f(result_path);
  if (!f) {
    std::cerr << "cannot open " << result_path << "\n";
    return kError;
  }
  json stored;
  try {
    stored = json::parse(f);
  } catch (const json::exception& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kError;
  }
  if (!stored.contains("schema_version") ||
      stored["schema_version"].get<int>() != report::kSchemaVersion) {
    std::cerr << "schema version mismatch\n";
    return kSchemaMismatch;
  }
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::from_json(stored.at("config_echo"));
  } catch (const json::exception& e) {
    std::cerr << "bad config echo: " << e.what() << "\n";
    return kSchemaMismatch;
  }
  cfg.threads = threads > 0 ? threads : 1;
  RunResult fresh = run(cfg);
  if (fresh.status == kError || fresh.status == kUsage) return fresh.status;
  const bool metrics_same = fresh.document["metrics"].dump() == stored["metrics"].dump();
  const bool audits_same = fresh.document["audits"].dump() == stored["audits"].dump();
  if (!metrics_same) {
    std::cerr << "replay mismatch in metrics\n";
    return kReplayMismatch;
  }
  if (!audits_same) {
    std::cerr << "replay mismatch in audits\n";
    return kReplayMismatch;
  }
  return kOk;
}

}  // namespace rsp::cli
