#include "rsp/report.hpp"

namespace rsp::report {

json spectrum_json(const qcore::Spectrum& s) { return json(s.values()); }

json matrix_json(const qcore::Matrix& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (long j = 0; j < m.cols(); ++j) row.push_back(json::array({m(i, j).real(), m(i, j).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

json error_estimate_json(const protocols::ErrorEstimate& est) {
  return json{{"eps_a", est.eps_a},
              {"eps_a_stderr", est.eps_a_stderr},
              {"eps_r", est.eps_r},
              {"eps_r_stderr", est.eps_r_stderr},
              {"eps_w_lower", est.eps_w_lower},
              {"trials", est.trials},
              {"adversarial_sweep", est.adversarial_sweep},
              {"seed", est.seed}};
}

json audit_json(const verify::AuditReport& a) {
  return json{{"name", a.name},     {"lhs", a.lhs},
              {"rhs", a.rhs},       {"margin", a.margin},
              {"pass", a.pass},     {"vacuous", a.vacuous},
              {"tolerance", a.tolerance}, {"parameters", a.parameters},
              {"seed", a.seed},     {"trials", a.trials}};
}

json decoupling_json(const verify::DecouplingReport& r) {
  return json{{"plain_lhs1", r.plain_lhs1},
              {"plain_lhs1_stderr", r.plain_lhs1_stderr},
              {"plain_lhs2", r.plain_lhs2},
              {"plain_lhs2_stderr", r.plain_lhs2_stderr},
              {"plain_rhs1", r.plain_rhs1},
              {"plain_rhs2", r.plain_rhs2},
              {"post_lhs", r.post_lhs},
              {"post_lhs_stderr", r.post_lhs_stderr},
              {"post_rhs_first", r.post_rhs_first},
              {"post_rhs_second_over_c", r.post_rhs_second_over_c},
              {"post_ratio", r.post_ratio},
              {"h2_cond_surrogate", r.h2_cond_surrogate},
              {"h2_uncond", r.h2_uncond},
              {"trials", r.trials},
              {"seed", r.seed}};
}

json tail_table_json(const verify::TailTable& t) {
  return json{{"mean", t.mean},
              {"stderr", t.stderr_mean},
              {"expected_mean", t.expected_mean},
              {"mean_within_3sigma", t.mean_within_3sigma},
              {"thresholds", t.thresholds},
              {"exceed_fraction", t.exceed_fraction},
              {"tails_monotone", t.tails_monotone},
              {"trials", t.trials},
              {"seed", t.seed}};
}

json resource_report_json(const ResourceReport& rep) {
  return json{{"d", rep.d},
              {"k", rep.k},
              {"m_bits", rep.m_bits},
              {"ebits", rep.ebits},
              {"shared_spectrum", spectrum_json(rep.shared_spectrum)},
              {"error_estimate", error_estimate_json(rep.estimate)}};
}

std::pair<verify::AuditReport, verify::AuditReport> audit_resource_report(
    const ResourceReport& rep, double gamma, double a_cal, double c_slack) {
  return verify::audit_resource_bounds(rep.d, rep.k, rep.m_bits, rep.shared_spectrum,
                                       rep.estimate.eps_r, gamma, a_cal, c_slack);
}

}  // namespace rsp::report
