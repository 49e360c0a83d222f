#pragma once

#include <json.hpp>
#include <string>

#include "rsp/protocols.hpp"
#include "rsp/verify.hpp"

namespace rsp::report {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Resource accounting for one completed protocol experiment.
struct ResourceReport {
  int d = 0;
  int k = 0;
  int m_bits = 0;
  double ebits = 0.0;
  qcore::Spectrum shared_spectrum{std::vector<double>{1.0}};
  protocols::ErrorEstimate estimate;
};

json spectrum_json(const qcore::Spectrum& s);
json matrix_json(const qcore::Matrix& m);  // row-major [re, im] pairs
json error_estimate_json(const protocols::ErrorEstimate& est);
json audit_json(const verify::AuditReport& audit);
json decoupling_json(const verify::DecouplingReport& rep);
json tail_table_json(const verify::TailTable& table);
json resource_report_json(const ResourceReport& rep);

/// Audits for a resource report: communication and entanglement bounds.
std::pair<verify::AuditReport, verify::AuditReport> audit_resource_report(
    const ResourceReport& rep, double gamma, double a_cal, double c_slack);

}  // namespace rsp::report
