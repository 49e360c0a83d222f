#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsp/protocols.hpp"

namespace rsp::verify {

using protocols::RspProtocol;
using qcore::DensityMatrix;
using qcore::FlatInput;
using qcore::Matrix;
using qcore::Spectrum;

/// Outcome of one inequality check. `margin` is rhs - lhs with the
/// inequality oriented as lhs <= rhs; pass iff margin >= -tolerance.
/// `vacuous` marks audits whose smoothing parameter reached 1 (the bound
/// asserts nothing there; reported as a pass and flagged).
struct AuditReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  bool pass = false;
  bool vacuous = false;
  double tolerance = 0.0;
  std::map<std::string, double> parameters;
  std::uint64_t seed = 0;
  int trials = 0;

  void finish(double tol) {
    tolerance = tol;
    margin = rhs - lhs;
    pass = vacuous || margin >= -tol;
  }
};

/// Closed-form optimum of max Tr(P rho) s.t. Tr(Q rho) >= t over states:
/// the truncated fidelity of (||PQP||_inf, t), with ||PQP||_inf evaluated
/// as the squared largest singular value of QP. Inputs must be projectors
/// (idempotence within 1e-8).
double sdp_closed_form(const Matrix& p, const Matrix& q, double t);

/// Feasible lower bound on the same program: penalty-augmented local
/// ascent over pure states in span(range P + range Q) from random starts,
/// followed by a multiplier-continuation polish. Returned values are
/// always attained by a feasible state.
double sdp_oracle(const Matrix& p, const Matrix& q, double t, int restarts, SeedStream& rng);

/// Exhaustive d=2 check: feasible-cap grid on the Bloch sphere plus the
/// boundary circle of the constraint, with local refinement.
double sdp_bloch_brute_force(const Matrix& p, const Matrix& q, double t, int grid_points = 10000);

/// Largest squared singular value of PQ (the top Jordan-basis overlap).
double jordan_principal_overlap(const Matrix& p, const Matrix& q);

/// Exact finite-prior majorization check: the shared-state Schmidt
/// spectrum must be majorized by the message-averaged spectra of Bob's
/// conditional full-register states under the uniform prior over `prior`.
AuditReport check_majorization_bound(const RspProtocol& proto, const std::vector<FlatInput>& prior,
                                     double tol = 1e-8);

struct DecouplingReport {
  // plain decoupling of Tr_{A1}(U rho U^dag) toward I/d2 (x) rho^E
  double plain_lhs1 = 0.0, plain_lhs1_stderr = 0.0;
  double plain_lhs2 = 0.0, plain_lhs2_stderr = 0.0;
  double plain_rhs1 = 0.0, plain_rhs2 = 0.0;
  // post-selected variant for a fixed rank-k projector on A2
  double post_lhs = 0.0, post_lhs_stderr = 0.0;
  double post_rhs_first = 0.0, post_rhs_second_over_c = 0.0;
  double post_ratio = 0.0;  // post_lhs / post_rhs_first
  double h2_cond_surrogate = 0.0;  // H2(A1A2|E) at sigma^E = rho^E
  double h2_uncond = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
};

/// Monte Carlo decoupling experiment over Haar unitaries on A1A2. `rho`
/// lives on registers [d1, d2, dE] (dE = 1 for no environment). The
/// post-selection projector is Haar-sampled from the seed unless given.
DecouplingReport decoupling_experiment(int d1, int d2, int k, const DensityMatrix& rho, int dE,
                                       int trials, std::uint64_t seed, int threads = 1,
                                       const Matrix* fixed_p = nullptr);

enum class ConcentrationKind { TraceFunctional, SpectralFunctional };

struct TailTable {
  double mean = 0.0;
  double stderr_mean = 0.0;
  double expected_mean = 0.0;  // trace kind: (k/d) Tr(A)
  bool mean_within_3sigma = false;
  std::array<double, 3> thresholds{0.05, 0.1, 0.2};
  std::array<double, 3> exceed_fraction{};
  bool tails_monotone = false;
  int trials = 0;
  std::uint64_t seed = 0;
};

/// Tail behaviour of f(P) over Haar P. TraceFunctional: f = Tr(A P) for a
/// seeded random Hermitian A with unit Frobenius norm (or a caller-fixed
/// A). SpectralFunctional: f = ||Q (I_{rb} (x) P) Q||_inf for a seeded
/// Haar rank-l projector Q on rb*d. Exceedance fractions count
/// |f - mean| > threshold.
TailTable concentration_experiment(int d, int k, ConcentrationKind kind, int trials,
                                   std::uint64_t seed, int threads = 1, int rb = 2, int l = 2,
                                   const Matrix* fixed_a = nullptr);

struct WeightedState {
  double weight;
  FlatInput input;
  DensityMatrix omega;  // on registers [rb, d]
};

/// Eigenvalue-sum bound audit: top-l eigenvalue mass of the weighted
/// average of the omega_P against F(k/d + (A/sqrt(d))(sqrt(log2 K) +
/// sqrt(l)), 1 - eps).
AuditReport check_eigval_bound(const std::vector<WeightedState>& mu, double density_bound_k, int l,
                               double a_cal, double tol = 1e-9);

/// Communication and entanglement lower-bound audits for a completed
/// protocol experiment.
///   comm: m >= floor(log2(d/k)) + log2(1 - eps_r)
///   ent:  H^{delta+gamma}_min(shared) >= log2(d) - 3 log2(1/gamma) - slack
///         with delta = F(k/d + A sqrt(m/d), 1 - eps_r); delta + gamma >= 1
///         is reported as a vacuous pass.
std::pair<AuditReport, AuditReport> audit_resource_bounds(int d, int k, int m_bits,
                                                          const Spectrum& shared_spectrum,
                                                          double eps_r, double gamma, double a_cal,
                                                          double c_slack);

}  // namespace rsp::verify
