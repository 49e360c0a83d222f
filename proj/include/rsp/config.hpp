#pragma once

#include <map>
#include <string>

namespace rsp {

/// Centralized numeric tolerances. `construct` guards validated
/// constructors, `algebra` guards algebraic identities that accumulate
/// roundoff. Larger drift than these is treated as a genuine violation,
/// not repaired.
struct Tolerances {
  double construct = 1e-10;
  double algebra = 1e-9;
  double eig_clip = 1e-12;  // eigenvalues in [-eig_clip, 0) are clipped to 0
};

const Tolerances& default_tols();

/// Calibration constants standing in for unspecified universal constants.
/// Every report echoes the values in effect, so results can be re-judged
/// under different choices.
struct Calibration {
  double kraus_n_const = 4.0;      // C_K in N = ceil(C_K d log2(d) / (k eps^2))
  double ancilla_const = 4.0;      // C_r in r = ceil(C_r / eps)
  int rejection_extra = 2;         // additive term in N = ceil((d/k) ln(1/eps)) + extra
  double worst_n_const = 1.0;      // C_w in N_w = ceil(C_w log2(1/delta) / delta^4)
  int worst_n_cap = 10000;         // hard budget cap on N_w
  double eigval_a = 3.0;           // A in the eigenvalue-sum bound
  double decouple_c_total = 10.0;  // ratio budget for post-selected decoupling
  double entropy_slack = 4.0;      // O(1) slack in the entanglement audit
  double fid_lemma_const = 10.0;   // constant in the F(x0+D,y0) - K D^2 check
  int retry_cap = 5;               // resampling attempts for randomized builds

  std::map<std::string, double> named() const;
  void set(const std::string& key, double value);
};

}  // namespace rsp
