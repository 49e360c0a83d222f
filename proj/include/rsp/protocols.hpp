#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rsp/grassmann.hpp"
#include "rsp/qcore.hpp"

namespace rsp::protocols {

using grassmann::RandomNet;
using qcore::DensityMatrix;
using qcore::FlatInput;
using qcore::Matrix;
using qcore::Spectrum;

/// One branch of a protocol run: message label, its probability, Bob's
/// state on the d-dimensional target register, and (on request) Bob's
/// full-register conditional state for majorization checks. States are
/// shared; branches with identical output alias one matrix.
struct Outcome {
  int label = 0;
  double prob = 0.0;
  std::shared_ptr<const DensityMatrix> bob_state;
  std::shared_ptr<const DensityMatrix> bob_joint;
};

struct OutcomeEnsemble {
  std::vector<Outcome> outcomes;

  double total_prob() const;
  /// Probabilities >= -1e-12 and summing to 1 within the algebra tolerance.
  void validate(const Tolerances& tol = default_tols()) const;
  /// Shannon entropy (bits) of the outcome distribution.
  double message_entropy() const;
};

struct RunOptions {
  bool include_joint = false;
};

/// Per-input exact quantities shared by the estimators.
struct InputStats {
  double err;          // sum_c p(c) * tracedist(bob_state_c, P/k)
  double relaxed_err;  // sum_c p(c) * Tr((I - P) bob_state_c)
  double msg_entropy;
};

/// One-way RSP protocol with an exact finite outcome ensemble per input.
class RspProtocol {
 public:
  virtual ~RspProtocol() = default;

  int d() const { return d_; }
  int k() const { return k_; }
  /// ceil(log2(#outcomes)) classical bits from Alice to Bob.
  int message_bits() const { return message_bits_; }
  int num_outcomes() const { return num_outcomes_; }
  double ebits() const { return ebits_; }
  const Spectrum& shared_state_spectrum() const { return shared_spectrum_; }

  virtual OutcomeEnsemble run_exact(const FlatInput& input, const RunOptions& opts = {}) const = 0;

  virtual InputStats input_stats(const FlatInput& input) const;
  double input_error(const FlatInput& input) const { return input_stats(input).err; }

  /// Index-deterministic batch evaluation; identical output for any thread
  /// count.
  virtual std::vector<InputStats> batch_input_stats(const std::vector<FlatInput>& inputs,
                                                    int threads) const;

 protected:
  RspProtocol(int d, int k, int num_outcomes, double ebits, Spectrum shared);

  int d_, k_, num_outcomes_, message_bits_;
  double ebits_;
  Spectrum shared_spectrum_;
};

int kraus_auto_n(int d, int k, double eps_a, const Calibration& cal);
int rejection_auto_n(int d, int k, double eps_a, const Calibration& cal);
int rejection_auto_r(double eps_a, const Calibration& cal);
int worst_auto_n(double delta, const Calibration& cal);

/// Generalized-measurement protocol on a maximally entangled pair of local
/// dimension d. Success branches deliver exactly P/k (one-sided error);
/// the heralded failure branch has probability 1 - 1/||M||_inf.
class KrausProtocol : public RspProtocol {
 public:
  struct Params {
    int d = 0;
    int k = 0;
    double eps_a = 0.0;     // average failure target (auto sizing + validation)
    int n_override = 0;     // explicit N; skips validation unless validate set
    std::uint64_t seed = 0;
    bool validate = true;   // empirical average-failure check with resampling
    int validation_probes = 32;
  };

  static KrausProtocol build(const Params& p, const Calibration& cal = {}, int threads = 1);
  static KrausProtocol from_unitaries(int d, int k, std::vector<Matrix> unitaries);

  int n_unitaries() const { return n_; }
  std::uint64_t unitary_seed() const { return unitary_seed_; }
  Matrix unitary(int i) const;

  /// ||M(P)||_inf with M = (d/(kN)) sum_i U_i conj(P) U_i^dagger.
  double m_norm(const FlatInput& input) const;
  std::vector<double> batch_m_norms(const std::vector<FlatInput>& inputs, int threads) const;

  OutcomeEnsemble run_exact(const FlatInput& input, const RunOptions& opts = {}) const override;
  OutcomeEnsemble ensemble_given_norm(const FlatInput& input, double norm) const;

  InputStats stats_given_norm(double norm) const;
  InputStats input_stats(const FlatInput& input) const override;
  std::vector<InputStats> batch_input_stats(const std::vector<FlatInput>& inputs,
                                            int threads) const override;

  /// Mean heralded-failure probability over Haar probe inputs.
  double average_failure(int probes, std::uint64_t probe_seed, int threads) const;

 private:
  KrausProtocol(int d, int k, int n, std::uint64_t useed, std::vector<Matrix> cache);

  Matrix accumulate_m(const FlatInput& input) const;

  int n_;
  std::uint64_t unitary_seed_;
  std::vector<Matrix> cache_;  // materialized unitaries when small enough
};

/// Sequential rejection-sampling protocol on a maximally entangled state of
/// local dimension r*d. Alice measures {Q_i, I - Q_i} rounds on her residual
/// share; Bob undoes the announced round's unitary. Outcome states are the
/// exact steered conditionals, reconstructed from the measurement history.
class RejectionProtocol : public RspProtocol {
 public:
  struct Params {
    int d = 0;
    int k = 0;
    double eps_a = 0.0;
    int r_override = 0;
    int n_override = 0;
    std::uint64_t seed = 0;
  };

  static RejectionProtocol build(const Params& p, const Calibration& cal = {});
  static RejectionProtocol from_unitaries(int d, int k, int r, std::vector<Matrix> unitaries);

  int r() const { return r_; }
  int n_rounds() const { return n_; }
  const Matrix& round_unitary(int i) const { return us_[i]; }

  OutcomeEnsemble run_exact(const FlatInput& input, const RunOptions& opts = {}) const override;

  /// prod_{j<=i}(1 - p_j) for i = 1..n, one entry per round.
  std::vector<double> survival_profile(const FlatInput& input) const;

 private:
  RejectionProtocol(int d, int k, int r, std::vector<Matrix> us);

  int r_, n_;
  std::vector<Matrix> us_;
};

/// Protocol that always reports the maximally mixed state with no
/// communication; the baseline for the resource audits.
class TrivialProtocol : public RspProtocol {
 public:
  TrivialProtocol(int d, int k);
  OutcomeEnsemble run_exact(const FlatInput& input, const RunOptions& opts = {}) const override;
};

/// Average-to-worst wrapper: rotate the input through N_w unitaries, pick
/// the net point of least precomputed base error among those within the
/// net radius of a rotation, run the base there and undo the rotation.
class WorstCaseProtocol : public RspProtocol {
 public:
  static std::shared_ptr<const RspProtocol> wrap(std::shared_ptr<const RspProtocol> base,
                                                 double delta, RandomNet net, std::uint64_t seed,
                                                 const Calibration& cal = {}, int threads = 1);

  struct Selection {
    int rotation = -1;   // i*
    int net_index = -1;  // argmin net point
    double base_error = 0.0;
  };
  Selection select(const FlatInput& input) const;

  OutcomeEnsemble run_exact(const FlatInput& input, const RunOptions& opts = {}) const override;
  InputStats input_stats(const FlatInput& input) const override;

  int n_rotations() const { return n_w_; }
  const std::vector<double>& net_errors() const { return net_errors_; }

 private:
  WorstCaseProtocol(std::shared_ptr<const RspProtocol> base, double delta, RandomNet net,
                    std::uint64_t seed, int n_w, int threads);

  std::shared_ptr<const RspProtocol> base_;
  double delta_;
  RandomNet net_;
  std::vector<double> net_errors_;
  std::vector<Matrix> rotations_;
  int n_w_;
};

/// Monte Carlo error estimates over Haar inputs. eps_a and eps_r average
/// the exact per-input values over `trials` inputs; eps_w_lower is the max
/// per-input error seen across trials plus `adversarial_sweep` extra
/// inputs (a lower bound on the worst case).
struct ErrorEstimate {
  double eps_a = 0.0, eps_a_stderr = 0.0;
  double eps_r = 0.0, eps_r_stderr = 0.0;
  double eps_w_lower = 0.0;
  int trials = 0;
  int adversarial_sweep = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_trial_err;      // trials + sweep entries
  std::vector<double> per_trial_entropy;  // message distribution entropy
  std::vector<std::uint64_t> input_hash;
};

ErrorEstimate estimate_errors(const RspProtocol& proto, int trials, std::uint64_t seed,
                              int adversarial_sweep = 0, int threads = 1);

/// Equality-function codebook: 2^sample_m Haar points of G(d, k) with the
/// measured pairwise overlap max_{i != j} Tr(P_i P_j)/k validated against
/// an explicit budget.
struct Codebook {
  int n_bits = 0;
  int d = 0;
  int k = 0;
  int sample_m = 0;
  std::vector<FlatInput> points;
  std::vector<Matrix> isometries;  // d x k frames of the points
  double max_overlap = 0.0;
  double overlap_budget = 0.0;
  bool all_pairs_checked = false;
  std::uint64_t seed = 0;

  double overlap(int i, int j) const;
};

/// d = 0 or k = 0 selects the auto sizing d = ceil(sqrt(n)/eps^{3/2}),
/// k = ceil(eps*d/2). overlap_budget <= 0 selects the default eps/2.
Codebook build_codebook(int n, double eps, int d, int k, std::uint64_t seed, int sample_m,
                        double overlap_budget = 0.0, const Calibration& cal = {}, int threads = 1);

struct EqualityResult {
  bool verdict = false;       // declared "x == y"
  double accept_prob = 0.0;   // exact acceptance probability
};

/// One equality-protocol run on codewords x and y (indices below
/// 2^sample_m; desk-scale stand-ins for n-bit strings with zero high
/// bits). The acceptance probability is computed exactly from the outcome
/// ensemble; the verdict is sampled from it.
EqualityResult run_equality(const Codebook& cb, const RspProtocol& rsp, std::uint32_t x,
                            std::uint32_t y, SeedStream& rng,
                            const OutcomeEnsemble* precomputed = nullptr);

}  // namespace rsp::protocols
