#include "rsp/protocols.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>

#include "rsp/parallel.hpp"

namespace rsp::protocols {

namespace {

using qcore::Cplx;
using qcore::Operator;

constexpr double kProbFloor = 1e-14;
constexpr std::size_t kUnitaryCacheCap = std::size_t(1) << 22;  // complex entries

double plogp(double p) { return (p > 0.0) ? p * std::log2(p) : 0.0; }

int bits_for(int outcomes) {
  int b = 0;
  while ((1 << b) < outcomes) ++b;
  return b;
}

std::uint64_t fnv1a(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t hash_input(const FlatInput& in) {
  return fnv1a(in.projector.data(), sizeof(Cplx) * in.projector.size());
}

/// Top-k eigenvector frame of a rank-k projector.
Matrix projector_frame(const FlatInput& in) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(in.projector);
  return es.eigenvectors().rightCols(in.k);
}

std::shared_ptr<const DensityMatrix> shared_density(Matrix m, std::vector<int> regs = {}) {
  return std::make_shared<const DensityMatrix>(Operator(std::move(m), std::move(regs)));
}

}  // namespace

// ---------------------------------------------------------------------------
// OutcomeEnsemble

double OutcomeEnsemble::total_prob() const {
  double s = 0.0;
  for (const auto& o : outcomes) s += o.prob;
  return s;
}

void OutcomeEnsemble::validate(const Tolerances& tol) const {
  for (const auto& o : outcomes) {
    if (o.prob < -tol.eig_clip) throw ValidationError("negative outcome probability");
    if (!o.bob_state) throw ValidationError("outcome without a state");
  }
  if (std::abs(total_prob() - 1.0) > tol.algebra)
    throw ValidationError("outcome probabilities do not sum to 1");
}

double OutcomeEnsemble::message_entropy() const {
  double h = 0.0;
  for (const auto& o : outcomes) h -= plogp(o.prob);
  return h;
}

// ---------------------------------------------------------------------------
// RspProtocol

RspProtocol::RspProtocol(int d, int k, int num_outcomes, double ebits, Spectrum shared)
    : d_(d),
      k_(k),
      num_outcomes_(num_outcomes),
      message_bits_(bits_for(num_outcomes)),
      ebits_(ebits),
      shared_spectrum_(std::move(shared)) {
  if (k_ < 1 || k_ > d_) throw DimensionError("protocol rank must satisfy 1 <= k <= d");
}

InputStats RspProtocol::input_stats(const FlatInput& input) const {
  const OutcomeEnsemble ens = run_exact(input);
  const DensityMatrix target = input.flat_state();
  InputStats st{0.0, 0.0, ens.message_entropy()};
  for (const auto& o : ens.outcomes) {
    st.err += o.prob * qcore::trace_distance(*o.bob_state, target);
    const double in_support = (input.projector * o.bob_state->mat()).trace().real();
    st.relaxed_err += o.prob * std::max(0.0, 1.0 - in_support);
  }
  return st;
}

std::vector<InputStats> RspProtocol::batch_input_stats(const std::vector<FlatInput>& inputs,
                                                       int threads) const {
  std::vector<InputStats> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) { out[i] = input_stats(inputs[i]); });
  return out;
}

int kraus_auto_n(int d, int k, double eps_a, const Calibration& cal) {
  if (!(eps_a > 0.0) || eps_a >= 1.0) throw DomainError("eps_a must be in (0, 1)");
  const double raw = cal.kraus_n_const * d * std::log2(std::max(2, d)) / (k * eps_a * eps_a);
  return std::max(1, static_cast<int>(std::ceil(raw)));
}

int rejection_auto_n(int d, int k, double eps_a, const Calibration& cal) {
  if (!(eps_a > 0.0) || eps_a >= 1.0) throw DomainError("eps_a must be in (0, 1)");
  return static_cast<int>(std::ceil(static_cast<double>(d) / k * std::log(1.0 / eps_a))) +
         cal.rejection_extra;
}

int rejection_auto_r(double eps_a, const Calibration& cal) {
  if (!(eps_a > 0.0) || eps_a >= 1.0) throw DomainError("eps_a must be in (0, 1)");
  return std::max(1, static_cast<int>(std::ceil(cal.ancilla_const / eps_a)));
}

int worst_auto_n(double delta, const Calibration& cal) {
  if (!(delta > 0.0)) throw DomainError("delta must be positive");
  if (delta >= 1.0) return 0;
  const double raw = cal.worst_n_const * std::log2(1.0 / delta) / std::pow(delta, 4);
  return std::min(cal.worst_n_cap, std::max(1, static_cast<int>(std::ceil(raw))));
}

// ---------------------------------------------------------------------------
// KrausProtocol

KrausProtocol::KrausProtocol(int d, int k, int n, std::uint64_t useed, std::vector<Matrix> cache)
    : RspProtocol(d, k, n + 1, std::log2(static_cast<double>(d)), Spectrum::uniform(d)),
      n_(n),
      unitary_seed_(useed),
      cache_(std::move(cache)) {}

KrausProtocol KrausProtocol::from_unitaries(int d, int k, std::vector<Matrix> unitaries) {
  if (unitaries.empty()) throw DomainError("need at least one unitary");
  for (const auto& u : unitaries)
    if (u.rows() != d || u.cols() != d) throw ShapeError("unitary dimension mismatch");
  const int n = static_cast<int>(unitaries.size());
  return KrausProtocol(d, k, n, 0, std::move(unitaries));
}

KrausProtocol KrausProtocol::build(const Params& p, const Calibration& cal, int threads) {
  const int n = p.n_override > 0 ? p.n_override : kraus_auto_n(p.d, p.k, p.eps_a, cal);
  const bool cache = static_cast<std::size_t>(n) * p.d * p.d <= kUnitaryCacheCap;
  for (int attempt = 0;; ++attempt) {
    const std::uint64_t useed = SeedStream::child(p.seed, 0x6b726175ull + attempt).bits();
    std::vector<Matrix> us;
    if (cache) {
      us.resize(n);
      parallel_for(n, threads, [&](std::size_t i) {
        SeedStream s = SeedStream::child(useed, i);
        us[i] = qcore::haar_unitary(p.d, s);
      });
    }
    KrausProtocol proto(p.d, p.k, n, useed, std::move(us));
    if (!p.validate || !(p.eps_a > 0.0)) return proto;
    const double fail = proto.average_failure(p.validation_probes,
                                              SeedStream::child(p.seed, 0x70726f6265ull).bits(), threads);
    if (fail <= p.eps_a) return proto;
    if (attempt + 1 >= cal.retry_cap)
      throw ConstructionError("kraus build: average failure " + std::to_string(fail) +
                              " exceeds target after retries");
  }
}

Matrix KrausProtocol::unitary(int i) const {
  if (i < 0 || i >= n_) throw DomainError("unitary index out of range");
  if (!cache_.empty()) return cache_[i];
  SeedStream s = SeedStream::child(unitary_seed_, static_cast<std::uint64_t>(i));
  return qcore::haar_unitary(d_, s);
}

Matrix KrausProtocol::accumulate_m(const FlatInput& input) const {
  const Matrix frame_bar = projector_frame(input).conjugate();  // d x k
  Matrix m = Matrix::Zero(d_, d_);
  for (int i = 0; i < n_; ++i) {
    const Matrix z = unitary(i) * frame_bar;
    m.noalias() += z * z.adjoint();
  }
  m *= static_cast<double>(d_) / (static_cast<double>(k_) * n_);
  return m;
}

double KrausProtocol::m_norm(const FlatInput& input) const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(accumulate_m(input), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

std::vector<double> KrausProtocol::batch_m_norms(const std::vector<FlatInput>& inputs,
                                                 int threads) const {
  const std::size_t nin = inputs.size();
  std::vector<Matrix> frames(nin);
  parallel_for(nin, threads, [&](std::size_t j) { frames[j] = projector_frame(inputs[j]).conjugate(); });
  std::vector<Matrix> acc(nin, Matrix::Zero(d_, d_));

  // unitary-major sweep in fixed blocks: regenerate each unitary once,
  // update every input; per-input accumulation order is the global i order,
  // so results are thread-count independent
  constexpr int kBlock = 64;
  std::vector<Matrix> block(std::min(n_, kBlock));
  for (int base = 0; base < n_; base += kBlock) {
    const int len = std::min(kBlock, n_ - base);
    parallel_for(len, threads, [&](std::size_t t) {
      block[t] = unitary(base + static_cast<int>(t));
    });
    parallel_for(nin, threads, [&](std::size_t j) {
      for (int t = 0; t < len; ++t) {
        const Matrix z = block[t] * frames[j];
        acc[j].noalias() += z * z.adjoint();
      }
    });
  }
  std::vector<double> norms(nin);
  parallel_for(nin, threads, [&](std::size_t j) {
    acc[j] *= static_cast<double>(d_) / (static_cast<double>(k_) * n_);
    Eigen::SelfAdjointEigenSolver<Matrix> es(acc[j], Eigen::EigenvaluesOnly);
    norms[j] = es.eigenvalues().maxCoeff();
  });
  return norms;
}

OutcomeEnsemble KrausProtocol::ensemble_given_norm(const FlatInput& input, double norm) const {
  OutcomeEnsemble ens;
  const double p_succ = 1.0 / (n_ * norm);
  auto exact = shared_density(input.projector / static_cast<double>(k_));
  for (int i = 0; i < n_; ++i) ens.outcomes.push_back({i, p_succ, exact, nullptr});
  auto mixed = shared_density(Matrix::Identity(d_, d_) / d_);
  ens.outcomes.push_back({n_, std::max(0.0, 1.0 - 1.0 / norm), mixed, nullptr});
  return ens;
}

OutcomeEnsemble KrausProtocol::run_exact(const FlatInput& input, const RunOptions& opts) const {
  if (input.d != d_ || input.k != k_) throw ShapeError("input does not match protocol (d, k)");
  const Matrix m = accumulate_m(input);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double norm = es.eigenvalues().maxCoeff();
  OutcomeEnsemble ens = ensemble_given_norm(input, norm);
  if (opts.include_joint) {
    // steered conditionals before Bob's correction map to P/k after it;
    // keep the corrected forms, and the true conditional on failure
    for (int i = 0; i < n_; ++i) ens.outcomes[i].bob_joint = ens.outcomes[i].bob_state;
    const double p_fail = ens.outcomes[n_].prob;
    if (p_fail > kProbFloor) {
      const Matrix fail_state = (Matrix::Identity(d_, d_) - m.conjugate() / norm) / (d_ * p_fail);
      ens.outcomes[n_].bob_joint = shared_density(fail_state);
    } else {
      ens.outcomes[n_].bob_joint = ens.outcomes[n_].bob_state;
    }
  }
  return ens;
}

InputStats KrausProtocol::stats_given_norm(double norm) const {
  const double p_fail = std::max(0.0, 1.0 - 1.0 / norm);
  const double flat_gap = 1.0 - static_cast<double>(k_) / d_;
  InputStats st;
  st.err = p_fail * flat_gap;
  st.relaxed_err = p_fail * flat_gap;
  st.msg_entropy = -plogp(p_fail) - (1.0 - p_fail) * std::log2((1.0 - p_fail) / n_);
  if (p_fail >= 1.0) st.msg_entropy = 0.0;
  return st;
}

InputStats KrausProtocol::input_stats(const FlatInput& input) const {
  return stats_given_norm(m_norm(input));
}

std::vector<InputStats> KrausProtocol::batch_input_stats(const std::vector<FlatInput>& inputs,
                                                         int threads) const {
  const std::vector<double> norms = batch_m_norms(inputs, threads);
  std::vector<InputStats> out(inputs.size());
  for (std::size_t j = 0; j < inputs.size(); ++j) out[j] = stats_given_norm(norms[j]);
  return out;
}

double KrausProtocol::average_failure(int probes, std::uint64_t probe_seed, int threads) const {
  std::vector<FlatInput> inputs(probes);
  parallel_for(probes, threads, [&](std::size_t t) {
    SeedStream s = SeedStream::child(probe_seed, t);
    inputs[t] = qcore::sample_flat(d_, k_, s);
  });
  const std::vector<double> norms = batch_m_norms(inputs, threads);
  double acc = 0.0;
  for (double nm : norms) acc += std::max(0.0, 1.0 - 1.0 / nm);
  return acc / probes;
}

// ---------------------------------------------------------------------------
// RejectionProtocol

RejectionProtocol::RejectionProtocol(int d, int k, int r, std::vector<Matrix> us)
    : RspProtocol(d, k, static_cast<int>(us.size()) + 1,
                  std::log2(static_cast<double>(r) * d), Spectrum::uniform(r * d)),
      r_(r),
      n_(static_cast<int>(us.size())),
      us_(std::move(us)) {}

RejectionProtocol RejectionProtocol::from_unitaries(int d, int k, int r, std::vector<Matrix> us) {
  if (us.empty()) throw DomainError("need at least one round unitary");
  for (const auto& u : us)
    if (u.rows() != static_cast<long>(r) * d) throw ShapeError("round unitary must act on r*d");
  return RejectionProtocol(d, k, r, std::move(us));
}

RejectionProtocol RejectionProtocol::build(const Params& p, const Calibration& cal) {
  const int r = p.r_override > 0 ? p.r_override : rejection_auto_r(p.eps_a, cal);
  const int n = p.n_override > 0 ? p.n_override : rejection_auto_n(p.d, p.k, p.eps_a, cal);
  if (static_cast<long>(r) * p.d > qcore::kMaxDim) throw DimensionError("r*d exceeds the dense cap");
  std::vector<Matrix> us(n);
  const std::uint64_t useed = SeedStream::child(p.seed, 0x72656a6563ull).bits();
  for (int i = 0; i < n; ++i) {
    SeedStream s = SeedStream::child(useed, i);
    us[i] = qcore::haar_unitary(r * p.d, s);
  }
  return RejectionProtocol(p.d, p.k, r, std::move(us));
}

namespace {

// I_r (x) frame as a dense (r d) x (r k) block isometry
Matrix ancilla_frame(int r, const Matrix& frame) {
  const long d = frame.rows(), k = frame.cols();
  Matrix f = Matrix::Zero(r * d, r * k);
  for (int b = 0; b < r; ++b) f.block(b * d, b * k, d, k) = frame;
  return f;
}

}  // namespace

// The round projectors have rank r*k, so the recursion runs on their
// isometry factors: Q_i = W_i W_i^dag with W_i = U_i (I_r (x) conj(V)).
// All per-round products then cost O((rd)^2 rk) instead of (rd)^3.
OutcomeEnsemble RejectionProtocol::run_exact(const FlatInput& input, const RunOptions& opts) const {
  if (input.d != d_ || input.k != k_) throw ShapeError("input does not match protocol (d, k)");
  const long big = static_cast<long>(r_) * d_;
  const Matrix frame_bar = projector_frame(input).conjugate();
  const Matrix f = ancilla_frame(r_, frame_bar);
  auto mixed = shared_density(Matrix::Identity(d_, d_) / d_);

  OutcomeEnsemble ens;
  Matrix hist = Matrix::Identity(big, big);  // product of failure projectors, latest on the left
  double survival = 1.0;
  for (int i = 0; i < n_; ++i) {
    const Matrix w = us_[i] * f;              // rd x rk isometry of Q_i
    const Matrix g = w.adjoint() * hist;      // K^dag Q_i K = g^dag g
    const double prob = g.squaredNorm() / big;
    if (prob > kProbFloor) {
      // Bob's steered conditional after his round correction, traced to B2
      const Matrix h = g * us_[i];
      const Matrix corrected = (h.adjoint() * h).conjugate() / (big * prob);
      Matrix joint = 0.5 * (corrected + corrected.adjoint());  // symmetrize roundoff
      Matrix target = qcore::partial_trace_raw(joint, {r_, d_}, {1});
      Outcome o;
      o.label = i;
      o.prob = prob;
      o.bob_state = shared_density(std::move(target));
      if (opts.include_joint) o.bob_joint = shared_density(std::move(joint), {r_, d_});
      ens.outcomes.push_back(std::move(o));
    }
    survival -= prob;
    if (survival <= 1e-12) {  // success was numerically certain
      survival = 0.0;
      break;
    }
    hist.noalias() -= w * g;  // (I - Q_i) K
  }
  if (survival > kProbFloor || ens.outcomes.empty()) {
    Outcome fail;
    fail.label = n_;
    fail.prob = std::max(0.0, survival);
    fail.bob_state = mixed;
    if (opts.include_joint) {
      // conditional state before Bob resets B2; used by majorization checks
      Matrix joint = (hist.adjoint() * hist).transpose() / (big * std::max(survival, kProbFloor));
      joint = 0.5 * (joint + joint.adjoint());
      fail.bob_joint = shared_density(std::move(joint), {r_, d_});
    }
    ens.outcomes.push_back(std::move(fail));
  }
  return ens;
}

std::vector<double> RejectionProtocol::survival_profile(const FlatInput& input) const {
  if (input.d != d_ || input.k != k_) throw ShapeError("input does not match protocol (d, k)");
  const long big = static_cast<long>(r_) * d_;
  const Matrix f = ancilla_frame(r_, projector_frame(input).conjugate());
  Matrix hist = Matrix::Identity(big, big);
  std::vector<double> out(n_);
  for (int i = 0; i < n_; ++i) {
    const Matrix w = us_[i] * f;
    const Matrix g = w.adjoint() * hist;
    hist.noalias() -= w * g;
    out[i] = hist.squaredNorm() / big;  // Tr(K^dag K)/big
  }
  return out;
}

// ---------------------------------------------------------------------------
// TrivialProtocol

TrivialProtocol::TrivialProtocol(int d, int k)
    : RspProtocol(d, k, 1, 0.0, Spectrum::uniform(1)) {}

OutcomeEnsemble TrivialProtocol::run_exact(const FlatInput& input, const RunOptions& opts) const {
  if (input.d != d_) throw ShapeError("input does not match protocol dimension");
  OutcomeEnsemble ens;
  auto mixed = shared_density(Matrix::Identity(d_, d_) / d_);
  ens.outcomes.push_back({0, 1.0, mixed, opts.include_joint ? mixed : nullptr});
  return ens;
}

// ---------------------------------------------------------------------------
// WorstCaseProtocol

WorstCaseProtocol::WorstCaseProtocol(std::shared_ptr<const RspProtocol> base, double delta,
                                     RandomNet net, std::uint64_t seed, int n_w, int threads)
    : RspProtocol(base->d(), base->k(), base->num_outcomes() * n_w, base->ebits(),
                  base->shared_state_spectrum()),
      base_(std::move(base)),
      delta_(delta),
      net_(std::move(net)),
      n_w_(n_w) {
  if (net_.d != d_ || net_.k != k_) throw ShapeError("net does not match protocol (d, k)");
  const auto stats = base_->batch_input_stats(net_.points, threads);
  net_errors_.resize(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) net_errors_[i] = stats[i].err;
  rotations_.resize(n_w_);
  const std::uint64_t useed = SeedStream::child(seed, 0x776f727374ull).bits();
  parallel_for(n_w_, threads, [&](std::size_t i) {
    SeedStream s = SeedStream::child(useed, i);
    rotations_[i] = qcore::haar_unitary(d_, s);
  });
}

std::shared_ptr<const RspProtocol> WorstCaseProtocol::wrap(std::shared_ptr<const RspProtocol> base,
                                                           double delta, RandomNet net,
                                                           std::uint64_t seed,
                                                           const Calibration& cal, int threads) {
  if (!(delta > 0.0)) throw DomainError("delta must be positive");
  if (delta >= 1.0) return base;  // the error budget is met by the base protocol as is
  const int n_w = worst_auto_n(delta, cal);
  return std::shared_ptr<const RspProtocol>(
      new WorstCaseProtocol(std::move(base), delta, std::move(net), seed, n_w, threads));
}

WorstCaseProtocol::Selection WorstCaseProtocol::select(const FlatInput& input) const {
  Selection best;
  for (int i = 0; i < n_w_; ++i) {
    const Matrix rotated = rotations_[i] * input.projector * rotations_[i].adjoint();
    for (std::size_t j = 0; j < net_.points.size(); ++j) {
      if (best.rotation >= 0 && net_errors_[j] >= best.base_error) continue;
      const double dist =
          qcore::trace_distance_herm(rotated / k_, net_.points[j].projector / static_cast<double>(k_));
      if (dist <= net_.target_radius) {
        best.rotation = i;
        best.net_index = static_cast<int>(j);
        best.base_error = net_errors_[j];
      }
    }
  }
  if (best.rotation < 0) throw ConstructionError("degenerate net: no point within the target radius");
  return best;
}

OutcomeEnsemble WorstCaseProtocol::run_exact(const FlatInput& input, const RunOptions& opts) const {
  const Selection sel = select(input);
  const Matrix& w = rotations_[sel.rotation];
  OutcomeEnsemble ens = base_->run_exact(net_.points[sel.net_index], opts);
  std::unordered_map<const DensityMatrix*, std::shared_ptr<const DensityMatrix>> memo;
  auto undo = [&](const std::shared_ptr<const DensityMatrix>& st,
                  bool target_only) -> std::shared_ptr<const DensityMatrix> {
    if (!st) return nullptr;
    auto it = memo.find(st.get());
    if (it != memo.end()) return it->second;
    Matrix m;
    if (target_only || st->dim() == d_) {
      m = w.adjoint() * st->mat() * w;
    } else {
      const Matrix big_w = qcore::kron_identity_left(st->dim() / d_, w);
      m = big_w.adjoint() * st->mat() * big_w;
    }
    auto converted = std::make_shared<const DensityMatrix>(Operator(std::move(m), st->registers()));
    memo.emplace(st.get(), converted);
    return converted;
  };
  for (auto& o : ens.outcomes) {
    o.label = o.label * n_w_ + sel.rotation;
    o.bob_state = undo(o.bob_state, true);
    o.bob_joint = undo(o.bob_joint, false);
  }
  return ens;
}

InputStats WorstCaseProtocol::input_stats(const FlatInput& input) const {
  const OutcomeEnsemble ens = run_exact(input);
  const DensityMatrix target = input.flat_state();
  InputStats st{0.0, 0.0, ens.message_entropy()};
  for (const auto& o : ens.outcomes) {
    st.err += o.prob * qcore::trace_distance(*o.bob_state, target);
    st.relaxed_err += o.prob * std::max(0.0, 1.0 - (input.projector * o.bob_state->mat()).trace().real());
  }
  return st;
}

// ---------------------------------------------------------------------------
// estimate_errors

ErrorEstimate estimate_errors(const RspProtocol& proto, int trials, std::uint64_t seed,
                              int adversarial_sweep, int threads) {
  if (trials < 1) throw DomainError("trials must be >= 1");
  const int total = trials + std::max(0, adversarial_sweep);
  std::vector<FlatInput> inputs(total);
  parallel_for(total, threads, [&](std::size_t t) {
    SeedStream s = SeedStream::child(seed, t);
    inputs[t] = qcore::sample_flat(proto.d(), proto.k(), s);
  });
  const std::vector<InputStats> stats = proto.batch_input_stats(inputs, threads);

  ErrorEstimate est;
  est.trials = trials;
  est.adversarial_sweep = std::max(0, adversarial_sweep);
  est.seed = seed;
  est.per_trial_err.resize(total);
  est.per_trial_entropy.resize(total);
  est.input_hash.resize(total);
  double sum_a = 0.0, sum_r = 0.0;
  for (int t = 0; t < total; ++t) {
    est.per_trial_err[t] = stats[t].err;
    est.per_trial_entropy[t] = stats[t].msg_entropy;
    est.input_hash[t] = hash_input(inputs[t]);
    est.eps_w_lower = std::max(est.eps_w_lower, stats[t].err);
    if (t < trials) {
      sum_a += stats[t].err;
      sum_r += stats[t].relaxed_err;
    }
  }
  est.eps_a = sum_a / trials;
  est.eps_r = sum_r / trials;
  double var_a = 0.0, var_r = 0.0;
  for (int t = 0; t < trials; ++t) {
    var_a += (stats[t].err - est.eps_a) * (stats[t].err - est.eps_a);
    var_r += (stats[t].relaxed_err - est.eps_r) * (stats[t].relaxed_err - est.eps_r);
  }
  if (trials > 1) {
    est.eps_a_stderr = std::sqrt(var_a / (trials - 1) / trials);
    est.eps_r_stderr = std::sqrt(var_r / (trials - 1) / trials);
  }
  return est;
}

// ---------------------------------------------------------------------------
// Codebook / equality

double Codebook::overlap(int i, int j) const {
  const Matrix g = isometries[i].adjoint() * isometries[j];
  return g.squaredNorm() / k;
}

Codebook build_codebook(int n, double eps, int d, int k, std::uint64_t seed, int sample_m,
                        double overlap_budget, const Calibration& cal, int threads) {
  if (sample_m < 0 || sample_m > 20) throw DomainError("sample_m must be in [0, 20]");
  if (!(eps > 0.0)) throw DomainError("eps must be positive");
  if (d <= 0) d = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)) / std::pow(eps, 1.5)));
  if (k <= 0) k = std::max(1, static_cast<int>(std::ceil(eps * d / 2.0)));
  if (k > d) throw DimensionError("codebook rank exceeds dimension");
  Codebook cb;
  cb.n_bits = n;
  cb.d = d;
  cb.k = k;
  cb.sample_m = sample_m;
  cb.seed = seed;
  cb.overlap_budget = overlap_budget > 0.0 ? overlap_budget : eps / 2.0;
  const std::size_t count = std::size_t(1) << sample_m;
  cb.all_pairs_checked = count <= 2048;

  std::vector<int> attempt(count, 0);
  auto sample_point = [&](std::size_t idx) {
    SeedStream s = SeedStream::child(seed, idx * 64 + attempt[idx]);
    const Matrix u = qcore::haar_unitary(d, s);
    cb.isometries[idx] = u.leftCols(k);
    cb.points[idx] = FlatInput(d, k, cb.isometries[idx] * cb.isometries[idx].adjoint());
  };
  cb.points.resize(count);
  cb.isometries.resize(count);
  parallel_for(count, threads, [&](std::size_t i) { sample_point(i); });

  // pair list: all pairs at desk scale, otherwise a seeded random subset
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  if (cb.all_pairs_checked) {
    for (std::uint32_t i = 0; i + 1 < count; ++i)
      for (std::uint32_t j = i + 1; j < count; ++j) pairs.emplace_back(i, j);
  } else {
    SeedStream s = SeedStream::child(seed, 0x7061697273ull);
    const std::size_t want = 8 * count;
    for (std::size_t t = 0; t < want; ++t) {
      auto i = static_cast<std::uint32_t>(s.below(count));
      auto j = static_cast<std::uint32_t>(s.below(count));
      if (i == j) continue;
      pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }

  for (int round = 0;; ++round) {
    std::vector<double> ov(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t t) {
      ov[t] = cb.overlap(static_cast<int>(pairs[t].first), static_cast<int>(pairs[t].second));
    });
    cb.max_overlap = 0.0;
    std::vector<bool> offending(count, false);
    bool any = false;
    for (std::size_t t = 0; t < pairs.size(); ++t) {
      cb.max_overlap = std::max(cb.max_overlap, ov[t]);
      if (ov[t] >= cb.overlap_budget) {
        offending[pairs[t].second] = true;
        any = true;
      }
    }
    if (!any) return cb;
    if (round + 1 >= cal.retry_cap)
      throw ConstructionError("infeasible codebook: max pairwise overlap " +
                              std::to_string(cb.max_overlap) + " vs budget " +
                              std::to_string(cb.overlap_budget));
    for (std::size_t i = 0; i < count; ++i) {
      if (offending[i]) {
        ++attempt[i];
        sample_point(i);
      }
    }
  }
}

EqualityResult run_equality(const Codebook& cb, const RspProtocol& rsp, std::uint32_t x,
                            std::uint32_t y, SeedStream& rng, const OutcomeEnsemble* precomputed) {
  if (x >= cb.points.size() || y >= cb.points.size()) throw DomainError("codeword index out of range");
  if (cb.d != rsp.d() || cb.k != rsp.k()) throw ShapeError("codebook does not match the RSP protocol");
  OutcomeEnsemble local;
  const OutcomeEnsemble& ens = precomputed ? *precomputed : (local = rsp.run_exact(cb.points[x]), local);
  const Matrix& py = cb.points[y].projector;
  std::unordered_map<const DensityMatrix*, double> memo;
  double accept = 0.0;
  for (const auto& o : ens.outcomes) {
    auto it = memo.find(o.bob_state.get());
    double val;
    if (it == memo.end()) {
      val = (py * o.bob_state->mat()).trace().real();
      memo.emplace(o.bob_state.get(), val);
    } else {
      val = it->second;
    }
    accept += o.prob * val;
  }
  accept = std::clamp(accept, 0.0, 1.0);
  EqualityResult res;
  res.accept_prob = accept;
  res.verdict = rng.uniform() < accept;
  return res;
}

}  // namespace rsp::protocols
