#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "rsp/protocols.hpp"
#include "testkit.hpp"

using namespace rsp;
using namespace rsp::protocols;
using qcore::Cplx;
using qcore::DensityMatrix;
using qcore::FlatInput;
using qcore::Matrix;
using qcore::Operator;

namespace {

double dist_to_flat(const DensityMatrix& state, const FlatInput& p) {
  return qcore::trace_distance(state, p.flat_state());
}

/// Idealized zero-error protocol for exercising the equality contract.
class ExactProtocol : public RspProtocol {
 public:
  ExactProtocol(int d, int k) : RspProtocol(d, k, 1, std::log2(double(d)), qcore::Spectrum::uniform(d)) {}
  OutcomeEnsemble run_exact(const FlatInput& input, const RunOptions& opts) const override {
    OutcomeEnsemble ens;
    auto st = std::make_shared<const DensityMatrix>(input.flat_state());
    ens.outcomes.push_back({0, 1.0, st, opts.include_joint ? st : nullptr});
    return ens;
  }
};

}  // namespace

TEST_CASE("measurement-operator protocol: success branches are exact") {
  SeedStream rng(31);
  for (int t = 0; t < 12; ++t) {
    const int d = 2 + static_cast<int>(rng.below(7));
    const int k = 1 + static_cast<int>(rng.below(d));
    std::vector<Matrix> us(6);
    for (auto& u : us) u = qcore::haar_unitary(d, rng);
    const KrausProtocol proto = KrausProtocol::from_unitaries(d, k, us);
    const FlatInput p = qcore::sample_flat(d, k, rng);
    const OutcomeEnsemble ens = proto.run_exact(p);
    ens.validate();
    REQUIRE(ens.outcomes.size() == 7);
    for (int i = 0; i < 6; ++i) CHECK(dist_to_flat(*ens.outcomes[i].bob_state, p) < 1e-9);
    CHECK(dist_to_flat(*ens.outcomes[6].bob_state, p) > 0.0);  // heralded mixed branch
  }
}

TEST_CASE("measurement-operator protocol: completeness and failure identity") {
  SeedStream rng(32);
  const int d = 6, k = 2, n = 16;
  std::vector<Matrix> us(n);
  for (auto& u : us) u = qcore::haar_unitary(d, rng);
  const KrausProtocol proto = KrausProtocol::from_unitaries(d, k, us);
  const FlatInput p = qcore::sample_flat(d, k, rng);

  // rebuild the measurement from the protocol's own unitaries
  Matrix m = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const Matrix c = proto.unitary(i) * p.projector.conjugate() * proto.unitary(i).adjoint();
    m += c;
  }
  m *= static_cast<double>(d) / (k * n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const double norm = es.eigenvalues().maxCoeff();

  // M_e^2 + sum_i M_i^dag M_i = I
  Matrix total = Matrix::Identity(d, d) - m / norm;
  for (int i = 0; i < n; ++i) {
    const Matrix c = proto.unitary(i) * p.projector.conjugate() * proto.unitary(i).adjoint();
    total += c * (static_cast<double>(d) / (k * n * norm));
  }
  CHECK((total - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-9);

  const OutcomeEnsemble ens = proto.run_exact(p);
  const double p_fail = ens.outcomes.back().prob;
  CHECK(std::abs(p_fail - (1.0 - 1.0 / norm)) < 1e-10);
  // independent recomputation from the error element: Tr(M_e^2 I/d)
  const double fail_from_elements = (Matrix::Identity(d, d) - m / norm).trace().real() / d;
  CHECK(std::abs(p_fail - fail_from_elements) < 1e-10);
  // every success outcome has the same probability 1/(N ||M||)
  for (int i = 0; i < n; ++i) CHECK(std::abs(ens.outcomes[i].prob - 1.0 / (n * norm)) < 1e-12);
}

TEST_CASE("measurement-operator protocol: degenerate shapes") {
  SeedStream rng(33);
  SUBCASE("k = d never fails") {
    const int d = 5;
    std::vector<Matrix> us(3);
    for (auto& u : us) u = qcore::haar_unitary(d, rng);
    const KrausProtocol proto = KrausProtocol::from_unitaries(d, d, us);
    const FlatInput p(d, d, Matrix::Identity(d, d));
    const OutcomeEnsemble ens = proto.run_exact(p);
    CHECK(ens.outcomes.back().prob < 1e-12);
    CHECK(dist_to_flat(*ens.outcomes[0].bob_state, p) < 1e-12);
  }
  SUBCASE("single unitary, rank one: failure probability 1 - 1/d") {
    const int d = 7;
    std::vector<Matrix> us{qcore::haar_unitary(d, rng)};
    const KrausProtocol proto = KrausProtocol::from_unitaries(d, 1, us);
    const FlatInput p = qcore::sample_flat(d, 1, rng);
    const OutcomeEnsemble ens = proto.run_exact(p);
    CHECK(std::abs(ens.outcomes.back().prob - (1.0 - 1.0 / d)) < 1e-10);
  }
}

TEST_CASE("measurement-operator protocol: auto sizing and validation") {
  const Calibration cal;
  CHECK(kraus_auto_n(8, 1, 0.25, cal) == 1536);
  KrausProtocol::Params params;
  params.d = 4;
  params.k = 1;
  params.eps_a = 0.4;
  params.seed = 5;
  params.validation_probes = 8;
  const KrausProtocol proto = KrausProtocol::build(params, cal, 2);
  CHECK(proto.n_unitaries() == kraus_auto_n(4, 1, 0.4, cal));
  CHECK(proto.message_bits() == static_cast<int>(std::ceil(std::log2(proto.n_unitaries() + 1))));
  CHECK(proto.average_failure(8, 77, 2) <= 0.4);
}

TEST_CASE("rejection protocol: auto sizing matches the resource formulas") {
  const Calibration cal;
  CHECK(rejection_auto_n(8, 1, 0.25, cal) == 14);
  CHECK(rejection_auto_r(0.25, cal) == 16);
}

TEST_CASE("rejection protocol: k = d succeeds in one round exactly") {
  SeedStream rng(34);
  const int d = 3, r = 2;
  std::vector<Matrix> us(2);
  for (auto& u : us) u = qcore::haar_unitary(r * d, rng);
  const RejectionProtocol proto = RejectionProtocol::from_unitaries(d, d, r, us);
  const FlatInput p(d, d, Matrix::Identity(d, d));
  const OutcomeEnsemble ens = proto.run_exact(p);
  REQUIRE(ens.outcomes.size() == 1);
  CHECK(std::abs(ens.outcomes[0].prob - 1.0) < 1e-12);
  CHECK(dist_to_flat(*ens.outcomes[0].bob_state, p) < 1e-12);
}

TEST_CASE("rejection protocol: ensemble matches the four-register simulation") {
  SeedStream rng(35);
  for (auto [d, k, r, n] : std::vector<std::array<int, 4>>{{3, 1, 2, 4}, {4, 2, 3, 5}, {2, 1, 4, 6}}) {
    std::vector<Matrix> us(n);
    for (auto& u : us) u = qcore::haar_unitary(r * d, rng);
    const RejectionProtocol proto = RejectionProtocol::from_unitaries(d, k, r, us);
    for (int t = 0; t < 4; ++t) {
      const FlatInput p = qcore::sample_flat(d, k, rng);
      const OutcomeEnsemble ens = proto.run_exact(p);
      ens.validate();
      const auto oracle = testkit::rejection_full_sim(proto, p);
      REQUIRE(ens.outcomes.size() == oracle.size());
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        CHECK(std::abs(ens.outcomes[i].prob - oracle[i].prob) < 1e-10);
        CHECK((ens.outcomes[i].bob_state->mat() - oracle[i].bob_target).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
}

TEST_CASE("rejection protocol: joint conditionals have unit trace and validate") {
  SeedStream rng(36);
  const RejectionProtocol proto =
      RejectionProtocol::from_unitaries(3, 1, 2, {qcore::haar_unitary(6, rng), qcore::haar_unitary(6, rng)});
  RunOptions opts;
  opts.include_joint = true;
  const OutcomeEnsemble ens = proto.run_exact(qcore::sample_flat(3, 1, rng), opts);
  for (const auto& o : ens.outcomes) {
    REQUIRE(o.bob_joint != nullptr);
    CHECK(std::abs(o.bob_joint->mat().trace().real() - 1.0) < 1e-9);
  }
}

TEST_CASE("rejection protocol: survival products follow the geometric law") {
  SeedStream rng(37);
  const int d = 8, k = 2, r = 2, rounds = 5, trials = 150;
  const FlatInput p = qcore::sample_flat(d, k, rng);
  std::vector<double> mean(rounds, 0.0), m2(rounds, 0.0);
  for (int t = 0; t < trials; ++t) {
    std::vector<Matrix> us(rounds);
    for (auto& u : us) u = qcore::haar_unitary(r * d, rng);
    const RejectionProtocol proto = RejectionProtocol::from_unitaries(d, k, r, us);
    const auto surv = proto.survival_profile(p);
    for (int i = 0; i < rounds; ++i) {
      mean[i] += surv[i];
      m2[i] += surv[i] * surv[i];
    }
  }
  for (int i = 0; i < rounds; ++i) {
    mean[i] /= trials;
    const double var = m2[i] / trials - mean[i] * mean[i];
    const double sigma = std::sqrt(std::max(var, 0.0) / trials);
    const double target = std::pow(1.0 - static_cast<double>(k) / d, i + 1);
    CHECK(std::abs(mean[i] - target) <= 3.0 * sigma + 1e-9);
  }
}

TEST_CASE("error estimation") {
  SeedStream rng(38);
  SUBCASE("trivial protocol has the closed-form error") {
    const TrivialProtocol proto(8, 2);
    const ErrorEstimate est = estimate_errors(proto, 20, 99, 10, 2);
    CHECK(std::abs(est.eps_a - 0.75) < 1e-9);
    CHECK(std::abs(est.eps_r - 0.75) < 1e-9);
    CHECK(std::abs(est.eps_w_lower - 0.75) < 1e-9);
    CHECK(est.eps_a_stderr < 1e-12);
  }
  SUBCASE("exact protocol has zero error") {
    const int d = 4;
    std::vector<Matrix> us{qcore::haar_unitary(d, rng)};
    const KrausProtocol proto = KrausProtocol::from_unitaries(d, d, us);
    const ErrorEstimate est = estimate_errors(proto, 10, 7, 0, 1);
    CHECK(est.eps_a < 1e-9);
    CHECK(est.eps_r < 1e-9);
    CHECK(est.eps_w_lower < 1e-9);
  }
  SUBCASE("relaxed error never exceeds the average error") {
    std::vector<Matrix> us(8);
    for (auto& u : us) u = qcore::haar_unitary(6, rng);
    const KrausProtocol proto = KrausProtocol::from_unitaries(6, 2, us);
    const ErrorEstimate est = estimate_errors(proto, 30, 1234, 0, 2);
    CHECK(est.eps_r <= est.eps_a + 3.0 * est.eps_a_stderr + 1e-12);
    CHECK(est.eps_w_lower >= est.eps_a - 3.0 * est.eps_a_stderr);
  }
  SUBCASE("estimates are schedule independent") {
    std::vector<Matrix> us(4);
    for (auto& u : us) u = qcore::haar_unitary(4, rng);
    const KrausProtocol proto = KrausProtocol::from_unitaries(4, 1, us);
    const ErrorEstimate a = estimate_errors(proto, 16, 5, 4, 1);
    const ErrorEstimate b = estimate_errors(proto, 16, 5, 4, 8);
    CHECK(a.eps_a == b.eps_a);
    CHECK(a.eps_r == b.eps_r);
    CHECK(a.eps_w_lower == b.eps_w_lower);
  }
}

TEST_CASE("worst-case wrapper") {
  SeedStream rng(39);
  const Calibration cal;
  SUBCASE("delta >= 1 returns the base protocol unchanged") {
    std::vector<Matrix> us(4);
    for (auto& u : us) u = qcore::haar_unitary(2, rng);
    auto base = std::make_shared<const KrausProtocol>(KrausProtocol::from_unitaries(2, 1, us));
    auto net = grassmann::build_random_net(2, 1, 0.3, 8, rng);
    auto wrapped = WorstCaseProtocol::wrap(base, 1.0, net, 3, cal, 1);
    CHECK(wrapped.get() == base.get());
  }
  SUBCASE("exact base stays exact through the wrapper") {
    const int d = 3;
    std::vector<Matrix> us{qcore::haar_unitary(d, rng)};
    auto base = std::make_shared<const KrausProtocol>(KrausProtocol::from_unitaries(d, d, us));
    auto net = grassmann::build_random_net(d, d, 0.2, 4, rng);
    auto wrapped = WorstCaseProtocol::wrap(base, 0.5, net, 4, cal, 1);
    const FlatInput p(d, d, Matrix::Identity(d, d));
    CHECK(wrapped->input_stats(p).err < 1e-9);
  }
  SUBCASE("message accounting adds the rotation index") {
    std::vector<Matrix> us(3);
    for (auto& u : us) u = qcore::haar_unitary(2, rng);
    auto base = std::make_shared<const KrausProtocol>(KrausProtocol::from_unitaries(2, 1, us));
    auto net = grassmann::build_random_net(2, 1, 0.9, 16, rng);
    auto wrapped = WorstCaseProtocol::wrap(base, 0.5, net, 5, cal, 1);
    const auto* w = dynamic_cast<const WorstCaseProtocol*>(wrapped.get());
    REQUIRE(w != nullptr);
    const int extra = static_cast<int>(std::ceil(std::log2(w->n_rotations())));
    CHECK(wrapped->message_bits() == base->message_bits() + extra);
  }
  SUBCASE("wrapped error stays within the budget at d=2") {
    std::vector<Matrix> us(89);
    for (auto& u : us) u = qcore::haar_unitary(2, rng);
    auto base = std::make_shared<const KrausProtocol>(KrausProtocol::from_unitaries(2, 1, us));
    auto net = grassmann::build_random_net(2, 1, 0.05, 300, rng);
    auto wrapped = WorstCaseProtocol::wrap(base, 0.2, net, 6, cal, 2);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const FlatInput p = qcore::sample_flat(2, 1, rng);
      worst = std::max(worst, wrapped->input_stats(p).err);
    }
    CHECK(worst <= 0.3 + 0.2 + 0.05);
  }
  SUBCASE("degenerate net throws") {
    std::vector<Matrix> us(2);
    for (auto& u : us) u = qcore::haar_unitary(2, rng);
    auto base = std::make_shared<const KrausProtocol>(KrausProtocol::from_unitaries(2, 1, us));
    auto net = grassmann::build_random_net(2, 1, 1e-6, 1, rng);
    auto wrapped = WorstCaseProtocol::wrap(base, 0.9, net, 7, cal, 1);
    CHECK_THROWS_AS((void)wrapped->run_exact(qcore::sample_flat(2, 1, rng)), ConstructionError);
  }
}

TEST_CASE("codebook construction") {
  const Calibration cal;
  SUBCASE("auto sizing") {
    const Codebook cb = build_codebook(64, 0.25, 0, 0, 11, 1, 0.5, cal, 2);
    CHECK(cb.d == 64);
    CHECK(cb.k == 8);
    CHECK(cb.points.size() == 2);
    CHECK(cb.all_pairs_checked);
  }
  SUBCASE("pairwise overlap concentrates at k/d") {
    const int reps = 120;
    double mean = 0.0, m2 = 0.0;
    for (int s = 0; s < reps; ++s) {
      const Codebook cb = build_codebook(16, 0.5, 32, 2, 1000 + s, 1, 0.9, cal, 1);
      const double ov = cb.overlap(0, 1);
      mean += ov;
      m2 += ov * ov;
    }
    mean /= reps;
    const double sigma = std::sqrt(std::max(0.0, m2 / reps - mean * mean) / reps);
    CHECK(std::abs(mean - 2.0 / 32.0) <= 3.0 * sigma + 1e-3);
  }
  SUBCASE("identical projectors are infeasible below budget 1") {
    CHECK_THROWS_AS(build_codebook(8, 0.5, 3, 3, 13, 2, 0.0, cal, 1), ConstructionError);
  }
}

TEST_CASE("equality protocol") {
  SeedStream rng(41);
  SUBCASE("exact subroutine: equal accepts, orthogonal rejects") {
    Codebook cb;
    cb.n_bits = 4;
    cb.d = 4;
    cb.k = 1;
    cb.sample_m = 1;
    cb.overlap_budget = 0.5;
    Matrix p0 = Matrix::Zero(4, 4), p1 = Matrix::Zero(4, 4);
    p0(0, 0) = 1.0;
    p1(1, 1) = 1.0;
    cb.points = {FlatInput(4, 1, p0), FlatInput(4, 1, p1)};
    cb.isometries = {p0.leftCols(1), p1.col(1)};
    const ExactProtocol proto(4, 1);
    const auto same = run_equality(cb, proto, 0, 0, rng);
    CHECK(std::abs(same.accept_prob - 1.0) < 1e-12);
    CHECK(same.verdict);
    const auto diff = run_equality(cb, proto, 0, 1, rng);
    CHECK(diff.accept_prob < 1e-12);
    CHECK_FALSE(diff.verdict);
  }
  SUBCASE("acceptance bounded by worst-case error plus overlap") {
    const Calibration cal;
    const Codebook cb = build_codebook(8, 0.5, 8, 2, 17, 3, 0.9, cal, 2);
    std::vector<Matrix> us(64);
    for (auto& u : us) u = qcore::haar_unitary(8, rng);
    const KrausProtocol proto = KrausProtocol::from_unitaries(8, 2, us);
    for (int t = 0; t < 10; ++t) {
      const auto x = static_cast<std::uint32_t>(rng.below(cb.points.size()));
      auto y = static_cast<std::uint32_t>(rng.below(cb.points.size()));
      if (y == x) y = (y + 1) % cb.points.size();
      const auto res = run_equality(cb, proto, x, y, rng);
      const double eps_w_x = proto.input_stats(cb.points[x]).err;
      CHECK(res.accept_prob <= eps_w_x + cb.overlap(x, y) + 1e-9);
    }
  }
  SUBCASE("dimension mismatch") {
    const Calibration cal;
    const Codebook cb = build_codebook(8, 0.5, 8, 2, 19, 1, 0.9, cal, 1);
    const ExactProtocol proto(4, 1);
    CHECK_THROWS_AS(run_equality(cb, proto, 0, 1, rng), ShapeError);
  }
}

TEST_CASE("outcome bookkeeping invariants") {
  SeedStream rng(42);
  std::vector<Matrix> us(5);
  for (auto& u : us) u = qcore::haar_unitary(4, rng);
  const KrausProtocol kraus = KrausProtocol::from_unitaries(4, 1, us);
  CHECK(kraus.num_outcomes() == 6);
  CHECK(kraus.message_bits() == 3);

  std::vector<Matrix> rus(3);
  for (auto& u : rus) u = qcore::haar_unitary(8, rng);
  const RejectionProtocol rej = RejectionProtocol::from_unitaries(4, 1, 2, rus);
  CHECK(rej.num_outcomes() == 4);
  CHECK(rej.message_bits() == 2);
  CHECK(rej.ebits() == doctest::Approx(3.0));
  CHECK(rej.shared_state_spectrum().size() == 8);

  const OutcomeEnsemble ens = rej.run_exact(qcore::sample_flat(4, 1, rng));
  ens.validate();
  CHECK(std::abs(ens.total_prob() - 1.0) < 1e-9);
}
