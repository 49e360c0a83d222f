#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rsp/verify.hpp"

using namespace rsp;
using namespace rsp::verify;
using protocols::KrausProtocol;
using protocols::RejectionProtocol;
using protocols::TrivialProtocol;
using qcore::Cplx;
using qcore::DensityMatrix;
using qcore::FlatInput;
using qcore::Matrix;
using qcore::Operator;
using qcore::Spectrum;
using qcore::Vector;

TEST_CASE("sdp closed form") {
  SeedStream rng(51);
  SUBCASE("coincident projectors saturate") {
    const Matrix p = qcore::sample_flat(5, 2, rng).projector;
    CHECK(sdp_closed_form(p, p, 0.4) == 1.0);
  }
  SUBCASE("orthogonal projectors give the truncated value") {
    Matrix p = Matrix::Zero(4, 4), q = Matrix::Zero(4, 4);
    p(0, 0) = 1.0;
    q(1, 1) = q(2, 2) = 1.0;
    CHECK(std::abs(sdp_closed_form(p, q, 0.5) - 0.5) < 1e-12);
  }
  SUBCASE("rank-one qubit case by hand") {
    Vector phi(2);
    phi << 0.6, 0.8;
    const Matrix p = phi * phi.adjoint();
    Matrix q = Matrix::Zero(2, 2);
    q(0, 0) = 1.0;
    CHECK(std::abs(sdp_closed_form(p, q, 0.64) - 0.9216) < 1e-12);
  }
  SUBCASE("rejects non-projectors") {
    CHECK_THROWS_AS(sdp_closed_form(Matrix::Identity(2, 2) * 0.5, Matrix::Identity(2, 2), 0.5),
                    DomainError);
  }
}

TEST_CASE("sdp oracle is feasible and reaches the closed form") {
  SeedStream rng(52);
  SUBCASE("coincident projectors") {
    const Matrix p = qcore::sample_flat(4, 2, rng).projector;
    CHECK(sdp_oracle(p, p, 0.3, 8, rng) > 1.0 - 1e-6);
  }
  SUBCASE("sandwich against the closed form") {
    for (int t = 0; t < 25; ++t) {
      const int d = 2 + static_cast<int>(rng.below(5));
      const int kp = 1 + static_cast<int>(rng.below(std::max(1, d - 1)));
      const int kq = 1 + static_cast<int>(rng.below(std::max(1, d - 1)));
      const Matrix p = qcore::sample_flat(d, kp, rng).projector;
      const Matrix q = qcore::sample_flat(d, kq, rng).projector;
      const double tt = 0.05 + 0.9 * rng.uniform();
      const double closed = sdp_closed_form(p, q, tt);
      const double oracle = sdp_oracle(p, q, tt, 50, rng);
      CHECK(oracle <= closed + 1e-9);
      CHECK(oracle >= closed - 1e-4);
    }
  }
  SUBCASE("bloch brute force agrees at d=2") {
    for (int t = 0; t < 10; ++t) {
      const Matrix p = qcore::sample_flat(2, 1, rng).projector;
      const Matrix q = qcore::sample_flat(2, 1, rng).projector;
      const double tt = 0.05 + 0.9 * rng.uniform();
      CHECK(std::abs(sdp_bloch_brute_force(p, q, tt) - sdp_closed_form(p, q, tt)) < 1e-4);
    }
  }
}

TEST_CASE("jordan principal overlap") {
  SeedStream rng(53);
  const Matrix p = qcore::sample_flat(5, 2, rng).projector;
  CHECK(std::abs(jordan_principal_overlap(p, p) - 1.0) < 1e-10);

  Matrix a = Matrix::Zero(4, 4), b = Matrix::Zero(4, 4);
  a(0, 0) = 1.0;
  b(1, 1) = 1.0;
  CHECK(jordan_principal_overlap(a, b) < 1e-12);

  SUBCASE("qubit pair at a known angle") {
    const double theta = 1.1;
    Vector phi(2);
    phi << std::cos(theta / 2), std::sin(theta / 2);
    Matrix q = Matrix::Zero(2, 2);
    q(0, 0) = 1.0;
    CHECK(std::abs(jordan_principal_overlap(phi * phi.adjoint(), q) -
                   std::cos(theta / 2) * std::cos(theta / 2)) < 1e-12);
  }
  SUBCASE("symmetry") {
    for (int t = 0; t < 20; ++t) {
      const int d = 2 + static_cast<int>(rng.below(5));
      const Matrix x = qcore::sample_flat(d, 1 + rng.below(d), rng).projector;
      const Matrix y = qcore::sample_flat(d, 1 + rng.below(d), rng).projector;
      CHECK(std::abs(jordan_principal_overlap(x, y) - jordan_principal_overlap(y, x)) < 1e-10);
    }
  }
}

namespace {

class NoJointProtocol : public protocols::RspProtocol {
 public:
  NoJointProtocol() : RspProtocol(2, 1, 1, 0.0, Spectrum::uniform(1)) {}
  protocols::OutcomeEnsemble run_exact(const FlatInput& input,
                                       const protocols::RunOptions&) const override {
    protocols::OutcomeEnsemble ens;
    auto st = std::make_shared<const DensityMatrix>(input.flat_state());
    ens.outcomes.push_back({0, 1.0, st, nullptr});
    return ens;
  }
};

}  // namespace

TEST_CASE("majorization bound check") {
  SeedStream rng(54);
  SUBCASE("measurement-operator protocol over a finite prior") {
    std::vector<Matrix> us(8);
    for (auto& u : us) u = qcore::haar_unitary(4, rng);
    const KrausProtocol proto = KrausProtocol::from_unitaries(4, 1, us);
    std::vector<FlatInput> prior;
    for (int i = 0; i < 16; ++i) prior.push_back(qcore::sample_flat(4, 1, rng));
    const AuditReport rep = check_majorization_bound(proto, prior);
    CHECK(rep.pass);
    CHECK(rep.margin >= -1e-8);
  }
  SUBCASE("rejection protocol over a finite prior") {
    std::vector<Matrix> us(3);
    for (auto& u : us) u = qcore::haar_unitary(8, rng);
    const RejectionProtocol proto = RejectionProtocol::from_unitaries(4, 1, 2, us);
    std::vector<FlatInput> prior;
    for (int i = 0; i < 6; ++i) prior.push_back(qcore::sample_flat(4, 1, rng));
    const AuditReport rep = check_majorization_bound(proto, prior);
    CHECK(rep.pass);
  }
  SUBCASE("single-input exact protocol reduces to a deterministic check") {
    std::vector<Matrix> us{qcore::haar_unitary(3, rng)};
    const KrausProtocol proto = KrausProtocol::from_unitaries(3, 3, us);
    const AuditReport rep = check_majorization_bound(proto, {FlatInput(3, 3, Matrix::Identity(3, 3))});
    CHECK(rep.pass);
  }
  SUBCASE("protocols without joint states are rejected") {
    const NoJointProtocol proto;
    CHECK_THROWS_AS(check_majorization_bound(proto, {qcore::sample_flat(2, 1, rng)}),
                    StructureError);
  }
}

TEST_CASE("decoupling experiment") {
  SUBCASE("maximally mixed input decouples exactly") {
    const int d1 = 4, d2 = 4;
    const DensityMatrix rho{Operator(Matrix::Identity(16, 16) / 16.0, {d1, d2, 1})};
    const auto rep = decoupling_experiment(d1, d2, 2, rho, 1, 25, 55, 2);
    CHECK(rep.plain_lhs2 < 1e-12);
    CHECK(rep.post_lhs < 1e-12);
  }
  SUBCASE("plain 2-norm bound holds for random mixed states") {
    SeedStream rng(56);
    const int d1 = 4, d2 = 4, dim = 16;
    for (int t = 0; t < 3; ++t) {
      Matrix g(dim, dim);
      for (int i = 0; i < dim * dim; ++i) g(i / dim, i % dim) = Cplx(rng.gaussian(), rng.gaussian());
      Matrix m = g * g.adjoint();
      m /= m.trace().real();
      const DensityMatrix rho{Operator(m, {d1, d2, 1})};
      const auto rep = decoupling_experiment(d1, d2, 1, rho, 1, 60, 57 + t, 2);
      CHECK(rep.plain_lhs2 <= rep.plain_rhs2 + 3.0 * rep.plain_lhs2_stderr);
      CHECK(rep.plain_lhs1 <= rep.plain_rhs1 + 3.0 * rep.plain_lhs1_stderr);
    }
  }
  SUBCASE("post-selected ratio stays within the calibrated budget") {
    SeedStream rng(58);
    const Calibration cal;
    const int d1 = 4, d2 = 4, dim = 16;
    for (int t = 0; t < 3; ++t) {
      Vector psi(dim);
      for (int i = 0; i < dim; ++i) psi(i) = Cplx(rng.gaussian(), rng.gaussian());
      psi.normalize();
      const DensityMatrix rho{Operator(psi * psi.adjoint(), {d1, d2, 1})};
      const auto rep = decoupling_experiment(d1, d2, 2, rho, 1, 60, 60 + t, 2);
      CHECK(rep.post_ratio <= cal.decouple_c_total);
    }
  }
  SUBCASE("environment register is respected") {
    // rho = Phi+ on (A1A2) x E with E maximally entangled against A:
    // conditioning makes H2(A|E) = -log2(dA), strengthening the bound
    const int d1 = 2, d2 = 2, dA = 4;
    const DensityMatrix rho{
        Operator(qcore::maximally_entangled(dA).density().mat(), {d1, d2, dA})};
    const auto rep = decoupling_experiment(d1, d2, 1, rho, dA, 30, 61, 2);
    CHECK(std::abs(rep.h2_cond_surrogate + 2.0) < 1e-9);
    CHECK(rep.plain_lhs2 <= rep.plain_rhs2 + 3.0 * rep.plain_lhs2_stderr);
  }
}

TEST_CASE("concentration experiments") {
  SUBCASE("identity observable has zero variance") {
    const int d = 6, k = 2;
    const Matrix eye = Matrix::Identity(d, d);
    const auto table = concentration_experiment(d, k, ConcentrationKind::TraceFunctional, 200, 62,
                                                2, 2, 1, &eye);
    CHECK(std::abs(table.mean - k) < 1e-10);
    CHECK(table.stderr_mean < 1e-10);
    CHECK(table.mean_within_3sigma);
  }
  SUBCASE("random observable mean matches (k/d) Tr A") {
    const auto table =
        concentration_experiment(16, 2, ConcentrationKind::TraceFunctional, 2000, 63, 4);
    CHECK(table.mean_within_3sigma);
    CHECK(table.tails_monotone);
  }
  SUBCASE("spectral functional tails are monotone") {
    const auto table =
        concentration_experiment(8, 2, ConcentrationKind::SpectralFunctional, 400, 64, 4, 2, 2);
    CHECK(table.tails_monotone);
    CHECK(table.mean >= 0.0);
  }
}

TEST_CASE("eigenvalue-sum bound") {
  SeedStream rng(65);
  SUBCASE("point mass supported inside I (x) P has eps = 0") {
    const int d = 8, k = 2, rb = 2;
    const FlatInput p = qcore::sample_flat(d, k, rng);
    const Matrix omega = qcore::kron_identity_left(rb, p.projector) / (rb * k);
    std::vector<WeightedState> family{
        {1.0, p, DensityMatrix{Operator(omega, {rb, d})}}};
    const AuditReport rep = check_eigval_bound(family, 1.0, 1, 3.0);
    CHECK(rep.parameters.at("eps") < 1e-12);
    CHECK(rep.pass);
  }
  SUBCASE("uniform family at K=1, l=1, d=16 passes with the default constant") {
    const int d = 16, k = 1, rb = 2, points = 32;
    std::vector<WeightedState> family;
    for (int i = 0; i < points; ++i) {
      const FlatInput p = qcore::sample_flat(d, k, rng);
      const Matrix omega = qcore::kron_identity_left(rb, p.projector) / (rb * k);
      family.push_back({1.0 / points, p, DensityMatrix{Operator(omega, {rb, d})}});
    }
    const AuditReport rep = check_eigval_bound(family, 1.0, 1, 3.0);
    CHECK(rep.pass);
  }
  SUBCASE("full prefix saturates both sides") {
    const int d = 4, k = 2, rb = 2;
    const FlatInput p = qcore::sample_flat(d, k, rng);
    const Matrix omega = qcore::kron_identity_left(rb, p.projector) / (rb * k);
    std::vector<WeightedState> family{
        {1.0, p, DensityMatrix{Operator(omega, {rb, d})}}};
    const AuditReport rep = check_eigval_bound(family, 1.0, rb * d, 3.0);
    CHECK(std::abs(rep.lhs - 1.0) < 1e-9);
    CHECK(rep.rhs == 1.0);
    CHECK(rep.pass);
  }
  SUBCASE("weights must sum to one") {
    const FlatInput p = qcore::sample_flat(4, 1, rng);
    const Matrix omega = qcore::kron_identity_left(2, p.projector) / 2.0;
    std::vector<WeightedState> family{
        {0.5, p, DensityMatrix{Operator(omega, {2, 4})}}};
    CHECK_THROWS_AS(check_eigval_bound(family, 1.0, 1, 3.0), ValidationError);
  }
}

TEST_CASE("resource audits") {
  SUBCASE("the no-communication baseline passes trivially") {
    const int d = 8, k = 1;
    const auto [comm, ent] = audit_resource_bounds(d, k, 0, Spectrum({1.0}), 1.0 - 1.0 / 8, 0.5,
                                                   3.0, 4.0);
    CHECK(comm.pass);
    CHECK(ent.pass);
  }
  SUBCASE("an impossible synthetic report fails the communication audit") {
    const auto [comm, ent] = audit_resource_bounds(8, 1, 0, Spectrum::uniform(8), 0.1, 0.5, 3.0, 4.0);
    CHECK_FALSE(comm.pass);
    CHECK(comm.margin < 0.0);
    (void)ent;
  }
  SUBCASE("uniform shared spectrum passes the entanglement audit at any smoothing") {
    const auto [comm, ent] = audit_resource_bounds(8, 1, 11, Spectrum::uniform(8), 0.1, 0.5, 3.0, 4.0);
    CHECK(comm.pass);
    CHECK(ent.pass);
    CHECK(ent.vacuous);  // m = 11 >> d saturates the smoothing
  }
  SUBCASE("delta grows with the reported message size") {
    double prev = -1.0;
    for (int m : {0, 1, 2, 4, 8, 16}) {
      const auto [comm, ent] =
          audit_resource_bounds(64, 1, m, Spectrum::uniform(64), 0.1, 0.3, 3.0, 4.0);
      const double delta = ent.parameters.at("delta");
      CHECK(delta >= prev - 1e-12);
      prev = delta;
      CHECK(ent.pass);  // honest uniform spectrum always satisfies the bound
      (void)comm;
    }
  }
  SUBCASE("gamma domain") {
    CHECK_THROWS_AS(audit_resource_bounds(8, 1, 3, Spectrum::uniform(8), 0.1, 1.5, 3.0, 4.0),
                    DomainError);
  }
}
