#include "rsp/verify.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "rsp/entropy.hpp"
#include "rsp/grassmann.hpp"
#include "rsp/parallel.hpp"

namespace rsp::verify {

namespace {

using grassmann::truncated_fidelity;
using qcore::Cplx;
using qcore::Operator;
using qcore::Vector;

void require_projector(const Matrix& p, double tol) {
  if (p.rows() != p.cols()) throw ShapeError("projector must be square");
  if ((p * p - p).cwiseAbs().maxCoeff() > tol) throw DomainError("matrix is not a projector");
}

double top_eig(const Matrix& herm) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

double sdp_closed_form(const Matrix& p, const Matrix& q, double t) {
  require_projector(p, 1e-8);
  require_projector(q, 1e-8);
  if (p.rows() != q.rows()) throw ShapeError("projector dimension mismatch");
  if (!(t > 0.0) || !(t < 1.0)) throw DomainError("t must be in (0, 1)");
  Eigen::JacobiSVD<Matrix> svd(q * p);
  const double s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  return truncated_fidelity(std::min(1.0, s * s), t);
}

double jordan_principal_overlap(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows()) throw ShapeError("projector dimension mismatch");
  Eigen::JacobiSVD<Matrix> svd(p * q);
  const double s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  return s * s;
}

namespace {

struct SubspaceProblem {
  Matrix pr, qr;  // restrictions to span(range P + range Q)
  Vector anchor;  // top eigenvector of qr (maximally feasible)
  int dim;
};

SubspaceProblem restrict_to_span(const Matrix& p, const Matrix& q) {
  const long d = p.rows();
  Matrix blk(d, 2 * d);
  blk.leftCols(d) = p;
  blk.rightCols(d) = q;
  Eigen::JacobiSVD<Matrix> svd(blk, Eigen::ComputeThinU);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-12) ++rank;
  rank = std::max(rank, 1);
  const Matrix basis = svd.matrixU().leftCols(rank);
  SubspaceProblem sub;
  sub.pr = basis.adjoint() * p * basis;
  sub.qr = basis.adjoint() * q * basis;
  sub.dim = rank;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sub.qr);
  sub.anchor = es.eigenvectors().col(rank - 1);
  return sub;
}

double expval(const Matrix& a, const Vector& psi) { return std::real(psi.dot(a * psi)); }

Vector blend_feasible(const SubspaceProblem& sub, double t, const Vector& psi) {
  if (expval(sub.qr, psi) >= t) return psi;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    Vector cand = (1.0 - mid) * psi + mid * sub.anchor;
    const double n = cand.norm();
    if (n < 1e-14) {
      lo = mid;
      continue;
    }
    cand /= n;
    (expval(sub.qr, cand) >= t ? hi : lo) = mid;
  }
  Vector cand = (1.0 - hi) * psi + hi * sub.anchor;
  cand.normalize();
  return cand;
}

Vector power_ascend(const SubspaceProblem& sub, double lam, Vector x) {
  // local ascent of the Rayleigh quotient of P + lam Q (shifted PSD)
  const Matrix a = sub.pr + lam * sub.qr + 2.0 * Matrix::Identity(sub.dim, sub.dim);
  for (int it = 0; it < 300; ++it) {
    Vector y = a * x;
    const double n = y.norm();
    if (n < 1e-14) break;
    y /= n;
    const bool done = (y - x).norm() < 1e-13;
    x = y;
    if (done) break;
  }
  return x;
}

}  // namespace

double sdp_oracle(const Matrix& p, const Matrix& q, double t, int restarts, SeedStream& rng) {
  require_projector(p, 1e-8);
  require_projector(q, 1e-8);
  if (!(t > 0.0)) throw DomainError("t must be positive");
  if (t > 1.0) throw DomainError("infeasible: t exceeds the top expectation of a projector");
  const SubspaceProblem sub = restrict_to_span(p, q);

  double best = -1.0;
  for (int rs = 0; rs < std::max(1, restarts); ++rs) {
    Vector psi(sub.dim);
    for (int i = 0; i < sub.dim; ++i) psi(i) = Cplx(rng.gaussian(), rng.gaussian());
    psi.normalize();

    // phase 1: quadratic-penalty projected gradient ascent with
    // backtracking line search and penalty continuation
    double mu = 4.0;
    for (int stage = 0; stage < 12; ++stage) {
      for (int it = 0; it < 60; ++it) {
        const double viol = std::max(0.0, t - expval(sub.qr, psi));
        Vector g = sub.pr * psi + (2.0 * mu * viol) * (sub.qr * psi);
        g -= psi.dot(g) * psi;  // tangent projection
        const double gn = g.norm();
        if (gn < 1e-12) break;
        const double h0 = expval(sub.pr, psi) - mu * viol * viol;
        double step = 0.5;
        bool moved = false;
        while (step > 1e-10) {
          Vector cand = psi + step * g;
          cand.normalize();
          const double v2 = std::max(0.0, t - expval(sub.qr, cand));
          if (expval(sub.pr, cand) - mu * v2 * v2 > h0 + 0.25 * step * gn * gn) {
            psi = cand;
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
      if (std::max(0.0, t - expval(sub.qr, psi)) < 1e-12) break;
      mu *= 8.0;
    }
    best = std::max(best, expval(sub.pr, blend_feasible(sub, t, psi)));

    // phase 2: multiplier continuation from the same start; bisect the
    // multiplier until the ascended point crosses the constraint
    Vector x0 = power_ascend(sub, 0.0, psi);
    if (expval(sub.qr, x0) >= t - 1e-13) {
      best = std::max(best, expval(sub.pr, blend_feasible(sub, t, x0)));
    } else {
      double hi = 1.0;
      while (expval(sub.qr, power_ascend(sub, hi, psi)) < t && hi < 1e6) hi *= 2.0;
      double lo = 0.0;
      for (int it = 0; it < 70; ++it) {
        const double mid = 0.5 * (lo + hi);
        (expval(sub.qr, power_ascend(sub, mid, psi)) >= t ? hi : lo) = mid;
      }
      const Vector cand = blend_feasible(sub, t, power_ascend(sub, hi, psi));
      best = std::max(best, expval(sub.pr, cand));
    }
  }
  return std::clamp(best, 0.0, 1.0);
}

double sdp_bloch_brute_force(const Matrix& p, const Matrix& q, double t, int grid_points) {
  require_projector(p, 1e-8);
  require_projector(q, 1e-8);
  if (p.rows() != 2) throw ShapeError("Bloch brute force is d=2 only");
  double best = -1.0;

  Eigen::SelfAdjointEigenSolver<Matrix> es(p);
  const Vector top = es.eigenvectors().col(1);
  if (std::real(top.dot(q * top)) >= t) best = std::real(top.dot(p * top));

  // Bloch vector of Q (assumes rank-1 Q; rank-0/2 are trivial projectors)
  const double qx = 2.0 * q(0, 1).real();
  const double qy = 2.0 * q(1, 0).imag();
  const double qz = (q(0, 0) - q(1, 1)).real();
  Eigen::Vector3d qv(qx, qy, qz);
  if (qv.norm() < 1e-9) {
    // Q = 0 or I; constraint is all-or-nothing
    const double qconst = q(0, 0).real();
    return (qconst >= t || best >= 0.0) ? std::max(best, top_eig(p)) : best;
  }
  qv.normalize();
  Eigen::Vector3d a = std::abs(qv.x()) < 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 1, 0);
  Eigen::Vector3d e1 = qv.cross(a).normalized();
  Eigen::Vector3d e2 = qv.cross(e1);

  // boundary circle <Q> = t: polar angle around qv with cos(theta) = 2t - 1
  const double ct = 2.0 * t - 1.0;
  const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
  auto pval_at = [&](double phi) {
    const Eigen::Vector3d b = ct * qv + st * (std::cos(phi) * e1 + std::sin(phi) * e2);
    Matrix m(2, 2);
    m << 1.0 + b.z(), Cplx(b.x(), -b.y()), Cplx(b.x(), b.y()), 1.0 - b.z();
    m *= 0.5;
    return (p * m).trace().real();
  };
  double lo = 0.0, hi = 2.0 * M_PI;
  int n = std::max(grid_points, 16);
  double best_phi = 0.0;
  for (int round = 0; round < 3; ++round) {
    double local_best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double phi = lo + (hi - lo) * i / n;
      const double v = pval_at(phi);
      if (v > local_best) {
        local_best = v;
        best_phi = phi;
      }
    }
    best = std::max(best, local_best);
    const double w = (hi - lo) / n;
    lo = best_phi - 2.0 * w;
    hi = best_phi + 2.0 * w;
    n = 64;
  }
  return best;
}

// ---------------------------------------------------------------------------

AuditReport check_majorization_bound(const RspProtocol& proto, const std::vector<FlatInput>& prior,
                                     double tol) {
  if (prior.empty()) throw DomainError("empty prior");
  protocols::RunOptions opts;
  opts.include_joint = true;
  const double w = 1.0 / prior.size();

  std::map<int, double> pc;                // p(c)
  std::map<int, Matrix> avg;               // sum_j w p(c|P_j) joint_{j,c}
  for (const auto& input : prior) {
    const protocols::OutcomeEnsemble ens = proto.run_exact(input, opts);
    for (const auto& o : ens.outcomes) {
      if (!o.bob_joint) throw StructureError("protocol does not expose joint conditional states");
      if (o.prob <= 0.0) continue;
      auto [it, fresh] = avg.try_emplace(o.label, Matrix::Zero(o.bob_joint->dim(), o.bob_joint->dim()));
      it->second += (w * o.prob) * o.bob_joint->mat();
      pc[o.label] += w * o.prob;
    }
  }

  // weighted prefix sums of the nu_c spectra
  std::vector<double> rhs_prefix;
  for (const auto& [label, mass] : pc) {
    if (mass <= 0.0) continue;
    Eigen::SelfAdjointEigenSolver<Matrix> es(avg[label] / mass, Eigen::EigenvaluesOnly);
    Eigen::VectorXd ev = es.eigenvalues().reverse();
    if (rhs_prefix.size() < static_cast<std::size_t>(ev.size())) rhs_prefix.resize(ev.size(), 0.0);
    double run = 0.0;
    for (int i = 0; i < ev.size(); ++i) {
      run += std::max(0.0, ev(i));
      rhs_prefix[i] += mass * run;
    }
  }

  const auto& lam = proto.shared_state_spectrum().values();
  double min_slack = std::numeric_limits<double>::infinity();
  double lam_run = 0.0;
  for (std::size_t i = 0; i < std::max(lam.size(), rhs_prefix.size()); ++i) {
    lam_run += i < lam.size() ? lam[i] : 0.0;
    const double rhs = i < rhs_prefix.size() ? rhs_prefix[i] : rhs_prefix.back();
    min_slack = std::min(min_slack, rhs - lam_run);
  }

  AuditReport rep;
  rep.name = "majorization";
  rep.lhs = -min_slack;  // worst prefix violation
  rep.rhs = 0.0;
  rep.trials = static_cast<int>(prior.size());
  rep.parameters = {{"d", double(proto.d())}, {"k", double(proto.k())},
                    {"prior_size", double(prior.size())}, {"messages", double(pc.size())}};
  rep.finish(tol);
  return rep;
}

// ---------------------------------------------------------------------------

DecouplingReport decoupling_experiment(int d1, int d2, int k, const DensityMatrix& rho, int dE,
                                       int trials, std::uint64_t seed, int threads,
                                       const Matrix* fixed_p) {
  if (trials < 1) throw DomainError("trials must be >= 1");
  const int dA = d1 * d2;
  if (rho.dim() != dA * dE) throw ShapeError("state dimension must be d1*d2*dE");

  DecouplingReport rep;
  rep.trials = trials;
  rep.seed = seed;

  const std::vector<int> regs{d1, d2, dE};
  const Matrix rho_e = qcore::partial_trace_raw(rho.mat(), regs, {2});
  rep.h2_uncond = -std::log2((rho.mat() * rho.mat()).trace().real());
  rep.h2_cond_surrogate =
      dE > 1 ? entropy::renyi2_conditional(rho, dA, dE) : rep.h2_uncond;

  rep.plain_rhs2 = std::sqrt(std::pow(2.0, -rep.h2_cond_surrogate) / d1);
  rep.plain_rhs1 = std::sqrt(static_cast<double>(d2)) * rep.plain_rhs2;

  Matrix proj;
  if (fixed_p) {
    proj = *fixed_p;
  } else {
    SeedStream ps = SeedStream::child(seed, 0x50726f6aull);
    proj = qcore::sample_flat(d2, k, ps).projector;
  }

  const Matrix target2 = Matrix::Identity(d2, d2) / d2;
  std::vector<double> l1(trials), l2(trials), lp(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    SeedStream s = SeedStream::child(seed, t);
    const Matrix u = qcore::haar_unitary(dA, s);
    const Matrix u_full =
        dE > 1 ? Eigen::kroneckerProduct(u, Matrix::Identity(dE, dE)).eval() : u;
    const Matrix evolved = u_full * rho.mat() * u_full.adjoint();
    const Matrix red = qcore::partial_trace_raw(evolved, regs, {1, 2});  // on B2 (x) E
    const Matrix ideal = Eigen::kroneckerProduct(target2, rho_e).eval();
    const Matrix diff = red - ideal;
    l2[t] = std::sqrt(diff.squaredNorm());
    Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
    l1[t] = es.eigenvalues().cwiseAbs().sum();

    const Matrix proj_e =
        dE > 1 ? Eigen::kroneckerProduct(proj, Matrix::Identity(dE, dE)).eval() : proj;
    const double pp = (proj_e * red).trace().real();
    if (pp > 1e-14) {
      const Matrix post = proj_e * red * proj_e / pp;
      const Matrix post_ideal = Eigen::kroneckerProduct((proj / k).eval(), rho_e).eval();
      Eigen::SelfAdjointEigenSolver<Matrix> es2(post - post_ideal, Eigen::EigenvaluesOnly);
      lp[t] = pp * es2.eigenvalues().cwiseAbs().sum();
    } else {
      lp[t] = 0.0;
    }
  });

  auto mean_se = [&](const std::vector<double>& v, double& mean, double& se) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(var / (v.size() - 1) / v.size()) : 0.0;
  };
  mean_se(l1, rep.plain_lhs1, rep.plain_lhs1_stderr);
  mean_se(l2, rep.plain_lhs2, rep.plain_lhs2_stderr);
  mean_se(lp, rep.post_lhs, rep.post_lhs_stderr);

  rep.post_rhs_first = k * std::sqrt(std::pow(2.0, -rep.h2_cond_surrogate) / (d1 * d2));
  rep.post_rhs_second_over_c = std::sqrt(std::pow(2.0, -rep.h2_uncond) / (d1 * d2));
  rep.post_ratio = rep.post_rhs_first > 0.0 ? rep.post_lhs / rep.post_rhs_first : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

TailTable concentration_experiment(int d, int k, ConcentrationKind kind, int trials,
                                   std::uint64_t seed, int threads, int rb, int l,
                                   const Matrix* fixed_a) {
  if (trials < 100) throw DomainError("concentration experiment needs trials >= 100");
  TailTable table;
  table.trials = trials;
  table.seed = seed;

  Matrix a;  // trace kind
  Matrix q;  // spectral kind
  if (kind == ConcentrationKind::TraceFunctional) {
    if (fixed_a) {
      a = *fixed_a;
    } else {
      SeedStream s = SeedStream::child(seed, 0x41ull);
      Matrix g(d, d);
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) g(i, j) = Cplx(s.gaussian(), s.gaussian());
      a = 0.5 * (g + g.adjoint());
      a /= std::sqrt(a.squaredNorm());
    }
    table.expected_mean = static_cast<double>(k) / d * a.trace().real();
  } else {
    SeedStream s = SeedStream::child(seed, 0x51ull);
    q = qcore::sample_flat(rb * d, l, s).projector;
  }

  std::vector<double> vals(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    SeedStream s = SeedStream::child(seed, t);
    const FlatInput p = qcore::sample_flat(d, k, s);
    if (kind == ConcentrationKind::TraceFunctional) {
      vals[t] = (a * p.projector).trace().real();
    } else {
      const Matrix inner = q * qcore::kron_identity_left(rb, p.projector) * q;
      vals[t] = top_eig(inner);
    }
  });

  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= trials;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  table.mean = mean;
  table.stderr_mean = std::sqrt(var / (trials - 1) / trials);
  if (kind == ConcentrationKind::TraceFunctional) {
    table.mean_within_3sigma = std::abs(mean - table.expected_mean) <= 3.0 * table.stderr_mean;
  } else {
    table.expected_mean = mean;
    table.mean_within_3sigma = true;
  }
  for (std::size_t i = 0; i < table.thresholds.size(); ++i) {
    int count = 0;
    for (double v : vals)
      if (std::abs(v - mean) > table.thresholds[i]) ++count;
    table.exceed_fraction[i] = static_cast<double>(count) / trials;
  }
  table.tails_monotone = table.exceed_fraction[0] >= table.exceed_fraction[1] &&
                         table.exceed_fraction[1] >= table.exceed_fraction[2];
  return table;
}

// ---------------------------------------------------------------------------

AuditReport check_eigval_bound(const std::vector<WeightedState>& mu, double density_bound_k, int l,
                               double a_cal, double tol) {
  if (mu.empty()) throw DomainError("empty prior");
  if (density_bound_k < 1.0) throw DomainError("density bound K must be >= 1");
  double wsum = 0.0;
  for (const auto& ws : mu) wsum += ws.weight;
  if (std::abs(wsum - 1.0) > 1e-9) throw ValidationError("weights must sum to 1");

  const int dim = mu.front().omega.dim();
  const int d = mu.front().input.d;
  const int k = mu.front().input.k;
  const int rb = dim / d;
  if (rb * d != dim) throw ShapeError("omega dimension must be a multiple of d");
  if (l < 1 || l > dim) throw DomainError("prefix length out of range");

  Matrix omega = Matrix::Zero(dim, dim);
  double eps = 0.0;
  for (const auto& ws : mu) {
    if (ws.omega.dim() != dim || ws.input.d != d || ws.input.k != k)
      throw ShapeError("inconsistent dimensions in the weighted family");
    omega += ws.weight * ws.omega.mat();
    const Matrix outside = qcore::kron_identity_left(rb, Matrix::Identity(d, d) - ws.input.projector);
    eps += ws.weight * (outside * ws.omega.mat()).trace().real();
  }
  eps = std::clamp(eps, 0.0, 1.0);

  Eigen::SelfAdjointEigenSolver<Matrix> es(omega, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = es.eigenvalues().reverse();
  double lhs = 0.0;
  for (int i = 0; i < l; ++i) lhs += std::max(0.0, ev(i));

  const double first_arg = static_cast<double>(k) / d +
                           a_cal / std::sqrt(static_cast<double>(d)) *
                               (std::sqrt(std::log2(density_bound_k)) + std::sqrt(static_cast<double>(l)));
  const double rhs = truncated_fidelity(first_arg, 1.0 - eps);

  AuditReport rep;
  rep.name = "eigval_bound";
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.parameters = {{"d", double(d)}, {"k", double(k)}, {"l", double(l)},
                    {"K", density_bound_k}, {"A", a_cal}, {"eps", eps}};
  rep.finish(tol);
  return rep;
}

// ---------------------------------------------------------------------------

std::pair<AuditReport, AuditReport> audit_resource_bounds(int d, int k, int m_bits,
                                                          const Spectrum& shared_spectrum,
                                                          double eps_r, double gamma, double a_cal,
                                                          double c_slack) {
  if (!(gamma > 0.0) || gamma >= 1.0) throw DomainError("gamma must be in (0, 1)");

  AuditReport comm;
  comm.name = "communication";
  comm.lhs = std::floor(std::log2(static_cast<double>(d) / k)) +
             (eps_r < 1.0 ? std::log2(1.0 - eps_r) : -std::numeric_limits<double>::infinity());
  comm.rhs = m_bits;
  comm.parameters = {{"d", double(d)}, {"k", double(k)}, {"m", double(m_bits)}, {"eps_r", eps_r}};
  comm.finish(1e-9);

  AuditReport ent;
  ent.name = "entanglement";
  const double delta =
      truncated_fidelity(static_cast<double>(k) / d +
                             a_cal * std::sqrt(static_cast<double>(m_bits) / d),
                         std::max(0.0, 1.0 - eps_r));
  ent.parameters = {{"d", double(d)}, {"k", double(k)}, {"m", double(m_bits)},
                    {"eps_r", eps_r},  {"gamma", gamma}, {"delta", delta},
                    {"A", a_cal},      {"c_slack", c_slack}};
  ent.lhs = std::log2(static_cast<double>(d)) - 3.0 * std::log2(1.0 / gamma) - c_slack;
  if (delta + gamma >= 1.0) {
    ent.vacuous = true;  // the smoothing parameter saturates; no claim made
    ent.rhs = std::numeric_limits<double>::infinity();
  } else {
    ent.rhs = entropy::smooth_min_entropy(shared_spectrum, delta + gamma).entropy;
  }
  ent.finish(1e-9);
  return {comm, ent};
}

}  // namespace rsp::verify
