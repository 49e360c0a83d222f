#include "rsp/entropy.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <algorithm>
#include <cmath>
#include <limits>

namespace rsp::entropy {

using qcore::Matrix;

double min_entropy(const Spectrum& p) { return -std::log2(p[0]); }

double renyi2_entropy(const Spectrum& p) {
  double coll = 0.0;
  for (double x : p.values()) coll += x * x;
  return -std::log2(coll);
}

SmoothingResult smooth_min_entropy(const Spectrum& p, double delta) {
  if (delta < 0.0 || delta > 1.0) throw DomainError("smoothing parameter must be in [0, 1]");
  const auto& v = p.values();  // descending
  // excess(S) = prefix_j - j*S on S in [v_{j+1}, v_j]; scan for the segment
  // where it crosses delta
  double s_star = v[0];  // excess(v[0]) = 0 <= delta always
  double prefix = 0.0;
  for (std::size_t j = 1; j <= v.size(); ++j) {
    prefix += v[j - 1];
    const double lower = (j < v.size()) ? v[j] : 0.0;
    const double cand = (prefix - delta) / static_cast<double>(j);
    if (cand >= lower - 1e-300) {
      s_star = std::max(0.0, cand);
      break;
    }
  }
  SmoothingResult res;
  res.s_star = s_star;
  res.delta = delta;
  res.entropy = (s_star > 0.0) ? std::log2(1.0 / s_star) : std::numeric_limits<double>::infinity();
  return res;
}

double renyi2_conditional(const DensityMatrix& rho_ae, int dim_a, int dim_e) {
  if (dim_a < 1 || dim_e < 1 || dim_a * dim_e != rho_ae.dim())
    throw StructureError("renyi2_conditional requires dim_a * dim_e == dim");
  const Matrix rho_e = qcore::partial_trace_raw(rho_ae.mat(), {dim_a, dim_e}, {1});
  // (rho^E)^{-1/4} on the support of rho^E
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho_e);
  Eigen::VectorXd ev = es.eigenvalues();
  Eigen::VectorXd inv4 = Eigen::VectorXd::Zero(ev.size());
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-13) inv4(i) = std::pow(ev(i), -0.25);
  const Matrix e_inv4 = es.eigenvectors() * inv4.asDiagonal() * es.eigenvectors().adjoint();
  const Matrix full = Eigen::kroneckerProduct(Matrix::Identity(dim_a, dim_a), e_inv4).eval();
  const Matrix m = full * rho_ae.mat() * full;
  const double tr2 = (m * m).trace().real();
  return -std::log2(tr2);
}

bool majorizes(const Spectrum& x, const Spectrum& y, double tol) {
  const auto& a = x.values();
  const auto& b = y.values();
  const std::size_t n = std::max(a.size(), b.size());
  double pa = 0.0, pb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pa += (i < a.size()) ? a[i] : 0.0;
    pb += (i < b.size()) ? b[i] : 0.0;
    if (pa < pb - tol) return false;
  }
  return true;
}

}  // namespace rsp::entropy
