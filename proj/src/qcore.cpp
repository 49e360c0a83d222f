#include "rsp/qcore.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace rsp {

const Tolerances& default_tols() {
  static const Tolerances tols{};
  return tols;
}

std::map<std::string, double> Calibration::named() const {
  return {
      {"kraus_n_const", kraus_n_const},
      {"ancilla_const", ancilla_const},
      {"rejection_extra", static_cast<double>(rejection_extra)},
      {"worst_n_const", worst_n_const},
      {"worst_n_cap", static_cast<double>(worst_n_cap)},
      {"eigval_a", eigval_a},
      {"decouple_c_total", decouple_c_total},
      {"entropy_slack", entropy_slack},
      {"fid_lemma_const", fid_lemma_const},
      {"retry_cap", static_cast<double>(retry_cap)},
  };
}

void Calibration::set(const std::string& key, double value) {
  if (key == "kraus_n_const") kraus_n_const = value;
  else if (key == "ancilla_const") ancilla_const = value;
  else if (key == "rejection_extra") rejection_extra = static_cast<int>(value);
  else if (key == "worst_n_const") worst_n_const = value;
  else if (key == "worst_n_cap") worst_n_cap = static_cast<int>(value);
  else if (key == "eigval_a") eigval_a = value;
  else if (key == "decouple_c_total") decouple_c_total = value;
  else if (key == "entropy_slack") entropy_slack = value;
  else if (key == "fid_lemma_const") fid_lemma_const = value;
  else if (key == "retry_cap") retry_cap = static_cast<int>(value);
  else throw DomainError("unknown calibration key: " + key);
}

}  // namespace rsp

namespace rsp::qcore {

namespace {

void check_finite(const Matrix& m) {
  if (!m.allFinite()) throw ValidationError("operator has non-finite entries");
}

int product(const std::vector<int>& regs) {
  int p = 1;
  for (int r : regs) {
    if (r <= 0) throw StructureError("register dimensions must be positive");
    p *= r;
  }
  return p;
}

}  // namespace

Operator::Operator(Matrix m, std::vector<int> regs) : mat(std::move(m)), registers(std::move(regs)) {
  if (mat.rows() != mat.cols()) throw ShapeError("operator must be square");
  if (mat.rows() < 1 || mat.rows() > kMaxDim) throw DimensionError("operator dimension out of range");
  check_finite(mat);
  if (!registers.empty() && product(registers) != dim())
    throw StructureError("register product does not match dimension");
}

DensityMatrix::DensityMatrix(Operator op, const Tolerances& tol) : op_(std::move(op)) {
  const Matrix& m = op_.mat;
  const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (herm > tol.construct) throw ValidationError("density matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol.construct)
    throw ValidationError("density matrix has a negative eigenvalue");
  const double tr = m.trace().real();
  const double drift = std::abs(tr - 1.0);
  if (drift > tol.algebra) throw ValidationError("density matrix trace is not 1");
  if (drift > 0.0) op_.mat /= tr;
}

PureState::PureState(Vector a, std::vector<int> regs, const Tolerances& tol)
    : amps(std::move(a)), registers(std::move(regs)) {
  if (amps.size() < 1) throw DimensionError("empty state vector");
  if (!amps.allFinite()) throw ValidationError("state vector has non-finite entries");
  const double n = amps.norm();
  if (std::abs(n - 1.0) > tol.construct) throw ValidationError("state vector is not normalized");
  if (!registers.empty() && product(registers) != dim())
    throw StructureError("register product does not match dimension");
}

DensityMatrix PureState::density() const {
  return DensityMatrix(Operator(amps * amps.adjoint(), registers));
}

Spectrum::Spectrum(std::vector<double> values, const Tolerances& tol) : v_(std::move(values)) {
  if (v_.empty()) throw DomainError("empty spectrum");
  for (double& x : v_) {
    if (!std::isfinite(x)) throw ValidationError("spectrum has non-finite entries");
    if (x < -tol.eig_clip || x > 1.0 + tol.eig_clip)
      throw ValidationError("spectrum entry outside [-eig_clip, 1+eig_clip]");
    if (x < 0.0) x = 0.0;
  }
  std::sort(v_.begin(), v_.end(), std::greater<double>());
  const double s = std::accumulate(v_.begin(), v_.end(), 0.0);
  const double drift = std::abs(s - 1.0);
  if (drift > tol.algebra) throw ValidationError("spectrum does not sum to 1");
  if (drift > 0.0)
    for (double& x : v_) x /= s;
}

Spectrum Spectrum::uniform(int d) {
  if (d < 1) throw DimensionError("uniform spectrum needs d >= 1");
  return Spectrum(std::vector<double>(d, 1.0 / d));
}

FlatInput::FlatInput(int d_, int k_, Matrix p, const Tolerances& tol) : d(d_), k(k_), projector(std::move(p)) {
  if (d < 1) throw DimensionError("invalid dimension");
  if (k < 1 || k > d) throw DimensionError("rank must satisfy 1 <= k <= d");
  if (projector.rows() != d || projector.cols() != d) throw ShapeError("projector shape mismatch");
  check_finite(projector);
  const double idem = (projector * projector - projector).cwiseAbs().maxCoeff();
  if (idem > tol.algebra) throw ValidationError("matrix is not idempotent");
  if (std::abs(projector.trace().real() - k) > tol.algebra)
    throw ValidationError("projector trace does not equal rank");
}

DensityMatrix FlatInput::flat_state() const {
  return DensityMatrix(Operator(projector / static_cast<double>(k)));
}

Matrix haar_unitary(int d, SeedStream& rng) {
  if (d < 1 || d > kMaxDim) throw DimensionError("invalid dimension for haar_unitary");
  Matrix z(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) z(i, j) = Cplx(rng.gaussian(), rng.gaussian()) / std::sqrt(2.0);
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    Cplx ph = r(j, j);
    const double a = std::abs(ph);
    ph = (a > 0.0) ? ph / a : Cplx(1.0, 0.0);
    q.col(j) *= ph;
  }
  return q;
}

FlatInput sample_flat(int d, int k, SeedStream& rng) {
  if (k < 1 || k > d) throw DimensionError("invalid rank for sample_flat");
  const Matrix u = haar_unitary(d, rng);
  const Matrix v = u.leftCols(k);
  return FlatInput(d, k, v * v.adjoint());
}

double trace_distance_herm(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("trace_distance shape mismatch");
  const Matrix diff = a - b;
  if (diff.rows() == 2) {
    // closed form for a 2x2 Hermitian: eigenvalues t/2 +- sqrt((t/2)^2 - det)
    const double half_tr = 0.5 * diff.trace().real();
    const double det = (diff(0, 0) * diff(1, 1) - diff(0, 1) * diff(1, 0)).real();
    const double disc = std::sqrt(std::max(0.0, half_tr * half_tr - det));
    return 0.5 * (std::abs(half_tr + disc) + std::abs(half_tr - disc));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return trace_distance_herm(rho.mat(), sigma.mat());
}

namespace {

// eigenvalues inside [-clip, clip] are treated as exact zeros; square
// roots amplify eigensolver noise (sqrt(1e-16) = 1e-8) otherwise
Matrix herm_sqrt(const Matrix& m, double clip) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) > clip ? std::sqrt(ev(i)) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw ShapeError("fidelity dimension mismatch");
  const double clip = default_tols().eig_clip;
  const Matrix s = herm_sqrt(rho.mat(), clip);
  const Matrix a = s * sigma.mat() * s;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  double root_sum = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > clip) root_sum += std::sqrt(es.eigenvalues()(i));
  return std::min(1.0, root_sum * root_sum);
}

double schatten_norm(const Matrix& a, double p) {
  if (!(p >= 1.0)) throw DomainError("Schatten order must be >= 1");
  check_finite(a);
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  if (std::isinf(p)) return s.size() ? s(0) : 0.0;
  double acc = 0.0;
  for (int i = 0; i < s.size(); ++i) acc += std::pow(s(i), p);
  return std::pow(acc, 1.0 / p);
}

Matrix partial_trace_raw(const Matrix& m, const std::vector<int>& regs, const std::vector<int>& keep) {
  if (regs.empty()) throw StructureError("partial trace requires register metadata");
  const int n = static_cast<int>(regs.size());
  for (int idx : keep)
    if (idx < 0 || idx >= n) throw StructureError("register index out of range");
  std::vector<bool> kept(n, false);
  for (int idx : keep) {
    if (kept[idx]) throw StructureError("duplicate register index");
    kept[idx] = true;
  }
  int dim_keep = 1, dim_drop = 1;
  for (int i = 0; i < n; ++i) (kept[i] ? dim_keep : dim_drop) *= regs[i];

  // strides of each register in the flat row-major index
  std::vector<long> stride(n, 1);
  for (int i = n - 2; i >= 0; --i) stride[i] = stride[i + 1] * regs[i + 1];

  std::vector<int> keep_regs, drop_regs;
  std::vector<long> keep_stride, drop_stride;
  for (int i = 0; i < n; ++i) {
    if (kept[i]) { keep_regs.push_back(regs[i]); keep_stride.push_back(stride[i]); }
    else { drop_regs.push_back(regs[i]); drop_stride.push_back(stride[i]); }
  }

  auto offset = [](long mixed, const std::vector<int>& dims, const std::vector<long>& strides) {
    long off = 0;
    for (int i = static_cast<int>(dims.size()) - 1; i >= 0; --i) {
      off += (mixed % dims[i]) * strides[i];
      mixed /= dims[i];
    }
    return off;
  };

  Matrix out = Matrix::Zero(dim_keep, dim_keep);
  for (long a = 0; a < dim_keep; ++a) {
    const long oa = offset(a, keep_regs, keep_stride);
    for (long b = 0; b < dim_keep; ++b) {
      const long ob = offset(b, keep_regs, keep_stride);
      Cplx acc(0, 0);
      for (long t = 0; t < dim_drop; ++t) {
        const long ot = offset(t, drop_regs, drop_stride);
        acc += m(oa + ot, ob + ot);
      }
      out(a, b) = acc;
    }
  }
  return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
  if (rho.registers().empty()) throw StructureError("partial trace requires register metadata");
  Matrix out = partial_trace_raw(rho.mat(), rho.registers(), keep);
  std::vector<int> out_regs;
  std::vector<bool> kept(rho.registers().size(), false);
  for (int idx : keep) kept[idx] = true;
  for (std::size_t i = 0; i < rho.registers().size(); ++i)
    if (kept[i]) out_regs.push_back(rho.registers()[i]);
  return DensityMatrix(Operator(std::move(out), std::move(out_regs)));
}

Matrix kron_identity_left(int r, const Matrix& m) {
  if (r < 1) throw DimensionError("ancilla factor must be >= 1");
  const long d = m.rows();
  Matrix out = Matrix::Zero(r * d, r * d);
  for (int b = 0; b < r; ++b) out.block(static_cast<long>(b) * d, static_cast<long>(b) * d, d, d) = m;
  return out;
}

PureState maximally_entangled(int d) {
  if (d < 1) throw DimensionError("invalid dimension");
  Vector amps = Vector::Zero(static_cast<long>(d) * d);
  const double w = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) amps(static_cast<long>(i) * d + i) = w;
  return PureState(std::move(amps), {d, d});
}

Spectrum schmidt_spectrum(const PureState& psi, int cut) {
  const auto& regs = psi.registers;
  if (regs.empty() || cut < 1 || cut >= static_cast<int>(regs.size()))
    throw StructureError("bipartition must split registers into two nonempty groups");
  int da = 1, db = 1;
  for (int i = 0; i < static_cast<int>(regs.size()); ++i) (i < cut ? da : db) *= regs[i];
  // amps index = a*db + b; reduced state on the first group is M M^dagger
  // with M(a, b) = amps(a*db + b)
  Matrix M(da, db);
  for (int a = 0; a < da; ++a)
    for (int b = 0; b < db; ++b) M(a, b) = psi.amps(static_cast<long>(a) * db + b);
  Eigen::SelfAdjointEigenSolver<Matrix> es(M * M.adjoint(), Eigen::EigenvaluesOnly);
  std::vector<double> vals(es.eigenvalues().data(), es.eigenvalues().data() + da);
  return Spectrum(std::move(vals));
}

}  // namespace rsp::qcore
