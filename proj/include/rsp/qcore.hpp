#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "rsp/config.hpp"
#include "rsp/errors.hpp"
#include "rsp/random.hpp"

namespace rsp::qcore {

using Cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Hard cap on total dimension; everything here is dense desk-scale
/// numerics.
inline constexpr int kMaxDim = 4096;

/// Dense complex square matrix with optional register structure. When
/// `registers` is nonempty its product must equal `dim` (index order is
/// row-major: the first register is the most significant factor, matching
/// kroneckerProduct(A, B)).
struct Operator {
  Matrix mat;
  std::vector<int> registers;

  Operator() = default;
  explicit Operator(Matrix m, std::vector<int> regs = {});

  int dim() const { return static_cast<int>(mat.rows()); }
};

/// Validated density matrix: Hermitian, PSD and unit trace within the
/// construction tolerance. Trace drift below the algebra tolerance is
/// renormalized; larger drift throws.
class DensityMatrix {
 public:
  explicit DensityMatrix(Operator op, const Tolerances& tol = default_tols());

  const Matrix& mat() const { return op_.mat; }
  const std::vector<int>& registers() const { return op_.registers; }
  int dim() const { return op_.dim(); }
  const Operator& op() const { return op_; }

 private:
  Operator op_;
};

/// Normalized pure state vector with register structure.
struct PureState {
  Vector amps;
  std::vector<int> registers;

  PureState(Vector a, std::vector<int> regs, const Tolerances& tol = default_tols());
  int dim() const { return static_cast<int>(amps.size()); }
  DensityMatrix density() const;
};

/// Probability spectrum sorted descending; eigenvalues in [-eig_clip, 0)
/// are clipped to zero and sub-tolerance trace drift is renormalized.
class Spectrum {
 public:
  explicit Spectrum(std::vector<double> values, const Tolerances& tol = default_tols());

  static Spectrum uniform(int d);

  const std::vector<double>& values() const { return v_; }
  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }

 private:
  std::vector<double> v_;
};

/// Point of G(d, k): a rank-k projector together with the flat state P/k
/// it represents.
struct FlatInput {
  int d = 0;
  int k = 0;
  Matrix projector;

  FlatInput() = default;
  /// Validates idempotence and trace against the algebra tolerance.
  FlatInput(int d, int k, Matrix p, const Tolerances& tol = default_tols());

  /// The flat state P/k as a validated density matrix.
  DensityMatrix flat_state() const;
};

/// Haar-random unitary on C^d (Ginibre matrix, QR, R-diagonal phase
/// correction).
Matrix haar_unitary(int d, SeedStream& rng);

/// Haar point of G(d, k): first k columns of a Haar unitary.
FlatInput sample_flat(int d, int k, SeedStream& rng);

/// (1/2)||rho - sigma||_1, in [0, 1].
double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma);

/// Trace distance of two Hermitian matrices (no state validation); used
/// where operands are projector differences rather than states.
double trace_distance_herm(const Matrix& a, const Matrix& b);

/// Uhlmann fidelity [Tr sqrt(sqrt(rho) sigma sqrt(rho))]^2.
double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

/// Schatten p-norm for p >= 1; p = infinity() gives the spectral norm.
double schatten_norm(const Matrix& a, double p);

/// Reduced state on the registers listed in `keep` (ascending order of
/// register indices is preserved).
DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep);

/// Partial trace on a raw Hermitian matrix with explicit register dims.
Matrix partial_trace_raw(const Matrix& m, const std::vector<int>& regs,
                         const std::vector<int>& keep);

/// I_r (x) m as a dense block-diagonal matrix.
Matrix kron_identity_left(int r, const Matrix& m);

/// (1/sqrt(d)) sum_i |i>|i> on registers [d, d].
PureState maximally_entangled(int d);

/// Eigenvalues of the reduced state on the first `cut` registers, sorted
/// descending. `cut` must split the registers into two nonempty groups.
Spectrum schmidt_spectrum(const PureState& psi, int cut);

}  // namespace rsp::qcore
