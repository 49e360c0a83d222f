#pragma once

#include "rsp/qcore.hpp"

namespace rsp::entropy {

using qcore::DensityMatrix;
using qcore::Spectrum;

/// -log2 of the largest probability, in bits.
double min_entropy(const Spectrum& p);

/// -log2 of the collision probability sum p_i^2, in bits.
double renyi2_entropy(const Spectrum& p);

struct SmoothingResult {
  double s_star;   // threshold S*
  double entropy;  // log2(1 / S*); +inf when S* = 0 (delta = 1)
  double delta;
};

/// Smoothed min-entropy of a classical spectrum via the piecewise-linear
/// excess-mass threshold S* = inf{S : sum_{p_i > S} (p_i - S) <= delta},
/// solved exactly by a descending-sort scan.
SmoothingResult smooth_min_entropy(const Spectrum& p, double delta);

/// Conditional Renyi-2 entropy of A given E for a state on A (x) E,
/// evaluated at the fixed choice sigma^E = rho^E (a one-sided surrogate
/// for the infimum), pseudo-inverting rho^E on its support.
double renyi2_conditional(const DensityMatrix& rho_ae, int dim_a, int dim_e);

/// Prefix-sum dominance of descending spectra; shorter spectra are padded
/// with zeros. True iff every prefix of x is >= that of y - tol.
bool majorizes(const Spectrum& x, const Spectrum& y, double tol = 1e-10);

}  // namespace rsp::entropy
