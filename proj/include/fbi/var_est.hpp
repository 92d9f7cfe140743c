#pragma once

#include "fbi/ops.hpp"

namespace fbi {

struct EstimatorConfig {
  Index patch_size = 7;
  Index stride = 3;
  Scalar tol_rel = 1e-3;
};

struct EtaDetails {
  Index selected = 0;   // retained smallest-eigenvalue count
  Index patches = 0;
  VectorX eigenvalues;  // ascending
};

/// Eigenvalue-based AWGN variance estimate of a 2-d image, differentiable
/// w.r.t. the pixels.  Patches become rows of a sample matrix; the smallest
/// covariance eigenvalues whose mean does not exceed their median (within
/// tol_rel) form the pure-noise cluster, and their mean is the estimate.
/// The selected index set is treated as constant by the gradient; gradient
/// flows through the eigenvalues themselves.
Tensor eta(const Tensor& z, const EstimatorConfig& cfg = {}, EtaDetails* details = nullptr);

struct EtaGradcheckReport {
  Scalar max_rel_err = 0;
  bool boundary_tie = false;  // selection flipped under a probe; advisory only
  bool pass = false;
};

/// Analytic d(eta)/d(pixels) against central finite differences.
EtaGradcheckReport eta_gradcheck(const Tensor& z, const EstimatorConfig& cfg = {},
                                 Scalar h = 1e-5);

}  // namespace fbi
