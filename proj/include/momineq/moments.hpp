#pragma once

#include "momineq/types.hpp"

namespace momineq {

/// mu_hat = X'1/n and sigma_hat = X'(I - P_1)X / n (divisor n), symmetrized.
SampleMoments sample_moments(const DataMatrix& x);

/// Studentized means t_j = sqrt(n) mu_j / sigma_j. Degenerate columns
/// (sigma_j = 0) map to +inf, -inf or 0 by the sign of mu_j.
Vector t_values(const SampleMoments& m);

/// Same map from raw means and variance diagonal (variances <= 0 are treated
/// as degenerate columns).
Vector studentized_values(const Eigen::Ref<const Vector>& mu,
                          const Eigen::Ref<const Vector>& variance_diag, Index n);

/// lambda' sigma_hat lambda, with rounding noise in (-1e-12 |lambda|^2, 0)
/// clamped to zero.
Scalar quadratic_form(const SampleMoments& m, const Eigen::Ref<const Vector>& lambda);

}  // namespace momineq
