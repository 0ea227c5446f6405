#include "momineq/moments.hpp"

#include <cmath>
#include <limits>

namespace momineq {

SampleMoments sample_moments(const DataMatrix& x) {
  const Matrix& values = x.values();
  const Index n = x.n();

  SampleMoments m;
  m.n = n;
  m.mu_hat = values.colwise().mean();

  // Centered form keeps sigma_hat positive semidefinite up to rounding.
  Matrix centered = values.rowwise() - m.mu_hat.transpose();
  m.sigma_hat.noalias() = centered.transpose() * centered / static_cast<Scalar>(n);
  m.sigma_hat = ((m.sigma_hat + m.sigma_hat.transpose()) / 2.0).eval();
  m.sigma_diag = m.sigma_hat.diagonal();
  return m;
}

Vector studentized_values(const Eigen::Ref<const Vector>& mu,
                          const Eigen::Ref<const Vector>& variance_diag, Index n) {
  const Scalar root_n = std::sqrt(static_cast<Scalar>(n));
  const Index p = mu.size();
  Vector t(p);
  for (Index j = 0; j < p; ++j) {
    const Scalar var = variance_diag[j];
    if (var > 0.0) {
      t[j] = root_n * mu[j] / std::sqrt(var);
    } else if (mu[j] > 0.0) {
      t[j] = std::numeric_limits<Scalar>::infinity();
    } else if (mu[j] < 0.0) {
      t[j] = -std::numeric_limits<Scalar>::infinity();
    } else {
      t[j] = 0.0;
    }
  }
  return t;
}

Vector t_values(const SampleMoments& m) {
  return studentized_values(m.mu_hat, m.sigma_diag, m.n);
}

Scalar quadratic_form(const SampleMoments& m, const Eigen::Ref<const Vector>& lambda) {
  const Scalar q = lambda.dot(m.sigma_hat * lambda);
  if (q < 0.0 && q > -1e-12 * lambda.squaredNorm()) return 0.0;
  return q;
}

}  // namespace momineq
