#pragma once

#include "momineq/types.hpp"

namespace momineq {

struct NnlsOptions {
  Scalar kkt_scale = 1e-8;   // eps_kkt = kkt_scale * |A'b|_inf, floored below
  Scalar kkt_floor = 1e-12;
  int max_iter_factor = 3;   // iteration cap = max_iter_factor * p
};

struct NnlsResult {
  Vector lambda;    // p, nonnegative
  Vector residual;  // n, b - A lambda
  int iterations = 0;
  Scalar eps_kkt = 0.0;
};

/// Thrown when the active-set iteration cap is hit; carries the best iterate.
class NnlsError : public std::runtime_error {
 public:
  NnlsError(std::string what, Vector best, int iterations)
      : std::runtime_error(std::move(what)),
        best_lambda(std::move(best)),
        iterations(iterations) {}

  Vector best_lambda;
  int iterations;
};

/// argmin ||b - A lambda||_2 subject to lambda >= 0, by the Lawson-Hanson
/// active-set method on the normal equations. The returned point satisfies the
/// KKT certificate g = A'(A lambda - b): g_j >= -eps_kkt everywhere and
/// |g_j| <= eps_kkt on the support.
NnlsResult nnls(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& b,
                const NnlsOptions& options = {});

struct NnlsGramResult {
  Vector lambda;
  IndexSet support;  // indices with lambda > 0
  int iterations = 0;
  Scalar eps_kkt = 0.0;
};

/// Same solver on precomputed gram = A'A and atb = A'b. Useful when many
/// right-hand sides share one gram matrix.
NnlsGramResult nnls_gram(const Eigen::Ref<const Matrix>& gram,
                         const Eigen::Ref<const Vector>& atb,
                         const NnlsOptions& options = {});

}  // namespace momineq
