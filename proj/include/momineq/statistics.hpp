#pragma once

#include "momineq/moments.hpp"
#include "momineq/nnls.hpp"
#include "momineq/types.hpp"

namespace momineq {

// Scale-free threshold for declaring lambda' sigma_hat lambda degenerate.
inline Scalar variance_epsilon(Scalar lambda_l1_norm) {
  return 1e-12 * lambda_l1_norm * lambda_l1_norm;
}

/// Which T_U statistic to evaluate: a finite direction set (the coordinate
/// set, the coordinate set plus the all-ones vector, or a custom list of
/// nonnegative directions) or the whole nonnegative orthant.
struct StatisticSpec {
  enum class Kind { TMax, TMaxIota, CustomFinite, TPlus };

  Kind kind = Kind::TMax;
  Matrix directions;  // p x L, CustomFinite only; columns are directions

  static StatisticSpec t_max() { return {Kind::TMax, {}}; }
  static StatisticSpec t_max_iota() { return {Kind::TMaxIota, {}}; }
  static StatisticSpec t_plus() { return {Kind::TPlus, {}}; }
  static StatisticSpec custom(Matrix direction_columns);

  bool is_finite() const { return kind != Kind::TPlus; }
};

/// T_U = sqrt(n) max over the finite direction set of mu'lambda /
/// sqrt(lambda' sigma_hat lambda). Zero when mu_hat <= 0 componentwise,
/// Infinite when a direction with positive mean has (numerically) zero
/// variance. Ties resolve to the lowest direction index.
StatValue evaluate_finite(const SampleMoments& m, const StatisticSpec& spec);

/// Same statistic computed straight from the data matrix: the direction
/// variances come from the centered form |(I - P) X lambda|^2 / n, so the
/// p x p covariance is never materialized.
StatValue evaluate_finite(const DataMatrix& x, const StatisticSpec& spec);

/// T over the nonnegative orthant, computed through the nonnegative least
/// squares fit of the all-ones vector on X.
StatValue evaluate_t_plus(const DataMatrix& x, const NnlsOptions& options = {});

/// Dispatches on the spec kind, computing moments when needed.
StatValue evaluate_statistic(const DataMatrix& x, const StatisticSpec& spec);

/// t / sqrt(1 + t^2/n): strictly increasing on [0, inf), with 0 -> 0 and
/// inf -> sqrt(n).
Scalar t_star_transform(Scalar t, Index n);

/// Sufficient-condition diagnostic for copositivity of sigma_hat. Positive if
/// every entry is strictly positive; SubmatrixPositive when greedily removing
/// offending indices leaves a positive principal submatrix of size >= 2
/// (removed holds the complement set); Unknown otherwise. Diagnostic only.
struct CopositivityCheck {
  enum class Result { Positive, SubmatrixPositive, Unknown };
  Result result = Result::Unknown;
  IndexSet removed;

  std::string describe() const;
};

CopositivityCheck check_copositivity_sufficient(const SampleMoments& m);

}  // namespace momineq
