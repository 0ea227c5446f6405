#pragma once

#include <cstdint>

#include "momineq/statistics.hpp"
#include "momineq/types.hpp"

namespace momineq {

struct BootstrapConfig {
  int resamples = 1000;
  double alpha = 0.05;
  double beta = 0.001;  // selection level; 0 disables selection entirely
  std::uint64_t seed = 0;
};

/// n x B matrix of resample-count deviations: entry (i, b) is how many times
/// row i appears in resample b, minus one. The recentred bootstrap mean of
/// any column x_j is then x_j' k_b / n.
Matrix resample_count_deviations(Index n, int resamples, std::uint64_t seed);

/// Empirical-bootstrap critical value for a finite-set statistic: the
/// ceil((1-level) B)-th ascending order statistic of
///   W_b = max_lambda sqrt(n) (mu*_b - mu)' lambda / sqrt(lambda' Sigma lambda),
/// studentized by the original-sample covariance. Directions with degenerate
/// variance are skipped; if none remain every W_b is 0.
double eb_critical_value(const DataMatrix& x, const StatisticSpec& spec, double level,
                         int resamples, std::uint64_t seed);

/// Rejects when the statistic exceeds the level-alpha critical value (ties and
/// the mu <= 0 convention never reject). p-value is (|{W_b >= T}| + 1)/(B + 1).
TestOutcome eb_test(const DataMatrix& x, const StatisticSpec& spec,
                    const BootstrapConfig& cfg);

/// Two-step test: cut at c = -2 * (level-beta critical value of the coordinate
/// set), keep J = {j : t_j > c}, then test the selected columns at level
/// alpha - 2 beta. Empty selection never rejects.
TestOutcome eb_test_selected(const DataMatrix& x, const StatisticSpec& spec,
                             const BootstrapConfig& cfg);

/// c = -2 * eb_critical_value(x, coordinate set, beta, ...): the selection
/// cutoff consumed by SelectionRule.
double eb_selection_cutoff(const DataMatrix& x, double beta, int resamples,
                           std::uint64_t seed);

}  // namespace momineq
