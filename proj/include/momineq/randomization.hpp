#pragma once

#include <cstdint>

#include "momineq/statistics.hpp"
#include "momineq/types.hpp"

namespace momineq {

/// M sign vectors, one per column, entries in {-1, +1}. Column 0 is the
/// reference reflection the p-value count compares against (the identity in
/// normal use); all columns are pairwise distinct.
struct ReflectionPlan {
  Matrix signs;  // n x M

  Index n() const { return signs.rows(); }
  Index count() const { return signs.cols(); }
};

/// Identity first, then M-1 sign vectors drawn uniformly without replacement
/// from the remaining 2^n - 1. For n > 62 the draws are i.i.d. with duplicate
/// rejection (collision bookkeeping over 2^n patterns is infeasible and the
/// collision probability is negligible).
ReflectionPlan sample_reflections(Index n, Index m, std::uint64_t seed);

/// Row i of the result is signs[i] times row i of x.
DataMatrix apply_reflection(const DataMatrix& x, const Eigen::Ref<const Vector>& signs);

/// Column selection applied to each reflected dataset: keep everything, keep
/// t_j > c for a fixed c, or keep t_j > c with c recomputed from the reflected
/// data by the empirical-bootstrap rule (same resample draws for every
/// reflection, so the whole map is a function of the reflected data).
struct SelectionRule {
  enum class Kind { KeepAll, FixedCutoff, EbPerReflection };

  Kind kind = Kind::KeepAll;
  double cutoff = 0.0;        // FixedCutoff
  double beta = 0.001;        // EbPerReflection
  int resamples = 1000;       // EbPerReflection
  std::uint64_t seed = 0;     // EbPerReflection

  static SelectionRule keep_all() { return {}; }
  static SelectionRule fixed_cutoff(double c) {
    return {Kind::FixedCutoff, c, 0.0, 0, 0};
  }
  static SelectionRule eb_per_reflection(double beta, int resamples, std::uint64_t seed) {
    return {Kind::EbPerReflection, 0.0, beta, resamples, seed};
  }
};

/// Symmetry randomization test: p = |{R : T(RX) >= T(X)}| / M with
/// extended-real comparison (inf >= inf and 0 >= 0 both count).
TestOutcome randomization_test(const DataMatrix& x, const StatisticSpec& spec,
                               const ReflectionPlan& plan, double alpha,
                               int threads = 1);

/// Randomization test with per-reflection inequality selection: for every
/// reflection the selected set J(RX) is recomputed and the statistic is
/// evaluated on the selected columns (empty selection gives statistic 0).
TestOutcome randomization_test_selected(const DataMatrix& x, const StatisticSpec& spec,
                                        const SelectionRule& selector,
                                        const ReflectionPlan& plan, double alpha,
                                        int threads = 1);

}  // namespace momineq
