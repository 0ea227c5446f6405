#include "momineq/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "momineq/moments.hpp"
#include "momineq/rng.hpp"

namespace momineq {

namespace {

Index quantile_order_index(double level, Index resamples) {
  const double target = (1.0 - level) * static_cast<double>(resamples);
  Index idx = static_cast<Index>(std::ceil(target - 1e-9));
  return std::clamp<Index>(idx, 1, resamples);
}

// Direction images Y = X Lambda and the matching studentization scales
// 1 / (sqrt(n) sigma_lambda), with degenerate directions zeroed out.
struct DirectionSetup {
  Matrix images;      // n x L
  Vector inv_scale;   // L, zero marks a skipped direction
};

DirectionSetup setup_directions(const DataMatrix& x, const StatisticSpec& spec) {
  const Matrix& values = x.values();
  const Index n = x.n();
  const Index p = x.p();
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  const Scalar root_n = std::sqrt(static_cast<Scalar>(n));
  const Vector mu = values.colwise().mean();

  DirectionSetup setup;
  switch (spec.kind) {
    case StatisticSpec::Kind::TMax:
    case StatisticSpec::Kind::TMaxIota: {
      const bool with_iota = spec.kind == StatisticSpec::Kind::TMaxIota;
      const Index count = p + (with_iota ? 1 : 0);
      setup.images.resize(n, count);
      setup.images.leftCols(p) = values;
      if (with_iota) setup.images.col(p) = values.rowwise().sum();
      setup.inv_scale.resize(count);
      for (Index l = 0; l < count; ++l) {
        const Scalar mean = with_iota && l == p ? mu.sum() : mu[l];
        const Scalar q = setup.images.col(l).squaredNorm() * inv_n - mean * mean;
        const Scalar l1 = with_iota && l == p ? static_cast<Scalar>(p) : 1.0;
        setup.inv_scale[l] = q > variance_epsilon(l1) ? 1.0 / (root_n * std::sqrt(q)) : 0.0;
      }
      return setup;
    }
    case StatisticSpec::Kind::CustomFinite: {
      if (spec.directions.rows() != p)
        throw std::invalid_argument("eb_critical_value: direction length != p");
      const Index count = spec.directions.cols();
      setup.images.resize(n, count);
      setup.images.noalias() = values * spec.directions;
      setup.inv_scale.resize(count);
      for (Index l = 0; l < count; ++l) {
        const Scalar mean = mu.dot(spec.directions.col(l));
        const Scalar q = setup.images.col(l).squaredNorm() * inv_n - mean * mean;
        setup.inv_scale[l] =
            q > variance_epsilon(spec.directions.col(l).lpNorm<1>())
                ? 1.0 / (root_n * std::sqrt(q))
                : 0.0;
      }
      return setup;
    }
    default:
      throw std::invalid_argument("empirical bootstrap requires a finite direction set");
  }
}

// W_b = max over non-degenerate directions of the recentred studentized
// bootstrap mean; 0 when every direction is degenerate.
Vector bootstrap_statistics(const DataMatrix& x, const StatisticSpec& spec,
                            int resamples, std::uint64_t seed) {
  DirectionSetup setup = setup_directions(x, spec);
  const Matrix deviations = resample_count_deviations(x.n(), resamples, seed);

  // sqrt(n) (mu*_b - mu)' lambda_l / sigma_l = (images_l' k_b) * inv_scale_l:
  // the 1/n from the recentred mean and the sqrt(n) studentization fold into
  // inv_scale = 1 / (sqrt(n) sigma_l).
  Matrix recentred(setup.images.cols(), resamples);
  recentred.noalias() = setup.images.transpose() * deviations;

  Vector w(resamples);
  for (Index b = 0; b < resamples; ++b) {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    bool any = false;
    for (Index l = 0; l < recentred.rows(); ++l) {
      if (setup.inv_scale[l] == 0.0) continue;
      any = true;
      best = std::max(best, recentred(l, b) * setup.inv_scale[l]);
    }
    w[b] = any ? best : 0.0;
  }
  return w;
}

}  // namespace

Matrix resample_count_deviations(Index n, int resamples, std::uint64_t seed) {
  if (n < 1 || resamples < 1)
    throw std::invalid_argument("resample_count_deviations: bad dimensions");
  auto engine = make_engine(seed, {0xb007ULL});
  std::uniform_int_distribution<Index> pick(0, n - 1);
  Matrix deviations = Matrix::Constant(n, resamples, -1.0);
  for (int b = 0; b < resamples; ++b)
    for (Index i = 0; i < n; ++i) deviations(pick(engine), b) += 1.0;
  return deviations;
}

double eb_critical_value(const DataMatrix& x, const StatisticSpec& spec, double level,
                         int resamples, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("eb_critical_value: level must lie in (0, 1)");
  if (resamples < 1) throw std::invalid_argument("eb_critical_value: resamples must be positive");

  Vector w = bootstrap_statistics(x, spec, resamples, seed);
  const Index idx = quantile_order_index(level, resamples);
  std::nth_element(w.data(), w.data() + (idx - 1), w.data() + w.size());
  return w[idx - 1];
}

TestOutcome eb_test(const DataMatrix& x, const StatisticSpec& spec,
                    const BootstrapConfig& cfg) {
  if (!spec.is_finite())
    throw std::invalid_argument("eb_test: no bootstrap comparator for the orthant statistic");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw std::invalid_argument("eb_test: alpha must lie in (0, 1)");

  StatValue statistic = evaluate_finite(x, spec);
  Vector w = bootstrap_statistics(x, spec, cfg.resamples, cfg.seed);

  Vector sorted = w;
  const Index idx = quantile_order_index(cfg.alpha, cfg.resamples);
  std::nth_element(sorted.data(), sorted.data() + (idx - 1), sorted.data() + sorted.size());
  const double critical = sorted[idx - 1];

  long exceed = 0;
  for (Index b = 0; b < w.size(); ++b)
    if (w[b] >= statistic.value) ++exceed;

  TestOutcome outcome;
  outcome.statistic = std::move(statistic);
  outcome.count = exceed;
  outcome.draws = cfg.resamples;
  outcome.p_value = static_cast<double>(exceed + 1) / static_cast<double>(cfg.resamples + 1);
  outcome.alpha = cfg.alpha;
  outcome.critical_value = critical;
  outcome.reject =
      outcome.statistic.tag != StatTag::Zero && outcome.statistic.value > critical;
  outcome.n_infinite = outcome.statistic.tag == StatTag::Infinite ? 1 : 0;
  return outcome;
}

TestOutcome eb_test_selected(const DataMatrix& x, const StatisticSpec& spec,
                             const BootstrapConfig& cfg) {
  if (!spec.is_finite())
    throw std::invalid_argument("eb_test_selected: no bootstrap comparator for the orthant statistic");
  if (cfg.beta < 0.0 || 2.0 * cfg.beta >= cfg.alpha)
    throw std::invalid_argument("eb_test_selected: beta must lie in [0, alpha/2)");

  if (cfg.beta == 0.0) {
    // Degenerate cutoff -inf: nothing is removed and no level adjustment.
    TestOutcome outcome = eb_test(x, spec, cfg);
    IndexSet all(static_cast<std::size_t>(x.p()));
    for (Index j = 0; j < x.p(); ++j) all[static_cast<std::size_t>(j)] = j;
    outcome.selected = std::move(all);
    outcome.cutoff = -std::numeric_limits<double>::infinity();
    return outcome;
  }

  const double cutoff = eb_selection_cutoff(x, cfg.beta, cfg.resamples,
                                            derive_seed(cfg.seed, {0x5e1ec7ULL}));

  const Matrix& values = x.values();
  const Index n = x.n();
  const Vector mu = values.colwise().mean();
  const Vector variances =
      (values.rowwise() - mu.transpose()).colwise().squaredNorm() / static_cast<Scalar>(n);
  const Vector t = studentized_values(mu, variances, n);

  IndexSet selected;
  for (Index j = 0; j < t.size(); ++j)
    if (t[j] > cutoff) selected.push_back(j);

  if (selected.empty()) {
    TestOutcome outcome;
    outcome.statistic = StatValue::zero();
    outcome.p_value = 1.0;
    outcome.count = cfg.resamples;
    outcome.draws = cfg.resamples;
    outcome.alpha = cfg.alpha;
    outcome.reject = false;
    outcome.selected = std::move(selected);
    outcome.cutoff = cutoff;
    return outcome;
  }

  Matrix restricted(n, static_cast<Index>(selected.size()));
  for (std::size_t r = 0; r < selected.size(); ++r)
    restricted.col(static_cast<Index>(r)) = values.col(selected[r]);

  StatisticSpec restricted_spec = spec;
  if (spec.kind == StatisticSpec::Kind::CustomFinite) {
    Matrix dirs(static_cast<Index>(selected.size()), spec.directions.cols());
    for (std::size_t r = 0; r < selected.size(); ++r)
      dirs.row(static_cast<Index>(r)) = spec.directions.row(selected[r]);
    // Drop directions that became all-zero under the restriction.
    Index kept = 0;
    Matrix pruned(dirs.rows(), dirs.cols());
    for (Index l = 0; l < dirs.cols(); ++l)
      if (dirs.col(l).maxCoeff() > 0.0) pruned.col(kept++) = dirs.col(l);
    if (kept == 0) {
      TestOutcome outcome;
      outcome.statistic = StatValue::zero();
      outcome.p_value = 1.0;
      outcome.count = cfg.resamples;
      outcome.draws = cfg.resamples;
      outcome.alpha = cfg.alpha;
      outcome.reject = false;
      outcome.selected = std::move(selected);
      outcome.cutoff = cutoff;
      return outcome;
    }
    restricted_spec.directions = pruned.leftCols(kept);
  }

  BootstrapConfig inner = cfg;
  inner.alpha = cfg.alpha - 2.0 * cfg.beta;
  inner.seed = derive_seed(cfg.seed, {0x7e57ULL});
  TestOutcome outcome = eb_test(DataMatrix(std::move(restricted)), restricted_spec, inner);
  outcome.alpha = cfg.alpha;
  outcome.selected = std::move(selected);
  outcome.cutoff = cutoff;
  return outcome;
}

double eb_selection_cutoff(const DataMatrix& x, double beta, int resamples,
                           std::uint64_t seed) {
  return -2.0 * eb_critical_value(x, StatisticSpec::t_max(), beta, resamples, seed);
}

}  // namespace momineq
