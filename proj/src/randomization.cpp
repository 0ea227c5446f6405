#include "momineq/randomization.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "momineq/bootstrap.hpp"
#include "momineq/moments.hpp"
#include "momineq/parallel.hpp"
#include "momineq/rng.hpp"

namespace momineq {

namespace {

Vector bits_to_signs(std::uint64_t pattern, Index n) {
  Vector s(n);
  for (Index i = 0; i < n; ++i) s[i] = (pattern >> i) & 1ULL ? -1.0 : 1.0;
  return s;
}

}  // namespace

ReflectionPlan sample_reflections(Index n, Index m, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_reflections: n must be positive");
  if (m < 1) throw std::invalid_argument("sample_reflections: M must be positive");

  ReflectionPlan plan;
  plan.signs.resize(n, m);
  plan.signs.col(0).setOnes();
  auto engine = make_engine(seed, {0x5e11ULL});

  if (n <= 62) {
    const std::uint64_t group_size = 1ULL << n;
    if (static_cast<std::uint64_t>(m) > group_size)
      throw std::invalid_argument("sample_reflections: group exhausted (M > 2^n)");
    const std::uint64_t mask = group_size - 1;
    std::unordered_set<std::uint64_t> seen{0ULL};  // identity
    for (Index k = 1; k < m; ++k) {
      std::uint64_t pattern;
      do {
        pattern = engine() & mask;
      } while (!seen.insert(pattern).second);
      plan.signs.col(k) = bits_to_signs(pattern, n);
    }
  } else {
    const Index words = (n + 63) / 64;
    std::set<std::vector<std::uint64_t>> seen;
    seen.insert(std::vector<std::uint64_t>(static_cast<std::size_t>(words), 0ULL));
    std::vector<std::uint64_t> pattern(static_cast<std::size_t>(words));
    for (Index k = 1; k < m; ++k) {
      do {
        for (auto& w : pattern) w = engine();
        const Index tail = n % 64;
        if (tail != 0) pattern.back() &= (1ULL << tail) - 1;
      } while (!seen.insert(pattern).second);
      for (Index i = 0; i < n; ++i)
        plan.signs(i, k) = (pattern[static_cast<std::size_t>(i / 64)] >> (i % 64)) & 1ULL
                               ? -1.0
                               : 1.0;
    }
  }
  return plan;
}

DataMatrix apply_reflection(const DataMatrix& x, const Eigen::Ref<const Vector>& signs) {
  if (signs.size() != x.n())
    throw std::invalid_argument("apply_reflection: sign vector length != n");
  Matrix reflected = x.values().array().colwise() * signs.array();
  return DataMatrix(std::move(reflected));
}

namespace {

// Per-dataset state for evaluating the statistic across a reflection orbit.
// Reflections never change X'X, so column norms, direction images and the
// gram matrix are computed once; each reflection only needs the column sums
// X's (supplied by the caller as one batched product).
class OrbitEvaluator {
 public:
  OrbitEvaluator(const DataMatrix& x, const StatisticSpec& spec)
      : x_(x.values()),
        spec_(spec),
        n_(x.n()),
        p_(x.p()),
        inv_n_(1.0 / static_cast<Scalar>(x.n())),
        root_n_(std::sqrt(static_cast<Scalar>(x.n()))) {
    switch (spec.kind) {
      case StatisticSpec::Kind::TMax:
        colsq_ = x_.colwise().squaredNorm() * inv_n_;
        break;
      case StatisticSpec::Kind::TMaxIota:
        colsq_ = x_.colwise().squaredNorm() * inv_n_;
        rowsum_ = x_.rowwise().sum();
        rowsum_sq_ = rowsum_.squaredNorm() * inv_n_;
        break;
      case StatisticSpec::Kind::CustomFinite: {
        if (spec.directions.rows() != p_)
          throw std::invalid_argument("randomization_test: direction length != p");
        const Index count = spec.directions.cols();
        image_sq_.resize(count);
        l1_.resize(count);
        for (Index l = 0; l < count; ++l) {
          image_sq_[l] = (x_ * spec.directions.col(l)).squaredNorm() * inv_n_;
          l1_[l] = spec.directions.col(l).lpNorm<1>();
        }
        colsq_ = x_.colwise().squaredNorm() * inv_n_;  // for selection t-values
        break;
      }
      case StatisticSpec::Kind::TPlus:
        gram_.resize(p_, p_);
        gram_.noalias() = x_.transpose() * x_;
        colsq_ = gram_.diagonal() * inv_n_;
        break;
    }
  }

  // colsums = X's for the reflection with sign vector s.
  StatValue evaluate(const Eigen::Ref<const Vector>& colsums,
                     const Eigen::Ref<const Vector>& s) const {
    switch (spec_.kind) {
      case StatisticSpec::Kind::TMax:
      case StatisticSpec::Kind::TMaxIota:
      case StatisticSpec::Kind::CustomFinite:
        return evaluate_finite_orbit(colsums);
      case StatisticSpec::Kind::TPlus:
        return evaluate_t_plus_orbit(colsums, s);
    }
    throw std::logic_error("unreachable");
  }

  StatValue evaluate_selected(const Eigen::Ref<const Vector>& colsums,
                              const Eigen::Ref<const Vector>& s,
                              const IndexSet& selected) const {
    if (selected.empty()) return StatValue::zero();
    switch (spec_.kind) {
      case StatisticSpec::Kind::TMax:
      case StatisticSpec::Kind::TMaxIota:
      case StatisticSpec::Kind::CustomFinite:
        return evaluate_finite_selected(colsums, selected);
      case StatisticSpec::Kind::TPlus:
        return evaluate_t_plus_selected(colsums, s, selected);
    }
    throw std::logic_error("unreachable");
  }

  // Studentized means of the reflected data, with the degenerate-column
  // conventions of t_values. Used by selection rules.
  Vector reflected_t_values(const Eigen::Ref<const Vector>& colsums) const {
    Vector mu = colsums * inv_n_;
    Vector variances = colsq_ - mu.cwiseProduct(mu);
    return studentized_values(mu, variances, n_);
  }

  Vector reflected_variances(const Eigen::Ref<const Vector>& colsums) const {
    Vector mu = colsums * inv_n_;
    return colsq_ - mu.cwiseProduct(mu);
  }

  const Matrix& data() const { return x_; }
  Index n() const { return n_; }

 private:
  StatValue evaluate_finite_orbit(const Eigen::Ref<const Vector>& colsums) const {
    const Vector mu = colsums * inv_n_;
    if ((mu.array() <= 0.0).all()) return StatValue::zero();

    Index best = -1;
    Scalar best_ratio = 0.0;
    const bool coordinates = spec_.kind != StatisticSpec::Kind::CustomFinite;
    if (coordinates) {
      for (Index j = 0; j < p_; ++j) {
        const Scalar d = mu[j];
        if (d <= 0.0) continue;
        const Scalar q = colsq_[j] - d * d;
        if (q <= variance_epsilon(1.0)) return StatValue::infinite(unit(j));
        const Scalar ratio = d / std::sqrt(q);
        if (best < 0 || ratio > best_ratio) {
          best_ratio = ratio;
          best = j;
        }
      }
      if (spec_.kind == StatisticSpec::Kind::TMaxIota) {
        const Scalar d = mu.sum();
        if (d > 0.0) {
          const Scalar q = rowsum_sq_ - d * d;
          if (q <= variance_epsilon(static_cast<Scalar>(p_)))
            return StatValue::infinite(Vector::Ones(p_));
          const Scalar ratio = d / std::sqrt(q);
          if (best < 0 || ratio > best_ratio) {
            best_ratio = ratio;
            best = p_;
          }
        }
      }
      if (best < 0) return StatValue::zero();
      Vector maximizer = best < p_ ? unit(best) : Vector::Ones(p_);
      return StatValue::finite(root_n_ * best_ratio, std::move(maximizer));
    }

    for (Index l = 0; l < spec_.directions.cols(); ++l) {
      const Scalar d = mu.dot(spec_.directions.col(l));
      if (d <= 0.0) continue;
      const Scalar q = image_sq_[l] - d * d;
      if (q <= variance_epsilon(l1_[l])) return StatValue::infinite(spec_.directions.col(l));
      const Scalar ratio = d / std::sqrt(q);
      if (best < 0 || ratio > best_ratio) {
        best_ratio = ratio;
        best = l;
      }
    }
    if (best < 0) return StatValue::zero();
    return StatValue::finite(root_n_ * best_ratio, spec_.directions.col(best));
  }

  StatValue evaluate_finite_selected(const Eigen::Ref<const Vector>& colsums,
                                     const IndexSet& selected) const {
    const Scalar inv_n = inv_n_;
    bool any_positive = false;
    for (Index j : selected)
      if (colsums[j] > 0.0) { any_positive = true; break; }
    if (!any_positive && spec_.kind != StatisticSpec::Kind::CustomFinite)
      return StatValue::zero();

    Index best = -1;
    Scalar best_ratio = 0.0;
    if (spec_.kind != StatisticSpec::Kind::CustomFinite) {
      for (std::size_t r = 0; r < selected.size(); ++r) {
        const Index j = selected[r];
        const Scalar d = colsums[j] * inv_n;
        if (d <= 0.0) continue;
        const Scalar q = colsq_[j] - d * d;
        if (q <= variance_epsilon(1.0)) return StatValue::infinite(unit(j));
        const Scalar ratio = d / std::sqrt(q);
        if (best < 0 || ratio > best_ratio) {
          best_ratio = ratio;
          best = j;
        }
      }
      if (spec_.kind == StatisticSpec::Kind::TMaxIota) {
        Scalar d = 0.0;
        for (Index j : selected) d += colsums[j];
        d *= inv_n;
        if (d > 0.0) {
          Vector image = Vector::Zero(n_);
          for (Index j : selected) image += x_.col(j);
          const Scalar q = image.squaredNorm() * inv_n - d * d;
          if (q <= variance_epsilon(static_cast<Scalar>(selected.size())))
            return StatValue::infinite(selection_indicator(selected));
          const Scalar ratio = d / std::sqrt(q);
          if (best < 0 || ratio > best_ratio) {
            best_ratio = ratio;
            best = p_;
          }
        }
      }
      if (best < 0) return StatValue::zero();
      Vector maximizer = best < p_ ? unit(best) : selection_indicator(selected);
      return StatValue::finite(root_n_ * best_ratio, std::move(maximizer));
    }

    // Custom directions restricted to the selected coordinates.
    for (Index l = 0; l < spec_.directions.cols(); ++l) {
      Scalar d = 0.0;
      Scalar l1 = 0.0;
      for (Index j : selected) {
        const Scalar w = spec_.directions(j, l);
        d += w * colsums[j];
        l1 += w;
      }
      d *= inv_n;
      if (l1 == 0.0 || d <= 0.0) continue;
      Vector image = Vector::Zero(n_);
      for (Index j : selected) {
        const Scalar w = spec_.directions(j, l);
        if (w != 0.0) image += w * x_.col(j);
      }
      const Scalar q = image.squaredNorm() * inv_n - d * d;
      if (q <= variance_epsilon(l1)) {
        Vector lambda = Vector::Zero(p_);
        for (Index j : selected) lambda[j] = spec_.directions(j, l);
        return StatValue::infinite(std::move(lambda));
      }
      const Scalar ratio = d / std::sqrt(q);
      if (best < 0 || ratio > best_ratio) {
        best_ratio = ratio;
        best = l;
      }
    }
    if (best < 0) return StatValue::zero();
    Vector lambda = Vector::Zero(p_);
    for (Index j : selected) lambda[j] = spec_.directions(j, best);
    return StatValue::finite(root_n_ * best_ratio, std::move(lambda));
  }

  StatValue evaluate_t_plus_orbit(const Eigen::Ref<const Vector>& colsums,
                                  const Eigen::Ref<const Vector>& s) const {
    NnlsGramResult fit = nnls_gram(gram_, colsums);
    if (fit.support.empty()) return StatValue::zero();

    Vector combined = Vector::Zero(n_);
    for (Index j : fit.support) combined.noalias() += x_.col(j) * fit.lambda[j];
    return t_plus_from_combination(combined.cwiseProduct(s), std::move(fit.lambda));
  }

  StatValue evaluate_t_plus_selected(const Eigen::Ref<const Vector>& colsums,
                                     const Eigen::Ref<const Vector>& s,
                                     const IndexSet& selected) const {
    const Index k = static_cast<Index>(selected.size());
    Matrix sub_gram(k, k);
    Vector sub_atb(k);
    for (Index a = 0; a < k; ++a) {
      sub_atb[a] = colsums[selected[static_cast<std::size_t>(a)]];
      for (Index b = 0; b < k; ++b)
        sub_gram(a, b) = gram_(selected[static_cast<std::size_t>(a)],
                               selected[static_cast<std::size_t>(b)]);
    }
    NnlsGramResult fit = nnls_gram(sub_gram, sub_atb);
    if (fit.support.empty()) return StatValue::zero();

    Vector combined = Vector::Zero(n_);
    Vector lambda = Vector::Zero(p_);
    for (Index r : fit.support) {
      const Index j = selected[static_cast<std::size_t>(r)];
      combined.noalias() += x_.col(j) * fit.lambda[r];
      lambda[j] = fit.lambda[r];
    }
    return t_plus_from_combination(combined.cwiseProduct(s), std::move(lambda));
  }

  StatValue t_plus_from_combination(Vector reflected_combination, Vector lambda) const {
    const Scalar d = reflected_combination.mean();
    const Scalar q =
        (reflected_combination.array() - d).square().sum() * inv_n_;
    if (q <= variance_epsilon(lambda.lpNorm<1>())) return StatValue::infinite(std::move(lambda));
    if (d <= 0.0) throw std::runtime_error("NNLS optimality violated");
    return StatValue::finite(root_n_ * d / std::sqrt(q), std::move(lambda));
  }

  Vector unit(Index j) const {
    Vector e = Vector::Zero(p_);
    e[j] = 1.0;
    return e;
  }

  Vector selection_indicator(const IndexSet& selected) const {
    Vector v = Vector::Zero(p_);
    for (Index j : selected) v[j] = 1.0;
    return v;
  }

  const Matrix& x_;
  const StatisticSpec& spec_;
  Index n_ = 0;
  Index p_ = 0;
  Scalar inv_n_ = 0.0;
  Scalar root_n_ = 0.0;
  Vector colsq_;      // |x_j|^2 / n
  Vector rowsum_;     // X iota
  Scalar rowsum_sq_ = 0.0;
  std::vector<Scalar> image_sq_;  // |X lambda_l|^2 / n
  std::vector<Scalar> l1_;
  Matrix gram_;       // X'X
};

// Per-reflection empirical-bootstrap cutoff, sharing one set of resample
// draws so the cutoff is a deterministic function of the reflected data.
class ReflectionCutoff {
 public:
  ReflectionCutoff(const Matrix& x, const SelectionRule& rule)
      : x_(x),
        deviations_(resample_count_deviations(x.rows(), rule.resamples, rule.seed)),
        beta_(rule.beta),
        resamples_(rule.resamples) {
    const double target = (1.0 - beta_) * resamples_;
    quantile_index_ = static_cast<Index>(std::ceil(target - 1e-9));
    quantile_index_ = std::clamp<Index>(quantile_index_, 1, resamples_);
  }

  double compute(const Eigen::Ref<const Vector>& s,
                 const Eigen::Ref<const Vector>& variances) const {
    const Index n = x_.rows();
    const Index p = x_.cols();
    const Scalar root_n = std::sqrt(static_cast<Scalar>(n));

    Vector inv_scale(p);
    for (Index j = 0; j < p; ++j) {
      const Scalar q = variances[j];
      inv_scale[j] = q > variance_epsilon(1.0) ? 1.0 / (root_n * std::sqrt(q)) : 0.0;
    }

    Matrix reflected = x_.transpose() * s.asDiagonal();  // p x n
    Matrix z(p, resamples_);
    z.noalias() = reflected * deviations_;

    Vector w(resamples_);
    for (Index b = 0; b < resamples_; ++b) {
      Scalar best = -std::numeric_limits<Scalar>::infinity();
      bool any = false;
      for (Index j = 0; j < p; ++j) {
        if (inv_scale[j] == 0.0) continue;
        any = true;
        best = std::max(best, z(j, b) * inv_scale[j]);
      }
      w[b] = any ? best : 0.0;
    }
    std::nth_element(w.data(), w.data() + (quantile_index_ - 1), w.data() + resamples_);
    return -2.0 * w[quantile_index_ - 1];
  }

 private:
  const Matrix& x_;
  Matrix deviations_;  // n x B, resample counts minus one
  double beta_;
  Index resamples_;
  Index quantile_index_;
};

struct OrbitResult {
  std::vector<Scalar> values;
  std::vector<StatTag> tags;
  StatValue reference;
};

TestOutcome summarize_orbit(const OrbitResult& orbit, double alpha) {
  const long m = static_cast<long>(orbit.values.size());
  long count = 0;
  long infinite = 0;
  for (long i = 0; i < m; ++i) {
    if (orbit.values[static_cast<std::size_t>(i)] >= orbit.values[0]) ++count;
    if (orbit.tags[static_cast<std::size_t>(i)] == StatTag::Infinite) ++infinite;
  }
  TestOutcome outcome;
  outcome.statistic = orbit.reference;
  outcome.count = count;
  outcome.draws = m;
  outcome.p_value = static_cast<double>(count) / static_cast<double>(m);
  outcome.alpha = alpha;
  outcome.reject = outcome.p_value <= alpha;
  outcome.n_infinite = infinite;
  return outcome;
}

void validate_test_inputs(const DataMatrix& x, const ReflectionPlan& plan, double alpha) {
  if (plan.n() != x.n())
    throw std::invalid_argument("randomization_test: plan row count != n");
  if (plan.count() < 1) throw std::invalid_argument("randomization_test: empty plan");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("randomization_test: alpha must lie in (0, 1)");
}

}  // namespace

TestOutcome randomization_test(const DataMatrix& x, const StatisticSpec& spec,
                               const ReflectionPlan& plan, double alpha, int threads) {
  validate_test_inputs(x, plan, alpha);
  const Index m = plan.count();

  OrbitEvaluator evaluator(x, spec);
  Matrix colsums(x.p(), m);
  colsums.noalias() = x.values().transpose() * plan.signs;

  OrbitResult orbit;
  orbit.values.resize(static_cast<std::size_t>(m));
  orbit.tags.resize(static_cast<std::size_t>(m));
  parallel_for(0, m, threads, [&](long i) {
    StatValue v = evaluator.evaluate(colsums.col(i), plan.signs.col(i));
    orbit.values[static_cast<std::size_t>(i)] = v.value;
    orbit.tags[static_cast<std::size_t>(i)] = v.tag;
    if (i == 0) orbit.reference = std::move(v);
  });
  return summarize_orbit(orbit, alpha);
}

TestOutcome randomization_test_selected(const DataMatrix& x, const StatisticSpec& spec,
                                        const SelectionRule& selector,
                                        const ReflectionPlan& plan, double alpha,
                                        int threads) {
  validate_test_inputs(x, plan, alpha);

  if (selector.kind == SelectionRule::Kind::KeepAll) {
    TestOutcome outcome = randomization_test(x, spec, plan, alpha, threads);
    IndexSet all(static_cast<std::size_t>(x.p()));
    for (Index j = 0; j < x.p(); ++j) all[static_cast<std::size_t>(j)] = j;
    outcome.selected = std::move(all);
    return outcome;
  }
  if (selector.kind == SelectionRule::Kind::EbPerReflection && selector.resamples < 1)
    throw std::invalid_argument("randomization_test_selected: resamples must be positive");

  const Index m = plan.count();
  OrbitEvaluator evaluator(x, spec);
  Matrix colsums(x.p(), m);
  colsums.noalias() = x.values().transpose() * plan.signs;

  std::optional<ReflectionCutoff> eb_cutoff;
  if (selector.kind == SelectionRule::Kind::EbPerReflection)
    eb_cutoff.emplace(x.values(), selector);

  OrbitResult orbit;
  orbit.values.resize(static_cast<std::size_t>(m));
  orbit.tags.resize(static_cast<std::size_t>(m));
  IndexSet reference_selected;
  double reference_cutoff = 0.0;

  parallel_for(0, m, threads, [&](long i) {
    const auto sums = colsums.col(i);
    const auto signs = plan.signs.col(i);
    double cutoff = selector.cutoff;
    if (eb_cutoff) cutoff = eb_cutoff->compute(signs, evaluator.reflected_variances(sums));

    const Vector t = evaluator.reflected_t_values(sums);
    IndexSet selected;
    for (Index j = 0; j < t.size(); ++j)
      if (t[j] > cutoff) selected.push_back(j);

    StatValue v = evaluator.evaluate_selected(sums, signs, selected);
    orbit.values[static_cast<std::size_t>(i)] = v.value;
    orbit.tags[static_cast<std::size_t>(i)] = v.tag;
    if (i == 0) {
      orbit.reference = std::move(v);
      reference_selected = std::move(selected);
      reference_cutoff = cutoff;
    }
  });

  TestOutcome outcome = summarize_orbit(orbit, alpha);
  outcome.selected = std::move(reference_selected);
  outcome.cutoff = reference_cutoff;
  return outcome;
}

}  // namespace momineq
