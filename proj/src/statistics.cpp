#include "momineq/statistics.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace momineq {

StatisticSpec StatisticSpec::custom(Matrix direction_columns) {
  if (direction_columns.cols() == 0) throw std::invalid_argument("empty U");
  for (Index l = 0; l < direction_columns.cols(); ++l) {
    const auto col = direction_columns.col(l);
    if (!col.allFinite() || col.minCoeff() < 0.0)
      throw std::invalid_argument("StatisticSpec: directions must be nonnegative and finite");
    if (col.maxCoeff() == 0.0)
      throw std::invalid_argument("StatisticSpec: zero direction");
  }
  return {Kind::CustomFinite, std::move(direction_columns)};
}

namespace {

Vector unit_direction(Index p, Index j) {
  Vector e = Vector::Zero(p);
  e[j] = 1.0;
  return e;
}

// One pass over (mean, variance, epsilon) triples indexed 0..L-1; direction L-1
// conventions: lowest index wins ties, a degenerate positive-mean direction
// short-circuits to Infinite.
struct FiniteScan {
  Index best = -1;
  Scalar best_ratio = 0.0;
  Index infinite_at = -1;

  bool consider(Index l, Scalar d, Scalar q, Scalar eps) {
    if (d <= 0.0) return false;
    if (q <= eps) {
      infinite_at = l;
      return true;
    }
    const Scalar ratio = d / std::sqrt(q);
    if (best < 0 || ratio > best_ratio) {
      best_ratio = ratio;
      best = l;
    }
    return false;
  }
};

// Shared dispatch over the three finite kinds; the caller supplies the
// per-direction variance computations.
StatValue finite_statistic(const Vector& mu, Index n, const StatisticSpec& spec,
                           const std::function<Scalar(Index)>& coordinate_q,
                           const std::function<Scalar()>& iota_q,
                           const std::function<Scalar(const Vector&)>& custom_q) {
  const Index p = mu.size();
  const Scalar root_n = std::sqrt(static_cast<Scalar>(n));

  if ((mu.array() <= 0.0).all()) return StatValue::zero();

  FiniteScan scan;
  switch (spec.kind) {
    case StatisticSpec::Kind::TMax:
    case StatisticSpec::Kind::TMaxIota: {
      for (Index j = 0; j < p; ++j)
        if (scan.consider(j, mu[j], coordinate_q(j), variance_epsilon(1.0)))
          return StatValue::infinite(unit_direction(p, j));
      if (spec.kind == StatisticSpec::Kind::TMaxIota) {
        if (scan.consider(p, mu.sum(), iota_q(), variance_epsilon(static_cast<Scalar>(p))))
          return StatValue::infinite(Vector::Ones(p));
      }
      if (scan.best < 0) return StatValue::zero();
      Vector maximizer = scan.best < p ? unit_direction(p, scan.best) : Vector::Ones(p);
      return StatValue::finite(root_n * scan.best_ratio, std::move(maximizer));
    }
    case StatisticSpec::Kind::CustomFinite: {
      if (spec.directions.rows() != p)
        throw std::invalid_argument("evaluate_finite: direction length != p");
      for (Index l = 0; l < spec.directions.cols(); ++l) {
        const Vector lambda = spec.directions.col(l);
        if (scan.consider(l, mu.dot(lambda), custom_q(lambda),
                          variance_epsilon(lambda.lpNorm<1>())))
          return StatValue::infinite(lambda);
      }
      if (scan.best < 0) return StatValue::zero();
      return StatValue::finite(root_n * scan.best_ratio, spec.directions.col(scan.best));
    }
    default:
      throw std::invalid_argument("evaluate_finite: spec must be a finite direction set");
  }
}

}  // namespace

StatValue evaluate_finite(const SampleMoments& m, const StatisticSpec& spec) {
  if (!spec.is_finite())
    throw std::invalid_argument("evaluate_finite: spec must be a finite direction set");
  return finite_statistic(
      m.mu_hat, m.n, spec,
      [&](Index j) { return m.sigma_diag[j]; },
      [&]() { return quadratic_form(m, Vector::Ones(m.p())); },
      [&](const Vector& lambda) { return quadratic_form(m, lambda); });
}

StatValue evaluate_finite(const DataMatrix& x, const StatisticSpec& spec) {
  if (!spec.is_finite())
    throw std::invalid_argument("evaluate_finite: spec must be a finite direction set");
  const Matrix& values = x.values();
  const Index n = x.n();
  const Vector mu = values.colwise().mean();
  const Matrix centered = values.rowwise() - mu.transpose();
  return finite_statistic(
      mu, n, spec,
      [&](Index j) { return centered.col(j).squaredNorm() / static_cast<Scalar>(n); },
      [&]() { return centered.rowwise().sum().squaredNorm() / static_cast<Scalar>(n); },
      [&](const Vector& lambda) {
        return (centered * lambda).squaredNorm() / static_cast<Scalar>(n);
      });
}

StatValue evaluate_t_plus(const DataMatrix& x, const NnlsOptions& options) {
  const Matrix& values = x.values();
  const Index n = x.n();

  Matrix gram(x.p(), x.p());
  gram.noalias() = values.transpose() * values;
  const Vector atb = values.transpose() * Vector::Ones(n);

  NnlsGramResult fit = nnls_gram(gram, atb, options);
  if (fit.support.empty()) return StatValue::zero();

  Vector combined = Vector::Zero(n);
  for (Index j : fit.support) combined.noalias() += values.col(j) * fit.lambda[j];
  const Scalar d = combined.mean();
  const Scalar q = (combined.array() - d).square().sum() / static_cast<Scalar>(n);

  if (q <= variance_epsilon(fit.lambda.lpNorm<1>())) return StatValue::infinite(fit.lambda);
  if (d <= 0.0) throw std::runtime_error("NNLS optimality violated");
  return StatValue::finite(std::sqrt(static_cast<Scalar>(n)) * d / std::sqrt(q),
                           std::move(fit.lambda));
}

StatValue evaluate_statistic(const DataMatrix& x, const StatisticSpec& spec) {
  if (spec.kind == StatisticSpec::Kind::TPlus) return evaluate_t_plus(x);
  return evaluate_finite(x, spec);
}

Scalar t_star_transform(Scalar t, Index n) {
  if (std::isinf(t)) return std::sqrt(static_cast<Scalar>(n));
  return t / std::sqrt(1.0 + t * t / static_cast<Scalar>(n));
}

std::string CopositivityCheck::describe() const {
  switch (result) {
    case Result::Positive:
      return "positive";
    case Result::SubmatrixPositive: {
      std::string out = "submatrix-positive (removed:";
      for (Index j : removed) out += " " + std::to_string(j);
      return out + ")";
    }
    default:
      return "unknown";
  }
}

CopositivityCheck check_copositivity_sufficient(const SampleMoments& m) {
  const Index p = m.p();
  if ((m.sigma_hat.array() > 0.0).all()) return {CopositivityCheck::Result::Positive, {}};

  std::vector<bool> active(static_cast<std::size_t>(p), true);
  Index remaining = p;
  IndexSet removed;
  for (;;) {
    // Greedily remove the index with the most nonpositive entries in its row
    // of the active principal submatrix.
    Index worst = -1;
    Index worst_count = 0;
    for (Index i = 0; i < p; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      Index count = 0;
      for (Index j = 0; j < p; ++j)
        if (active[static_cast<std::size_t>(j)] && m.sigma_hat(i, j) <= 0.0) ++count;
      if (count > worst_count) {
        worst_count = count;
        worst = i;
      }
    }
    if (worst < 0) break;  // active submatrix is strictly positive
    active[static_cast<std::size_t>(worst)] = false;
    removed.push_back(worst);
    if (--remaining < 2) return {CopositivityCheck::Result::Unknown, {}};
  }
  if (removed.empty()) return {CopositivityCheck::Result::Positive, {}};
  std::sort(removed.begin(), removed.end());
  return {CopositivityCheck::Result::SubmatrixPositive, std::move(removed)};
}

}  // namespace momineq
