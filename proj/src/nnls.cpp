#include "momineq/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace momineq {

namespace {

// Lower-triangular Cholesky factor of gram(P, P) that supports appending one
// index at a time; removals trigger a rebuild (they are rare in practice).
class GrowingCholesky {
 public:
  explicit GrowingCholesky(const Eigen::Ref<const Matrix>& gram) : gram_(gram) {
    const Index p = gram.rows();
    factor_.resize(p, p);
    scratch_.resize(p);
  }

  Index size() const { return static_cast<Index>(passive_.size()); }
  const IndexSet& passive() const { return passive_; }

  // Returns false when the new column is numerically dependent on the
  // current passive span.
  bool try_append(Index j) {
    const Index k = size();
    const Scalar gjj = gram_(j, j);
    for (Index r = 0; r < k; ++r) scratch_[r] = gram_(passive_[r], j);
    // Forward-substitute L * l = gram(P, j).
    for (Index r = 0; r < k; ++r) {
      Scalar s = scratch_[r];
      for (Index c = 0; c < r; ++c) s -= factor_(r, c) * scratch_[c];
      scratch_[r] = s / factor_(r, r);
    }
    Scalar d2 = gjj;
    for (Index r = 0; r < k; ++r) d2 -= scratch_[r] * scratch_[r];
    if (!(d2 > 1e-13 * std::max<Scalar>(gjj, 1e-300))) return false;
    for (Index r = 0; r < k; ++r) factor_(k, r) = scratch_[r];
    factor_(k, k) = std::sqrt(d2);
    passive_.push_back(j);
    return true;
  }

  // Rebuilds the factor without the dropped indices. Returns any kept index
  // that failed to re-append (numerically dependent leftover) so the caller
  // can evict it from the passive set as well.
  IndexSet remove(const std::vector<bool>& drop) {
    IndexSet kept;
    kept.reserve(passive_.size());
    for (Index j : passive_)
      if (!drop[static_cast<std::size_t>(j)]) kept.push_back(j);
    passive_.clear();
    IndexSet failed;
    for (Index j : kept)
      if (!try_append(j)) failed.push_back(j);
    return failed;
  }

  // Solves gram(P, P) z = rhs(P) in place of z (size = passive count).
  void solve(const Eigen::Ref<const Vector>& rhs_full, Vector& z) const {
    const Index k = size();
    z.resize(k);
    for (Index r = 0; r < k; ++r) {
      Scalar s = rhs_full[passive_[r]];
      for (Index c = 0; c < r; ++c) s -= factor_(r, c) * z[c];
      z[r] = s / factor_(r, r);
    }
    for (Index r = k - 1; r >= 0; --r) {
      Scalar s = z[r];
      for (Index c = r + 1; c < k; ++c) s -= factor_(c, r) * z[c];
      z[r] = s / factor_(r, r);
    }
  }

 private:
  Eigen::Ref<const Matrix> gram_;
  Matrix factor_;
  Vector scratch_;
  IndexSet passive_;
};

}  // namespace

NnlsGramResult nnls_gram(const Eigen::Ref<const Matrix>& gram,
                         const Eigen::Ref<const Vector>& atb,
                         const NnlsOptions& options) {
  const Index p = gram.rows();
  if (gram.cols() != p || atb.size() != p)
    throw std::invalid_argument("nnls_gram: dimension mismatch");

  const Scalar eps_kkt =
      std::max(options.kkt_scale * atb.cwiseAbs().maxCoeff(), options.kkt_floor);
  const int max_iter = std::max(options.max_iter_factor * static_cast<int>(p), 4);

  NnlsGramResult result;
  result.lambda = Vector::Zero(p);
  result.eps_kkt = eps_kkt;

  GrowingCholesky chol(gram);
  Vector gradient_neg = atb;  // w = A'b - A'A lambda, lambda = 0 initially
  Vector z;
  std::vector<bool> in_passive(static_cast<std::size_t>(p), false);
  std::vector<bool> blocked(static_cast<std::size_t>(p), false);
  std::vector<bool> drop(static_cast<std::size_t>(p), false);
  int iterations = 0;

  auto refresh_gradient = [&]() {
    gradient_neg = atb;
    for (Index j : chol.passive())
      gradient_neg.noalias() -= gram.col(j) * result.lambda[j];
  };

  for (;;) {
    // Pick the most violated dual coordinate outside the passive set.
    Index enter = -1;
    Scalar best = eps_kkt;
    for (Index j = 0; j < p; ++j) {
      if (in_passive[static_cast<std::size_t>(j)] || blocked[static_cast<std::size_t>(j)])
        continue;
      if (gradient_neg[j] > best) {
        best = gradient_neg[j];
        enter = j;
      }
    }
    if (enter < 0) break;

    if (!chol.try_append(enter)) {
      // Numerically dependent on the passive span; its residual correlation
      // is noise, skip it until the passive set changes.
      blocked[static_cast<std::size_t>(enter)] = true;
      continue;
    }
    in_passive[static_cast<std::size_t>(enter)] = true;

    // Inner loop: solve on the passive set, backtrack while infeasible.
    for (;;) {
      if (++iterations > max_iter)
        throw NnlsError("nnls: active-set iteration cap exceeded", result.lambda, iterations);

      chol.solve(atb, z);
      const IndexSet& passive = chol.passive();
      const Index k = chol.size();

      bool feasible = true;
      for (Index r = 0; r < k; ++r)
        if (z[r] <= 0.0) { feasible = false; break; }

      if (feasible) {
        for (Index r = 0; r < k; ++r) result.lambda[passive[r]] = z[r];
        break;
      }

      Scalar step = 1.0;
      for (Index r = 0; r < k; ++r) {
        if (z[r] <= 0.0) {
          const Scalar lj = result.lambda[passive[r]];
          step = std::min(step, lj / (lj - z[r]));
        }
      }
      std::fill(drop.begin(), drop.end(), false);
      bool any_drop = false;
      for (Index r = 0; r < k; ++r) {
        const Index j = passive[r];
        Scalar moved = result.lambda[j] + step * (z[r] - result.lambda[j]);
        if (z[r] <= 0.0 && moved <= 1e-12 * std::abs(z[r] - result.lambda[j]) + 1e-300) {
          moved = 0.0;
        }
        if (moved <= 0.0) {
          result.lambda[j] = 0.0;
          in_passive[static_cast<std::size_t>(j)] = false;
          drop[static_cast<std::size_t>(j)] = true;
          any_drop = true;
        } else {
          result.lambda[j] = moved;
        }
      }
      if (!any_drop) {
        // Guard against a zero step due to rounding: drop the most negative z.
        Index worst = passive[0];
        Scalar worst_z = std::numeric_limits<Scalar>::infinity();
        for (Index r = 0; r < k; ++r)
          if (z[r] < worst_z) { worst_z = z[r]; worst = passive[r]; }
        result.lambda[worst] = 0.0;
        in_passive[static_cast<std::size_t>(worst)] = false;
        drop[static_cast<std::size_t>(worst)] = true;
      }
      for (Index j : chol.remove(drop)) {
        result.lambda[j] = 0.0;
        in_passive[static_cast<std::size_t>(j)] = false;
      }
      std::fill(blocked.begin(), blocked.end(), false);
    }

    std::fill(blocked.begin(), blocked.end(), false);
    refresh_gradient();
  }

  result.iterations = iterations;
  result.support.clear();
  for (Index j : chol.passive())
    if (result.lambda[j] > 0.0) result.support.push_back(j);
  std::sort(result.support.begin(), result.support.end());
  return result;
}

NnlsResult nnls(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& b,
                const NnlsOptions& options) {
  if (a.rows() != b.size()) throw std::invalid_argument("nnls: dimension mismatch");
  if (!a.allFinite() || !b.allFinite())
    throw std::invalid_argument("nnls: inputs must be finite");

  Matrix gram(a.cols(), a.cols());
  gram.noalias() = a.transpose() * a;
  Vector atb = a.transpose() * b;

  NnlsGramResult core = nnls_gram(gram, atb, options);

  NnlsResult result;
  result.lambda = std::move(core.lambda);
  result.iterations = core.iterations;
  result.eps_kkt = core.eps_kkt;
  result.residual = b;
  for (Index j : core.support) result.residual.noalias() -= a.col(j) * result.lambda[j];
  return result;
}

}  // namespace momineq
