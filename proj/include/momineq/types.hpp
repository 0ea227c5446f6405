#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace momineq {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

/// n x p observation matrix; rows are observations, columns are moments.
class DataMatrix {
 public:
  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 2) throw std::invalid_argument("DataMatrix: need n >= 2 rows");
    if (values_.cols() < 1) throw std::invalid_argument("DataMatrix: need p >= 1 columns");
    if (!values_.allFinite()) throw std::invalid_argument("DataMatrix: entries must be finite");
  }

  const Matrix& values() const { return values_; }
  Index n() const { return values_.rows(); }
  Index p() const { return values_.cols(); }

 private:
  Matrix values_;
};

/// Sample mean, covariance (divisor n) and its diagonal, all from one data matrix.
struct SampleMoments {
  Vector mu_hat;     // p
  Matrix sigma_hat;  // p x p, symmetrized
  Vector sigma_diag; // p, sigma_hat diagonal
  Index n = 0;

  Index p() const { return mu_hat.size(); }
};

enum class StatTag { Zero, Finite, Infinite };

/// Extended-real statistic value with the maximizing direction when finite.
struct StatValue {
  StatTag tag = StatTag::Zero;
  Scalar value = 0.0;  // 0 for Zero, positive for Finite, +inf for Infinite
  std::optional<Vector> maximizer;
  bool condition_violated = false;  // true iff tag == Infinite

  static StatValue zero() { return StatValue{StatTag::Zero, 0.0, std::nullopt, false}; }
  static StatValue infinite(std::optional<Vector> direction = std::nullopt) {
    return StatValue{StatTag::Infinite, std::numeric_limits<Scalar>::infinity(),
                     std::move(direction), true};
  }
  static StatValue finite(Scalar v, Vector lambda) {
    return StatValue{StatTag::Finite, v, std::move(lambda), false};
  }
};

/// Result of one randomization or bootstrap test.
struct TestOutcome {
  StatValue statistic;
  double p_value = 1.0;  // k/M for randomization tests, (k+1)/(B+1) for bootstrap
  long count = 0;        // k above
  long draws = 0;        // M (reflections) or B (resamples)
  bool reject = false;
  double alpha = 0.0;
  long n_infinite = 0;   // reflections whose statistic came out Infinite
  std::optional<IndexSet> selected;       // selected column set J (identity data)
  std::optional<double> cutoff;           // selection cutoff c (identity data)
  std::optional<double> critical_value;   // bootstrap critical value
};

}  // namespace momineq
