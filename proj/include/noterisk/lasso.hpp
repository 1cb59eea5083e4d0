#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noterisk/error.hpp"

namespace noterisk {

// Coordinate descent did not settle within the sweep budget.
struct ConvergenceError : public ModelError {
  double lambda;
  double last_delta;
  ConvergenceError(const std::string& message, double lambda_value, double delta)
      : ModelError(message), lambda(lambda_value), last_delta(delta) {}
};

// Dense n x p design with named columns and 0/1 labels.
struct DesignMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
  Eigen::VectorXd labels;  // 0.0 or 1.0

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  // n >= 2, finite entries, 0/1 labels, matching shapes, unique column names.
  void validate() const;
  bool has_both_classes() const;
};

// Column centering and scaling learned from one design matrix. `columns` are
// the retained columns; zero-variance columns are listed in `dropped`.
struct Standardization {
  std::vector<std::string> columns;
  std::vector<Eigen::Index> source_index;  // position of each retained column in the input
  Eigen::VectorXd means;
  Eigen::VectorXd sds;  // population standard deviation, > 0
  std::vector<std::string> dropped;

  // Applies the transform to another matrix with the same input columns.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

// Centers each column to mean 0 and scales to population sd 1. Throws
// ModelError when every column is constant.
std::pair<DesignMatrix, Standardization> standardize(const DesignMatrix& x);

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

// max_j |z_j^T (y - ybar)| / n on a standardized matrix: the smallest penalty
// whose solution has every coefficient at zero.
double lambda_max(const Eigen::MatrixXd& standardized, const Eigen::VectorXd& labels);

// Strictly decreasing sequence of penalties.
class LambdaPath {
 public:
  // Throws ConfigError unless values are non-negative and strictly decreasing.
  explicit LambdaPath(std::vector<double> values);

  // `count` values log-spaced from lambda_max down to eps * lambda_max, with
  // eps = 1e-4 when n > p and 1e-2 otherwise. A zero lambda_max yields {0}.
  static LambdaPath log_spaced(double lambda_max, Eigen::Index n, Eigen::Index p,
                               std::size_t count = 100);
  // Standardizes `x` and builds the log-spaced path from its lambda_max.
  static LambdaPath for_data(const DesignMatrix& x, std::size_t count = 100);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

struct ModelMeta {
  std::string outcome;
  std::string feature_set;
  std::uint64_t seed = 0;
};

struct FittedModel {
  double intercept = 0.0;
  std::vector<std::string> columns;  // retained columns, in coefficient order
  Eigen::VectorXd coefficients;      // original scale
  double lambda = 0.0;
  std::size_t n_nonzero = 0;
  std::vector<std::string> dropped_columns;
  Standardization standardization;
  // Solution on the standardized scale.
  double intercept_std = 0.0;
  Eigen::VectorXd coefficients_std;
  ModelMeta meta;

  std::optional<double> coefficient(std::string_view name) const;
};

// Per-sweep and per-IRLS-step objective values, for diagnostics and tests.
struct SolverTrace {
  // Quadratic surrogate after each coordinate sweep, one list per IRLS step.
  std::vector<std::vector<double>> surrogate;
  // Penalized objective after each IRLS step (after any step halving).
  std::vector<double> objective;
};

struct SolverOptions {
  double tol = 1e-7;        // on the largest coefficient change (standardized scale)
  int max_iter = 100000;    // coordinate sweeps per lambda
  double weight_floor = 1e-5;
  SolverTrace* trace = nullptr;  // filled for the last lambda solved when set
};

// (1/n) * sum of log-losses + lambda * ||beta||_1 on standardized inputs.
double penalized_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double intercept,
                           const Eigen::VectorXd& beta, double lambda);

// Largest violation of the penalized-likelihood optimality conditions,
// including the unpenalized intercept.
double kkt_residual(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double intercept,
                    const Eigen::VectorXd& beta, double lambda);

struct StandardizedSolution {
  double intercept = 0.0;
  Eigen::VectorXd beta;
};

// Solves one lambda on a standardized matrix, starting from `warm` when given.
// IRLS outer loop with cyclic coordinate descent (active-set cycling) inside.
// Throws ModelError on non-convergence or an unpenalized fit on separable data.
StandardizedSolution solve_standardized(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                        double lambda, const StandardizedSolution* warm,
                                        const SolverOptions& options = {});

// Standardizes internally and solves every lambda of `path` with warm starts.
std::vector<FittedModel> fit_path(const DesignMatrix& x, const LambdaPath& path,
                                  const SolverOptions& options = {});

enum class CvCriterion { deviance, misclassification };
std::string_view to_string(CvCriterion criterion);
CvCriterion parse_cv_criterion(std::string_view name);

struct CvResult {
  std::vector<double> lambdas;
  std::vector<double> mean;  // per lambda, averaged over folds
  std::vector<double> se;    // standard error of the fold means
  std::size_t index_min = 0;
  double lambda_min = 0.0;
  std::uint64_t fold_seed = 0;        // seed that produced the accepted folds
  std::vector<int> fold_of;           // fold id per row
  FittedModel model;                  // refit on all rows at lambda_min
};

struct CvOptions {
  std::size_t folds = 10;
  CvCriterion criterion = CvCriterion::deviance;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  SolverOptions solver;
};

// k-fold cross-validation over `path`. Fold assignment is a seeded shuffle; if
// a fold lacks a class the seed is bumped, up to 100 attempts. The minimum
// mean criterion selects lambda (ties go to the larger lambda).
CvResult cv_select(const DesignMatrix& x, const LambdaPath& path, const CvOptions& options);

// 1 / (1 + exp(-(b0 + b^T x))) with x looked up by column name. Throws
// ModelError naming the first missing feature.
double predict_prob(const FittedModel& model, const std::map<std::string, double>& features);

// Vectorized prediction for a matrix whose columns include the model's.
Eigen::VectorXd predict_probs(const FittedModel& model, const DesignMatrix& x);

// Same probabilities computed from the standardized-scale solution.
Eigen::VectorXd predict_probs_standardized(const FittedModel& model, const DesignMatrix& x);

std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(std::string_view text);

}  // namespace noterisk
