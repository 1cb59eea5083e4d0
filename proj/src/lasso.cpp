#include "noterisk/lasso.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "json.hpp"

namespace noterisk {

using ordered_json = nlohmann::ordered_json;

namespace {

double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void DesignMatrix::validate() const {
  if (values.rows() < 2) throw ModelError("design matrix needs at least 2 rows");
  if (static_cast<std::size_t>(values.cols()) != columns.size()) {
    throw ModelError("design matrix has " + std::to_string(values.cols()) + " columns but " +
                     std::to_string(columns.size()) + " names");
  }
  if (labels.size() != values.rows()) throw ModelError("label count does not match row count");
  if (!values.allFinite()) throw ModelError("design matrix contains non-finite values");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) throw ModelError("labels must be 0 or 1");
  }
  std::set<std::string_view> names(columns.begin(), columns.end());
  if (names.size() != columns.size()) throw ModelError("duplicate column names in design matrix");
}

bool DesignMatrix::has_both_classes() const {
  double s = labels.sum();
  return s > 0.0 && s < static_cast<double>(labels.size());
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd out(raw.rows(), static_cast<Eigen::Index>(columns.size()));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    out.col(j) = (raw.col(source_index[j]).array() - means[j]) / sds[j];
  }
  return out;
}

std::pair<DesignMatrix, Standardization> standardize(const DesignMatrix& x) {
  if (x.rows() < 2) throw ModelError("standardize needs at least 2 rows");
  const double n = static_cast<double>(x.rows());
  Standardization s;
  std::vector<double> means, sds;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto col = x.values.col(j);
    if (col.maxCoeff() == col.minCoeff()) {
      s.dropped.push_back(x.columns[j]);
      continue;
    }
    double mean = col.sum() / n;
    double sd = std::sqrt((col.array() - mean).square().sum() / n);
    s.columns.push_back(x.columns[j]);
    s.source_index.push_back(j);
    means.push_back(mean);
    sds.push_back(sd);
  }
  if (s.columns.empty()) throw ModelError("every column has zero variance");
  s.means = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  s.sds = Eigen::Map<Eigen::VectorXd>(sds.data(), static_cast<Eigen::Index>(sds.size()));

  DesignMatrix z;
  z.columns = s.columns;
  z.values = s.apply(x.values);
  z.labels = x.labels;
  return {std::move(z), std::move(s)};
}

double lambda_max(const Eigen::MatrixXd& standardized, const Eigen::VectorXd& labels) {
  const double n = static_cast<double>(labels.size());
  Eigen::VectorXd centered = labels.array() - labels.mean();
  return (standardized.transpose() * centered).cwiseAbs().maxCoeff() / n;
}

LambdaPath::LambdaPath(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ConfigError("lambda path is empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0) || !std::isfinite(values_[i])) {
      throw ConfigError("lambda values must be finite and >= 0");
    }
    if (i > 0 && !(values_[i] < values_[i - 1])) {
      throw ConfigError("lambda path must be strictly decreasing");
    }
  }
}

LambdaPath LambdaPath::log_spaced(double lambda_max, Eigen::Index n, Eigen::Index p,
                                  std::size_t count) {
  if (lambda_max <= 0.0 || count < 2) return LambdaPath({std::max(lambda_max, 0.0)});
  const double eps = n > p ? 1e-4 : 1e-2;
  std::vector<double> v(count);
  const double step = std::log(eps) / static_cast<double>(count - 1);
  v[0] = lambda_max;
  for (std::size_t i = 1; i < count; ++i) v[i] = lambda_max * std::exp(step * static_cast<double>(i));
  return LambdaPath(std::move(v));
}

LambdaPath LambdaPath::for_data(const DesignMatrix& x, std::size_t count) {
  x.validate();
  auto [z, s] = standardize(x);
  return log_spaced(lambda_max(z.values, z.labels), x.rows(), z.cols(), count);
}

std::optional<double> FittedModel::coefficient(std::string_view name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] == name) return coefficients[static_cast<Eigen::Index>(j)];
  }
  return std::nullopt;
}

double penalized_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double intercept,
                           const Eigen::VectorXd& beta, double lambda) {
  Eigen::VectorXd eta = (z * beta).array() + intercept;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) - y * eta, evaluated without overflow
    double e = eta[i];
    double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    loss += softplus - y[i] * e;
  }
  return loss / static_cast<double>(y.size()) + lambda * beta.lpNorm<1>();
}

double kkt_residual(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double intercept,
                    const Eigen::VectorXd& beta, double lambda) {
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd eta = (z * beta).array() + intercept;
  Eigen::VectorXd resid = y - eta.unaryExpr([](double e) { return sigmoid(e); });
  double worst = std::abs(resid.sum() / n);
  Eigen::VectorXd grad = z.transpose() * resid / n;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double v = beta[j] != 0.0 ? std::abs(grad[j] - lambda * (beta[j] > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(grad[j]) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

StandardizedSolution solve_standardized(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                        double lambda, const StandardizedSolution* warm,
                                        const SolverOptions& options) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  const double nd = static_cast<double>(n);
  const double ybar = y.mean();
  if (!(ybar > 0.0 && ybar < 1.0)) throw ModelError("both classes must be present to fit");
  if (options.trace) *options.trace = {};

  StandardizedSolution sol{logit(ybar), Eigen::VectorXd::Zero(p)};
  // At or above lambda_max the all-zero solution is exact.
  if (lambda >= lambda_max(z, y)) {
    if (options.trace) options.trace->objective.push_back(penalized_objective(z, y, sol.intercept, sol.beta, lambda));
    return sol;
  }
  if (warm && warm->beta.size() == p) sol = *warm;

  Eigen::VectorXd eta = (z * sol.beta).array() + sol.intercept;
  double objective = penalized_objective(z, y, sol.intercept, sol.beta, lambda);
  // Column 0 of the augmented matrix is the intercept.
  Eigen::MatrixXd za(n, p + 1);
  za.col(0).setOnes();
  za.rightCols(p) = z;
  Eigen::VectorXd w(n), rw(n), g(p + 1);
  Eigen::MatrixXd h(p + 1, p + 1), zw(n, p + 1);
  std::vector<char> active(static_cast<std::size_t>(p), 0);
  int sweeps = 0;
  double last_delta = 0.0;
  constexpr int kMaxOuter = 500;

  for (int outer = 0;; ++outer) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double pi = sigmoid(eta[i]);
      w[i] = std::max(pi * (1.0 - pi), options.weight_floor);
      rw[i] = y[i] - pi;
    }
    // Quadratic model of the loss around the current fit: gradient g and
    // weighted Gram matrix h, both over (intercept, beta). Coordinate updates
    // then cost O(p) each.
    zw = za.array().colwise() * (w.array() / nd).sqrt();
    h.setZero();
    h.selfadjointView<Eigen::Lower>().rankUpdate(zw.transpose());
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    g.noalias() = za.transpose() * rw / nd;
    const Eigen::VectorXd g_start = g;
    const double q_start = (rw.array().square() / w.array()).sum() / (2.0 * nd);
    const StandardizedSolution start = sol;

    std::vector<double>* surrogate = nullptr;
    if (options.trace) surrogate = &options.trace->surrogate.emplace_back();
    auto record_surrogate = [&] {
      if (!surrogate) return;
      Eigen::VectorXd step(p + 1);
      step[0] = sol.intercept - start.intercept;
      step.tail(p) = sol.beta - start.beta;
      double q = q_start - g_start.dot(step) + 0.5 * step.dot(h * step);
      surrogate->push_back(q + lambda * sol.beta.lpNorm<1>());
    };
    auto move = [&](Eigen::Index k, double d) { g.noalias() -= d * h.col(k); };

    // One cyclic pass over the intercept and either all or only active coordinates.
    auto sweep = [&](bool all) {
      double max_delta = 0.0;
      double d0 = g[0] / h(0, 0);
      if (d0 != 0.0) {
        sol.intercept += d0;
        move(0, d0);
        max_delta = std::abs(d0);
      }
      for (Eigen::Index j = 0; j < p; ++j) {
        if (!all && !active[static_cast<std::size_t>(j)]) continue;
        const double xv = h(j + 1, j + 1);
        double old = sol.beta[j];
        double updated = soft_threshold(g[j + 1] + xv * old, lambda) / xv;
        double d = updated - old;
        if (d == 0.0) continue;
        sol.beta[j] = updated;
        move(j + 1, d);
        max_delta = std::max(max_delta, std::abs(d));
        if (updated != 0.0) active[static_cast<std::size_t>(j)] = 1;
      }
      ++sweeps;
      last_delta = max_delta;
      record_surrogate();
      if (sweeps > options.max_iter) {
        throw ConvergenceError("coordinate descent did not converge at lambda=" + fmt(lambda) +
                                   " (last max change " + fmt(max_delta) + ")",
                               lambda, max_delta);
      }
      return max_delta;
    };

    record_surrogate();
    while (sweep(true) >= options.tol) {
      while (sweep(false) >= options.tol) {
      }
    }
    eta = (z * sol.beta).array() + sol.intercept;

    // Penalized objective must not increase; halve the step when it would.
    double candidate = penalized_objective(z, y, sol.intercept, sol.beta, lambda);
    if (candidate > objective + 1e-13 * (1.0 + std::abs(objective))) {
      const StandardizedSolution target = sol;
      double t = 1.0;
      bool accepted = false;
      for (int halving = 0; halving < 50; ++halving) {
        t *= 0.5;
        sol.intercept = start.intercept + t * (target.intercept - start.intercept);
        sol.beta = start.beta + t * (target.beta - start.beta);
        candidate = penalized_objective(z, y, sol.intercept, sol.beta, lambda);
        if (candidate <= objective) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        sol = start;
        candidate = objective;
      }
      eta = (z * sol.beta).array() + sol.intercept;
    }
    objective = candidate;
    if (options.trace) options.trace->objective.push_back(objective);

    double outer_delta = std::max(std::abs(sol.intercept - start.intercept),
                                  (sol.beta - start.beta).cwiseAbs().maxCoeff());
    last_delta = outer_delta;

    if (lambda == 0.0) {
      // A fit that classifies every row strictly correctly is a separating
      // hyperplane, so no finite maximum-likelihood estimate exists.
      bool separated = true;
      for (Eigen::Index i = 0; i < n && separated; ++i) {
        separated = (y[i] == 1.0) ? eta[i] > 0.0 : eta[i] < 0.0;
      }
      if (separated || sol.beta.cwiseAbs().maxCoeff() > 1e6) {
        throw ModelError("unpenalized fit on separable data");
      }
    }
    if (outer_delta < options.tol) break;
    if (outer + 1 >= kMaxOuter) {
      throw ConvergenceError("IRLS did not converge at lambda=" + fmt(lambda) +
                                 " (last max change " + fmt(last_delta) + ")",
                             lambda, last_delta);
    }
  }
  return sol;
}

namespace {

FittedModel to_model(const Standardization& s, const StandardizedSolution& sol, double lambda) {
  FittedModel m;
  m.columns = s.columns;
  m.coefficients = sol.beta.cwiseQuotient(s.sds);
  m.intercept = sol.intercept - m.coefficients.dot(s.means);
  m.lambda = lambda;
  m.n_nonzero = static_cast<std::size_t>((sol.beta.array() != 0.0).count());
  m.dropped_columns = s.dropped;
  m.standardization = s;
  m.intercept_std = sol.intercept;
  m.coefficients_std = sol.beta;
  return m;
}

std::vector<Eigen::Index> column_positions(const std::vector<std::string>& wanted,
                                           const std::vector<std::string>& available) {
  std::vector<Eigen::Index> pos;
  pos.reserve(wanted.size());
  for (const auto& name : wanted) {
    auto it = std::find(available.begin(), available.end(), name);
    if (it == available.end()) throw ModelError("missing feature '" + name + "'");
    pos.push_back(static_cast<Eigen::Index>(it - available.begin()));
  }
  return pos;
}

}  // namespace

std::vector<FittedModel> fit_path(const DesignMatrix& x, const LambdaPath& path,
                                  const SolverOptions& options) {
  x.validate();
  if (!x.has_both_classes()) throw ModelError("both classes must be present to fit");
  auto [z, s] = standardize(x);
  std::vector<FittedModel> models;
  models.reserve(path.size());
  std::optional<StandardizedSolution> prev;
  for (double lambda : path.values()) {
    auto sol = solve_standardized(z.values, z.labels, lambda, prev ? &*prev : nullptr, options);
    models.push_back(to_model(s, sol, lambda));
    prev = std::move(sol);
  }
  return models;
}

std::string_view to_string(CvCriterion criterion) {
  return criterion == CvCriterion::deviance ? "deviance" : "misclassification";
}

CvCriterion parse_cv_criterion(std::string_view name) {
  if (name == "deviance") return CvCriterion::deviance;
  if (name == "misclassification") return CvCriterion::misclassification;
  throw ConfigError("unknown cv criterion '" + std::string(name) + "'");
}

namespace {

DesignMatrix take_rows(const DesignMatrix& x, const std::vector<Eigen::Index>& rows) {
  DesignMatrix out;
  out.columns = x.columns;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = x.values.row(rows[r]);
    out.labels[static_cast<Eigen::Index>(r)] = x.labels[rows[r]];
  }
  return out;
}

double held_out_criterion(const Eigen::VectorXd& prob, const Eigen::VectorXd& y,
                          CvCriterion criterion) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (criterion == CvCriterion::deviance) {
      double pi = std::clamp(prob[i], 1e-15, 1.0 - 1e-15);
      total += -2.0 * (y[i] == 1.0 ? std::log(pi) : std::log1p(-pi));
    } else {
      total += ((prob[i] >= 0.5) != (y[i] == 1.0)) ? 1.0 : 0.0;
    }
  }
  return total / static_cast<double>(y.size());
}

}  // namespace

CvResult cv_select(const DesignMatrix& x, const LambdaPath& path, const CvOptions& options) {
  x.validate();
  if (!x.has_both_classes()) throw ModelError("both classes must be present to fit");
  const std::size_t k = options.folds;
  const auto n = static_cast<std::size_t>(x.rows());
  if (k < 2 || k > n) throw ConfigError("cv folds must lie in [2, n]");

  CvResult result;
  result.lambdas = path.values();
  const double total_pos = x.labels.sum();
  bool found = false;
  for (std::uint64_t attempt = 0; attempt < 100 && !found; ++attempt) {
    const std::uint64_t seed = options.seed + attempt;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(n);
    std::vector<double> pos(k, 0.0), size(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto f = static_cast<int>(i % k);
      fold_of[order[i]] = f;
      pos[static_cast<std::size_t>(f)] += x.labels[static_cast<Eigen::Index>(order[i])];
      size[static_cast<std::size_t>(f)] += 1.0;
    }
    found = true;
    for (std::size_t f = 0; f < k && found; ++f) {
      double train_pos = total_pos - pos[f];
      double train_size = static_cast<double>(n) - size[f];
      found = pos[f] > 0.0 && pos[f] < size[f] && train_pos > 0.0 && train_pos < train_size;
    }
    if (found) {
      result.fold_seed = seed;
      result.fold_of = std::move(fold_of);
    }
  }
  if (!found) throw ModelError("cannot form folds with both classes after 100 seeds");

  std::vector<std::vector<double>> crit(k, std::vector<double>(path.size(), 0.0));
  std::vector<std::exception_ptr> errors(k);
  std::atomic<std::size_t> next{0};
  auto run_folds = [&] {
    for (std::size_t f = next.fetch_add(1); f < k; f = next.fetch_add(1)) {
      try {
        std::vector<Eigen::Index> train_rows, test_rows;
        for (std::size_t i = 0; i < n; ++i) {
          (result.fold_of[i] == static_cast<int>(f) ? test_rows : train_rows)
              .push_back(static_cast<Eigen::Index>(i));
        }
        DesignMatrix train = take_rows(x, train_rows);
        DesignMatrix test = take_rows(x, test_rows);
        auto models = fit_path(train, path, options.solver);
        for (std::size_t l = 0; l < models.size(); ++l) {
          crit[f][l] = held_out_criterion(predict_probs(models[l], test), test.labels,
                                          options.criterion);
        }
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  unsigned threads = std::clamp<unsigned>(options.threads, 1u, static_cast<unsigned>(k));
  if (threads == 1) {
    run_folds();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run_folds);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const double kd = static_cast<double>(k);
  result.mean.assign(path.size(), 0.0);
  result.se.assign(path.size(), 0.0);
  for (std::size_t l = 0; l < path.size(); ++l) {
    double sum = 0.0;
    for (std::size_t f = 0; f < k; ++f) sum += crit[f][l];
    double mean = sum / kd;
    double ss = 0.0;
    for (std::size_t f = 0; f < k; ++f) ss += (crit[f][l] - mean) * (crit[f][l] - mean);
    result.mean[l] = mean;
    result.se[l] = std::sqrt(ss / (kd - 1.0)) / std::sqrt(kd);
  }
  // Strict comparison keeps the earliest (largest) lambda among ties.
  for (std::size_t l = 1; l < path.size(); ++l) {
    if (result.mean[l] < result.mean[result.index_min]) result.index_min = l;
  }
  result.lambda_min = path[result.index_min];

  std::vector<double> prefix(path.values().begin(),
                             path.values().begin() + static_cast<std::ptrdiff_t>(result.index_min) + 1);
  result.model = fit_path(x, LambdaPath(std::move(prefix)), options.solver).back();
  return result;
}

double predict_prob(const FittedModel& model, const std::map<std::string, double>& features) {
  double eta = model.intercept;
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    auto it = features.find(model.columns[j]);
    if (it == features.end()) throw ModelError("missing feature '" + model.columns[j] + "'");
    eta += model.coefficients[static_cast<Eigen::Index>(j)] * it->second;
  }
  return sigmoid(eta);
}

Eigen::VectorXd predict_probs(const FittedModel& model, const DesignMatrix& x) {
  auto pos = column_positions(model.columns, x.columns);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), model.intercept);
  for (std::size_t j = 0; j < pos.size(); ++j) {
    eta.noalias() += model.coefficients[static_cast<Eigen::Index>(j)] * x.values.col(pos[j]);
  }
  return eta.unaryExpr([](double e) { return sigmoid(e); });
}

Eigen::VectorXd predict_probs_standardized(const FittedModel& model, const DesignMatrix& x) {
  auto pos = column_positions(model.columns, x.columns);
  const auto& s = model.standardization;
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), model.intercept_std);
  for (std::size_t j = 0; j < pos.size(); ++j) {
    auto jj = static_cast<Eigen::Index>(j);
    eta.array() += model.coefficients_std[jj] * (x.values.col(pos[j]).array() - s.means[jj]) / s.sds[jj];
  }
  return eta.unaryExpr([](double e) { return sigmoid(e); });
}

std::string model_to_json(const FittedModel& model) {
  ordered_json coefs = ordered_json::object();
  ordered_json means = ordered_json::object();
  ordered_json sds = ordered_json::object();
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    auto jj = static_cast<Eigen::Index>(j);
    coefs[model.columns[j]] = model.coefficients[jj];
    means[model.columns[j]] = model.standardization.means[jj];
    sds[model.columns[j]] = model.standardization.sds[jj];
  }
  ordered_json j = {
      {"intercept", model.intercept},
      {"coefficients", coefs},
      {"lambda", model.lambda},
      {"n_nonzero", model.n_nonzero},
      {"dropped_columns", model.dropped_columns},
      {"standardization", {{"means", means}, {"sds", sds}}},
      {"meta",
       {{"outcome", model.meta.outcome},
        {"feature_set", model.meta.feature_set},
        {"seed", model.meta.seed}}},
  };
  return j.dump(2) + "\n";
}

FittedModel model_from_json(std::string_view text) {
  try {
    auto j = ordered_json::parse(text);
    FittedModel m;
    m.intercept = j.at("intercept").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
    const auto& coefs = j.at("coefficients");
    const auto& means = j.at("standardization").at("means");
    const auto& sds = j.at("standardization").at("sds");
    const auto p = static_cast<Eigen::Index>(coefs.size());
    m.coefficients.resize(p);
    m.standardization.means.resize(p);
    m.standardization.sds.resize(p);
    Eigen::Index idx = 0;
    for (const auto& [name, value] : coefs.items()) {
      m.columns.push_back(name);
      m.coefficients[idx] = value.get<double>();
      m.standardization.means[idx] = means.at(name).get<double>();
      m.standardization.sds[idx] = sds.at(name).get<double>();
      m.standardization.source_index.push_back(idx);
      ++idx;
    }
    m.standardization.columns = m.columns;
    m.standardization.dropped = m.dropped_columns;
    m.coefficients_std = m.coefficients.cwiseProduct(m.standardization.sds);
    m.intercept_std = m.intercept + m.coefficients.dot(m.standardization.means);
    m.n_nonzero = j.at("n_nonzero").get<std::size_t>();
    const auto& meta = j.at("meta");
    m.meta.outcome = meta.at("outcome").get<std::string>();
    m.meta.feature_set = meta.at("feature_set").get<std::string>();
    m.meta.seed = meta.at("seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace noterisk
