#include "cmlr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmlr/kernels.hpp"
#include "cmlr/rng.hpp"

namespace cmlr {

namespace {

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Matrix with_intercept(const Matrix& features) {
  Matrix design(features.rows(), features.cols() + 1);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < features.cols(); ++j) design(i, j + 1) = features(i, j);
  }
  return design;
}

struct NewtonSystem {
  const Matrix& design;
  std::vector<double> z;          // X^T Y analogue (row form)
  const Matrix* penalty;          // nullptr -> identity
  double lambda;
};

FitResult run_newton(const NewtonSystem& sys, const FitConfig& config, FitMode mode,
                     const IterationObserver& observer) {
  if (!(config.tol > 0.0)) throw ConfigError("fit: tol must be positive");
  if (config.max_iters < 1) throw ConfigError("fit: max_iters must be >= 1");
  const std::size_t q = sys.design.cols();
  FitResult result;
  result.mode = mode;
  result.beta.assign(q, 0.0);
  if (!config.beta_init.empty()) {
    if (config.beta_init.size() != q) throw DimensionError("fit: beta_init size");
    result.beta = config.beta_init;
  }
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const std::vector<double> probs = probabilities(sys.design, result.beta);
    std::vector<double> w(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) w[i] = probs[i] * (1.0 - probs[i]);
    std::vector<double> next;
    try {
      next = newton_step(sys.design, sys.z, w, result.beta, sys.lambda, sys.penalty);
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(
          std::string(e.what()) + " (Hessian singular; a ridge penalty lambda > 0 may help)",
          e.pivot_magnitude());
    }
    double step = 0.0;
    for (std::size_t j = 0; j < q; ++j) step = std::max(step, std::abs(next[j] - result.beta[j]));
    result.beta = std::move(next);
    result.step_norm_history.push_back(step);
    result.iterations = iter + 1;
    if (observer) {
      observer(iter, result.beta, probabilities(sys.design, result.beta));
    }
    if (step > 1e8) {
      throw DivergenceError("fit: step norm " + std::to_string(step) + " exceeds 1e8");
    }
    if (step < config.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

std::vector<double> probabilities(const Matrix& design, std::span<const double> beta) {
  const std::vector<double> lin = matvec(design, beta);
  std::vector<double> probs(lin.size());
  for (std::size_t i = 0; i < lin.size(); ++i) probs[i] = logistic(lin[i]);
  return probs;
}

std::vector<double> newton_step(const Matrix& design, std::span<const double> z_row,
                                std::span<const double> w_diag,
                                std::span<const double> beta_old, double lambda,
                                const Matrix* penalty) {
  const std::size_t q = design.cols();
  if (z_row.size() != q || beta_old.size() != q || w_diag.size() != design.rows()) {
    throw DimensionError("newton_step: shape mismatch");
  }
  Matrix hess(q, q);
  kernels::weighted_gram_into(design, w_diag, hess);

  // rhs = X^T W X beta + z^T - X^T prob; the probabilities are implied by
  // beta_old (w carries only p(1-p), which loses the sign).
  const std::vector<double> probs = probabilities(design, beta_old);
  const std::vector<double> hess_beta = matvec(hess, beta_old);
  std::vector<double> rhs(q);
  for (std::size_t j = 0; j < q; ++j) rhs[j] = hess_beta[j] + z_row[j];
  for (std::size_t i = 0; i < design.rows(); ++i) {
    const double pv = probs[i];
    if (pv == 0.0) continue;
    for (std::size_t j = 0; j < q; ++j) rhs[j] -= design(i, j) * pv;
  }

  if (lambda > 0.0) {
    if (penalty != nullptr) {
      if (penalty->rows() != q || penalty->cols() != q) {
        throw DimensionError("newton_step: penalty shape");
      }
      // Lambda = diag(0, lambda..lambda):  hess += Lambda * penalty.
      for (std::size_t i = 1; i < q; ++i)
        for (std::size_t j = 0; j < q; ++j) hess(i, j) += lambda * (*penalty)(i, j);
    } else {
      for (std::size_t i = 1; i < q; ++i) hess(i, i) += lambda;
    }
  }
  return solve(hess, rhs);
}

std::vector<double> newton_step_labels(const Matrix& design, std::span<const double> labels,
                                       std::span<const double> w_diag,
                                       std::span<const double> beta_old, double lambda) {
  if (labels.size() != design.rows()) throw DimensionError("newton_step: label count");
  return newton_step(design, vecmat(labels, design), w_diag, beta_old, lambda, nullptr);
}

FitResult fit(const Matrix& features, std::span<const double> labels, const FitConfig& config,
              const IterationObserver& observer) {
  if (labels.size() != features.rows()) throw DimensionError("fit: label count");
  if (features.rows() == 0) throw DataError("fit: empty dataset");
  features.ensure_finite("fit");
  const Matrix design = with_intercept(features);
  NewtonSystem sys{design, vecmat(labels, design), nullptr, config.lambda};
  return run_newton(sys, config, FitMode::plaintext, observer);
}

FitResult fit(const EncryptedDataset& dataset, const FitConfig& config,
              const IterationObserver& observer) {
  if (dataset.x_star.rows() == 0) throw DataError("fit: empty dataset");
  if (config.lambda > 0.0 && !dataset.b_star) {
    throw ConfigError("fit: ridge penalty requires the key Gram accumulator");
  }
  NewtonSystem sys{dataset.x_star, dataset.z_star,
                   dataset.b_star ? &*dataset.b_star : nullptr, config.lambda};
  return run_newton(sys, config, FitMode::encrypted, observer);
}

double penalized_log_likelihood(const Matrix& design, std::span<const double> labels,
                                std::span<const double> beta, double lambda) {
  const std::vector<double> lin = matvec(design, beta);
  double ll = 0.0;
  for (std::size_t i = 0; i < lin.size(); ++i) {
    // y*t - log(1 + e^t), stable form.
    const double t = lin[i];
    const double log1pe = t >= 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    ll += labels[i] * t - log1pe;
  }
  double pen = 0.0;
  for (std::size_t j = 1; j < beta.size(); ++j) pen += beta[j] * beta[j];
  return ll - 0.5 * lambda * pen;
}

std::vector<double> penalized_gradient(const Matrix& design, std::span<const double> labels,
                                       std::span<const double> beta, double lambda) {
  const std::vector<double> probs = probabilities(design, beta);
  std::vector<double> grad(design.cols(), 0.0);
  for (std::size_t i = 0; i < design.rows(); ++i) {
    const double r = labels[i] - probs[i];
    for (std::size_t j = 0; j < design.cols(); ++j) grad[j] += design(i, j) * r;
  }
  for (std::size_t j = 1; j < grad.size(); ++j) grad[j] -= lambda * beta[j];
  return grad;
}

double predict(std::span<const double> beta, std::span<const double> x_row) {
  if (x_row.size() + 1 != beta.size()) throw DimensionError("predict: dimension");
  double t = beta[0];
  for (std::size_t j = 0; j < x_row.size(); ++j) t += beta[j + 1] * x_row[j];
  return logistic(t);
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DimensionError("auc: shape mismatch");
  }
  std::size_t positives = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw DataError("auc: labels must be 0/1");
    if (y == 1.0) ++positives;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedAucError("auc: needs both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks within tie groups.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1.0) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(positives) *
                                      static_cast<double>(positives + 1);
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

FoldPlan make_fold_plan(const std::vector<LocalDataset>& data, std::size_t k,
                        std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross_validate: k must be >= 2");
  FoldPlan plan;
  plan.k = k;
  for (std::size_t a = 0; a < data.size(); ++a) {
    const std::size_t n = data[a].samples();
    if (n < k) {
      throw ConfigError("cross_validate: agency " + std::to_string(a + 1) + " has " +
                        std::to_string(n) + " rows, fewer than k");
    }
    Rng rng(mix_seed(seed, 0xF0000 + a));
    const auto image = random_permutation_image(n, rng);
    std::vector<std::size_t> folds(n);
    for (std::size_t r = 0; r < n; ++r) folds[r] = image[r] % k;
    plan.fold_of.push_back(std::move(folds));
  }
  return plan;
}

CvResult cross_validate(const std::vector<LocalDataset>& data, std::size_t k,
                        const FitConfig& config, const CvTrainer& trainer,
                        std::uint64_t seed, const FoldPlan* plan) {
  CvResult result;
  result.plan = plan ? *plan : make_fold_plan(data, k, seed);
  if (result.plan.k != k || result.plan.fold_of.size() != data.size()) {
    throw ConfigError("cross_validate: fold plan mismatch");
  }
  for (std::size_t fold = 0; fold < k; ++fold) {
    std::vector<LocalDataset> train;
    std::vector<std::pair<std::vector<double>, double>> test_rows;  // (features, label)
    for (std::size_t a = 0; a < data.size(); ++a) {
      const auto& folds = result.plan.fold_of[a];
      LocalDataset part;
      part.agency_id = data[a].agency_id;
      std::vector<std::size_t> keep;
      for (std::size_t r = 0; r < data[a].samples(); ++r) {
        if (folds[r] == fold) {
          std::vector<double> row(data[a].x.row(r).begin(), data[a].x.row(r).end());
          test_rows.emplace_back(std::move(row), data[a].y[r]);
        } else {
          keep.push_back(r);
        }
      }
      if (keep.empty()) {
        throw ConfigError("cross_validate: a training fold would be empty");
      }
      part.x = Matrix(keep.size(), data[a].features());
      part.y.resize(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        const auto src = data[a].x.row(keep[i]);
        std::copy(src.begin(), src.end(), part.x.row(i).begin());
        part.y[i] = data[a].y[keep[i]];
      }
      train.push_back(std::move(part));
    }
    FoldOutcome outcome;
    outcome.fit = trainer(train, config, fold);
    // Each agency scores its own held-out rows; the bench pools the pairs.
    std::vector<double> scores, labels;
    scores.reserve(test_rows.size());
    labels.reserve(test_rows.size());
    for (const auto& [row, label] : test_rows) {
      scores.push_back(predict(outcome.fit.beta, row));
      labels.push_back(label);
    }
    try {
      outcome.auc = auc(scores, labels);
    } catch (const UndefinedAucError&) {
      outcome.auc = std::nullopt;
    }
    result.folds.push_back(std::move(outcome));
  }
  return result;
}

}  // namespace cmlr
