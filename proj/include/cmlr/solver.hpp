#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cmlr/dataset.hpp"
#include "cmlr/matrix.hpp"
#include "cmlr/protocol.hpp"

namespace cmlr {

enum class FitMode { plaintext, encrypted };

struct FitConfig {
  double lambda = 0.0;   // ridge strength; the intercept is never penalized
  std::size_t max_iters = 50;
  double tol = 1e-8;     // inf-norm of the coefficient step
  std::vector<double> beta_init;  // empty -> zero vector
};

struct FitResult {
  std::vector<double> beta;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> step_norm_history;
  FitMode mode = FitMode::plaintext;
};

// Called after each update with the new iterate and the probabilities that
// produced it; lets tests watch paired plaintext/encrypted runs in lockstep.
using IterationObserver =
    std::function<void(std::size_t iter, std::span<const double> beta,
                       std::span<const double> probs)>;

// Elementwise logistic of design * beta, branch form (no large positive
// exponent is ever taken).
std::vector<double> probabilities(const Matrix& design, std::span<const double> beta);

// One damped-free update of the penalized score equations,
//   (X^T W X + lambda' penalty) beta_new = X^T W X beta + z^T - X^T prob,
// where z plays the role of X^T Y and penalty is the identity in the
// plaintext system or the padded key Gram in the masked one (both share
// this code path, so the two systems run the same arithmetic).
std::vector<double> newton_step(const Matrix& design, std::span<const double> z_row,
                                std::span<const double> w_diag,
                                std::span<const double> beta_old, double lambda,
                                const Matrix* penalty = nullptr);
// Convenience overload computing z = y^T design.
std::vector<double> newton_step_labels(const Matrix& design, std::span<const double> labels,
                                       std::span<const double> w_diag,
                                       std::span<const double> beta_old, double lambda);

FitResult fit(const Matrix& features, std::span<const double> labels, const FitConfig& config,
              const IterationObserver& observer = {});
FitResult fit(const EncryptedDataset& dataset, const FitConfig& config,
              const IterationObserver& observer = {});

// Penalized log-likelihood and its gradient (finite-difference oracle hooks).
double penalized_log_likelihood(const Matrix& design, std::span<const double> labels,
                                std::span<const double> beta, double lambda);
std::vector<double> penalized_gradient(const Matrix& design, std::span<const double> labels,
                                       std::span<const double> beta, double lambda);

double predict(std::span<const double> beta, std::span<const double> x_row);

// Mann-Whitney statistic with ties counted 1/2; throws UndefinedAucError
// on single-class labels.
double auc(std::span<const double> scores, std::span<const double> labels);

struct FoldPlan {
  std::size_t k = 0;
  // fold_of[agency][row] in [0, k)
  std::vector<std::vector<std::size_t>> fold_of;
};

FoldPlan make_fold_plan(const std::vector<LocalDataset>& data, std::size_t k,
                        std::uint64_t seed);

struct FoldOutcome {
  FitResult fit;
  std::optional<double> auc;  // empty when the test fold is single-class
};

struct CvResult {
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
};

// Trains on the k-1 retained folds and returns the decrypted (or plain)
// coefficient vector; the harness then scores each agency's held-out rows
// locally and pools the (score, label) pairs for the fold AUC.
using CvTrainer = std::function<FitResult(const std::vector<LocalDataset>& train,
                                          const FitConfig& config, std::size_t fold_index)>;

CvResult cross_validate(const std::vector<LocalDataset>& data, std::size_t k,
                        const FitConfig& config, const CvTrainer& trainer,
                        std::uint64_t seed, const FoldPlan* plan = nullptr);

}  // namespace cmlr
