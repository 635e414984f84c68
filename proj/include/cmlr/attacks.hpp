#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmlr/matrix.hpp"
#include "cmlr/protocol.hpp"

namespace cmlr::attacks {

// Linear system a curious agency builds from its own released ciphertext,
// a guessed permutation, and the shared basis: each column w_j of the
// observed re-encryption should satisfy w_j = R u_j with
// R = A_guess * x1_star * (B0 | B0^2 | ... | B0^m).
struct CpaSystem {
  Matrix r;        // n x (p*m)
  Matrix targets;  // n x p, column j is w_j
  std::size_t p = 0;
  std::size_t m = 0;
};

CpaSystem build_cpa_system(const Matrix& x1_star, const Matrix& observed, const Matrix& b0,
                           const PermutationKey& a_guess, std::size_t m);
// Default guess: the identity permutation.
CpaSystem build_cpa_system(const Matrix& x1_star, const Matrix& observed, const Matrix& b0,
                           std::size_t m);

enum class SolutionClass { no_solution, unique, infinite };

// Affine set of coefficient vectors consistent with one output column once
// the block-replication zero pattern is imposed on the general solution.
struct StructuredFamily {
  bool consistent = false;
  std::vector<double> offset;  // length m
  Matrix basis;                // m x dim
  std::size_t dim() const noexcept { return basis.cols(); }
  // Does this family contain the candidate (within tol)?
  bool contains(std::span<const double> candidate, double tol) const;
};

struct ColumnVerdict {
  SolutionClass cls = SolutionClass::no_solution;
  std::size_t solution_dim = 0;  // of the unrestricted system, when consistent
  StructuredFamily family;
  std::optional<bool> contains_truth;
};

struct CpaVerdict {
  std::size_t rank_r = 0;
  std::vector<ColumnVerdict> columns;
  bool cross_column_consistent = false;
  // When the stacked structured system is consistent and determined, the
  // single coefficient vector every column agrees on.
  std::optional<std::vector<double>> unique_solution;
  std::optional<bool> truth_is_unique_solution;
};

CpaVerdict analyze_cpa(const CpaSystem& system, double tol,
                       const std::vector<double>* truth = nullptr);

struct KpaReport {
  int scenario = 0;
  Matrix residual;
  double recovery_error = 0.0;
  std::string notes;
};

// Row-split scenario: attacker knows the top block and differences the
// Gram matrices; scored against the true hidden-block Gram.
KpaReport kpa_scenario1(const Matrix& x_star, const Matrix& x11_known,
                        const Matrix& x22_truth);
// Column-split scenario: attacker inverts through its known block.
KpaReport kpa_scenario2(const Matrix& z11_star, const Matrix& z22_star,
                        const Matrix& x11_known, const Matrix& x22_truth);

struct SigmaScalingResult {
  std::vector<double> sigmas;
  std::vector<double> mean_max_abs;  // of B0^T X^T X B0 over the trials
  double slope = 0.0;                // log-log fit
};

SigmaScalingResult sigma_scaling_experiment(const Matrix& x, std::vector<double> sigmas,
                                            std::size_t trials, std::uint64_t seed);

struct CollusionReport {
  double recovery_error = 0.0;         // relative Frobenius vs the target data
  double sorted_recovery_error = 0.0;  // after canonical row sorting
  double residual_strip_error = 0.0;   // stripped view vs the first released share
  std::size_t messages_seen = 0;
};

// Pools the compromised agencies' keys and every message they sent or
// received, strips the hops they can invert from the target's share, and
// scores the remaining ciphertext against the target's private data.
CollusionReport collusion_harness(const Simulation& sim, std::span<const std::uint16_t> compromised,
                                  std::uint16_t target);

struct CpaFrequencyReport {
  std::size_t trials = 0;
  std::size_t truth_consistent = 0;  // truth satisfied every structured family
  std::size_t truth_unique = 0;      // ... and was the unique joint solution
};

// Measures how often a random relay permutation leaves the true key inside
// (or uniquely determined by) the attacker's families under a fixed guess.
CpaFrequencyReport cpa_truth_frequency(std::size_t n, std::size_t trials, std::uint64_t seed);

}  // namespace cmlr::attacks
