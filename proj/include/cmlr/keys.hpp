#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cmlr/matrix.hpp"

namespace cmlr {

struct SpectrumConfig {
  double min_mag = 0.9;
  double max_mag = 1.1;
  double min_gap = 0.01;
};

struct KeyGenOptions {
  // Invertibility floor on |f(lambda)| for each basis eigenvalue.
  double invertibility_floor = 1e-8;
  // Resample coefficients until max|f| / min|f| over the block eigenvalues
  // is at most this; keeps products of several agencies' keys well enough
  // conditioned for exact decryption.
  double spectral_ratio_cap = 8.0;
  std::size_t max_tries = 100000;
};

struct BasisBlock {
  std::size_t size = 0;
  Matrix q;      // orthonormal eigenvector basis
  Matrix q_inv;  // q^T for the orthonormal construction
  std::vector<double> eigenvalues;
};

// Shared p x p basis with p distinct eigenvalues, block-diagonal when
// block_size < p. Every agency derives its secret key as a polynomial in
// this matrix, so keys commute by construction.
class Basis {
public:
  Basis() = default;
  static Basis generate(std::size_t p, std::size_t block_size, std::uint64_t seed,
                        const SpectrumConfig& spectrum = {});
  // Rebuild from stored eigenvalues (key-file load path); the eigenvector
  // bases are redrawn deterministically from the seed.
  static Basis from_eigenvalues(std::size_t p, std::size_t block_size, std::uint64_t seed,
                                std::span<const double> eigenvalues);
  // Externally supplied square matrix (attack fixtures); no spectral
  // structure is assumed, so only explicit-coefficient keys work on it.
  static Basis external(Matrix b0);

  std::size_t p() const noexcept { return p_; }
  std::size_t block_size() const noexcept { return block_size_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool is_external() const noexcept { return external_; }
  const std::vector<BasisBlock>& blocks() const noexcept { return blocks_; }
  const Matrix& materialized() const noexcept { return materialized_; }
  std::vector<double> flat_eigenvalues() const;

private:
  std::size_t p_ = 0;
  std::size_t block_size_ = 0;
  std::uint64_t seed_ = 0;
  bool external_ = false;
  std::vector<BasisBlock> blocks_;
  Matrix materialized_;
};

struct CommutativeKey {
  std::vector<std::vector<double>> coeffs;  // one vector per basis block
  Matrix materialized;                      // p x p, block-diagonal
  double cond_estimate = 0.0;

  std::vector<double> flat_coeffs() const;
};

CommutativeKey gen_commutative_key(const Basis& basis, std::uint64_t seed,
                                   const KeyGenOptions& options = {});
// Materializes an explicitly given coefficient vector (fixtures, file load).
CommutativeKey commutative_key_from_coeffs(const Basis& basis,
                                           std::vector<std::vector<double>> coeffs);
CommutativeKey commutative_key_from_flat(const Basis& basis, std::span<const double> flat);
// The coefficient vector whose polynomial evaluates to 1 at every basis
// eigenvalue; its key materializes to the identity (useful for forced
// plaintext-equivalent protocol runs).
CommutativeKey identity_commutative_key(const Basis& basis);

// Per-block polynomial values f(lambda_i); the diagonal of the key in the
// basis eigencoordinates.
std::vector<double> key_eigenvalues(const Basis& basis, const CommutativeKey& key);
// Inverts the Vandermonde system f(lambda_i) = sum_j b_j lambda_i^j per
// block; exact coefficient recovery for blocks of moderate size.
std::vector<std::vector<double>> recover_coefficients(const Basis& basis,
                                                      const CommutativeKey& key);

// p x p matrix with i.i.d. N(0, sigma^2) entries; used only by the
// masked-Gram scaling analysis, which needs no eigenvalue structure.
Matrix gen_gaussian_basis(std::size_t p, double sigma, std::uint64_t seed);

struct KeyBundle {
  std::uint16_t agency_id = 0;
  CommutativeKey commutative;
  std::vector<PermutationKey> permutations;  // one per agency, sized n_1..n_K
};

KeyBundle gen_key_bundle(std::uint16_t agency_id,
                         const std::vector<std::size_t>& sample_counts, const Basis& basis,
                         std::uint64_t seed, const KeyGenOptions& options = {});

// Key files carry (seed, eigenvalues, coefficients, permutation images);
// materialized matrices are always recomputed, never stored.
void save_key_bundle(const std::filesystem::path& path, const Basis& basis,
                     const KeyBundle& bundle);
std::pair<Basis, KeyBundle> load_key_bundle(const std::filesystem::path& path);

}  // namespace cmlr
