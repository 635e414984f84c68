#include "cmlr/keys.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "json.hpp"

#include "cmlr/rng.hpp"

namespace cmlr {

namespace {

constexpr std::uint64_t kEigenvalueTag = 0x45;
constexpr std::uint64_t kEigenvectorTag = 0x51;
constexpr std::uint64_t kCoefficientTag = 0x43;
constexpr std::uint64_t kPermutationTag = 0x50;

std::vector<std::size_t> block_sizes(std::size_t p, std::size_t block_size) {
  if (block_size < 1 || block_size > p) {
    throw ConfigError("basis: block_size must be in [1, p]");
  }
  std::vector<std::size_t> sizes;
  for (std::size_t done = 0; done < p;) {
    const std::size_t m = std::min(block_size, p - done);
    sizes.push_back(m);
    done += m;
  }
  return sizes;
}

// Draws m pairwise-distinct eigenvalues with |lambda| in [min_mag, max_mag],
// random signs, and gap >= min_gap. Within each sign region the magnitudes
// are placed as min_mag + i*min_gap plus an ordered random slack, which
// meets the gap bound by construction.
std::vector<double> draw_eigenvalues(std::size_t m, const SpectrumConfig& s, Rng& rng) {
  if (!(s.min_mag > 0.0) || !(s.max_mag > s.min_mag) || !(s.min_gap > 0.0)) {
    throw ConfigError("spectrum: require 0 < min_mag < max_mag and min_gap > 0");
  }
  const double range = s.max_mag - s.min_mag;
  const std::size_t region_capacity = static_cast<std::size_t>(range / s.min_gap) + 1;
  const bool both_regions_ok = 2.0 * s.min_mag >= s.min_gap;
  const std::size_t capacity = both_regions_ok ? 2 * region_capacity : region_capacity;
  if (m > capacity) {
    throw ConfigError("spectrum: cannot place " + std::to_string(m) +
                      " eigenvalues with gap " + std::to_string(s.min_gap) + " in [" +
                      std::to_string(s.min_mag) + ", " + std::to_string(s.max_mag) + "]");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (rng.sign() > 0.0) ++positives;
  }
  if (!both_regions_ok) positives = m;
  // Shift overflow into the other region.
  positives = std::min(positives, region_capacity);
  positives = std::max(positives, m - std::min(m, region_capacity));

  std::vector<double> values;
  values.reserve(m);
  for (const auto& [sign, count] :
       {std::pair<double, std::size_t>{1.0, positives}, {-1.0, m - positives}}) {
    if (count == 0) continue;
    const double slack = range - static_cast<double>(count - 1) * s.min_gap;
    std::vector<double> offsets(count);
    for (double& o : offsets) o = rng.uniform(0.0, slack);
    std::sort(offsets.begin(), offsets.end());
    for (std::size_t i = 0; i < count; ++i) {
      values.push_back(sign * (s.min_mag + static_cast<double>(i) * s.min_gap + offsets[i]));
    }
  }
  return values;
}

// Haar-style orthonormal basis via Gram-Schmidt of a standard normal draw.
Matrix draw_orthonormal(std::size_t m, Rng& rng) {
  for (std::size_t attempt = 0; attempt < 64; ++attempt) {
    Matrix g(m, m);
    for (double& v : g.data()) v = rng.normal();
    // Columns of g orthonormalized in place.
    bool degenerate = false;
    for (std::size_t j = 0; j < m && !degenerate; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += g(i, j) * g(i, k);
        for (std::size_t i = 0; i < m; ++i) g(i, j) -= dot * g(i, k);
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < m; ++i) norm += g(i, j) * g(i, j);
      norm = std::sqrt(norm);
      if (norm < 1e-8) {
        degenerate = true;
        break;
      }
      for (std::size_t i = 0; i < m; ++i) g(i, j) /= norm;
    }
    if (!degenerate) return g;
  }
  throw KeyGenError("basis: failed to draw an orthonormal block");
}

Matrix assemble_block_diagonal(const std::vector<Matrix>& blocks, std::size_t p) {
  Matrix out(p, p);
  std::size_t off = 0;
  for (const Matrix& b : blocks) {
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) out(off + i, off + j) = b(i, j);
    off += b.rows();
  }
  return out;
}

// f(B0) = sum_j c[j] B0^(j+1) by Horner: B0 (c1 I + B0 (c2 I + ...)).
Matrix evaluate_polynomial(const Matrix& b0, std::span<const double> coeffs) {
  const std::size_t m = b0.rows();
  Matrix acc(m, m);
  for (std::size_t i = 0; i < m; ++i) acc(i, i) = coeffs.back();
  for (std::size_t j = coeffs.size() - 1; j-- > 0;) {
    acc = multiply(b0, acc);
    for (std::size_t i = 0; i < m; ++i) acc(i, i) += coeffs[j];
  }
  return multiply(b0, acc);
}

double norm1(const Matrix& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) col += std::abs(a(i, j));
    best = std::max(best, col);
  }
  return best;
}

double condition_estimate(const Matrix& a) {
  try {
    return norm1(a) * norm1(inverse(a));
  } catch (const SingularMatrixError&) {
    return std::numeric_limits<double>::infinity();
  }
}

std::vector<double> polynomial_values(std::span<const double> coeffs,
                                      std::span<const double> eigenvalues) {
  std::vector<double> values;
  values.reserve(eigenvalues.size());
  for (double lambda : eigenvalues) {
    double f = 0.0;
    for (std::size_t j = coeffs.size(); j-- > 0;) f = (f + coeffs[j]) * lambda;
    values.push_back(f);
  }
  return values;
}

}  // namespace

Basis Basis::generate(std::size_t p, std::size_t block_size, std::uint64_t seed,
                      const SpectrumConfig& spectrum) {
  std::vector<double> flat;
  const auto sizes = block_sizes(p, block_size);
  Basis basis;
  flat.reserve(p);
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    Rng rng(mix_seed(seed, kEigenvalueTag * 1000 + b));
    const auto lams = draw_eigenvalues(sizes[b], spectrum, rng);
    flat.insert(flat.end(), lams.begin(), lams.end());
  }
  return from_eigenvalues(p, block_size, seed, flat);
}

Basis Basis::from_eigenvalues(std::size_t p, std::size_t block_size, std::uint64_t seed,
                              std::span<const double> eigenvalues) {
  if (eigenvalues.size() != p) throw ConfigError("basis: eigenvalue count != p");
  const auto sizes = block_sizes(p, block_size);
  Basis basis;
  basis.p_ = p;
  basis.block_size_ = block_size;
  basis.seed_ = seed;
  std::vector<Matrix> materialized_blocks;
  std::size_t off = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    const std::size_t m = sizes[b];
    BasisBlock block;
    block.size = m;
    block.eigenvalues.assign(eigenvalues.begin() + off, eigenvalues.begin() + off + m);
    Rng rng(mix_seed(seed, kEigenvectorTag * 1000 + b));
    block.q = draw_orthonormal(m, rng);
    block.q_inv = transpose(block.q);
    Matrix lam = Matrix::diagonal(block.eigenvalues);
    materialized_blocks.push_back(multiply(multiply(block.q, lam), block.q_inv));
    basis.blocks_.push_back(std::move(block));
    off += m;
  }
  basis.materialized_ = assemble_block_diagonal(materialized_blocks, p);
  return basis;
}

Basis Basis::external(Matrix b0) {
  if (b0.rows() != b0.cols() || b0.rows() == 0) {
    throw ConfigError("basis: external matrix must be square");
  }
  Basis basis;
  basis.p_ = b0.rows();
  basis.block_size_ = b0.rows();
  basis.external_ = true;
  BasisBlock block;
  block.size = b0.rows();
  basis.blocks_.push_back(std::move(block));
  basis.materialized_ = std::move(b0);
  return basis;
}

std::vector<double> Basis::flat_eigenvalues() const {
  std::vector<double> flat;
  flat.reserve(p_);
  for (const auto& b : blocks_) flat.insert(flat.end(), b.eigenvalues.begin(), b.eigenvalues.end());
  return flat;
}

std::vector<double> CommutativeKey::flat_coeffs() const {
  std::vector<double> flat;
  for (const auto& c : coeffs) flat.insert(flat.end(), c.begin(), c.end());
  return flat;
}

CommutativeKey gen_commutative_key(const Basis& basis, std::uint64_t seed,
                                   const KeyGenOptions& options) {
  if (basis.is_external()) {
    throw ConfigError("gen_commutative_key: external basis has no known spectrum");
  }
  std::vector<std::vector<double>> coeffs;
  for (std::size_t b = 0; b < basis.blocks().size(); ++b) {
    const auto& block = basis.blocks()[b];
    Rng rng(mix_seed(seed, kCoefficientTag * 1000 + b));
    std::vector<double> c(block.size);
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < options.max_tries; ++attempt) {
      for (double& v : c) v = rng.normal();
      const auto f = polynomial_values(c, block.eigenvalues);
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      double log_sum = 0.0;
      for (double v : f) {
        lo = std::min(lo, std::abs(v));
        hi = std::max(hi, std::abs(v));
        log_sum += std::log(std::abs(v));
      }
      if (lo > options.invertibility_floor && hi / lo <= options.spectral_ratio_cap) {
        // Normalize the block to geometric-mean-one polynomial values so a
        // chain of many agencies' keys keeps the masked data at unit scale
        // (f is linear in the coefficients; the ratio cap is unaffected).
        const double scale =
            std::exp(log_sum / static_cast<double>(block.eigenvalues.size()));
        for (double& v : c) v /= scale;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw KeyGenError("gen_commutative_key: retry budget exhausted on block " +
                        std::to_string(b));
    }
    coeffs.push_back(std::move(c));
  }
  return commutative_key_from_coeffs(basis, std::move(coeffs));
}

CommutativeKey commutative_key_from_coeffs(const Basis& basis,
                                           std::vector<std::vector<double>> coeffs) {
  if (coeffs.size() != basis.blocks().size()) {
    throw ConfigError("commutative key: coefficient block count mismatch");
  }
  std::vector<Matrix> blocks;
  std::size_t off = 0;
  for (std::size_t b = 0; b < coeffs.size(); ++b) {
    const std::size_t m = basis.blocks()[b].size;
    if (coeffs[b].size() != m) {
      throw ConfigError("commutative key: coefficient count != block size");
    }
    Matrix b0_block(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) b0_block(i, j) = basis.materialized()(off + i, off + j);
    blocks.push_back(evaluate_polynomial(b0_block, coeffs[b]));
    off += m;
  }
  CommutativeKey key;
  key.coeffs = std::move(coeffs);
  key.materialized = assemble_block_diagonal(blocks, basis.p());
  key.cond_estimate = condition_estimate(key.materialized);
  return key;
}

CommutativeKey commutative_key_from_flat(const Basis& basis, std::span<const double> flat) {
  if (flat.size() != basis.p()) throw ConfigError("commutative key: flat size != p");
  std::vector<std::vector<double>> coeffs;
  std::size_t off = 0;
  for (const auto& block : basis.blocks()) {
    coeffs.emplace_back(flat.begin() + off, flat.begin() + off + block.size);
    off += block.size;
  }
  return commutative_key_from_coeffs(basis, std::move(coeffs));
}

CommutativeKey identity_commutative_key(const Basis& basis) {
  if (basis.is_external()) {
    throw ConfigError("identity key: external basis has no known spectrum");
  }
  std::vector<std::vector<double>> coeffs;
  for (const auto& block : basis.blocks()) {
    const std::size_t m = block.size;
    Matrix vander(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      double power = 1.0;
      for (std::size_t j = 0; j < m; ++j) {
        power *= block.eigenvalues[i];
        vander(i, j) = power;
      }
    }
    coeffs.push_back(solve(vander, std::vector<double>(m, 1.0)));
  }
  return commutative_key_from_coeffs(basis, std::move(coeffs));
}

std::vector<double> key_eigenvalues(const Basis& basis, const CommutativeKey& key) {
  std::vector<double> values;
  for (std::size_t b = 0; b < basis.blocks().size(); ++b) {
    const auto f = polynomial_values(key.coeffs[b], basis.blocks()[b].eigenvalues);
    values.insert(values.end(), f.begin(), f.end());
  }
  return values;
}

std::vector<std::vector<double>> recover_coefficients(const Basis& basis,
                                                      const CommutativeKey& key) {
  if (basis.is_external()) throw ConfigError("recover_coefficients: external basis");
  std::vector<std::vector<double>> out;
  std::size_t off = 0;
  for (const auto& block : basis.blocks()) {
    const std::size_t m = block.size;
    // Diagonalize the key block in the basis eigencoordinates: the diagonal
    // of q^-1 K q holds f(lambda_i).
    Matrix kblock(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) kblock(i, j) = key.materialized(off + i, off + j);
    Matrix diag = multiply(multiply(block.q_inv, kblock), block.q);
    std::vector<double> f(m);
    for (std::size_t i = 0; i < m; ++i) f[i] = diag(i, i);
    Matrix vander(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      double power = 1.0;
      for (std::size_t j = 0; j < m; ++j) {
        power *= block.eigenvalues[i];
        vander(i, j) = power;
      }
    }
    out.push_back(solve(vander, f));
    off += m;
  }
  return out;
}

Matrix gen_gaussian_basis(std::size_t p, double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw ConfigError("gen_gaussian_basis: sigma must be positive");
  Rng rng(mix_seed(seed, 0x47));
  Matrix m(p, p);
  for (double& v : m.data()) v = sigma * rng.normal();
  return m;
}

KeyBundle gen_key_bundle(std::uint16_t agency_id,
                         const std::vector<std::size_t>& sample_counts, const Basis& basis,
                         std::uint64_t seed, const KeyGenOptions& options) {
  for (std::size_t n : sample_counts) {
    if (n < 1) throw ConfigError("gen_key_bundle: sample counts must be >= 1");
  }
  KeyBundle bundle;
  bundle.agency_id = agency_id;
  bundle.commutative = gen_commutative_key(basis, mix_seed(seed, kCoefficientTag), options);
  bundle.permutations.reserve(sample_counts.size());
  for (std::size_t j = 0; j < sample_counts.size(); ++j) {
    Rng rng(mix_seed(seed, kPermutationTag * 1000 + j));
    bundle.permutations.emplace_back(random_permutation_image(sample_counts[j], rng));
  }
  return bundle;
}

void save_key_bundle(const std::filesystem::path& path, const Basis& basis,
                     const KeyBundle& bundle) {
  if (basis.is_external()) throw ConfigError("save_key_bundle: external basis");
  nlohmann::json j;
  j["version"] = 1;
  j["agency_id"] = bundle.agency_id;
  j["p"] = basis.p();
  j["block_size"] = basis.block_size();
  j["seed"] = basis.seed();
  j["eigenvalues"] = basis.flat_eigenvalues();
  j["coefficients"] = bundle.commutative.flat_coeffs();
  nlohmann::json images = nlohmann::json::array();
  for (const auto& perm : bundle.permutations) images.push_back(perm.image());
  j["permutation_images"] = std::move(images);
  std::ofstream out(path);
  if (!out) throw DataError("save_key_bundle: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

std::pair<Basis, KeyBundle> load_key_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_key_bundle: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_key_bundle: " + std::string(e.what()));
  }
  if (j.value("version", 0) != 1) throw DataError("load_key_bundle: unsupported version");
  const auto eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  Basis basis = Basis::from_eigenvalues(j.at("p").get<std::size_t>(),
                                        j.at("block_size").get<std::size_t>(),
                                        j.at("seed").get<std::uint64_t>(), eigenvalues);
  KeyBundle bundle;
  bundle.agency_id = j.at("agency_id").get<std::uint16_t>();
  bundle.commutative =
      commutative_key_from_flat(basis, j.at("coefficients").get<std::vector<double>>());
  for (const auto& image : j.at("permutation_images")) {
    bundle.permutations.emplace_back(image.get<std::vector<std::size_t>>());
  }
  return {std::move(basis), std::move(bundle)};
}

}  // namespace cmlr
