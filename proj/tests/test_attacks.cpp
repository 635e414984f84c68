#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cmlr/attacks.hpp"
#include "cmlr/keys.hpp"
#include "cmlr/rng.hpp"

using namespace cmlr;
using namespace cmlr::attacks;

namespace {

const Matrix kSharedBasis = Matrix::from_rows({{0, 0, 1}, {0, 1, 0}, {1, 0, 1}});
const Matrix kVictimKey = Matrix::from_rows({{-1.7, 0, 4.3}, {0, 6.3, 0}, {4.3, 0, 2.6}});
const std::vector<double> kVictimCoeffs{8.0, 0.3, -2.0};

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Independent rank oracle: column-pivoted elimination (selects the largest
// remaining column by norm, eliminates it from the rest).
std::size_t column_pivot_rank(Matrix a, double tol) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<bool> used(cols, false);
  std::size_t rank = 0;
  for (std::size_t step = 0; step < std::min(rows, cols); ++step) {
    std::size_t best = cols;
    double best_norm = tol;
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      double norm = 0.0;
      for (std::size_t r = 0; r < rows; ++r) norm += a(r, c) * a(r, c);
      norm = std::sqrt(norm);
      if (norm > best_norm) {
        best_norm = norm;
        best = c;
      }
    }
    if (best == cols) break;
    used[best] = true;
    ++rank;
    // Project the chosen column out of every unused column.
    double denom = 0.0;
    for (std::size_t r = 0; r < rows; ++r) denom += a(r, best) * a(r, best);
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      double dot = 0.0;
      for (std::size_t r = 0; r < rows; ++r) dot += a(r, best) * a(r, c);
      const double coef = dot / denom;
      for (std::size_t r = 0; r < rows; ++r) a(r, c) -= coef * a(r, best);
    }
  }
  return rank;
}

CpaSystem toy_fixture() {
  // Attacker's plaintext is the identity, own permutation guess identity,
  // observed matrix is the victim key itself (relay permutation identity).
  return build_cpa_system(Matrix::identity(3), kVictimKey, kSharedBasis,
                          PermutationKey::identity(3), 3);
}

}  // namespace

TEST_CASE("build_cpa_system: blockwise structure") {
  Rng rng(3);
  const Matrix x1_star = random_matrix(4, 3, rng);
  const Matrix observed = random_matrix(4, 3, rng);
  const PermutationKey guess(random_permutation_image(4, rng));
  const CpaSystem sys = build_cpa_system(x1_star, observed, kSharedBasis, guess, 3);
  CHECK(sys.r.rows() == 4);
  CHECK(sys.r.cols() == 9);

  const Matrix base = apply_permutation(guess, x1_star, Side::rows);
  Matrix power = kSharedBasis;
  for (std::size_t k = 0; k < 3; ++k) {
    const Matrix block = multiply(base, power);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(sys.r(i, k * 3 + j) == block(i, j));
    power = multiply(power, kSharedBasis);
  }

  // Identity guess and identity plaintext: R is just the stacked powers.
  const CpaSystem plain = toy_fixture();
  CHECK(plain.r(0, 2) == 1.0);   // B0 block
  CHECK(plain.r(2, 8) == 3.0);   // B0^3 block corner
  CHECK(plain.r.rows() == 3);
  CHECK(plain.r.cols() == 9);
}

TEST_CASE("toy fixture: infinite verdicts with the oracle families") {
  const CpaSystem sys = toy_fixture();
  const CpaVerdict verdict = analyze_cpa(sys, 1e-10, &kVictimCoeffs);
  CHECK(verdict.rank_r == 3);
  REQUIRE(verdict.columns.size() == 3);
  for (const auto& col : verdict.columns) {
    CHECK(col.cls == SolutionClass::infinite);
    CHECK(col.solution_dim == 6);  // p*m - n = 9 - 3
    CHECK(col.family.consistent);
    // The true key is inside every restricted family here: the printed toy
    // example re-encrypts with the identity permutation, which matches the
    // attacker's guess.
    CHECK(col.contains_truth.value_or(false));
  }
  // Families computed by the rref oracle: columns 1 and 3 are the line
  // (b1, b1-7.7, 6-b1); column 2 is the plane b1+b2+b3 = 6.3.
  CHECK(verdict.columns[0].family.dim() == 1);
  CHECK(verdict.columns[1].family.dim() == 2);
  CHECK(verdict.columns[2].family.dim() == 1);
  for (std::size_t j : {std::size_t{0}, std::size_t{2}}) {
    const auto& fam = verdict.columns[j].family;
    CHECK(fam.contains(std::vector<double>{0.0, -7.7, 6.0}, 1e-9));
    CHECK(fam.contains(std::vector<double>{1.0, -6.7, 5.0}, 1e-9));
    CHECK_FALSE(fam.contains(std::vector<double>{0.0, -7.7, 6.1}, 1e-9));
  }
  CHECK(verdict.columns[1].family.contains(std::vector<double>{6.3, 0.0, 0.0}, 1e-9));
  CHECK(verdict.columns[1].family.contains(std::vector<double>{0.0, 6.3, 0.0}, 1e-9));
  CHECK_FALSE(verdict.columns[1].family.contains(std::vector<double>{0.0, 0.0, 0.0}, 1e-9));

  // With the guess equal to the true relay permutation the joint system
  // pins the truth uniquely.
  CHECK(verdict.cross_column_consistent);
  REQUIRE(verdict.unique_solution.has_value());
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK((*verdict.unique_solution)[j] == doctest::Approx(kVictimCoeffs[j]).epsilon(1e-9));
  }
  CHECK(verdict.truth_is_unique_solution.value_or(false));
}

TEST_CASE("rank trichotomy matches the dimension rules and the rank oracle") {
  Rng rng(11);
  std::size_t checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // n >= p+1: no solution in every column for a random observation.
    const std::size_t p = 2 + rng.index(3);
    const std::size_t n = p + 1 + rng.index(3);
    const Basis basis = Basis::generate(p, p, mix_seed(500, trial));
    const Matrix x1_star = random_matrix(n, p, rng);
    const Matrix observed = random_matrix(n, p, rng);
    const CpaSystem sys = build_cpa_system(x1_star, observed, basis.materialized(),
                                           PermutationKey::identity(n), p);
    const CpaVerdict verdict = analyze_cpa(sys, 1e-10);
    CHECK(verdict.rank_r == p);
    for (const auto& col : verdict.columns) CHECK(col.cls == SolutionClass::no_solution);
    CHECK(verdict.rank_r == column_pivot_rank(sys.r, 1e-8 * (1.0 + max_abs(sys.r))));
    ++checked;
  }
  for (int trial = 0; trial < 50; ++trial) {
    // n <= p: infinite solutions with dimension p*m - n.
    const std::size_t p = 2 + rng.index(3);
    const std::size_t n = 1 + rng.index(p);
    const Basis basis = Basis::generate(p, p, mix_seed(900, trial));
    const Matrix x1_star = random_matrix(n, p, rng);
    const CommutativeKey victim = gen_commutative_key(basis, mix_seed(901, trial));
    const Matrix observed = multiply(x1_star, victim.materialized);
    const CpaSystem sys = build_cpa_system(x1_star, observed, basis.materialized(),
                                           PermutationKey::identity(n), p);
    const CpaVerdict verdict = analyze_cpa(sys, 1e-10);
    CHECK(verdict.rank_r == n);
    for (const auto& col : verdict.columns) {
      CHECK(col.cls == SolutionClass::infinite);
      CHECK(col.solution_dim == p * p - n);
    }
    CHECK(verdict.rank_r == column_pivot_rank(sys.r, 1e-8 * (1.0 + max_abs(sys.r))));
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("zero system: any nonzero target is inconsistent") {
  const Matrix zero(3, 3);
  Matrix observed(3, 3);
  observed(0, 0) = 1.0;
  const CpaSystem sys = build_cpa_system(zero, observed, kSharedBasis,
                                         PermutationKey::identity(3), 3);
  const CpaVerdict verdict = analyze_cpa(sys, 1e-10);
  CHECK(verdict.rank_r == 0);
  CHECK(verdict.columns[0].cls == SolutionClass::no_solution);
  // The zero column is consistent (the zero solution).
  CHECK(verdict.columns[1].cls == SolutionClass::infinite);
}

TEST_CASE("the true key is never the unique joint solution under random relays") {
  // 100 seeded runs at n = p = 8; none of the drawn relay permutations
  // equals the identity guess (verified by the frequency counters).
  const CpaFrequencyReport report = cpa_truth_frequency(8, 100, 20240809);
  CHECK(report.trials == 100);
  CHECK(report.truth_unique == 0);
}

TEST_CASE("small relays collide with the guess at the expected rate") {
  // n = 3 has only 6 permutations, so some trials re-encrypt with the
  // identity and the truth becomes jointly consistent (and unique).
  const CpaFrequencyReport report = cpa_truth_frequency(3, 60, 77);
  CHECK(report.truth_consistent >= 1);
  CHECK(report.truth_unique <= report.truth_consistent);
}

TEST_CASE("kpa scenario 1: identity keys recover the Gram exactly") {
  Rng rng(21);
  const Matrix x11 = random_matrix(4, 3, rng);
  const Matrix x22 = random_matrix(5, 3, rng);
  Matrix x(9, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = x11(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i + 4, j) = x22(i, j);

  // Encryption absent: x_star is just a row shuffle.
  const PermutationKey perm(random_permutation_image(9, rng));
  const Matrix x_star = apply_permutation(perm, x, Side::rows);
  const KpaReport clean = kpa_scenario1(x_star, x11, x22);
  CHECK(clean.recovery_error <= 1e-12);

  // A real key leaves a strictly positive Gram gap.
  const Basis basis = Basis::generate(3, 3, 23);
  const CommutativeKey key = gen_commutative_key(basis, 29);
  const Matrix masked = apply_permutation(perm, multiply(x, key.materialized), Side::rows);
  const KpaReport hidden = kpa_scenario1(masked, x11, x22);
  CHECK(hidden.recovery_error > 0.05);
}

TEST_CASE("kpa scenario 2: identity recovers, keys and permutations do not") {
  Rng rng(31);
  const std::size_t n = 4;
  const Matrix x11 = random_matrix(n, n, rng);
  const Matrix x22 = random_matrix(n, n, rng);
  Matrix x(n, 2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      x(i, j) = x11(i, j);
      x(i, j + n) = x22(i, j);
    }

  // Identity keys and permutation: exact recovery.
  KpaReport clean = kpa_scenario2(x11, x22, x11, x22);
  CHECK(clean.recovery_error <= 1e-10);

  // Full masking: columns mixed by a 2n key, rows shuffled.
  const Basis basis = Basis::generate(2 * n, 2 * n, 41);
  const CommutativeKey key = gen_commutative_key(basis, 43);
  const PermutationKey perm(random_permutation_image(n, rng));
  const Matrix x_star = apply_permutation(perm, multiply(x, key.materialized), Side::rows);
  Matrix z11(n, n), z22(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      z11(i, j) = x_star(i, j);
      z22(i, j) = x_star(i, j + n);
    }
  const KpaReport masked = kpa_scenario2(z11, z22, x11, x22);
  CHECK(masked.recovery_error > 0.05);

  // Non-square known block: infeasible.
  const KpaReport infeasible = kpa_scenario2(random_matrix(3, 2, rng), z22, x11, x22);
  CHECK(infeasible.notes.find("infeasible") != std::string::npos);
}

TEST_CASE("sigma scaling: slope near 2, preconditions enforced") {
  Rng rng(51);
  const Matrix x = random_matrix(20, 5, rng);
  const SigmaScalingResult res =
      sigma_scaling_experiment(x, {0.03, 0.1, 0.3, 1.0}, 40, 99);
  CHECK(res.slope == doctest::Approx(2.0).epsilon(0.1));
  // Halving sigma quarters the masked-Gram magnitude (up to MC noise).
  const SigmaScalingResult halves =
      sigma_scaling_experiment(x, {0.05, 0.1, 0.2, 0.4, 0.8}, 60, 100);
  for (std::size_t i = 0; i + 1 < halves.mean_max_abs.size(); ++i) {
    const double ratio = halves.mean_max_abs[i + 1] / halves.mean_max_abs[i];
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.35));
  }

  CHECK_THROWS_AS(sigma_scaling_experiment(x, {0.1}, 40, 1), ConfigError);
  CHECK_THROWS_AS(sigma_scaling_experiment(x, {0.1, 0.2, 0.3}, 40, 1), ConfigError);
  CHECK_THROWS_AS(sigma_scaling_experiment(x, {0.01, 0.1, 1.0}, 5, 1), ConfigError);
  CHECK_THROWS_AS(sigma_scaling_experiment(Matrix(4, 4), {0.01, 0.1, 1.0}, 40, 1),
                  ConfigError);

  // Single-row plaintext: entries are products of two normals; still ~2.
  Matrix e1(1, 5);
  e1(0, 0) = 1.0;
  const SigmaScalingResult single = sigma_scaling_experiment(e1, {0.03, 0.1, 0.3, 1.0}, 60, 7);
  CHECK(single.slope == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("collusion: honest target stays hidden, compromised target trivial") {
  auto make_data = [](std::size_t agencies, std::uint64_t seed) {
    std::vector<LocalDataset> data;
    for (std::size_t a = 0; a < agencies; ++a) {
      Rng rng(mix_seed(seed, a));
      LocalDataset part;
      part.agency_id = static_cast<std::uint16_t>(a + 1);
      part.x = random_matrix(8, 4, rng);
      part.y.resize(8);
      for (double& v : part.y) v = rng.index(2) ? 1.0 : 0.0;
      data.push_back(std::move(part));
    }
    return data;
  };

  auto data = make_data(3, 2025);
  ProtocolConfig config;
  Simulation sim = run_protocol(config, data, 97);

  const std::vector<std::uint16_t> pool{2, 3};
  const CollusionReport honest = collusion_harness(sim, pool, 1);
  CHECK(honest.messages_seen > 0);
  CHECK(honest.residual_strip_error <= 1e-12);
  CHECK(honest.recovery_error > 0.1);
  CHECK(honest.sorted_recovery_error > 0.1);

  const std::vector<std::uint16_t> total{1, 2, 3};
  const CollusionReport trivial = collusion_harness(sim, total, 1);
  CHECK(trivial.recovery_error == 0.0);

  // K=2 reduces to the single-adversary view.
  auto two = make_data(2, 2026);
  Simulation sim2 = run_protocol(config, two, 89);
  const CollusionReport duo = collusion_harness(sim2, std::vector<std::uint16_t>{2}, 1);
  CHECK(duo.sorted_recovery_error > 0.1);
}
