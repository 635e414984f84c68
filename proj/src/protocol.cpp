#include "cmlr/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cmlr/kernels.hpp"
#include "cmlr/rng.hpp"

namespace cmlr {

namespace {

constexpr std::uint16_t kServer = 0;

double multiset_gap(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return gap;
}

double verify_tolerance(std::span<const double> reference) {
  double m = 0.0;
  for (double v : reference) m = std::max(m, std::abs(v));
  return 1e-6 * (1.0 + m);
}

}  // namespace

std::uint64_t ProtocolTranscript::digest() const {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(entries.size() * 16);
  for (const auto& e : entries) {
    bytes.push_back(static_cast<std::uint8_t>(e.kind));
    bytes.push_back(static_cast<std::uint8_t>(e.from & 0xff));
    bytes.push_back(static_cast<std::uint8_t>(e.to & 0xff));
    for (int i = 0; i < 8; ++i) {
      bytes.push_back(static_cast<std::uint8_t>((e.payload_digest >> (8 * i)) & 0xff));
    }
  }
  return wire::fnv1a(bytes);
}

EncryptedShare encrypt_own(const LocalDataset& data, const KeyBundle& bundle) {
  validate_local_dataset(data);
  if (bundle.agency_id != data.agency_id) {
    throw ProtocolError("encrypt_own: bundle does not belong to this agency");
  }
  const std::size_t p = data.features();
  const Matrix& key = bundle.commutative.materialized;
  if (key.rows() != p) throw DimensionError("encrypt_own: key dimension != p");
  const PermutationKey& own_perm = bundle.permutations.at(data.agency_id - 1);
  if (own_perm.size() != data.samples()) {
    throw DimensionError("encrypt_own: permutation size != n_i");
  }

  EncryptedShare share;
  share.origin_agency = data.agency_id;
  share.hops_applied = {data.agency_id};
  share.x_star = multiply(apply_permutation(own_perm, data.x, Side::rows), key);
  // Y^T X is a column aggregate: row order cancels, so the unpermuted x is
  // used here.
  share.z_star = vecmat(vecmat(data.y, data.x), key);
  share.case_count = 0.0;
  for (double v : data.y) share.case_count += v;
  return share;
}

EncryptedShare relay_encrypt(const EncryptedShare& share, const KeyBundle& bundle) {
  for (std::uint16_t hop : share.hops_applied) {
    if (hop == bundle.agency_id) {
      throw ProtocolError("relay_encrypt: agency " + std::to_string(bundle.agency_id) +
                          " already encrypted this share");
    }
  }
  const PermutationKey& perm = bundle.permutations.at(share.origin_agency - 1);
  if (perm.size() != share.x_star.rows()) {
    throw DimensionError("relay_encrypt: permutation size mismatch");
  }
  EncryptedShare out;
  out.origin_agency = share.origin_agency;
  out.hops_applied = share.hops_applied;
  out.hops_applied.push_back(bundle.agency_id);
  out.x_star = multiply(apply_permutation(perm, share.x_star, Side::rows),
                        bundle.commutative.materialized);
  out.z_star = vecmat(share.z_star, bundle.commutative.materialized);
  out.case_count = share.case_count;
  return out;
}

Matrix accumulate_bstar(const std::optional<Matrix>& current, const KeyBundle& bundle) {
  const Matrix& key = bundle.commutative.materialized;
  const Matrix key_t = transpose(key);
  if (!current) return multiply(key_t, key);
  if (current->rows() != key.rows()) throw DimensionError("accumulate_bstar: dimension");
  return multiply(multiply(key_t, *current), key);
}

EncryptedDataset server_assemble(std::span<const EncryptedShare> shares,
                                 std::optional<Matrix> b_star) {
  if (shares.empty()) throw ProtocolError("server_assemble: no shares");
  const std::size_t agencies = shares.size();
  const std::size_t p = shares[0].x_star.cols();
  std::size_t total = 0;
  for (const auto& share : shares) {
    if (share.hops_applied.size() != agencies) {
      throw ProtocolError("server_assemble: share from agency " +
                          std::to_string(share.origin_agency) + " has " +
                          std::to_string(share.hops_applied.size()) + " hops, expected " +
                          std::to_string(agencies));
    }
    if (share.x_star.cols() != p || share.z_star.size() != p) {
      throw DimensionError("server_assemble: feature dimension mismatch");
    }
    total += share.x_star.rows();
  }

  EncryptedDataset out;
  out.x_star = Matrix(total, p + 1);
  out.z_star.assign(p + 1, 0.0);
  std::size_t row = 0;
  for (const auto& share : shares) {
    out.block_rows.push_back(share.x_star.rows());
    for (std::size_t i = 0; i < share.x_star.rows(); ++i, ++row) {
      out.x_star(row, 0) = 1.0;
      for (std::size_t j = 0; j < p; ++j) out.x_star(row, j + 1) = share.x_star(i, j);
    }
    out.z_star[0] += share.case_count;
    for (std::size_t j = 0; j < p; ++j) out.z_star[j + 1] += share.z_star[j];
  }
  if (b_star) {
    if (b_star->rows() != p || b_star->cols() != p) {
      throw DimensionError("server_assemble: b_star dimension");
    }
    Matrix padded(p + 1, p + 1);
    padded(0, 0) = 1.0;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) padded(i + 1, j + 1) = (*b_star)(i, j);
    out.b_star = std::move(padded);
  }
  return out;
}

std::vector<double> decrypt_estimate(std::span<const double> beta_star,
                                     std::span<const KeyBundle> bundles) {
  if (beta_star.empty()) throw DimensionError("decrypt_estimate: empty estimate");
  const std::size_t p = beta_star.size() - 1;
  std::vector<double> tail(beta_star.begin() + 1, beta_star.end());
  for (const KeyBundle& bundle : bundles) {
    if (bundle.commutative.materialized.rows() != p) {
      throw DimensionError("decrypt_estimate: key dimension");
    }
    tail = matvec(bundle.commutative.materialized, tail);
  }
  std::vector<double> out(beta_star.size());
  out[0] = beta_star[0];  // intercept rides outside the key algebra
  std::copy(tail.begin(), tail.end(), out.begin() + 1);
  return out;
}

std::vector<double> make_pseudo_response(const LocalDataset& data) {
  std::vector<double> ones(data.features(), 1.0);
  const std::vector<double> xsum = matvec(data.x, ones);  // X 1
  std::vector<double> out(data.features(), 0.0);
  for (std::size_t i = 0; i < data.samples(); ++i) {
    for (std::size_t j = 0; j < data.features(); ++j) out[j] += data.x(i, j) * xsum[i];
  }
  return out;  // X^T X 1
}

std::vector<double> encrypt_pseudo_chain(std::vector<double> y_s,
                                         std::span<const KeyBundle> chain) {
  for (const KeyBundle& bundle : chain) {
    if (bundle.commutative.materialized.rows() != y_s.size()) {
      throw DimensionError("encrypt_pseudo_chain: dimension");
    }
    // B^T y == (y^T B)^T
    y_s = vecmat(y_s, bundle.commutative.materialized);
  }
  return y_s;
}

std::vector<double> server_solve_pseudo(const EncryptedDataset& enc,
                                        std::span<const double> y_s_star) {
  const std::size_t p = enc.x_star.cols() - 1;
  if (y_s_star.size() != p) throw DimensionError("server_solve_pseudo: dimension");
  Matrix raw(enc.x_star.rows(), p);
  for (std::size_t i = 0; i < raw.rows(); ++i)
    for (std::size_t j = 0; j < p; ++j) raw(i, j) = enc.x_star(i, j + 1);
  Matrix gram(p, p);
  std::vector<double> unit_w(raw.rows(), 1.0);
  kernels::weighted_gram_into(raw, unit_w, gram);
  return solve(gram, y_s_star);
}

VerifyReport verify_encryption(const Matrix& x1, const Matrix& x1_star,
                               std::span<const double> beta_s_star) {
  const std::vector<double> predicted = matvec(x1_star, beta_s_star);
  const std::vector<double> reference = row_sums(x1);
  if (predicted.size() != reference.size()) {
    throw DimensionError("verify_encryption: row count mismatch");
  }
  VerifyReport report;
  report.tolerance = verify_tolerance(reference);
  report.max_gap = multiset_gap(predicted, reference);
  report.pass = report.max_gap <= report.tolerance;
  return report;
}

VerifyReport verify_decryption(const Matrix& intermediate,
                               std::span<const double> decrypt_step, const Matrix& x1) {
  const std::vector<double> beta_d = matvec(intermediate, decrypt_step);
  const std::vector<double> reference = row_sums(x1);
  if (beta_d.size() != reference.size()) {
    throw DimensionError("verify_decryption: row count mismatch");
  }
  VerifyReport report;
  report.tolerance = verify_tolerance(reference);
  report.max_gap = multiset_gap(beta_d, reference);
  report.pass = report.max_gap <= report.tolerance;
  return report;
}

KeyEscrow::KeyEscrow(Basis basis, std::vector<KeyBundle> bundles, PermutationKey composite,
                     Matrix key_product)
    : basis_(std::move(basis)),
      bundles_(std::move(bundles)),
      composite_(std::move(composite)),
      key_product_(std::move(key_product)) {}

const Basis& KeyEscrow::basis() const {
  ++accesses_;
  return basis_;
}

const std::vector<KeyBundle>& KeyEscrow::bundles() const {
  ++accesses_;
  return bundles_;
}

const PermutationKey& KeyEscrow::composite_permutation() const {
  ++accesses_;
  return composite_;
}

const Matrix& KeyEscrow::key_product() const {
  ++accesses_;
  return key_product_;
}

Matrix KeyEscrow::padded_key_product() const {
  ++accesses_;
  const std::size_t p = key_product_.rows();
  Matrix padded(p + 1, p + 1);
  padded(0, 0) = 1.0;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) padded(i + 1, j + 1) = key_product_(i, j);
  return padded;
}

Simulation::Simulation(const ProtocolConfig& config, std::vector<LocalDataset> data,
                       std::uint64_t seed)
    : config_(config), data_(std::move(data)) {
  if (data_.empty()) throw ConfigError("simulation: no agencies");
  const std::size_t agencies = data_.size();
  p_ = data_[0].features();
  std::vector<std::size_t> sample_counts;
  for (std::size_t i = 0; i < agencies; ++i) {
    validate_local_dataset(data_[i]);
    if (data_[i].agency_id != static_cast<std::uint16_t>(i + 1)) {
      throw ConfigError("simulation: datasets must carry agency ids 1..K in order");
    }
    if (data_[i].features() != p_) throw DimensionError("simulation: feature mismatch");
    sample_counts.push_back(data_[i].samples());
  }

  // Chain orders, default ring starting at each origin.
  if (config_.chains.empty()) {
    for (std::size_t i = 0; i < agencies; ++i) {
      std::vector<std::uint16_t> chain;
      for (std::size_t j = 0; j < agencies; ++j) {
        chain.push_back(static_cast<std::uint16_t>((i + j) % agencies + 1));
      }
      chains_.push_back(std::move(chain));
    }
  } else {
    if (config_.chains.size() != agencies) throw ConfigError("simulation: chain count != K");
    for (std::size_t i = 0; i < agencies; ++i) {
      const auto& chain = config_.chains[i];
      if (chain.size() != agencies || chain[0] != static_cast<std::uint16_t>(i + 1)) {
        throw ConfigError("simulation: chain " + std::to_string(i + 1) +
                          " must start at its own agency and visit all agencies");
      }
      std::vector<bool> seen(agencies, false);
      for (std::uint16_t a : chain) {
        if (a < 1 || a > agencies || seen[a - 1]) {
          throw ConfigError("simulation: chain is not a permutation of 1..K");
        }
        seen[a - 1] = true;
      }
    }
    chains_ = config_.chains;
  }

  const std::size_t block_size = std::min(config_.block_size, p_);
  const std::uint64_t key_seed = config_.key_seed.value_or(seed);
  basis_ = Basis::generate(p_, block_size, mix_seed(key_seed, 0xB0), config_.spectrum);
  for (std::size_t i = 0; i < agencies; ++i) {
    KeyBundle bundle;
    bundle.agency_id = static_cast<std::uint16_t>(i + 1);
    if (config_.identity_keys) {
      bundle.commutative = identity_commutative_key(basis_);
      for (std::size_t n : sample_counts) {
        bundle.permutations.push_back(PermutationKey::identity(n));
      }
    } else {
      bundle.commutative = gen_commutative_key(basis_, mix_seed(key_seed, 0xA0000 + i),
                                               config_.keygen);
      for (std::size_t j = 0; j < sample_counts.size(); ++j) {
        Rng rng(mix_seed(mix_seed(seed, 0xA0000 + i), 0x50000 + j));
        bundle.permutations.emplace_back(
            random_permutation_image(sample_counts[j], rng));
      }
    }
    bundles_.push_back(std::move(bundle));
  }

  // Escrow: composite row permutation over the stacked design plus the key
  // product, for test oracles only.
  std::vector<std::size_t> offsets(agencies + 1, 0);
  for (std::size_t i = 0; i < agencies; ++i) offsets[i + 1] = offsets[i] + sample_counts[i];
  std::vector<std::size_t> global_image(offsets.back());
  for (std::size_t i = 0; i < agencies; ++i) {
    PermutationKey composite = PermutationKey::identity(sample_counts[i]);
    for (std::uint16_t agency : chains_[i]) {
      composite = compose(bundle_of(agency).permutations[i], composite);
    }
    for (std::size_t r = 0; r < sample_counts[i]; ++r) {
      global_image[offsets[i] + r] = offsets[i] + composite.image_of(r);
    }
  }
  Matrix key_product = Matrix::identity(p_);
  for (const auto& bundle : bundles_) {
    key_product = multiply(key_product, bundle.commutative.materialized);
  }
  escrow_ = KeyEscrow(basis_, bundles_, PermutationKey(std::move(global_image)),
                      std::move(key_product));
}

void Simulation::send(std::uint16_t from, std::uint16_t to, wire::Kind kind,
                      const Matrix& payload) {
  wire::Message msg{kind, from, to, wire::encode_matrix(payload)};
  const auto record = wire::encode_message(msg);
  transcript_.entries.push_back(
      {from, to, kind, wire::fnv1a(record), msg.payload.size()});
  messages_.push_back(std::move(msg));
}

const EncryptedDataset& Simulation::premodel() {
  if (assembled_) return *assembled_;
  const std::size_t agencies = data_.size();
  // Degenerate K=1 chain: the intermediate "through K-1 keys" is raw data.
  if (agencies == 1) verify_intermediate_ = data_[0].x;
  std::vector<EncryptedShare> final_shares(agencies);
  for (std::size_t i = 0; i < agencies; ++i) {
    const auto& chain = chains_[i];
    EncryptedShare share = encrypt_own(data_[i], bundle_of(chain[0]));
    for (std::size_t hop = 1; hop < chain.size(); ++hop) {
      const std::uint16_t to = chain[hop];
      send(chain[hop - 1], to, wire::Kind::share_x, share.x_star);
      std::vector<double> padded_z;
      padded_z.reserve(p_ + 1);
      padded_z.push_back(share.case_count);
      padded_z.insert(padded_z.end(), share.z_star.begin(), share.z_star.end());
      send(chain[hop - 1], to, wire::Kind::share_z, Matrix::row_vector(padded_z));
      if (i == 0 && hop == chain.size() - 1) verify_intermediate_ = share.x_star;
      try {
        share = relay_encrypt(share, bundle_of(to));
      } catch (const ProtocolError& e) {
        throw ProtocolError(std::string(e.what()) + " (at message index " +
                            std::to_string(transcript_.entries.size()) + ")");
      }
    }
    const std::uint16_t last = chain.back();
    send(last, kServer, wire::Kind::share_x, share.x_star);
    std::vector<double> padded_z;
    padded_z.push_back(share.case_count);
    padded_z.insert(padded_z.end(), share.z_star.begin(), share.z_star.end());
    send(last, kServer, wire::Kind::share_z, Matrix::row_vector(padded_z));
    final_shares[i] = std::move(share);
  }

  std::optional<Matrix> b_star;
  if (config_.lambda > 0.0) {
    b_star = accumulate_bstar(std::nullopt, bundles_[0]);
    for (std::size_t i = 1; i < agencies; ++i) {
      send(static_cast<std::uint16_t>(i), static_cast<std::uint16_t>(i + 1),
           wire::Kind::bstar, *b_star);
      b_star = accumulate_bstar(b_star, bundles_[i]);
    }
    send(static_cast<std::uint16_t>(agencies), kServer, wire::Kind::bstar, *b_star);
  }
  assembled_ = server_assemble(final_shares, std::move(b_star));
  return *assembled_;
}

std::vector<double> Simulation::decrypt_chain(std::span<const double> beta_star) {
  std::vector<double> current(beta_star.begin(), beta_star.end());
  send(kServer, 1, wire::Kind::beta_star, Matrix::column_vector(current));
  for (std::size_t i = 0; i < bundles_.size(); ++i) {
    current = decrypt_estimate(current, std::span(&bundles_[i], 1));
    const std::uint16_t from = static_cast<std::uint16_t>(i + 1);
    const std::uint16_t to =
        i + 1 < bundles_.size() ? static_cast<std::uint16_t>(i + 2) : kServer;
    send(from, to, wire::Kind::decrypt_step, Matrix::column_vector(current));
  }
  return current;
}

VerificationOutcome Simulation::run_verification(TamperMode tamper,
                                                 std::uint64_t tamper_seed) {
  premodel();
  const std::size_t agencies = data_.size();

  // Each agency's pseudo response travels its own chain collecting B^T.
  VerificationOutcome outcome;
  std::vector<double> summed(p_, 0.0);
  for (std::size_t i = 0; i < agencies; ++i) {
    std::vector<double> y_s = make_pseudo_response(data_[i]);
    const auto& chain = chains_[i];
    for (std::size_t hop = 0; hop < chain.size(); ++hop) {
      y_s = encrypt_pseudo_chain(std::move(y_s), std::span(&bundle_of(chain[hop]), 1));
      const std::uint16_t to =
          hop + 1 < chain.size() ? chain[hop + 1] : kServer;
      send(chain[hop], to, wire::Kind::pseudo, Matrix::column_vector(y_s));
    }
    for (std::size_t j = 0; j < p_; ++j) summed[j] += y_s[j];
    outcome.pseudo.per_agency.push_back(std::move(y_s));
  }
  outcome.pseudo.y_s_star = summed;

  std::vector<double> beta_s_star;
  try {
    beta_s_star = server_solve_pseudo(*assembled_, summed);
  } catch (const SingularMatrixError&) {
    outcome.solvable = false;
    return outcome;
  }
  outcome.solvable = true;
  for (std::size_t i = 0; i < agencies; ++i) {
    send(kServer, static_cast<std::uint16_t>(i + 1), wire::Kind::beta_star,
         Matrix::column_vector(beta_s_star));
  }

  // Encryption check by agency 1 against its final encrypted block.
  Matrix x1_star(assembled_->block_rows[0], p_);
  for (std::size_t i = 0; i < x1_star.rows(); ++i)
    for (std::size_t j = 0; j < p_; ++j) x1_star(i, j) = assembled_->x_star(i, j + 1);
  if (tamper == TamperMode::encrypt) {
    Rng rng(mix_seed(tamper_seed, 0x7A));
    x1_star(rng.index(x1_star.rows()), rng.index(p_)) += 1.0;
  }
  outcome.encryption = verify_encryption(data_[0].x, x1_star, beta_s_star);

  // Decryption check: the last agency in agency 1's chain applies its key
  // to beta_s_star; agency 1 replays it against the requested intermediate.
  const std::uint16_t last = chains_[0].back();
  send(1, last, wire::Kind::verify_req, Matrix(0, 0));
  std::vector<double> step;
  if (tamper == TamperMode::decrypt) {
    const CommutativeKey rogue =
        gen_commutative_key(basis_, mix_seed(tamper_seed, 0x7B), config_.keygen);
    step = matvec(rogue.materialized, beta_s_star);
  } else {
    step = matvec(bundle_of(last).commutative.materialized, beta_s_star);
  }
  send(last, 1, wire::Kind::decrypt_step, Matrix::column_vector(step));
  send(last, 1, wire::Kind::verify_data, verify_intermediate_);
  outcome.decryption = verify_decryption(verify_intermediate_, step, data_[0].x);
  return outcome;
}

Simulation run_protocol(const ProtocolConfig& config, std::vector<LocalDataset> data,
                        std::uint64_t seed) {
  Simulation sim(config, std::move(data), seed);
  sim.premodel();
  return sim;
}

}  // namespace cmlr
