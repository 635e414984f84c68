#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cmlr/dataset.hpp"
#include "cmlr/keys.hpp"
#include "cmlr/matrix.hpp"
#include "cmlr/wire.hpp"

namespace cmlr {

// One agency's data in flight through the encryption chain. z_star is the
// p-vector Y^T X B...; case_count carries the label total, the padded
// leading entry of the assembled response vector (the intercept block of
// the key is 1, so this entry rides along the chain unchanged).
struct EncryptedShare {
  std::uint16_t origin_agency = 0;
  std::vector<std::uint16_t> hops_applied;
  Matrix x_star;
  std::vector<double> z_star;
  double case_count = 0.0;
};

// Server-side assembly: stacked x_star with a leading all-ones intercept
// column, the padded response row, and (when the ridge penalty is active)
// the padded key Gram accumulator.
struct EncryptedDataset {
  Matrix x_star;                 // n x (p+1)
  std::vector<double> z_star;    // length p+1, leading entry = total case count
  std::optional<Matrix> b_star;  // (p+1) x (p+1), leading 1 padding
  std::vector<std::size_t> block_rows;  // per-agency row counts, agency order
};

struct TranscriptEntry {
  std::uint16_t from = 0;
  std::uint16_t to = 0;
  wire::Kind kind;
  std::uint64_t payload_digest = 0;
  std::size_t payload_bytes = 0;
};

struct ProtocolTranscript {
  std::vector<TranscriptEntry> entries;
  // Digest over all entries; equal transcripts <=> equal replays.
  std::uint64_t digest() const;
};

// --- chain operations (Algorithm steps as pure functions) ---

EncryptedShare encrypt_own(const LocalDataset& data, const KeyBundle& bundle);
EncryptedShare relay_encrypt(const EncryptedShare& share, const KeyBundle& bundle);
Matrix accumulate_bstar(const std::optional<Matrix>& current, const KeyBundle& bundle);
EncryptedDataset server_assemble(std::span<const EncryptedShare> shares,
                                 std::optional<Matrix> b_star);
std::vector<double> decrypt_estimate(std::span<const double> beta_star,
                                     std::span<const KeyBundle> bundles);

// --- verification phase ---

std::vector<double> make_pseudo_response(const LocalDataset& data);
std::vector<double> encrypt_pseudo_chain(std::vector<double> y_s,
                                         std::span<const KeyBundle> chain);
// Least squares on the raw p-column encrypted matrix (no intercept column);
// throws SingularMatrixError when the normal equations are singular, which
// callers report as "verification unavailable" rather than failure.
std::vector<double> server_solve_pseudo(const EncryptedDataset& enc,
                                        std::span<const double> y_s_star);

struct VerifyReport {
  bool pass = false;
  double max_gap = 0.0;
  double tolerance = 0.0;
};

VerifyReport verify_encryption(const Matrix& x1, const Matrix& x1_star,
                               std::span<const double> beta_s_star);
VerifyReport verify_decryption(const Matrix& intermediate,
                               std::span<const double> decrypt_step, const Matrix& x1);

// --- simulation ---

struct ProtocolConfig {
  double lambda = 0.0;
  std::size_t block_size = 32;  // clamped to p
  SpectrumConfig spectrum;
  KeyGenOptions keygen;
  // Chain orders; chains[i] must be a permutation of 1..K starting with
  // i+1. Empty means the ring i -> i+1 -> ... .
  std::vector<std::vector<std::uint16_t>> chains;
  // Force identity keys and permutations (plaintext-equivalent run).
  bool identity_keys = false;
  // Seed for the shared basis and the agencies' commutative keys; defaults
  // to the run seed. Cross validation pins this across folds so that only
  // the per-fold permutation keys are regenerated.
  std::optional<std::uint64_t> key_seed;
};

// Test-bench view of every secret in a run. Never consulted by protocol
// code; accesses are counted so reports can show the protocol ran blind.
class KeyEscrow {
public:
  KeyEscrow() = default;
  KeyEscrow(Basis basis, std::vector<KeyBundle> bundles, PermutationKey composite,
            Matrix key_product);

  const Basis& basis() const;
  const std::vector<KeyBundle>& bundles() const;
  // Global row permutation of the stacked design: image[i] is the row of
  // the assembled x_star holding original row i.
  const PermutationKey& composite_permutation() const;
  const Matrix& key_product() const;  // product of all agencies' keys, p x p
  Matrix padded_key_product() const;  // (p+1) x (p+1) with leading 1

  std::size_t accesses() const noexcept { return accesses_; }

private:
  Basis basis_;
  std::vector<KeyBundle> bundles_;
  PermutationKey composite_;
  Matrix key_product_;
  mutable std::size_t accesses_ = 0;
};

enum class TamperMode { none, encrypt, decrypt };

// The summed encrypted pseudo response and each agency's contribution to it
// (already carried through that agency's full encryption chain).
struct PseudoResponse {
  std::vector<double> y_s_star;
  std::vector<std::vector<double>> per_agency;
};

struct VerificationOutcome {
  bool solvable = false;  // false: pseudo system singular, checks unavailable
  PseudoResponse pseudo;
  VerifyReport encryption;
  VerifyReport decryption;
};

// Deterministic in-process run of K agency state machines plus the cloud
// server over an ordered message queue. Every exchanged payload is
// serialized in the wire format, logged to the transcript, and kept for
// adversary-view analyses.
class Simulation {
public:
  Simulation(const ProtocolConfig& config, std::vector<LocalDataset> data,
             std::uint64_t seed);

  // Pre-modeling: all encryption chains plus server assembly.
  const EncryptedDataset& premodel();

  // Post-modeling: the decryption chain for a server-produced estimate.
  std::vector<double> decrypt_chain(std::span<const double> beta_star);

  // Pseudo-response round plus both checks of the verification phase,
  // optionally with an injected fault.
  VerificationOutcome run_verification(TamperMode tamper = TamperMode::none,
                                       std::uint64_t tamper_seed = 0);

  const ProtocolTranscript& transcript() const noexcept { return transcript_; }
  const std::vector<wire::Message>& message_log() const noexcept { return messages_; }
  const KeyEscrow& escrow() const noexcept { return escrow_; }
  const std::vector<LocalDataset>& datasets() const noexcept { return data_; }

  std::size_t agencies() const noexcept { return data_.size(); }
  std::size_t features() const noexcept { return p_; }

private:
  void send(std::uint16_t from, std::uint16_t to, wire::Kind kind, const Matrix& payload);
  const KeyBundle& bundle_of(std::uint16_t agency) const { return bundles_[agency - 1]; }

  ProtocolConfig config_;
  std::vector<LocalDataset> data_;
  std::size_t p_ = 0;
  std::vector<std::vector<std::uint16_t>> chains_;
  std::vector<KeyBundle> bundles_;
  Basis basis_;
  KeyEscrow escrow_;
  ProtocolTranscript transcript_;
  std::vector<wire::Message> messages_;
  std::optional<EncryptedDataset> assembled_;
  // Agency 1's share one hop before its final key, served on VERIFY_REQ.
  Matrix verify_intermediate_;
};

// Convenience wrapper: premodel immediately and hand back the simulation,
// whose accessors expose {EncryptedDataset, ProtocolTranscript, KeyEscrow}.
Simulation run_protocol(const ProtocolConfig& config, std::vector<LocalDataset> data,
                        std::uint64_t seed);

}  // namespace cmlr
