#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cmlr/protocol.hpp"
#include "cmlr/solver.hpp"

namespace cmlr {

struct PhaseTimings {
  double premodel_ms = 0.0;
  double model_ms = 0.0;
  double postmodel_ms = 0.0;
};

struct ParityCheck {
  double beta_rel_error = 0.0;  // inf-norm, scaled by 1 + |beta|_inf
  double auc_gap = 0.0;
  bool ok = false;
  double beta_tolerance = 1e-8;
  double auc_tolerance = 1e-10;
  FitResult plaintext_fit;
};

struct PipelineOptions {
  ProtocolConfig protocol;
  FitConfig fit;
  std::uint64_t seed = 1;
  // Run the plaintext solver on the pooled data and compare against the
  // decrypted masked estimate (test-bench view; counted escrow accesses).
  bool escrow_checks = false;
};

struct PipelineResult {
  FitResult encrypted_fit;     // estimate still in masked coordinates
  std::vector<double> beta;    // decrypted estimate
  PhaseTimings timings;
  std::uint64_t transcript_digest = 0;
  std::size_t transcript_messages = 0;
  std::size_t escrow_accesses = 0;
  std::optional<double> train_auc;  // pooled local predictions
  std::optional<ParityCheck> parity;
};

// Full three-phase run over the simulated transport.
PipelineResult run_pipeline(const std::vector<LocalDataset>& data,
                            const PipelineOptions& options);

// Cross-validation trainer that runs the masked pipeline per fold with
// fresh fold-specific permutation keys and returns the decrypted estimate.
CvTrainer make_encrypted_trainer(const ProtocolConfig& protocol, std::uint64_t seed);
// Plaintext counterpart (pools the training parts).
CvTrainer make_plaintext_trainer();

}  // namespace cmlr
