#include "cmlr/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "cmlr/rng.hpp"

namespace cmlr {

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count();
}

std::optional<double> pooled_auc(const std::vector<LocalDataset>& data,
                                 std::span<const double> beta) {
  std::vector<double> scores, labels;
  for (const auto& part : data) {
    for (std::size_t i = 0; i < part.samples(); ++i) {
      scores.push_back(predict(beta, part.x.row(i)));
      labels.push_back(part.y[i]);
    }
  }
  try {
    return auc(scores, labels);
  } catch (const UndefinedAucError&) {
    return std::nullopt;
  }
}

}  // namespace

PipelineResult run_pipeline(const std::vector<LocalDataset>& data,
                            const PipelineOptions& options) {
  PipelineResult result;
  ProtocolConfig protocol = options.protocol;
  protocol.lambda = options.fit.lambda;

  auto start = std::chrono::steady_clock::now();
  Simulation sim(protocol, data, options.seed);
  const EncryptedDataset& enc = sim.premodel();
  result.timings.premodel_ms = ms_since(start);

  start = std::chrono::steady_clock::now();
  result.encrypted_fit = fit(enc, options.fit);
  result.timings.model_ms = ms_since(start);

  start = std::chrono::steady_clock::now();
  result.beta = sim.decrypt_chain(result.encrypted_fit.beta);
  result.timings.postmodel_ms = ms_since(start);

  result.train_auc = pooled_auc(data, result.beta);

  if (options.escrow_checks) {
    ParityCheck parity;
    auto [x, y] = join_datasets(data);
    parity.plaintext_fit = fit(x, y, options.fit);
    double gap = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < result.beta.size(); ++j) {
      gap = std::max(gap, std::abs(result.beta[j] - parity.plaintext_fit.beta[j]));
      scale = std::max(scale, std::abs(parity.plaintext_fit.beta[j]));
    }
    parity.beta_rel_error = gap / (1.0 + scale);

    // Cross-check the decryption chain against the escrowed key product.
    const Matrix padded = sim.escrow().padded_key_product();
    const std::vector<double> via_escrow = matvec(padded, result.encrypted_fit.beta);
    for (std::size_t j = 0; j < result.beta.size(); ++j) {
      parity.beta_rel_error =
          std::max(parity.beta_rel_error,
                   std::abs(via_escrow[j] - result.beta[j]) / (1.0 + scale));
    }

    const std::optional<double> plain_auc = pooled_auc(data, parity.plaintext_fit.beta);
    if (plain_auc && result.train_auc) {
      parity.auc_gap = std::abs(*plain_auc - *result.train_auc);
    }
    parity.ok = parity.beta_rel_error < parity.beta_tolerance &&
                parity.auc_gap <= parity.auc_tolerance;
    result.parity = std::move(parity);
  }

  result.transcript_digest = sim.transcript().digest();
  result.transcript_messages = sim.transcript().entries.size();
  result.escrow_accesses = sim.escrow().accesses();
  return result;
}

CvTrainer make_encrypted_trainer(const ProtocolConfig& protocol, std::uint64_t seed) {
  return [protocol, seed](const std::vector<LocalDataset>& train, const FitConfig& config,
                          std::size_t fold_index) {
    ProtocolConfig fold_protocol = protocol;
    fold_protocol.lambda = config.lambda;
    // Same commutative keys every fold; only the row permutations are
    // regenerated per fold.
    if (!fold_protocol.key_seed) fold_protocol.key_seed = mix_seed(seed, 0xCFAA);
    Simulation sim(fold_protocol, train, mix_seed(seed, 0xCF00 + fold_index));
    FitResult fitted = fit(sim.premodel(), config);
    fitted.beta = sim.decrypt_chain(fitted.beta);
    return fitted;
  };
}

CvTrainer make_plaintext_trainer() {
  return [](const std::vector<LocalDataset>& train, const FitConfig& config,
            std::size_t fold_index) {
    (void)fold_index;
    auto [x, y] = join_datasets(train);
    return fit(x, y, config);
  };
}

}  // namespace cmlr
