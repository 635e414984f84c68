// Command-line driver for the masked collaborative logistic regression
// pipeline: fit / cv / verify / attack / bench over CSV or synthetic data.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmlr/attacks.hpp"
#include "cmlr/dataset.hpp"
#include "cmlr/pipeline.hpp"
#include "cmlr/rng.hpp"

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string dataset_path;
  std::string label_column = "label";
  std::string synthetic;  // "n,p,seed"
  std::string proportions;
  std::size_t agencies = 2;
  double lambda = 0.0;
  std::size_t folds = 5;
  std::size_t block_size = 32;
  std::uint64_t seed = 1;
  double tol = 1e-8;
  std::size_t max_iters = 50;
  bool escrow = false;
  bool shuffle = false;
  bool identity_keys = false;
  std::string tamper;  // "", "encrypt", "decrypt"
  std::string report_path;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--dataset", opt.dataset_path, "CSV file with numeric features");
  cmd->add_option("--label", opt.label_column,
                  "label column name (or index when the file has no header)");
  cmd->add_option("--synthetic", opt.synthetic,
                  "generate data instead: n,p,seed (e.g. 2000,10,7)");
  cmd->add_option("--agencies", opt.agencies, "number of agencies K")->check(CLI::PositiveNumber);
  cmd->add_option("--proportions", opt.proportions,
                  "comma-separated split proportions (default: equal)");
  cmd->add_option("--lambda", opt.lambda, "ridge penalty")->check(CLI::NonNegativeNumber);
  cmd->add_option("--folds", opt.folds, "cross-validation folds");
  cmd->add_option("--block-size", opt.block_size, "basis block size");
  cmd->add_option("--seed", opt.seed, "master seed");
  cmd->add_option("--tol", opt.tol, "convergence tolerance (inf-norm step)");
  cmd->add_option("--max-iters", opt.max_iters, "Newton iteration cap");
  cmd->add_flag("--escrow", opt.escrow, "enable test-bench parity checks against plaintext");
  cmd->add_flag("--shuffle", opt.shuffle, "shuffle rows (seeded) before splitting");
  cmd->add_flag("--identity-keys", opt.identity_keys,
                "force identity keys and permutations (plaintext-equivalent run)");
  cmd->add_option("--tamper", opt.tamper, "inject a fault: encrypt|decrypt")
      ->check(CLI::IsMember({"encrypt", "decrypt"}));
  cmd->add_option("--report", opt.report_path, "write the machine-readable report here");
}

cmlr::TabularData load_data(const CommonOptions& opt) {
  if (!opt.synthetic.empty()) {
    std::size_t n = 0, p = 0;
    std::uint64_t seed = 0;
    char comma1 = 0, comma2 = 0;
    std::istringstream in(opt.synthetic);
    in >> n >> comma1 >> p >> comma2 >> seed;
    if (!in || comma1 != ',' || comma2 != ',' || n == 0 || p == 0) {
      throw cmlr::ConfigError("--synthetic expects n,p,seed");
    }
    return cmlr::make_synthetic(n, p, seed);
  }
  if (opt.dataset_path.empty()) {
    throw cmlr::ConfigError("either --dataset or --synthetic is required");
  }
  return cmlr::ingest_csv(opt.dataset_path, opt.label_column);
}

std::vector<cmlr::LocalDataset> split_data(const cmlr::TabularData& data,
                                           const CommonOptions& opt) {
  std::vector<double> proportions;
  if (!opt.proportions.empty()) {
    std::stringstream ss(opt.proportions);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        proportions.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw cmlr::ConfigError("--proportions expects comma-separated numbers, got '" +
                                cell + "'");
      }
    }
  }
  std::optional<std::uint64_t> shuffle_seed;
  if (opt.shuffle) shuffle_seed = opt.seed;
  return cmlr::split_agencies(data, opt.agencies, proportions, shuffle_seed);
}

cmlr::PipelineOptions pipeline_options(const CommonOptions& opt) {
  cmlr::PipelineOptions options;
  options.protocol.block_size = opt.block_size;
  options.protocol.identity_keys = opt.identity_keys;
  options.fit.lambda = opt.lambda;
  options.fit.tol = opt.tol;
  options.fit.max_iters = opt.max_iters;
  options.seed = opt.seed;
  options.escrow_checks = opt.escrow;
  return options;
}

json config_json(const CommonOptions& opt, const char* command) {
  return json{{"command", command},
              {"dataset", opt.dataset_path},
              {"synthetic", opt.synthetic},
              {"agencies", opt.agencies},
              {"lambda", opt.lambda},
              {"folds", opt.folds},
              {"block_size", opt.block_size},
              {"seed", opt.seed},
              {"tol", opt.tol},
              {"max_iters", opt.max_iters},
              {"escrow", opt.escrow},
              {"shuffle", opt.shuffle},
              {"identity_keys", opt.identity_keys},
              {"tamper", opt.tamper}};
}

void write_report(const CommonOptions& opt, const json& report) {
  if (opt.report_path.empty()) return;
  std::ofstream out(opt.report_path);
  if (!out) throw cmlr::DataError("cannot write report to " + opt.report_path);
  out << report.dump(2) << '\n';
}

int cmd_fit(const CommonOptions& opt) {
  const auto data = load_data(opt);
  const auto parts = split_data(data, opt);
  const cmlr::PipelineResult run = cmlr::run_pipeline(parts, pipeline_options(opt));

  json report = {{"config", config_json(opt, "fit")},
                 {"timings_ms",
                  {{"premodel", run.timings.premodel_ms},
                   {"model", run.timings.model_ms},
                   {"postmodel", run.timings.postmodel_ms}}},
                 {"iterations", run.encrypted_fit.iterations},
                 {"converged", run.encrypted_fit.converged},
                 {"beta", run.beta},
                 {"transcript_digest", run.transcript_digest},
                 {"transcript_messages", run.transcript_messages},
                 {"escrow_accesses", run.escrow_accesses}};
  if (run.train_auc) report["auc_train"] = *run.train_auc;
  bool ok = true;
  if (run.parity) {
    report["parity"] = {{"beta_rel_error", run.parity->beta_rel_error},
                        {"auc_gap", run.parity->auc_gap},
                        {"ok", run.parity->ok}};
    ok = run.parity->ok;
  }
  write_report(opt, report);

  std::printf("fit: %zu agencies, lambda=%g, %zu iterations (%s)\n", parts.size(),
              opt.lambda, run.encrypted_fit.iterations,
              run.encrypted_fit.converged ? "converged" : "not converged");
  std::printf("timings ms: premodel=%.2f model=%.2f postmodel=%.2f\n",
              run.timings.premodel_ms, run.timings.model_ms, run.timings.postmodel_ms);
  if (run.train_auc) {
    std::printf("train AUC: %.6f\n", *run.train_auc);
  } else {
    std::printf("train AUC unavailable (single-class labels)\n");
  }
  if (run.parity) {
    std::printf("parity: beta_rel_error=%.3e auc_gap=%.3e -> %s\n",
                run.parity->beta_rel_error, run.parity->auc_gap,
                run.parity->ok ? "ok" : "VIOLATION");
  }
  std::printf("escrow accesses: %zu\n", run.escrow_accesses);
  return ok ? 0 : 2;
}

int cmd_cv(const CommonOptions& opt) {
  const auto data = load_data(opt);
  const auto parts = split_data(data, opt);
  cmlr::FitConfig config;
  config.lambda = opt.lambda;
  config.tol = opt.tol;
  config.max_iters = opt.max_iters;
  cmlr::ProtocolConfig protocol;
  protocol.block_size = opt.block_size;

  const cmlr::FoldPlan plan = cmlr::make_fold_plan(parts, opt.folds, opt.seed);
  const cmlr::CvResult masked = cmlr::cross_validate(
      parts, opt.folds, config, cmlr::make_encrypted_trainer(protocol, opt.seed), opt.seed,
      &plan);

  json folds = json::array();
  bool ok = true;
  std::optional<cmlr::CvResult> plain;
  if (opt.escrow) {
    plain = cmlr::cross_validate(parts, opt.folds, config, cmlr::make_plaintext_trainer(),
                                 opt.seed, &plan);
  }
  std::printf("cv: %zu folds over %zu agencies, lambda=%g\n", opt.folds, parts.size(),
              opt.lambda);
  for (std::size_t f = 0; f < masked.folds.size(); ++f) {
    json fold = {{"fold", f},
                 {"iterations", masked.folds[f].fit.iterations},
                 {"converged", masked.folds[f].fit.converged}};
    if (masked.folds[f].auc) fold["auc"] = *masked.folds[f].auc;
    if (plain) {
      const bool both = masked.folds[f].auc.has_value() && plain->folds[f].auc.has_value();
      const double gap = both ? std::abs(*masked.folds[f].auc - *plain->folds[f].auc) : 0.0;
      fold["auc_gap_vs_plaintext"] = gap;
      if (gap > 1e-10) ok = false;
    }
    folds.push_back(fold);
    if (masked.folds[f].auc) {
      std::printf("  fold %zu: AUC=%.6f (%zu iterations)\n", f, *masked.folds[f].auc,
                  masked.folds[f].fit.iterations);
    } else {
      std::printf("  fold %zu: AUC undefined (single-class test fold)\n", f);
    }
  }
  json report = {{"config", config_json(opt, "cv")}, {"folds", folds}, {"parity_ok", ok}};
  write_report(opt, report);
  if (!ok) std::printf("parity: VIOLATION\n");
  return ok ? 0 : 2;
}

int cmd_verify(const CommonOptions& opt) {
  const auto data = load_data(opt);
  const auto parts = split_data(data, opt);
  cmlr::ProtocolConfig protocol;
  protocol.block_size = opt.block_size;
  protocol.lambda = opt.lambda;
  cmlr::Simulation sim(protocol, parts, opt.seed);

  cmlr::TamperMode tamper = cmlr::TamperMode::none;
  if (opt.tamper == "encrypt") tamper = cmlr::TamperMode::encrypt;
  if (opt.tamper == "decrypt") tamper = cmlr::TamperMode::decrypt;
  const cmlr::VerificationOutcome outcome = sim.run_verification(tamper, opt.seed);

  json report = {{"config", config_json(opt, "verify")},
                 {"solvable", outcome.solvable},
                 {"encryption",
                  {{"pass", outcome.encryption.pass},
                   {"max_gap", outcome.encryption.max_gap},
                   {"tolerance", outcome.encryption.tolerance}}},
                 {"decryption",
                  {{"pass", outcome.decryption.pass},
                   {"max_gap", outcome.decryption.max_gap},
                   {"tolerance", outcome.decryption.tolerance}}}};
  write_report(opt, report);

  if (!outcome.solvable) {
    std::printf("verification unavailable: pseudo-response system is singular\n");
    return 3;
  }
  std::printf("encryption check: %s (max gap %.3e, tolerance %.3e)\n",
              outcome.encryption.pass ? "pass" : "FAIL", outcome.encryption.max_gap,
              outcome.encryption.tolerance);
  std::printf("decryption check: %s (max gap %.3e, tolerance %.3e)\n",
              outcome.decryption.pass ? "pass" : "FAIL", outcome.decryption.max_gap,
              outcome.decryption.tolerance);
  return (outcome.encryption.pass && outcome.decryption.pass) ? 0 : 2;
}

int cmd_attack(const CommonOptions& opt) {
  using namespace cmlr::attacks;
  json report = {{"config", config_json(opt, "attack")}};

  // Chosen-plaintext toy reproduction on the fixed shared basis.
  const cmlr::Matrix b0 = cmlr::Matrix::from_rows({{0, 0, 1}, {0, 1, 0}, {1, 0, 1}});
  const cmlr::Basis fixture_basis = cmlr::Basis::external(b0);
  const cmlr::CommutativeKey victim =
      cmlr::commutative_key_from_coeffs(fixture_basis, {{8.0, 0.3, -2.0}});
  const std::vector<double> truth{8.0, 0.3, -2.0};
  const CpaSystem sys = build_cpa_system(cmlr::Matrix::identity(3), victim.materialized,
                                         b0, cmlr::PermutationKey::identity(3), 3);
  const CpaVerdict verdict = analyze_cpa(sys, 1e-10, &truth);
  std::printf("chosen-plaintext (toy fixture): rank(R)=%zu\n", verdict.rank_r);
  json columns = json::array();
  for (std::size_t j = 0; j < verdict.columns.size(); ++j) {
    const auto& col = verdict.columns[j];
    const char* cls = col.cls == SolutionClass::no_solution ? "no_solution"
                      : col.cls == SolutionClass::unique    ? "unique"
                                                            : "infinite";
    std::printf("  column %zu: %s, solution dim %zu, family dim %zu\n", j + 1, cls,
                col.solution_dim, col.family.dim());
    columns.push_back({{"class", cls},
                       {"solution_dim", col.solution_dim},
                       {"family_dim", col.family.dim()},
                       {"contains_truth", col.contains_truth.value_or(false)}});
  }
  report["cpa"] = {{"rank", verdict.rank_r},
                   {"columns", columns},
                   {"cross_column_consistent", verdict.cross_column_consistent}};

  const CpaFrequencyReport freq = cpa_truth_frequency(6, 50, opt.seed);
  std::printf("random-relay frequency (n=6, 50 trials): truth consistent %zu, unique %zu\n",
              freq.truth_consistent, freq.truth_unique);
  report["cpa_frequency"] = {{"trials", freq.trials},
                             {"truth_consistent", freq.truth_consistent},
                             {"truth_unique", freq.truth_unique}};

  // Known-plaintext demos on a synthetic instance.
  const cmlr::TabularData demo = cmlr::make_synthetic(12, 4, opt.seed);
  const cmlr::Basis basis = cmlr::Basis::generate(4, 4, cmlr::mix_seed(opt.seed, 1));
  const cmlr::CommutativeKey key = cmlr::gen_commutative_key(basis, cmlr::mix_seed(opt.seed, 2));
  cmlr::Rng rng(cmlr::mix_seed(opt.seed, 3));
  const cmlr::PermutationKey perm(cmlr::random_permutation_image(12, rng));
  const cmlr::Matrix x_star =
      cmlr::apply_permutation(perm, cmlr::multiply(demo.x, key.materialized), cmlr::Side::rows);
  cmlr::Matrix x11(5, 4), x22(7, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) x11(i, j) = demo.x(i, j);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) x22(i, j) = demo.x(i + 5, j);
  const KpaReport kpa1 = kpa_scenario1(x_star, x11, x22);
  std::printf("known-plaintext I: Gram recovery error %.4f\n", kpa1.recovery_error);
  report["kpa1"] = {{"recovery_error", kpa1.recovery_error}};

  const cmlr::TabularData demo2 = cmlr::make_synthetic(4, 8, cmlr::mix_seed(opt.seed, 4));
  const cmlr::Basis basis2 = cmlr::Basis::generate(8, 8, cmlr::mix_seed(opt.seed, 5));
  const cmlr::CommutativeKey key2 =
      cmlr::gen_commutative_key(basis2, cmlr::mix_seed(opt.seed, 6));
  cmlr::Rng rng2(cmlr::mix_seed(opt.seed, 7));
  const cmlr::PermutationKey perm2(cmlr::random_permutation_image(4, rng2));
  const cmlr::Matrix masked2 = cmlr::apply_permutation(
      perm2, cmlr::multiply(demo2.x, key2.materialized), cmlr::Side::rows);
  cmlr::Matrix z11(4, 4), z22(4, 4), k11(4, 4), k22(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      z11(i, j) = masked2(i, j);
      z22(i, j) = masked2(i, j + 4);
      k11(i, j) = demo2.x(i, j);
      k22(i, j) = demo2.x(i, j + 4);
    }
  const KpaReport kpa2 = kpa_scenario2(z11, z22, k11, k22);
  std::printf("known-plaintext II: recovery error %.4f\n", kpa2.recovery_error);
  report["kpa2"] = {{"recovery_error", kpa2.recovery_error}, {"notes", kpa2.notes}};

  const SigmaScalingResult sigma = sigma_scaling_experiment(
      demo.x, {0.01, 0.03, 0.1, 0.3, 1.0}, 100, cmlr::mix_seed(opt.seed, 8));
  std::printf("masked-Gram sigma scaling: log-log slope %.3f\n", sigma.slope);
  report["sigma_scaling"] = {{"sigmas", sigma.sigmas},
                             {"mean_max_abs", sigma.mean_max_abs},
                             {"slope", sigma.slope}};

  // Collusion: everyone but agency 1 pools keys and messages.
  const std::size_t agencies = std::max<std::size_t>(opt.agencies, 2);
  const cmlr::TabularData cdata = cmlr::make_synthetic(agencies * 8, 4, cmlr::mix_seed(opt.seed, 9));
  const auto parts = cmlr::split_agencies(cdata, agencies);
  cmlr::ProtocolConfig protocol;
  protocol.block_size = opt.block_size;
  cmlr::Simulation sim = cmlr::run_protocol(protocol, parts, cmlr::mix_seed(opt.seed, 10));
  std::vector<std::uint16_t> pool;
  for (std::size_t a = 2; a <= agencies; ++a) pool.push_back(static_cast<std::uint16_t>(a));
  const CollusionReport collusion = collusion_harness(sim, pool, 1);
  std::printf("collusion (%zu of %zu compromised): sorted recovery error %.4f over %zu messages\n",
              pool.size(), agencies, collusion.sorted_recovery_error, collusion.messages_seen);
  report["collusion"] = {{"recovery_error", collusion.recovery_error},
                         {"sorted_recovery_error", collusion.sorted_recovery_error},
                         {"messages_seen", collusion.messages_seen}};

  write_report(opt, report);
  return 0;
}

int cmd_bench(const CommonOptions& opt) {
  const auto data = load_data(opt);
  const auto parts = split_data(data, opt);
  cmlr::PipelineOptions options = pipeline_options(opt);
  options.fit.max_iters = opt.max_iters;
  options.fit.tol = 0.0 < opt.tol ? opt.tol : 1e-8;
  const cmlr::PipelineResult run = cmlr::run_pipeline(parts, options);

  // Long-format table: one row per phase.
  std::printf("phase,K,ms\n");
  std::printf("premodel,%zu,%.2f\n", parts.size(), run.timings.premodel_ms);
  std::printf("model,%zu,%.2f\n", parts.size(), run.timings.model_ms);
  std::printf("postmodel,%zu,%.2f\n", parts.size(), run.timings.postmodel_ms);
  json table = json::array();
  table.push_back({{"phase", "premodel"}, {"K", parts.size()}, {"ms", run.timings.premodel_ms}});
  table.push_back({{"phase", "model"}, {"K", parts.size()}, {"ms", run.timings.model_ms}});
  table.push_back({{"phase", "postmodel"}, {"K", parts.size()}, {"ms", run.timings.postmodel_ms}});
  json report = {{"config", config_json(opt, "bench")},
                 {"table", table},
                 {"iterations", run.encrypted_fit.iterations}};
  if (run.train_auc) report["auc_train"] = *run.train_auc;
  write_report(opt, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked collaborative logistic regression"};
  app.require_subcommand(1);

  CommonOptions opt;
  CLI::App* fit = app.add_subcommand("fit", "run the full three-phase pipeline");
  CLI::App* cv = app.add_subcommand("cv", "k-fold cross validation through the pipeline");
  CLI::App* verify = app.add_subcommand("verify", "pseudo-response verification round");
  CLI::App* attack = app.add_subcommand("attack", "adversary analyses and experiments");
  CLI::App* bench = app.add_subcommand("bench", "phase timing table");
  for (CLI::App* cmd : {fit, cv, verify, attack, bench}) add_common(cmd, opt);

  CLI11_PARSE(app, argc, argv);
  try {
    if (fit->parsed()) return cmd_fit(opt);
    if (cv->parsed()) return cmd_cv(opt);
    if (verify->parsed()) return cmd_verify(opt);
    if (attack->parsed()) return cmd_attack(opt);
    if (bench->parsed()) return cmd_bench(opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
