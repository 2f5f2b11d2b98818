// knocknet: knockoff-filtered variable selection with hierarchical networks.
//
// Subcommands cover the pipeline stages (simulate, knockoff, train,
// importance, select, baseline), the end-to-end study driver (pipeline), and
// the architecture accounting tools (counts, sweep-kernel). Every run writes
// a manifest echoing the resolved configuration; failures leave a
// machine-readable error record in the output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "knocknet/io.hpp"
#include "knocknet/knockoffs.hpp"
#include "knocknet/model.hpp"
#include "knocknet/pipeline.hpp"

using namespace knocknet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--config", common.config_path, "pipeline config JSON");
  cmd->add_option("--out", common.out_dir, "output directory");
  cmd->add_option("--seed", common.seed, "master seed");
  cmd->add_option("--threads", common.threads, "worker threads (0 = auto)");
}

PipelineConfig load_config(const CommonOptions& common, bool seed_given,
                           bool threads_given) {
  PipelineConfig cfg;
  if (!common.config_path.empty()) cfg = config_from_json_file(common.config_path);
  if (seed_given || common.config_path.empty()) cfg.master_seed = common.seed;
  if (threads_given) cfg.threads = common.threads;
  cfg.out_dir = common.out_dir;
  return cfg;
}

std::string out_path(const CommonOptions& common, const std::string& name) {
  fs::create_directories(common.out_dir);
  return (fs::path(common.out_dir) / name).string();
}

void write_run_manifest(const CommonOptions& common, const std::string& command,
                        const PipelineConfig& cfg, const json& extra = {}) {
  json manifest;
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["config"] = json::parse(config_to_json(cfg));
  if (!extra.empty()) manifest["run"] = extra;
  std::ofstream out(out_path(common, "manifest.json"));
  out << manifest.dump(2) << "\n";
}

void write_error_record(const CommonOptions& common, const std::string& command,
                        const std::string& message) {
  try {
    json record = {{"command", command}, {"error", message}, {"version", kVersion}};
    std::ofstream out(out_path(common, "error.json"));
    out << record.dump(2) << "\n";
  } catch (...) {
    // stderr still carries the message
  }
}

ArchitectureConfig arch_from_config(const PipelineConfig& cfg, int features,
                                    int knockoffs) {
  ArchitectureConfig arch;
  arch.features = features;
  arch.knockoffs = knockoffs;
  arch.region_size = std::min(cfg.region_size, features);
  arch.region_channels = cfg.region_channels;
  arch.dense_widths = cfg.dense_widths;
  arch.covariates = 1;
  arch.activation = activation_from_string(cfg.activation);
  arch.head = cfg.trait == TraitKind::Quantitative ? Activation::Linear
                                                   : Activation::Sigmoid;
  return arch;
}

// ------------------------------------------------------------- subcommands

int cmd_simulate(const CommonOptions& common, const PipelineConfig& cfg,
                 int replicate) {
  const ReplicateData data = make_replicate_data(cfg, replicate);
  write_genotype_csv(out_path(common, "genotypes.csv"), data.genotypes);
  write_variant_metadata_csv(out_path(common, "variants.csv"), data.genotypes);
  write_trait_csv(out_path(common, "trait.csv"), data.trait);

  json extra;
  extra["replicate"] = replicate;
  extra["variants_after_filter"] = data.genotypes.variants();
  json causal = json::array();
  for (int j : data.causal) causal.push_back(data.genotypes.variant_ids[j]);
  extra["causal_variants"] = causal;
  extra["causal_indices"] = data.causal;
  extra["effect_scale_a"] = data.trait_spec.effect_scale_a;
  extra["effects"] = data.trait_spec.beta;
  if (cfg.trait == TraitKind::Dichotomous) {
    extra["intercept"] = data.trait.intercept;
    extra["realized_prevalence"] = data.trait.realized_prevalence;
  }
  write_run_manifest(common, "simulate", cfg, extra);
  return 0;
}

int cmd_knockoff(const CommonOptions& common, const PipelineConfig& cfg,
                 const std::string& genotype_path) {
  const GenotypeMatrix G = read_genotype_csv(genotype_path);
  const KnockoffTensor K = scit_generate(G.dosages, cfg.knockoffs,
                                         cfg.knockoff_window, cfg.master_seed);
  write_knockoff_csv(out_path(common, "knockoffs.csv"), K, G.variant_ids);
  write_run_manifest(common, "knockoff", cfg,
                     {{"genotypes", genotype_path},
                      {"m", cfg.knockoffs},
                      {"window", cfg.knockoff_window}});
  return 0;
}

struct LoadedData {
  GenotypeMatrix genotypes;
  KnockoffTensor knockoffs;
  TraitData trait;
  Eigen::MatrixXd x_aug, cov;
};

LoadedData load_training_data(const std::string& genotype_path,
                              const std::string& knockoff_path,
                              const std::string& trait_path) {
  LoadedData data;
  data.genotypes = read_genotype_csv(genotype_path);
  data.knockoffs = read_knockoff_csv(knockoff_path);
  data.trait = read_trait_csv(trait_path);
  if (data.knockoffs.features() != data.genotypes.variants())
    throw std::runtime_error("knockoff and genotype variant counts differ");
  if (data.trait.y.size() != data.genotypes.samples())
    throw std::runtime_error("trait and genotype sample counts differ");
  data.x_aug = augmented_input(data.genotypes.dosages, data.knockoffs);
  data.cov = data.trait.covariate;
  return data;
}

int cmd_train(const CommonOptions& common, const PipelineConfig& cfg,
              const std::string& genotype_path, const std::string& knockoff_path,
              const std::string& trait_path) {
  const LoadedData data =
      load_training_data(genotype_path, knockoff_path, trait_path);
  const ArchitectureConfig arch =
      arch_from_config(cfg, data.genotypes.variants(), data.knockoffs.M);
  const LossKind loss =
      cfg.trait == TraitKind::Quantitative ? LossKind::Mse : LossKind::Bce;

  RunConfig run;
  run.learning_rate = cfg.learning_rate;
  run.batch_size = std::max(1, std::min(cfg.batch_size,
                                        data.genotypes.samples() / 4));
  run.max_epochs = cfg.max_epochs;
  run.l1 = cfg.l1;
  run.master_seed = cfg.master_seed;

  Rng split_rng(derive_seed(cfg.master_seed, 6));
  const auto order = split_rng.permutation(data.genotypes.samples());
  const int n_val = std::max(
      1, static_cast<int>(data.genotypes.samples() * cfg.validation_fraction));
  std::vector<int> val(order.begin(), order.begin() + n_val);
  std::sort(val.begin(), val.end());

  const Network net(build_architecture(arch, run.l1).layers);
  const TrainResult fit = train(net, run, data.x_aug, data.cov, data.trait.y,
                                val, loss);
  write_history_csv(out_path(common, "history.csv"), fit.history);
  save_checkpoint(out_path(common, "model.bin"), arch, fit.state);

  const int best = optimal_epoch(fit.history, loss == LossKind::Bce);
  write_run_manifest(common, "train", cfg,
                     {{"genotypes", genotype_path},
                      {"knockoffs", knockoff_path},
                      {"trait_file", trait_path},
                      {"parameters", net.param_count()},
                      {"optimal_epoch", best},
                      {"epochs_trained", cfg.max_epochs}});
  return 0;
}

int cmd_importance(const CommonOptions& common, const PipelineConfig& cfg,
                   const std::string& genotype_path,
                   const std::string& knockoff_path,
                   const std::string& trait_path, int epochs) {
  const LoadedData data =
      load_training_data(genotype_path, knockoff_path, trait_path);
  const ArchitectureConfig arch =
      arch_from_config(cfg, data.genotypes.variants(), data.knockoffs.M);
  const LossKind loss =
      cfg.trait == TraitKind::Quantitative ? LossKind::Mse : LossKind::Bce;

  RunConfig base;
  base.learning_rate = cfg.learning_rate;
  base.batch_size = std::max(1, std::min(cfg.batch_size,
                                         data.genotypes.samples() / 4));
  base.l1 = cfg.l1;
  base.master_seed = cfg.master_seed;

  if (epochs <= 0) {
    // pick the epoch budget via the stability rule on a held-out split
    Rng split_rng(derive_seed(cfg.master_seed, 6));
    const auto order = split_rng.permutation(data.genotypes.samples());
    const int n_val = std::max(
        1, static_cast<int>(data.genotypes.samples() * cfg.validation_fraction));
    std::vector<int> val(order.begin(), order.begin() + n_val);
    std::sort(val.begin(), val.end());
    RunConfig pretrain = base;
    pretrain.run_index = 0x5E1;
    pretrain.max_epochs = cfg.max_epochs;
    const Network net(build_architecture(arch, base.l1).layers);
    const TrainResult fit = train(net, pretrain, data.x_aug, data.cov,
                                  data.trait.y, val, loss);
    epochs = optimal_epoch(fit.history, loss == LossKind::Bce) + 1;
  }

  const EnsembleResult ensemble = derandomized_importance(
      arch, base, epochs, data.x_aug, data.cov, data.trait.y, loss,
      cfg.ensemble_runs, data.genotypes.variant_ids);
  write_importance_csv(out_path(common, "importance.csv"), ensemble.median);

  json correlation = json::array();
  for (int r = 0; r < ensemble.w_correlation.rows(); ++r) {
    json row = json::array();
    for (int s = 0; s < ensemble.w_correlation.cols(); ++s)
      row.push_back(ensemble.w_correlation(r, s));
    correlation.push_back(row);
  }
  write_run_manifest(common, "importance", cfg,
                     {{"genotypes", genotype_path},
                      {"knockoffs", knockoff_path},
                      {"trait_file", trait_path},
                      {"ensemble_runs", cfg.ensemble_runs},
                      {"epochs", epochs},
                      {"w_correlation", correlation}});
  return 0;
}

int cmd_select(const CommonOptions& common, const PipelineConfig& cfg,
               const std::string& importance_path, int m,
               std::vector<double> alphas) {
  const ImportanceMatrix T = read_importance_csv(importance_path);
  if (m > 0 && m != T.knockoffs())
    throw std::runtime_error("--m is " + std::to_string(m) + " but " +
                             importance_path + " has " +
                             std::to_string(T.knockoffs()) + " knockoff columns");
  if (alphas.empty()) alphas = {0.1, 0.2};
  std::sort(alphas.begin(), alphas.end());

  const KnockoffStats stats = knockoff_stats(T);
  write_selection_csv(out_path(common, "selection.csv"), T.feature_ids, stats,
                      alphas);

  json selected;
  for (double alpha : alphas) {
    json ids = json::array();
    for (int j : select_by_q(stats.q, alpha)) ids.push_back(T.feature_ids[j]);
    std::ostringstream key;
    key << alpha;
    selected[key.str()] = ids;
  }
  write_run_manifest(common, "select", cfg,
                     {{"importance", importance_path},
                      {"m", T.knockoffs()},
                      {"selected", selected}});
  return 0;
}

int cmd_baseline(const CommonOptions& common, const PipelineConfig& cfg,
                 const std::string& genotype_path,
                 const std::string& knockoff_path,
                 const std::string& trait_path, const std::string& method,
                 std::vector<double> alphas) {
  const GenotypeMatrix G = read_genotype_csv(genotype_path);
  const KnockoffTensor K = read_knockoff_csv(knockoff_path);
  if (K.M != 1)
    throw std::runtime_error("baseline methods use a single knockoff set");
  const TraitData trait = read_trait_csv(trait_path);
  if (alphas.empty()) alphas = {0.1, 0.2};
  std::sort(alphas.begin(), alphas.end());

  const BaselineResult result = baseline_pipeline(
      G.dosages, K.values, trait.covariate, trait.y, cfg.trait,
      baseline_method_from_string(method), alphas);

  // single-knockoff rows reuse the selection schema: kappa flags the winner
  KnockoffStats stats;
  stats.M = 1;
  const int p = G.variants();
  stats.kappa.resize(p);
  stats.tau.resize(p);
  stats.W = result.W;
  stats.q = q_values_single(result.W);
  for (int j = 0; j < p; ++j) {
    stats.kappa[j] = result.W[j] > 0.0 ? 0 : 1;
    stats.tau[j] = std::fabs(result.W[j]);
  }
  write_selection_csv(out_path(common, "selection.csv"), G.variant_ids, stats,
                      alphas, method);
  write_run_manifest(common, "baseline", cfg,
                     {{"genotypes", genotype_path},
                      {"knockoffs", knockoff_path},
                      {"trait_file", trait_path},
                      {"method", method}});
  return 0;
}

int cmd_pipeline(const CommonOptions& common, PipelineConfig cfg) {
  const auto reports = run_pipeline(cfg);
  int failed = 0;
  for (const auto& report : reports)
    if (report.failed) ++failed;

  write_reports_csv(out_path(common, "reports.csv"), reports);
  const auto curves = aggregate_curves(reports, to_string(cfg.trait));
  write_curves_csv(out_path(common, "curves.csv"), curves);
  write_manifest(out_path(common, "manifest.json"), cfg,
                 static_cast<int>(reports.size()) - failed, failed);
  std::cout << "pipeline: " << reports.size() - failed << " tasks completed, "
            << failed << " failed; curves.csv written to " << common.out_dir
            << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_counts(const CommonOptions& common, const PipelineConfig& cfg, int p) {
  ArchitectureConfig arch;
  arch.features = p;
  arch.knockoffs = cfg.knockoffs;
  arch.region_size = cfg.region_size;
  arch.region_channels = cfg.region_channels;
  arch.dense_widths = cfg.dense_widths;
  arch.activation = activation_from_string(cfg.activation);
  arch.head = cfg.trait == TraitKind::Quantitative ? Activation::Linear
                                                   : Activation::Sigmoid;
  const HierarchyComparison cmp = hierarchy_comparison(arch);

  const std::string path = out_path(common, "counts.csv");
  std::ofstream out(path);
  out << "model,layer,kind,output_width,parameters,activations\n";
  auto kind_name = [](LayerKind kind) {
    switch (kind) {
      case LayerKind::LocallyConnected: return "locally-connected";
      case LayerKind::Dense: return "dense";
      case LayerKind::Flatten: return "flatten";
      case LayerKind::CovariateMerge: return "covariate-merge";
      case LayerKind::Output: return "output";
    }
    return "?";
  };
  auto dump = [&](const std::string& name, const BuildResult& built) {
    for (std::size_t k = 0; k < built.layers.size(); ++k) {
      const LayerSpec& layer = built.layers[k];
      out << name << "," << k << "," << kind_name(layer.kind) << ","
          << layer.output_width() << "," << layer.param_count() << ","
          << layer.activation_count() << "\n";
    }
    out << name << ",total,," << "," << built.param_count << ","
        << built.activation_count << "\n";
    std::cout << name << ": " << built.param_count << " parameters, "
              << built.activation_count << " activations\n";
  };
  dump("2-level", cmp.two_level);
  dump("1-level", cmp.one_level);
  dump("0-level", cmp.fully_connected);

  write_run_manifest(common, "counts", cfg,
                     {{"p", p},
                      {"two_level_params", cmp.two_level.param_count},
                      {"one_level_params", cmp.one_level.param_count},
                      {"fully_connected_params", cmp.fully_connected.param_count}});
  return 0;
}

int cmd_sweep_kernel(const CommonOptions& common, PipelineConfig cfg,
                     const std::vector<int>& sigmas) {
  const std::string path = out_path(common, "sweep.csv");
  std::ofstream out(path);
  out << "sigma,parameters,target_fdr,fdr_mean,power_mean,n_replicates\n";
  for (int sigma : sigmas) {
    PipelineConfig step = cfg;
    step.region_size = sigma;
    step.methods = {"hidemk"};

    ArchitectureConfig arch;
    arch.features = step.p;
    arch.knockoffs = step.knockoffs;
    arch.region_size = sigma;
    arch.region_channels = step.region_channels;
    arch.dense_widths = step.dense_widths;
    arch.covariates = 1;
    const long params = build_architecture(arch).param_count;

    const auto reports = run_pipeline(step);
    const auto curves = aggregate_curves(reports, to_string(step.trait));
    for (const auto& point : curves)
      out << sigma << "," << params << "," << point.target_fdr << ","
          << point.fdr_mean << "," << point.power_mean << ","
          << point.n_replicates << "\n";
    std::cout << "sigma " << sigma << ": " << params << " parameters, "
              << curves.size() << " curve points\n";
  }
  json extra;
  extra["sigmas"] = sigmas;
  write_run_manifest(common, "sweep-kernel", cfg, extra);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knockoff-filtered variable selection with hierarchical networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOptions common;
  std::string trait_name, genotype_path, knockoff_path, trait_path;
  std::string importance_path, method = "marginal";
  std::vector<double> alphas;
  std::vector<int> sigmas = {5, 10, 25, 50};
  int replicate = 0, m = 0, epochs = 0, p = 1000;
  int replicates_override = -1;

  auto add_trait = [&](CLI::App* cmd) {
    cmd->add_option("--trait", trait_name,
                    "trait kind: quantitative or dichotomous");
  };

  int n_override = 0, p_override = 0;
  CLI::App* simulate = app.add_subcommand("simulate",
      "simulate genotypes and a trait, write CSVs");
  add_common(simulate, common);
  add_trait(simulate);
  simulate->add_option("--replicate", replicate, "replicate index");
  simulate->add_option("--n", n_override, "sample count");
  simulate->add_option("--p", p_override, "simulated variant count");

  CLI::App* knockoff = app.add_subcommand("knockoff",
      "generate M knockoff copies for a genotype CSV");
  add_common(knockoff, common);
  knockoff->add_option("--genotypes", genotype_path, "genotype CSV")->required();
  int m_opt = 0, window_opt = 0;
  knockoff->add_option("--m", m_opt, "knockoff copies");
  knockoff->add_option("--window", window_opt, "conditioning window");

  CLI::App* train_cmd = app.add_subcommand("train",
      "train the hierarchical network, write history and checkpoint");
  add_common(train_cmd, common);
  add_trait(train_cmd);
  train_cmd->add_option("--genotypes", genotype_path, "genotype CSV")->required();
  train_cmd->add_option("--knockoffs", knockoff_path, "knockoff CSV")->required();
  train_cmd->add_option("--trait-file", trait_path, "trait CSV")->required();

  CLI::App* importance = app.add_subcommand("importance",
      "de-randomized importance matrix from an ensemble of refits");
  add_common(importance, common);
  add_trait(importance);
  importance->add_option("--genotypes", genotype_path, "genotype CSV")->required();
  importance->add_option("--knockoffs", knockoff_path, "knockoff CSV")->required();
  importance->add_option("--trait-file", trait_path, "trait CSV")->required();
  importance->add_option("--epochs", epochs, "epochs per run (0 = stability rule)");
  int runs_opt = 0;
  importance->add_option("--runs", runs_opt, "ensemble size R");

  CLI::App* select = app.add_subcommand("select",
      "apply the multiple-knockoff filter to an importance CSV");
  add_common(select, common);
  select->add_option("--importance", importance_path, "importance CSV")->required();
  select->add_option("--m", m, "expected knockoff count");
  select->add_option("--alpha", alphas, "target FDR levels");

  CLI::App* baseline = app.add_subcommand("baseline",
      "single-knockoff linear baseline (marginal, lasso or ridge)");
  add_common(baseline, common);
  add_trait(baseline);
  baseline->add_option("--genotypes", genotype_path, "genotype CSV")->required();
  baseline->add_option("--knockoffs", knockoff_path, "knockoff CSV (M=1)")->required();
  baseline->add_option("--trait-file", trait_path, "trait CSV")->required();
  baseline->add_option("--method", method, "marginal, lasso or ridge");
  baseline->add_option("--alpha", alphas, "target FDR levels");

  CLI::App* pipeline = app.add_subcommand("pipeline",
      "full replicated study: simulate, fit, select, score, aggregate");
  add_common(pipeline, common);
  add_trait(pipeline);
  pipeline->add_option("--replicates", replicates_override, "replicate count");

  CLI::App* counts = app.add_subcommand("counts",
      "exact parameter/activation table for 0/1/2-level hierarchies");
  add_common(counts, common);
  counts->add_option("--p", p, "feature count");
  int counts_m = 0, counts_sigma = 0, counts_theta = 0;
  counts->add_option("--m", counts_m, "knockoff copies");
  counts->add_option("--sigma", counts_sigma, "region kernel size");
  counts->add_option("--theta", counts_theta, "region channels");

  CLI::App* sweep = app.add_subcommand("sweep-kernel",
      "kernel-size sweep: FDR/power/parameters per sigma");
  add_common(sweep, common);
  add_trait(sweep);
  sweep->add_option("--sigma", sigmas, "kernel sizes to sweep");
  sweep->add_option("--replicates", replicates_override, "replicate count");

  CLI11_PARSE(app, argc, argv);

  CLI::App* active = app.get_subcommands().front();
  const std::string name = active->get_name();
  try {
    PipelineConfig cfg = load_config(common, active->count("--seed") > 0,
                                     active->count("--threads") > 0);
    if (!trait_name.empty()) cfg.trait = trait_from_string(trait_name);
    if (n_override > 0) cfg.n = n_override;
    if (p_override > 0) cfg.p = p_override;
    if (replicates_override >= 0) cfg.replicates = replicates_override;
    if (m_opt > 0) cfg.knockoffs = m_opt;
    if (window_opt > 0) cfg.knockoff_window = window_opt;
    if (runs_opt > 0) cfg.ensemble_runs = runs_opt;
    if (counts_m > 0) cfg.knockoffs = counts_m;
    if (counts_sigma > 0) cfg.region_size = counts_sigma;
    if (counts_theta > 0) cfg.region_channels = counts_theta;

    if (name == "simulate") return cmd_simulate(common, cfg, replicate);
    if (name == "knockoff") return cmd_knockoff(common, cfg, genotype_path);
    if (name == "train")
      return cmd_train(common, cfg, genotype_path, knockoff_path, trait_path);
    if (name == "importance")
      return cmd_importance(common, cfg, genotype_path, knockoff_path,
                            trait_path, epochs);
    if (name == "select")
      return cmd_select(common, cfg, importance_path, m, alphas);
    if (name == "baseline")
      return cmd_baseline(common, cfg, genotype_path, knockoff_path, trait_path,
                          method, alphas);
    if (name == "pipeline") return cmd_pipeline(common, cfg);
    if (name == "counts") return cmd_counts(common, cfg, p);
    if (name == "sweep-kernel") return cmd_sweep_kernel(common, cfg, sigmas);
    std::cerr << "unknown subcommand " << name << "\n";
    return 2;
  } catch (const std::exception& e) {
    write_error_record(common, name, e.what());
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
