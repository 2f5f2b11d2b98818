#include "knocknet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>

#include "knocknet/knockoffs.hpp"

namespace knocknet {

std::vector<double> PipelineConfig::default_targets() {
  std::vector<double> targets;
  for (int i = 1; i <= 20; ++i) targets.push_back(i / 100.0);
  return targets;
}

PipelineConfig full_scale_profile() {
  PipelineConfig cfg;
  cfg.n = 10000;
  cfg.p = 2000;
  cfg.replicates = 200;
  cfg.ensemble_runs = 10;
  cfg.knockoff_window = 100;
  cfg.cv_draws = 25;
  cfg.learning_rate = 0.001;
  return cfg;
}

std::string to_string(TraitKind kind) {
  return kind == TraitKind::Quantitative ? "quantitative" : "dichotomous";
}

TraitKind trait_from_string(const std::string& name) {
  if (name == "quantitative") return TraitKind::Quantitative;
  if (name == "dichotomous") return TraitKind::Dichotomous;
  throw std::invalid_argument("unknown trait kind: " + name);
}

std::pair<double, double> fdr_power(const std::vector<int>& selected,
                                    const std::vector<int>& causal) {
  if (causal.empty()) throw std::invalid_argument("fdr_power: empty causal set");
  const std::set<int> truth(causal.begin(), causal.end());
  int hits = 0;
  for (int j : selected)
    if (truth.count(j)) ++hits;
  const double fdp =
      selected.empty()
          ? 0.0
          : static_cast<double>(selected.size() - hits) / selected.size();
  const double power = static_cast<double>(hits) / causal.size();
  return {fdp, power};
}

// Every method task re-derives the replicate dataset from the same seeds.
ReplicateData make_replicate_data(const PipelineConfig& cfg, int replicate) {
  const std::uint64_t seed = derive_seed(cfg.master_seed, replicate);

  ReplicateData data;
  const GenotypeMatrix raw = simulate_genotypes(
      cfg.n, cfg.p, cfg.rho, log_uniform_maf(cfg.maf_lo, cfg.maf_hi),
      derive_seed(seed, 1));
  data.genotypes = mac_filter(raw, cfg.mac_min);

  const ClusterSet clusters = ld_cluster(data.genotypes, cfg.r_max);
  data.causal = choose_causal(clusters, cfg.causal_count, derive_seed(seed, 2));
  for (const auto& cluster : clusters.clusters) {
    for (int member : cluster) {
      if (std::find(data.causal.begin(), data.causal.end(), member) !=
          data.causal.end()) {
        data.causal_clusters_flat.insert(data.causal_clusters_flat.end(),
                                         cluster.begin(), cluster.end());
        break;
      }
    }
  }
  std::sort(data.causal_clusters_flat.begin(), data.causal_clusters_flat.end());

  std::vector<double> causal_mafs;
  for (int j : data.causal) causal_mafs.push_back(data.genotypes.maf[j]);
  const std::vector<double> causal_vars =
      column_variances(data.genotypes.dosages, data.causal);

  data.trait_spec.kind = cfg.trait;
  data.trait_spec.causal = data.causal;
  auto [a, beta] = effect_sizes(causal_mafs, causal_vars, cfg.variance_target());
  data.trait_spec.effect_scale_a = a;
  data.trait_spec.beta = beta;
  data.trait_spec.prevalence = cfg.prevalence;

  data.trait = cfg.trait == TraitKind::Quantitative
                   ? gen_quantitative(data.genotypes, data.trait_spec,
                                      derive_seed(seed, 3))
                   : gen_dichotomous(data.genotypes, data.trait_spec,
                                     derive_seed(seed, 3));
  return data;
}

namespace {

bool is_network_method(const std::string& method) {
  return method == "hidemk" || method == "hidemk-single" ||
         method == "hidemk-relu";
}

struct NetworkSelection {
  std::vector<double> W;
  std::vector<std::vector<int>> selected_per_target;
};

NetworkSelection network_method(const PipelineConfig& cfg,
                                const ReplicateData& data,
                                const std::string& method,
                                std::uint64_t replicate_seed) {
  const int M = method == "hidemk-single" ? 1 : cfg.knockoffs;
  const int p = data.genotypes.variants();
  const KnockoffTensor K =
      scit_generate(data.genotypes.dosages, M, cfg.knockoff_window,
                    derive_seed(replicate_seed, 4 + (M == 1 ? 1 : 0)));
  const Eigen::MatrixXd X_aug = augmented_input(data.genotypes.dosages, K);
  const Eigen::MatrixXd cov = data.trait.covariate;
  const Eigen::VectorXd& y = data.trait.y;
  const LossKind loss =
      cfg.trait == TraitKind::Quantitative ? LossKind::Mse : LossKind::Bce;

  ArchitectureConfig arch;
  arch.features = p;
  arch.knockoffs = M;
  arch.region_size = cfg.region_size;
  arch.region_channels = cfg.region_channels;
  arch.dense_widths = cfg.dense_widths;
  arch.covariates = 1;
  arch.activation = method == "hidemk-relu" ? Activation::Relu
                                            : activation_from_string(cfg.activation);
  arch.head = cfg.trait == TraitKind::Quantitative ? Activation::Linear
                                                   : Activation::Sigmoid;
  arch.hierarchy_levels = 2;
  if (p < cfg.region_size) arch.region_size = p;  // tiny desk runs

  RunConfig base;
  base.learning_rate = cfg.learning_rate;
  base.batch_size = std::max(1, std::min(cfg.batch_size, cfg.n / 4));
  base.l1 = cfg.l1;
  base.master_seed = derive_seed(replicate_seed, 7);
  base.folds = cfg.cv_folds;
  base.draws = cfg.cv_draws;

  int epochs;
  if (cfg.cv_draws > 0) {
    SearchSpace space;
    space.learning_rate = base.learning_rate;
    space.batch_size = base.batch_size;
    const CvResult cv = cross_validate(arch, space, cfg.cv_folds, cfg.cv_draws,
                                       base.master_seed, X_aug, cov, y, loss);
    base.l1 = cv.best.l1;
    epochs = cv.optimal_epochs;
  } else {
    // one held-out pretrain picks the epoch count via the stability rule
    Rng split_rng(derive_seed(replicate_seed, 6));
    const std::vector<int> order = split_rng.permutation(cfg.n);
    const int n_val = std::max(1, static_cast<int>(cfg.n * cfg.validation_fraction));
    std::vector<int> val(order.begin(), order.begin() + n_val);
    std::sort(val.begin(), val.end());

    RunConfig pretrain = base;
    pretrain.run_index = 0x5E1;
    pretrain.max_epochs = cfg.max_epochs;
    const Network net(build_architecture(arch, pretrain.l1).layers);
    const TrainResult fit = train(net, pretrain, X_aug, cov, y, val, loss);
    epochs = optimal_epoch(fit.history, loss == LossKind::Bce) + 1;
  }

  const EnsembleResult ensemble =
      derandomized_importance(arch, base, epochs, X_aug, cov, y, loss,
                              cfg.ensemble_runs, data.genotypes.variant_ids);

  NetworkSelection out;
  if (M >= 2) {
    const KnockoffStats stats = knockoff_stats(ensemble.median);
    out.W = stats.W;
    for (double alpha : cfg.target_fdrs)
      out.selected_per_target.push_back(select_by_q(stats.q, alpha));
  } else {
    out.W = w_vector(ensemble.median);
    for (double alpha : cfg.target_fdrs)
      out.selected_per_target.push_back(select_single(out.W, alpha));
  }
  return out;
}

NetworkSelection baseline_method(const PipelineConfig& cfg,
                                 const ReplicateData& data,
                                 const std::string& method,
                                 std::uint64_t replicate_seed) {
  const KnockoffTensor K = scit_generate(data.genotypes.dosages, 1,
                                         cfg.knockoff_window,
                                         derive_seed(replicate_seed, 5));
  const BaselineResult result = baseline_pipeline(
      data.genotypes.dosages, K.values, data.trait.covariate, data.trait.y,
      cfg.trait, baseline_method_from_string(method), cfg.target_fdrs);

  NetworkSelection out;
  out.W = result.W;
  for (const auto& sel : result.selections)
    out.selected_per_target.push_back(sel.selected);
  return out;
}

}  // namespace

ReplicateReport run_replicate(const PipelineConfig& cfg, int replicate_index,
                              const std::string& method) {
  ReplicateReport report;
  report.replicate = replicate_index;
  report.method = method;
  const auto start = std::chrono::steady_clock::now();
  try {
    const ReplicateData data = make_replicate_data(cfg, replicate_index);
    report.causal = data.causal;
    report.features = data.genotypes.variants();

    const std::uint64_t seed = derive_seed(cfg.master_seed, replicate_index);
    const NetworkSelection sel =
        is_network_method(method)
            ? network_method(cfg, data, method, seed)
            : baseline_method(cfg, data, method, seed);
    report.W = sel.W;

    const std::vector<int>& truth =
        cfg.truth_cluster_level ? data.causal_clusters_flat : data.causal;
    for (std::size_t t = 0; t < cfg.target_fdrs.size(); ++t) {
      TargetOutcome outcome;
      outcome.target_fdr = cfg.target_fdrs[t];
      const auto [fdp, power] = fdr_power(sel.selected_per_target[t], truth);
      outcome.fdp = fdp;
      outcome.power = power;
      outcome.selected_count = static_cast<int>(sel.selected_per_target[t].size());
      report.outcomes.push_back(outcome);
    }
  } catch (const std::exception& e) {
    report.failed = true;
    report.error = e.what();
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

std::vector<CurvePoint> aggregate_curves(const std::vector<ReplicateReport>& reports,
                                         const std::string& trait_name) {
  if (reports.empty()) throw std::invalid_argument("aggregate_curves: no reports");

  struct Key {
    std::string method;
    double target;
    bool operator<(const Key& other) const {
      return method != other.method ? method < other.method
                                    : target < other.target;
    }
  };
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& report : reports) {
    if (report.failed) continue;
    for (const auto& outcome : report.outcomes) {
      auto& bucket = groups[{report.method, outcome.target_fdr}];
      bucket.first.push_back(outcome.fdp);
      bucket.second.push_back(outcome.power);
    }
  }

  auto mean_se = [](const std::vector<double>& values) {
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double se = values.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    return std::make_pair(mean, se);
  };

  std::vector<CurvePoint> curves;
  for (const auto& [key, bucket] : groups) {
    CurvePoint point;
    point.method = key.method;
    point.trait = trait_name;
    point.target_fdr = key.target;
    std::tie(point.fdr_mean, point.fdr_se) = mean_se(bucket.first);
    std::tie(point.power_mean, point.power_se) = mean_se(bucket.second);
    point.n_replicates = static_cast<int>(bucket.first.size());
    curves.push_back(point);
  }
  return curves;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kThreadsEnvVar)) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<ReplicateReport> run_pipeline(const PipelineConfig& cfg) {
  for (double alpha : cfg.target_fdrs)
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("run_pipeline: target FDRs must be in (0,1)");
  if (!std::is_sorted(cfg.target_fdrs.begin(), cfg.target_fdrs.end()))
    throw std::invalid_argument("run_pipeline: target FDRs must be increasing");

  struct Task {
    int replicate;
    std::string method;
  };
  std::vector<Task> tasks;
  for (int r = 0; r < cfg.replicates; ++r)
    for (const auto& method : cfg.methods) tasks.push_back({r, method});

  std::vector<ReplicateReport> reports(tasks.size());
  std::atomic<std::size_t> next{0};
  const int threads = std::max(1, std::min<int>(resolve_threads(cfg.threads),
                                                static_cast<int>(tasks.size())));

  auto worker = [&]() {
    for (;;) {
      const std::size_t index = next.fetch_add(1);
      if (index >= tasks.size()) return;
      reports[index] =
          run_replicate(cfg, tasks[index].replicate, tasks[index].method);
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }
  return reports;
}

}  // namespace knocknet
