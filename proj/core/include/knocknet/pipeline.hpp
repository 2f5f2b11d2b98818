#ifndef KNOCKNET_PIPELINE_HPP
#define KNOCKNET_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "knocknet/baselines.hpp"
#include "knocknet/model.hpp"
#include "knocknet/simulate.hpp"

namespace knocknet {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kThreadsEnvVar = "KNOCKNET_THREADS";

// Full simulate -> knockoffs -> fit -> select -> score configuration. The
// defaults are the desk-scale profile; `full_scale_profile()` matches the
// large simulation design.
struct PipelineConfig {
  TraitKind trait = TraitKind::Quantitative;
  int n = 2000;
  int p = 205;                    // simulated variants, pre MAC filter
  double rho = 0.7;
  double maf_lo = 0.005, maf_hi = 0.5;
  int knockoffs = 5;              // M
  std::vector<double> target_fdrs = default_targets();
  int replicates = 50;
  std::vector<std::string> methods = {"hidemk"};
  int ensemble_runs = 10;         // R
  std::uint64_t master_seed = 1;
  int threads = 0;                // 0: KNOCKNET_THREADS or hardware count
  std::string out_dir = "out";

  // simulation
  long mac_min = 10;
  double r_max = 0.75;
  int causal_count = 4;
  double variance_target_quantitative = 0.06;
  double variance_target_dichotomous = 0.2;
  double prevalence = 0.10;
  double signal_multiplier = 1.0;  // scales the variance target
  int knockoff_window = 25;
  bool truth_cluster_level = false;  // credit LD proxies of causal variants

  // network
  int region_size = 5;
  int region_channels = 8;
  std::vector<int> dense_widths = {50};
  std::string activation = "elu";
  double learning_rate = 0.005;   // full profile keeps the 0.001 base rate
  int batch_size = 1024;          // capped at n/4 per run
  int max_epochs = 50;            // epoch-selection budget
  double l1 = 1e-4;               // used when cv_draws == 0
  double validation_fraction = 0.2;
  int cv_draws = 0;               // > 0 enables the random search protocol
  int cv_folds = 5;

  static std::vector<double> default_targets();  // 0.01 .. 0.20 step 0.01

  double variance_target() const {
    return signal_multiplier * (trait == TraitKind::Quantitative
                                    ? variance_target_quantitative
                                    : variance_target_dichotomous);
  }
};

PipelineConfig full_scale_profile();

// FDP = |selected \ causal| / max(1, |selected|), power = hits / |causal|.
std::pair<double, double> fdr_power(const std::vector<int>& selected,
                                    const std::vector<int>& causal);

struct TargetOutcome {
  double target_fdr = 0.0;
  double fdp = 0.0;
  double power = 0.0;
  int selected_count = 0;
};

struct ReplicateReport {
  int replicate = -1;
  std::string method;
  std::vector<TargetOutcome> outcomes;  // one per target FDR, ascending
  std::vector<int> causal;
  std::vector<double> W;                // per-feature statistic of the method
  int features = 0;                     // post-filter p
  double runtime_seconds = 0.0;
  bool failed = false;
  std::string error;
};

// One simulated dataset: genotypes after the MAC filter, the causal choice,
// and the generated trait. A pure function of (config, replicate index).
struct ReplicateData {
  GenotypeMatrix genotypes;
  std::vector<int> causal;
  std::vector<int> causal_clusters_flat;  // union of the causal clusters
  TraitSpec trait_spec;
  TraitData trait;
};

ReplicateData make_replicate_data(const PipelineConfig& config,
                                  int replicate_index);

// Methods: hidemk (de-randomized, M knockoffs), hidemk-single (same network,
// one knockoff), hidemk-relu (ReLU activations), lasso, ridge, marginal.
ReplicateReport run_replicate(const PipelineConfig& config, int replicate_index,
                              const std::string& method);

struct CurvePoint {
  std::string method;
  std::string trait;
  double target_fdr = 0.0;
  double fdr_mean = 0.0, fdr_se = 0.0;
  double power_mean = 0.0, power_se = 0.0;
  int n_replicates = 0;
};

std::vector<CurvePoint> aggregate_curves(const std::vector<ReplicateReport>& reports,
                                         const std::string& trait_name);

// Runs every (replicate, method) task on a worker pool; failed replicates are
// reported with their error rather than dropped.
std::vector<ReplicateReport> run_pipeline(const PipelineConfig& config);

int resolve_threads(int requested);

std::string to_string(TraitKind kind);
TraitKind trait_from_string(const std::string& name);

}  // namespace knocknet

#endif  // KNOCKNET_PIPELINE_HPP
