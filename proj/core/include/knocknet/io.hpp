#ifndef KNOCKNET_IO_HPP
#define KNOCKNET_IO_HPP

#include <string>
#include <vector>

#include "knocknet/filter.hpp"
#include "knocknet/knockoffs.hpp"
#include "knocknet/model.hpp"
#include "knocknet/pipeline.hpp"
#include "knocknet/simulate.hpp"

namespace knocknet {

// Genotypes: rows = individuals, header = variant ids.
void write_genotype_csv(const std::string& path, const GenotypeMatrix& G);
GenotypeMatrix read_genotype_csv(const std::string& path);

// variant_id,position,maf,mac
void write_variant_metadata_csv(const std::string& path, const GenotypeMatrix& G);

// sample_id,y,x1
void write_trait_csv(const std::string& path, const TraitData& trait);
TraitData read_trait_csv(const std::string& path);

// n rows x (p*M) columns, header variant_id@k{m}.
void write_knockoff_csv(const std::string& path, const KnockoffTensor& K,
                        const std::vector<std::string>& variant_ids);
KnockoffTensor read_knockoff_csv(const std::string& path);

// variant_id,t0,...,tM
void write_importance_csv(const std::string& path, const ImportanceMatrix& T);
ImportanceMatrix read_importance_csv(const std::string& path);

// variant_id,kappa,tau,W,q,selected@<alpha>... (optional method column)
void write_selection_csv(const std::string& path,
                         const std::vector<std::string>& ids,
                         const KnockoffStats& stats,
                         const std::vector<double>& alphas,
                         const std::string& method = "");

// epoch,train_loss,val_loss,val_metric
void write_history_csv(const std::string& path, const TrainHistory& history);

// method,trait,target_fdr,fdr_mean,fdr_se,power_mean,power_se,n_replicates
void write_curves_csv(const std::string& path,
                      const std::vector<CurvePoint>& curves);
std::vector<CurvePoint> read_curves_csv(const std::string& path);

// Per-replicate report rows.
void write_reports_csv(const std::string& path,
                       const std::vector<ReplicateReport>& reports);

// Model checkpoint: JSON architecture header, then the layer tensors as a
// flat little-endian double block.
void save_checkpoint(const std::string& path, const ArchitectureConfig& arch,
                     const ModelState& state);
std::pair<ArchitectureConfig, ModelState> load_checkpoint(const std::string& path);

// Config <-> JSON; unknown keys are rejected to catch typos.
PipelineConfig config_from_json_file(const std::string& path);
std::string config_to_json(const PipelineConfig& config);

// Manifest echoing the resolved config, version, and outcome counts.
void write_manifest(const std::string& path, const PipelineConfig& config,
                    int completed, int failed);

}  // namespace knocknet

#endif  // KNOCKNET_IO_HPP
