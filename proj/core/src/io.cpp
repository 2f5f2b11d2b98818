#include "knocknet/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace knocknet {

namespace {

using nlohmann::json;

// Shortest decimal that round-trips the double exactly.
std::string fmt(double value) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw std::runtime_error(path + ": ragged CSV row");
    table.rows.push_back(std::move(fields));
  }
  return table;
}

std::string alpha_label(double alpha) {
  std::ostringstream ss;
  ss << "selected@" << std::fixed << std::setprecision(2) << alpha;
  return ss.str();
}

}  // namespace

void write_genotype_csv(const std::string& path, const GenotypeMatrix& G) {
  std::ofstream out = open_out(path);
  for (int j = 0; j < G.variants(); ++j)
    out << (j ? "," : "") << G.variant_ids[j];
  out << "\n";
  for (int i = 0; i < G.samples(); ++i) {
    for (int j = 0; j < G.variants(); ++j)
      out << (j ? "," : "") << static_cast<long>(G.dosages(i, j));
    out << "\n";
  }
}

GenotypeMatrix read_genotype_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  GenotypeMatrix G;
  const int p = static_cast<int>(table.header.size());
  const int n = static_cast<int>(table.rows.size());
  if (n == 0) throw std::runtime_error(path + ": no genotype rows");
  G.variant_ids = table.header;
  G.dosages.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) G.dosages(i, j) = std::stod(table.rows[i][j]);
  G.positions.resize(p);
  G.maf.resize(p);
  G.mac.resize(p);
  for (int j = 0; j < p; ++j) {
    G.positions[j] = j + 1;
    const long count = static_cast<long>(std::llround(G.dosages.col(j).sum()));
    G.mac[j] = count;
    G.maf[j] = static_cast<double>(count) / (2.0 * n);
  }
  return G;
}

void write_variant_metadata_csv(const std::string& path, const GenotypeMatrix& G) {
  std::ofstream out = open_out(path);
  out << "variant_id,position,maf,mac\n";
  for (int j = 0; j < G.variants(); ++j)
    out << G.variant_ids[j] << "," << G.positions[j] << "," << fmt(G.maf[j])
        << "," << G.mac[j] << "\n";
}

void write_trait_csv(const std::string& path, const TraitData& trait) {
  std::ofstream out = open_out(path);
  out << "sample_id,y,x1\n";
  for (Eigen::Index i = 0; i < trait.y.size(); ++i)
    out << i << "," << fmt(trait.y[i]) << "," << fmt(trait.covariate[i]) << "\n";
}

TraitData read_trait_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 3 || table.header[1] != "y")
    throw std::runtime_error(path + ": expected sample_id,y,x1 header");
  TraitData trait;
  const int n = static_cast<int>(table.rows.size());
  trait.y.resize(n);
  trait.covariate.resize(n);
  for (int i = 0; i < n; ++i) {
    trait.y[i] = std::stod(table.rows[i][1]);
    trait.covariate[i] = std::stod(table.rows[i][2]);
  }
  return trait;
}

void write_knockoff_csv(const std::string& path, const KnockoffTensor& K,
                        const std::vector<std::string>& variant_ids) {
  if (static_cast<int>(variant_ids.size()) != K.features())
    throw std::invalid_argument("write_knockoff_csv: id count mismatch");
  std::ofstream out = open_out(path);
  for (int j = 0; j < K.features(); ++j)
    for (int m = 1; m <= K.M; ++m)
      out << (j == 0 && m == 1 ? "" : ",") << variant_ids[j] << "@k" << m;
  out << "\n";
  for (int i = 0; i < K.samples(); ++i) {
    for (int c = 0; c < K.values.cols(); ++c)
      out << (c ? "," : "") << fmt(K.values(i, c));
    out << "\n";
  }
}

KnockoffTensor read_knockoff_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int cols = static_cast<int>(table.header.size());
  int M = 0;
  for (const auto& name : table.header) {
    const auto at = name.rfind("@k");
    if (at == std::string::npos)
      throw std::runtime_error(path + ": malformed knockoff header " + name);
    M = std::max(M, std::stoi(name.substr(at + 2)));
  }
  if (M < 1 || cols % M != 0)
    throw std::runtime_error(path + ": inconsistent knockoff header");
  KnockoffTensor K;
  K.M = M;
  const int n = static_cast<int>(table.rows.size());
  K.values.resize(n, cols);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < cols; ++c) K.values(i, c) = std::stod(table.rows[i][c]);
  return K;
}

void write_importance_csv(const std::string& path, const ImportanceMatrix& T) {
  std::ofstream out = open_out(path);
  out << "variant_id";
  for (int m = 0; m <= T.knockoffs(); ++m) out << ",t" << m;
  out << "\n";
  for (int j = 0; j < T.features(); ++j) {
    out << T.feature_ids[j];
    for (int m = 0; m <= T.knockoffs(); ++m) out << "," << fmt(T.T(j, m));
    out << "\n";
  }
}

ImportanceMatrix read_importance_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 3 || table.header[0] != "variant_id")
    throw std::runtime_error(path + ": expected variant_id,t0,... header");
  ImportanceMatrix T;
  const int copies = static_cast<int>(table.header.size()) - 1;
  const int p = static_cast<int>(table.rows.size());
  T.T.resize(p, copies);
  T.feature_ids.resize(p);
  for (int j = 0; j < p; ++j) {
    T.feature_ids[j] = table.rows[j][0];
    for (int m = 0; m < copies; ++m) T.T(j, m) = std::stod(table.rows[j][m + 1]);
  }
  return T;
}

void write_selection_csv(const std::string& path,
                         const std::vector<std::string>& ids,
                         const KnockoffStats& stats,
                         const std::vector<double>& alphas,
                         const std::string& method) {
  std::ofstream out = open_out(path);
  out << "variant_id,kappa,tau,W,q";
  for (double alpha : alphas) out << "," << alpha_label(alpha);
  if (!method.empty()) out << ",method";
  out << "\n";
  for (std::size_t j = 0; j < stats.kappa.size(); ++j) {
    out << (j < ids.size() ? ids[j] : "f" + std::to_string(j)) << ","
        << stats.kappa[j] << "," << fmt(stats.tau[j]) << "," << fmt(stats.W[j])
        << "," << fmt(stats.q[j]);
    for (double alpha : alphas)
      out << "," << (stats.kappa[j] == 0 && stats.q[j] <= alpha ? 1 : 0);
    if (!method.empty()) out << "," << method;
    out << "\n";
  }
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream out = open_out(path);
  out << "epoch,train_loss,val_loss,val_metric\n";
  for (const auto& rec : history.epochs)
    out << rec.epoch << "," << fmt(rec.train_loss) << ","
        << fmt(rec.val_loss) << "," << fmt(rec.val_metric) << "\n";
}

void write_curves_csv(const std::string& path,
                      const std::vector<CurvePoint>& curves) {
  std::ofstream out = open_out(path);
  out << "method,trait,target_fdr,fdr_mean,fdr_se,power_mean,power_se,"
         "n_replicates\n";
  for (const auto& point : curves)
    out << point.method << "," << point.trait << "," << fmt(point.target_fdr)
        << "," << fmt(point.fdr_mean) << "," << fmt(point.fdr_se) << ","
        << fmt(point.power_mean) << "," << fmt(point.power_se) << ","
        << point.n_replicates << "\n";
}

std::vector<CurvePoint> read_curves_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  std::vector<CurvePoint> curves;
  for (const auto& row : table.rows) {
    CurvePoint point;
    point.method = row[0];
    point.trait = row[1];
    point.target_fdr = std::stod(row[2]);
    point.fdr_mean = std::stod(row[3]);
    point.fdr_se = std::stod(row[4]);
    point.power_mean = std::stod(row[5]);
    point.power_se = std::stod(row[6]);
    point.n_replicates = std::stoi(row[7]);
    curves.push_back(point);
  }
  return curves;
}

void write_reports_csv(const std::string& path,
                       const std::vector<ReplicateReport>& reports) {
  std::ofstream out = open_out(path);
  out << "replicate,method,target_fdr,fdp,power,selected,failed,runtime_s\n";
  for (const auto& report : reports) {
    if (report.failed) {
      out << report.replicate << "," << report.method << ",,,,,1,"
          << fmt(report.runtime_seconds) << "\n";
      continue;
    }
    for (const auto& outcome : report.outcomes)
      out << report.replicate << "," << report.method << ","
          << fmt(outcome.target_fdr) << "," << fmt(outcome.fdp) << ","
          << fmt(outcome.power) << "," << outcome.selected_count << ",0,"
          << fmt(report.runtime_seconds) << "\n";
  }
}

namespace {

json arch_to_json(const ArchitectureConfig& arch) {
  return json{{"features", arch.features},
              {"knockoffs", arch.knockoffs},
              {"region_size", arch.region_size},
              {"region_channels", arch.region_channels},
              {"dense_widths", arch.dense_widths},
              {"covariates", arch.covariates},
              {"activation", to_string(arch.activation)},
              {"head", to_string(arch.head)},
              {"hierarchy_levels", arch.hierarchy_levels},
              {"pad_remainder", arch.pad_remainder}};
}

ArchitectureConfig arch_from_json(const json& j) {
  ArchitectureConfig arch;
  arch.features = j.at("features").get<int>();
  arch.knockoffs = j.at("knockoffs").get<int>();
  arch.region_size = j.at("region_size").get<int>();
  arch.region_channels = j.at("region_channels").get<int>();
  arch.dense_widths = j.at("dense_widths").get<std::vector<int>>();
  arch.covariates = j.at("covariates").get<int>();
  arch.activation = activation_from_string(j.at("activation").get<std::string>());
  arch.head = activation_from_string(j.at("head").get<std::string>());
  arch.hierarchy_levels = j.at("hierarchy_levels").get<int>();
  arch.pad_remainder = j.at("pad_remainder").get<bool>();
  return arch;
}

void write_block(std::ofstream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void read_block(std::ifstream& in, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated tensor block");
}

}  // namespace

void save_checkpoint(const std::string& path, const ArchitectureConfig& arch,
                     const ModelState& state) {
  json header = {{"format", "knocknet-checkpoint"},
                 {"version", kVersion},
                 {"architecture", arch_to_json(arch)},
                 {"step", state.step},
                 {"init_seed", state.init_seed}};
  json shapes = json::array();
  for (const auto& layer : state.layers)
    shapes.push_back({{"rows", layer.W.rows()}, {"cols", layer.W.cols()}});
  header["layer_shapes"] = shapes;
  const std::string text = header.dump();

  std::ofstream out = open_out(path);
  const std::uint64_t length = text.size();
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& layer : state.layers) {
    if (layer.W.size() == 0) continue;
    write_block(out, layer.W.data(), layer.W.size());
    write_block(out, layer.b.data(), layer.b.size());
    write_block(out, layer.mW.data(), layer.mW.size());
    write_block(out, layer.vW.data(), layer.vW.size());
    write_block(out, layer.mb.data(), layer.mb.size());
    write_block(out, layer.vb.data(), layer.vb.size());
  }
}

std::pair<ArchitectureConfig, ModelState> load_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const json header = json::parse(text);
  if (header.at("format") != "knocknet-checkpoint")
    throw std::runtime_error("checkpoint: unknown format");

  const ArchitectureConfig arch = arch_from_json(header.at("architecture"));
  const Network net(build_architecture(arch).layers);
  ModelState state = net.init_state(0);
  state.step = header.at("step").get<long>();
  state.init_seed = header.at("init_seed").get<std::uint64_t>();

  const json& shapes = header.at("layer_shapes");
  if (shapes.size() != state.layers.size())
    throw std::runtime_error("checkpoint: layer count mismatch");
  for (std::size_t k = 0; k < state.layers.size(); ++k) {
    auto& layer = state.layers[k];
    if (shapes[k].at("rows").get<Eigen::Index>() != layer.W.rows() ||
        shapes[k].at("cols").get<Eigen::Index>() != layer.W.cols())
      throw std::runtime_error("checkpoint: tensor shape mismatch");
    if (layer.W.size() == 0) continue;
    read_block(in, layer.W.data(), layer.W.size());
    read_block(in, layer.b.data(), layer.b.size());
    read_block(in, layer.mW.data(), layer.mW.size());
    read_block(in, layer.vW.data(), layer.vW.size());
    read_block(in, layer.mb.data(), layer.mb.size());
    read_block(in, layer.vb.data(), layer.vb.size());
  }
  return {arch, state};
}

namespace {

void config_to_json_impl(json& j, const PipelineConfig& cfg) {
  j = json{{"trait", to_string(cfg.trait)},
           {"n", cfg.n},
           {"p", cfg.p},
           {"rho", cfg.rho},
           {"maf_lo", cfg.maf_lo},
           {"maf_hi", cfg.maf_hi},
           {"knockoffs", cfg.knockoffs},
           {"target_fdrs", cfg.target_fdrs},
           {"replicates", cfg.replicates},
           {"methods", cfg.methods},
           {"ensemble_runs", cfg.ensemble_runs},
           {"master_seed", cfg.master_seed},
           {"threads", cfg.threads},
           {"out_dir", cfg.out_dir},
           {"mac_min", cfg.mac_min},
           {"r_max", cfg.r_max},
           {"causal_count", cfg.causal_count},
           {"variance_target_quantitative", cfg.variance_target_quantitative},
           {"variance_target_dichotomous", cfg.variance_target_dichotomous},
           {"prevalence", cfg.prevalence},
           {"signal_multiplier", cfg.signal_multiplier},
           {"knockoff_window", cfg.knockoff_window},
           {"truth_cluster_level", cfg.truth_cluster_level},
           {"region_size", cfg.region_size},
           {"region_channels", cfg.region_channels},
           {"dense_widths", cfg.dense_widths},
           {"activation", cfg.activation},
           {"learning_rate", cfg.learning_rate},
           {"batch_size", cfg.batch_size},
           {"max_epochs", cfg.max_epochs},
           {"l1", cfg.l1},
           {"validation_fraction", cfg.validation_fraction},
           {"cv_draws", cfg.cv_draws},
           {"cv_folds", cfg.cv_folds}};
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) {
  json j;
  config_to_json_impl(j, cfg);
  return j.dump(2);
}

PipelineConfig config_from_json_file(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  in >> j;

  PipelineConfig cfg;
  json known;
  config_to_json_impl(known, cfg);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      throw std::runtime_error("config: unknown key \"" + key + "\"");

  if (j.contains("trait")) cfg.trait = trait_from_string(j["trait"]);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("n", cfg.n);
  get("p", cfg.p);
  get("rho", cfg.rho);
  get("maf_lo", cfg.maf_lo);
  get("maf_hi", cfg.maf_hi);
  get("knockoffs", cfg.knockoffs);
  get("target_fdrs", cfg.target_fdrs);
  get("replicates", cfg.replicates);
  get("methods", cfg.methods);
  get("ensemble_runs", cfg.ensemble_runs);
  get("master_seed", cfg.master_seed);
  get("threads", cfg.threads);
  get("out_dir", cfg.out_dir);
  get("mac_min", cfg.mac_min);
  get("r_max", cfg.r_max);
  get("causal_count", cfg.causal_count);
  get("variance_target_quantitative", cfg.variance_target_quantitative);
  get("variance_target_dichotomous", cfg.variance_target_dichotomous);
  get("prevalence", cfg.prevalence);
  get("signal_multiplier", cfg.signal_multiplier);
  get("knockoff_window", cfg.knockoff_window);
  get("truth_cluster_level", cfg.truth_cluster_level);
  get("region_size", cfg.region_size);
  get("region_channels", cfg.region_channels);
  get("dense_widths", cfg.dense_widths);
  get("activation", cfg.activation);
  get("learning_rate", cfg.learning_rate);
  get("batch_size", cfg.batch_size);
  get("max_epochs", cfg.max_epochs);
  get("l1", cfg.l1);
  get("validation_fraction", cfg.validation_fraction);
  get("cv_draws", cfg.cv_draws);
  get("cv_folds", cfg.cv_folds);
  return cfg;
}

void write_manifest(const std::string& path, const PipelineConfig& cfg,
                    int completed, int failed) {
  json j;
  json config_json;
  config_to_json_impl(config_json, cfg);
  j["version"] = kVersion;
  j["config"] = config_json;
  j["completed"] = completed;
  j["failed"] = failed;
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace knocknet
