#include "knocknet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "knocknet/rng.hpp"

namespace knocknet {

BuildResult build_architecture(const ArchitectureConfig& arch, double l1) {
  if (arch.features < 1) throw std::invalid_argument("build: features >= 1");
  if (arch.knockoffs < 1) throw std::invalid_argument("build: knockoffs >= 1");
  if (arch.region_size < 1 || arch.region_channels < 1)
    throw std::invalid_argument("build: region size/channels >= 1");
  if (arch.hierarchy_levels != 1 && arch.hierarchy_levels != 2)
    throw std::invalid_argument("build: hierarchy levels must be 1 or 2");

  const int p = arch.features;
  const int copies = arch.knockoffs + 1;
  BuildResult out;

  LayerSpec feature_layer;
  feature_layer.kind = LayerKind::LocallyConnected;
  feature_layer.input_width = p * copies;
  feature_layer.group = copies;
  feature_layer.stride = copies;
  feature_layer.channels = 1;
  feature_layer.activation = arch.activation;
  feature_layer.l1 = l1;
  out.layers.push_back(feature_layer);

  int width = p;
  if (arch.hierarchy_levels == 2) {
    LayerSpec region;
    region.kind = LayerKind::LocallyConnected;
    region.input_width = p;
    region.group = arch.region_size;
    region.stride = arch.region_size;
    region.channels = arch.region_channels;
    region.activation = arch.activation;
    const int full = p / arch.region_size;
    const int remainder = p - full * arch.region_size;
    if (arch.pad_remainder && remainder > 0) region.tail_group = remainder;
    if (full == 0 && region.tail_group == 0)
      throw std::invalid_argument(
          "build: region size exceeds feature count and the remainder is dropped");
    out.layers.push_back(region);
    out.region_groups = region.groups();
    width = region.output_width();

    LayerSpec flatten;
    flatten.kind = LayerKind::Flatten;
    flatten.input_width = width;
    out.layers.push_back(flatten);
  }
  out.flatten_width = width;

  for (int dense_width : arch.dense_widths) {
    LayerSpec dense;
    dense.kind = LayerKind::Dense;
    dense.input_width = width;
    dense.channels = dense_width;
    dense.activation = arch.activation;
    out.layers.push_back(dense);
    width = dense_width;
  }

  LayerSpec merge;
  merge.kind = LayerKind::CovariateMerge;
  merge.input_width = width;
  merge.covariates = arch.covariates;
  out.layers.push_back(merge);
  width += arch.covariates;

  LayerSpec head;
  head.kind = LayerKind::Output;
  head.input_width = width;
  head.channels = 1;
  head.activation = arch.head;
  out.layers.push_back(head);

  out.param_count = total_params(out.layers);
  out.activation_count = total_activations(out.layers);
  return out;
}

namespace {

// Downstream dense stack + covariate merge + head shared by the comparison
// models.
void append_downstream(const ArchitectureConfig& arch, int width,
                       std::vector<LayerSpec>& layers) {
  for (int dense_width : arch.dense_widths) {
    LayerSpec dense;
    dense.kind = LayerKind::Dense;
    dense.input_width = width;
    dense.channels = dense_width;
    dense.activation = arch.activation;
    layers.push_back(dense);
    width = dense_width;
  }
  LayerSpec merge;
  merge.kind = LayerKind::CovariateMerge;
  merge.input_width = width;
  merge.covariates = arch.covariates;
  layers.push_back(merge);
  width += arch.covariates;

  LayerSpec head;
  head.kind = LayerKind::Output;
  head.input_width = width;
  head.channels = 1;
  head.activation = arch.head;
  layers.push_back(head);
}

BuildResult finish(std::vector<LayerSpec> layers, int region_groups,
                   int flatten_width) {
  BuildResult out;
  out.layers = std::move(layers);
  out.param_count = total_params(out.layers);
  out.activation_count = total_activations(out.layers);
  out.region_groups = region_groups;
  out.flatten_width = flatten_width;
  return out;
}

}  // namespace

HierarchyComparison hierarchy_comparison(const ArchitectureConfig& arch) {
  HierarchyComparison cmp;
  ArchitectureConfig two = arch;
  two.hierarchy_levels = 2;
  cmp.two_level = build_architecture(two);

  const int p = arch.features;
  const int copies = arch.knockoffs + 1;
  const int region_width = cmp.two_level.flatten_width;

  // One level: the region-wise layer becomes a dense layer with the same
  // output width.
  {
    std::vector<LayerSpec> layers;
    LayerSpec feature_layer;
    feature_layer.kind = LayerKind::LocallyConnected;
    feature_layer.input_width = p * copies;
    feature_layer.group = copies;
    feature_layer.stride = copies;
    feature_layer.channels = 1;
    feature_layer.activation = arch.activation;
    layers.push_back(feature_layer);

    LayerSpec region_dense;
    region_dense.kind = LayerKind::Dense;
    region_dense.input_width = p;
    region_dense.channels = region_width;
    region_dense.activation = arch.activation;
    layers.push_back(region_dense);

    append_downstream(arch, region_width, layers);
    cmp.one_level = finish(std::move(layers), 0, region_width);
  }

  // Fully connected: three dense hidden layers at the input width, then the
  // same downstream stack.
  {
    std::vector<LayerSpec> layers;
    int width = p * copies;
    for (int h = 0; h < 3; ++h) {
      LayerSpec dense;
      dense.kind = LayerKind::Dense;
      dense.input_width = width;
      dense.channels = p * copies;
      dense.activation = arch.activation;
      layers.push_back(dense);
      width = p * copies;
    }
    append_downstream(arch, width, layers);
    cmp.fully_connected = finish(std::move(layers), 0, 0);
  }
  return cmp;
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = X.row(rows[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& y, const std::vector<int>& rows) {
  Eigen::VectorXd out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

}  // namespace

TrainResult train(const Network& net, const RunConfig& run,
                  const Eigen::MatrixXd& X_aug, const Eigen::MatrixXd& cov,
                  const Eigen::VectorXd& y, const std::vector<int>& val_indices,
                  LossKind loss) {
  const int n = static_cast<int>(X_aug.rows());
  if (y.size() != n) throw std::invalid_argument("train: y length mismatch");
  if (run.max_epochs < 1) throw std::invalid_argument("train: max_epochs >= 1");

  std::vector<char> is_val(n, 0);
  for (int i : val_indices) is_val.at(i) = 1;
  std::vector<int> train_idx;
  train_idx.reserve(n - val_indices.size());
  for (int i = 0; i < n; ++i)
    if (!is_val[i]) train_idx.push_back(i);
  if (train_idx.empty()) throw std::invalid_argument("train: empty training set");

  const bool has_val = !val_indices.empty();
  Eigen::MatrixXd Xv, Cv;
  Eigen::VectorXd yv;
  if (has_val) {
    Xv = gather_rows(X_aug, val_indices);
    if (cov.cols() > 0) Cv = gather_rows(cov, val_indices);
    yv = gather(y, val_indices);
  }

  const std::uint64_t run_seed = run.run_seed();
  TrainResult result;
  result.state = net.init_state(derive_seed(run_seed, 1));
  Rng shuffle_rng(derive_seed(run_seed, 2));

  const int batch = std::max(1, std::min<int>(run.batch_size, train_idx.size()));
  Gradients grads = net.make_gradients();

  for (int epoch = 0; epoch < run.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const std::size_t stop = std::min(train_idx.size(), start + batch);
      const std::vector<int> rows(train_idx.begin() + start,
                                  train_idx.begin() + stop);
      const Eigen::MatrixXd Xb = gather_rows(X_aug, rows);
      const Eigen::MatrixXd Cb =
          cov.cols() > 0 ? gather_rows(cov, rows) : Eigen::MatrixXd(rows.size(), 0);
      const Eigen::VectorXd yb = gather(y, rows);
      const double batch_loss = net.backprop(result.state, Xb, Cb, yb, loss, grads);
      adam_step(result.state, grads, run.learning_rate);
      loss_sum += batch_loss * static_cast<double>(rows.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
    if (has_val) {
      const Eigen::VectorXd pred = net.forward(result.state, Xv, Cv);
      rec.val_loss = loss_value(loss, yv, pred);
      rec.val_metric =
          loss == LossKind::Bce ? auc_from_labels(yv, pred) : loss_mse(yv, pred);
    } else {
      rec.val_loss = rec.train_loss;
      rec.val_metric = 0.0;
    }
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch));
    result.history.epochs.push_back(rec);
  }
  return result;
}

int optimal_epoch(const TrainHistory& history, bool metric_higher_is_better) {
  const auto& epochs = history.epochs;
  if (epochs.empty()) throw std::invalid_argument("optimal_epoch: empty history");
  const int count = static_cast<int>(epochs.size());

  int argmin_loss = 0;
  for (int k = 1; k < count; ++k)
    if (epochs[k].val_loss < epochs[argmin_loss].val_loss) argmin_loss = k;
  const double loss_min = epochs[argmin_loss].val_loss;

  auto stable = [&](int k) {
    if (loss_min == 0.0) return false;
    const int lo = std::max(0, k - 5), hi = std::min(count - 1, k + 5);
    for (int i = lo; i <= hi; ++i) {
      if (std::fabs(epochs[i].val_loss - loss_min) / std::fabs(loss_min) >= 0.01)
        return false;
    }
    return true;
  };

  int best = -1;
  for (int k = 0; k < count; ++k) {
    if (!stable(k)) continue;
    if (best < 0) {
      best = k;
      continue;
    }
    const double mk = epochs[k].val_metric, mb = epochs[best].val_metric;
    if (metric_higher_is_better ? mk > mb : mk < mb) best = k;
  }
  return best >= 0 ? best : argmin_loss;
}

CvResult cross_validate(const ArchitectureConfig& arch, const SearchSpace& space,
                        int folds, int draws, std::uint64_t master_seed,
                        const Eigen::MatrixXd& X_aug, const Eigen::MatrixXd& cov,
                        const Eigen::VectorXd& y, LossKind loss) {
  if (folds < 2) throw std::invalid_argument("cross_validate: folds >= 2");
  if (draws < 1) throw std::invalid_argument("cross_validate: draws >= 1");
  const int n = static_cast<int>(X_aug.rows());
  const bool higher_better = loss == LossKind::Bce;

  Rng fold_rng(derive_seed(master_seed, 0xF01D));
  const std::vector<int> order = fold_rng.permutation(n);
  std::vector<int> fold_of(n);
  for (int i = 0; i < n; ++i) fold_of[order[i]] = i % folds;

  Rng draw_rng(derive_seed(master_seed, 0xD7A3));
  struct Draw {
    double l1;
    int epochs;
  };
  std::vector<Draw> plan(draws);
  for (auto& d : plan) {
    d.l1 = space.l1_grid[draw_rng.uniform_int(space.l1_grid.size())];
    d.epochs = space.epoch_grid[draw_rng.uniform_int(space.epoch_grid.size())];
  }

  CvResult result;
  double best_score = higher_better ? -1e300 : 1e300;
  for (int d = 0; d < draws; ++d) {
    double score_sum = 0.0;
    double epoch_sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> val;
      for (int i = 0; i < n; ++i)
        if (fold_of[i] == f) val.push_back(i);

      RunConfig run;
      run.learning_rate = space.learning_rate;
      run.batch_size = space.batch_size;
      run.max_epochs = plan[d].epochs;
      run.l1 = plan[d].l1;
      run.master_seed = master_seed;
      run.run_index = 0x10000 + d * folds + f;

      const Network net(build_architecture(arch, run.l1).layers);
      const TrainResult fit = train(net, run, X_aug, cov, y, val, loss);
      const int k = optimal_epoch(fit.history, higher_better);
      score_sum += fit.history.epochs[k].val_metric;
      epoch_sum += k + 1;
    }
    const double score = score_sum / folds;
    const bool better = higher_better ? score > best_score : score < best_score;
    if (better) {
      best_score = score;
      result.best.learning_rate = space.learning_rate;
      result.best.batch_size = space.batch_size;
      result.best.l1 = plan[d].l1;
      result.best.max_epochs = plan[d].epochs;
      result.best.master_seed = master_seed;
      result.best.folds = folds;
      result.best.draws = draws;
      result.optimal_epochs =
          std::max(1, static_cast<int>(std::llround(epoch_sum / folds)));
      result.best_score = score;
    }
  }
  return result;
}

Tensor gradient_tensor(const Eigen::MatrixXd& input_grads, int p, int copies) {
  const int n = static_cast<int>(input_grads.rows());
  if (input_grads.cols() != static_cast<Eigen::Index>(p) * copies)
    throw std::invalid_argument("gradient_tensor: width mismatch");
  Tensor T({static_cast<std::size_t>(n), static_cast<std::size_t>(p),
            static_cast<std::size_t>(copies)});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      for (int m = 0; m < copies; ++m)
        T.at3(i, j, m) = input_grads(i, j * copies + m);
  return T;
}

ImportanceMatrix model_importance(const Network& net, const ModelState& state,
                                  const Eigen::MatrixXd& X_aug,
                                  const Eigen::MatrixXd& cov, int p, int copies,
                                  std::vector<std::string> feature_ids) {
  const int n = static_cast<int>(X_aug.rows());
  const int chunk = 2048;
  Eigen::VectorXd column_sum = Eigen::VectorXd::Zero(X_aug.cols());
  for (int start = 0; start < n; start += chunk) {
    const int rows = std::min(chunk, n - start);
    const Eigen::MatrixXd grads = net.input_gradients(
        state, X_aug.middleRows(start, rows),
        cov.cols() > 0 ? Eigen::MatrixXd(cov.middleRows(start, rows))
                       : Eigen::MatrixXd(rows, 0));
    column_sum += grads.colwise().sum().transpose();
  }
  column_sum /= static_cast<double>(n);

  ImportanceMatrix out;
  out.T.resize(p, copies);
  for (int j = 0; j < p; ++j)
    for (int m = 0; m < copies; ++m)
      out.T(j, m) = std::fabs(column_sum[j * copies + m]);
  if (feature_ids.empty()) {
    out.feature_ids.resize(p);
    for (int j = 0; j < p; ++j) out.feature_ids[j] = "f" + std::to_string(j);
  } else {
    out.feature_ids = std::move(feature_ids);
  }
  return out;
}

ImportanceMatrix median_importance(const std::vector<ImportanceMatrix>& runs) {
  if (runs.empty()) throw std::invalid_argument("median_importance: no runs");
  ImportanceMatrix out = runs.front();
  const std::size_t R = runs.size();
  std::vector<double> values(R);
  for (Eigen::Index j = 0; j < out.T.rows(); ++j) {
    for (Eigen::Index m = 0; m < out.T.cols(); ++m) {
      for (std::size_t r = 0; r < R; ++r) values[r] = runs[r].T(j, m);
      std::sort(values.begin(), values.end());
      out.T(j, m) = R % 2 == 1 ? values[R / 2]
                               : 0.5 * (values[R / 2 - 1] + values[R / 2]);
    }
  }
  return out;
}

std::vector<double> w_vector(const ImportanceMatrix& T) {
  const int p = T.features();
  std::vector<double> W(p);
  if (T.knockoffs() >= 2) {
    for (int j = 0; j < p; ++j) W[j] = w_multiple(T.T.row(j));
  } else if (T.knockoffs() == 1) {
    for (int j = 0; j < p; ++j) W[j] = w_single(T.T(j, 0), T.T(j, 1));
  } else {
    throw std::invalid_argument("w_vector: no knockoff columns");
  }
  return W;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  const double denom = std::sqrt(saa * sbb);
  return denom > 0.0 ? sab / denom : 0.0;
}

EnsembleResult derandomized_importance(const ArchitectureConfig& arch,
                                       const RunConfig& base, int epochs,
                                       const Eigen::MatrixXd& X_aug,
                                       const Eigen::MatrixXd& cov,
                                       const Eigen::VectorXd& y, LossKind loss,
                                       int R,
                                       std::vector<std::string> feature_ids) {
  if (R < 1) throw std::invalid_argument("derandomized_importance: R >= 1");
  if (epochs < 1) throw std::invalid_argument("derandomized_importance: epochs >= 1");

  const Network net(build_architecture(arch, base.l1).layers);
  EnsembleResult out;
  out.runs.reserve(R);
  for (int r = 0; r < R; ++r) {
    RunConfig run = base;
    run.run_index = r;
    run.max_epochs = epochs;
    const TrainResult fit = train(net, run, X_aug, cov, y, {}, loss);
    out.runs.push_back(model_importance(net, fit.state, X_aug, cov,
                                        arch.features, arch.knockoffs + 1,
                                        feature_ids));
  }
  out.median = median_importance(out.runs);

  out.w_correlation.setIdentity(R, R);
  std::vector<std::vector<double>> ws(R);
  for (int r = 0; r < R; ++r) ws[r] = w_vector(out.runs[r]);
  for (int r = 0; r < R; ++r)
    for (int s = r + 1; s < R; ++s) {
      const double c = pearson(ws[r], ws[s]);
      out.w_correlation(r, s) = c;
      out.w_correlation(s, r) = c;
    }
  return out;
}

}  // namespace knocknet
