#pragma once

#include "jmorph/dataset.hpp"
#include "jmorph/model.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace jmorph {

struct TrainConfig {
  int batch_size = 15;
  double learning_rate = 1e-4;
  int max_epochs = 50;
  int patience = 10; // epochs without validation-loss improvement
  uint64_t seed = 0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

  void validate() const;
};

// Four-class confusion counts (row = true class, column = predicted) and
// the rates derived from them. 0/0 ratios resolve to 0; classes with no
// support are flagged rather than silently scored.
struct Metrics {
  std::array<std::array<long, 4>, 4> confusion{};
  std::array<double, 4> accuracy{}, precision{}, recall{};
  std::array<bool, 4> has_support{};
  double overall_accuracy = 0.0;
};

Metrics metrics_from_confusion(
    const std::array<std::array<long, 4>, 4> &confusion);
Metrics metrics_from_predictions(const std::vector<int> &labels,
                                 const std::vector<int> &preds);

struct EpochStat {
  int epoch = 0; // 1-based
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
};

struct FoldResult {
  int fold = 0;
  std::vector<EpochStat> curve;
  int best_epoch = 0;
  Metrics val_metrics; // of the retained best checkpoint
  std::string checkpoint_path;
};

// Single binary file: magic, config JSON, then every state tensor in
// declaration order (f64, little endian, shape headers).
void save_checkpoint(Model &model, const std::string &path);
Model load_checkpoint(const std::string &path);

struct Adam {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v; // per trainable tensor

  static Adam create(const TrainConfig &cfg, Model &model);
  void step(Model &model);
};

// Stacks samples[idx] into one (N, C, D, H, W) batch; shapes must agree.
std::pair<Tensor, std::vector<int>>
batch_from(const std::vector<Sample> &samples, const std::vector<size_t> &idx);

std::vector<int> predict(Model &model, const std::vector<Sample> &samples,
                         int batch_size = 8);
Metrics evaluate(Model &model, const std::vector<Sample> &samples,
                 int batch_size = 8);
// mean eval-mode cross-entropy
double eval_loss(Model &model, const std::vector<Sample> &samples,
                 int batch_size = 8);

// Adam + early stopping on validation loss; the best-validation checkpoint
// is written to checkpoint_path and its metrics reported. Minority
// balancing is the caller's business and must happen before this.
FoldResult train_fold(const ModelConfig &mc, const TrainConfig &tc,
                      const std::vector<Sample> &train,
                      const std::vector<Sample> &val,
                      const std::string &checkpoint_path, int fold_index = 0);

// epoch,fold,train_acc,val_acc,train_loss,val_loss
void write_curves_csv(const std::vector<FoldResult> &folds,
                      const std::string &path);

} // namespace jmorph
