#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cakgcn/checkpoint.hpp"
#include "cakgcn/metrics.hpp"
#include "cakgcn/model.hpp"

namespace cakgcn {

struct TrainRunConfig {
  double lr = 1e-3;
  std::int32_t batch = 256;
  double l2 = 0.0;
  double dropout = 0.0;
  std::int32_t max_epochs = 200;
  std::int32_t patience = 10;
  std::int32_t neg_per_pos = 2;  // resampled every epoch for ranking tasks
  std::uint64_t seed = 42;
};

struct EpochStat {
  std::int32_t epoch = 0;
  double train_loss = 0.0;
  double valid_metric = 0.0;
};

struct TrainResult {
  Model model;  // best-validation parameters
  std::vector<EpochStat> history;
  std::int32_t best_epoch = -1;
  double best_metric = 0.0;
};

// Paper-form loss values (sum over records, plus lambda*||theta||^2).
double loss_rating_value(const std::vector<double>& predictions, const std::vector<double>& labels,
                         double lambda, const std::vector<const Parameter*>& params);
// Logit inputs; log arguments clamped at 1e-12.
double loss_ranking_value(const std::vector<double>& positive_logits,
                          const std::vector<double>& negative_logits, double lambda,
                          const std::vector<const Parameter*>& params);

double l2_penalty(const std::vector<const Parameter*>& params, double lambda);

// Mini-batch Adam with shuffled epochs, per-epoch negative resampling
// (ranking), per-epoch validation and early stopping. Deterministic given
// (seed, config, data).
TrainResult train(const DatasetBundle& bundle, ModelConfig cfg, const TrainRunConfig& run);

void write_history(const std::string& path, const std::vector<EpochStat>& history);

struct GridSpec {
  std::vector<double> lrs = {5e-4, 1e-3, 5e-3, 1e-2, 5e-2};
  std::vector<std::int32_t> batches = {128, 256, 512, 1024};
  std::vector<double> l2s = {5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1};
  std::vector<double> dropouts = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
};

struct GridPoint {
  TrainRunConfig run;
  double valid_metric = 0.0;
  std::int32_t best_epoch = -1;
};

struct GridResult {
  TrainRunConfig best_run;
  std::optional<TrainResult> best;
  std::vector<GridPoint> leaderboard;  // every grid point, in evaluation order
};

// Trains every grid point; selects by validation RMSE (rating, lower wins) or
// AUC (ranking, higher wins); ties break to smaller l2, then smaller lr.
GridResult grid_search(const DatasetBundle& bundle, ModelConfig cfg, const TrainRunConfig& base,
                       const GridSpec& grid);

void write_leaderboard(const std::string& path, const std::vector<GridPoint>& leaderboard,
                       const std::string& metric_name);

struct EvalOptions {
  std::uint64_t seed = 42;
  std::int32_t neg_per_pos = 2;
  bool topk = true;  // full-catalog HR/NDCG; AUC/F1 always computed
};

// Rating: RMSE/MAE (raw and scale-clamped). Ranking: AUC/F1 over test
// positives plus sampled negatives, and HR/NDCG@{10,20} over the filtered
// full candidate set.
MetricReport evaluate(const Model& model, const DatasetBundle& bundle, const EvalOptions& opts);

}  // namespace cakgcn
