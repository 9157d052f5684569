#include "cakgcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace cakgcn {

namespace {

constexpr double kLogClamp = 1e-12;

bool better(TaskKind task, double candidate, double incumbent) {
  return task == TaskKind::Rating ? candidate < incumbent : candidate > incumbent;
}

std::vector<InteractionRecord> with_negatives(const std::vector<InteractionRecord>& positives,
                                              const InteractionIndex& index, std::int32_t num_items,
                                              std::int32_t k, Rng& rng) {
  std::vector<InteractionRecord> out;
  out.reserve(positives.size() * static_cast<std::size_t>(1 + k));
  for (const auto& pos : positives) {
    out.push_back(pos);
    out.back().label = 1.0;
    auto negs = sample_negatives(pos, k, index.interacted(pos.user, pos.cs), num_items, rng);
    for (auto& r : negs.records) out.push_back(std::move(r));
  }
  return out;
}

double validation_metric(Model& model, const DatasetBundle& bundle,
                         const std::vector<InteractionRecord>& valid_set) {
  if (bundle.task == TaskKind::Rating) {
    std::vector<double> preds, labels;
    preds.reserve(valid_set.size());
    labels.reserve(valid_set.size());
    for (const auto& r : valid_set) {
      preds.push_back(model.score(r, bundle));
      labels.push_back(r.label);
    }
    return metric_rmse_mae(preds, labels).first;
  }
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(valid_set.size());
  for (const auto& r : valid_set) {
    scores.push_back(model.score(r, bundle));
    labels.push_back(r.label > 0.0 ? 1 : 0);
  }
  return metric_auc(scores, labels);
}

}  // namespace

double l2_penalty(const std::vector<const Parameter*>& params, double lambda) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double w : p->value.data) sq += w * w;
  return lambda * sq;
}

double loss_rating_value(const std::vector<double>& predictions, const std::vector<double>& labels,
                         double lambda, const std::vector<const Parameter*>& params) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("loss_rating: prediction/label lengths differ");
  double loss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double diff = predictions[i] - labels[i];
    loss += diff * diff;
  }
  return loss + l2_penalty(params, lambda);
}

double loss_ranking_value(const std::vector<double>& positive_logits,
                          const std::vector<double>& negative_logits, double lambda,
                          const std::vector<const Parameter*>& params) {
  double loss = 0.0;
  for (double x : positive_logits) loss -= std::log(std::max(sigmoid(x), kLogClamp));
  for (double x : negative_logits) loss -= std::log(std::max(1.0 - sigmoid(x), kLogClamp));
  return loss + l2_penalty(params, lambda);
}

TrainResult train(const DatasetBundle& bundle, ModelConfig cfg, const TrainRunConfig& run) {
  if (bundle.train.empty()) throw std::runtime_error("train: empty training set");
  cfg.task = bundle.task;
  cfg.dropout = run.dropout;
  if (cfg.kg_layer() && bundle.kg.triplets.empty() && cfg.ablation == Ablation::KgOnly)
    throw std::runtime_error("train: KGCN variant requires a knowledge graph, but kg.tsv holds no triplets");

  Model model(bundle, cfg, run.seed);
  auto params = model.parameters();
  AdamConfig adam_cfg;
  adam_cfg.lr = run.lr;
  Adam optimizer(params, adam_cfg);

  const bool ranking = bundle.task == TaskKind::Ranking;
  InteractionIndex index(bundle);

  // fixed validation pool so the early-stop signal is comparable across epochs
  std::vector<InteractionRecord> valid_set = bundle.valid;
  if (ranking && !bundle.valid.empty()) {
    Rng rng = make_rng(run.seed, "valid-negatives");
    valid_set = with_negatives(bundle.valid, index, bundle.items.size(), run.neg_per_pos, rng);
  }

  TrainResult result{model.clone(), {}, -1, 0.0};
  std::int32_t since_best = 0;
  Tape tape;
  Rng dropout_rng = make_rng(run.seed, "dropout");

  for (std::int32_t epoch = 1; epoch <= run.max_epochs; ++epoch) {
    std::vector<InteractionRecord> records;
    if (ranking) {
      Rng rng = make_rng(run.seed, "negatives", static_cast<std::uint64_t>(epoch));
      records = with_negatives(bundle.train, index, bundle.items.size(), run.neg_per_pos, rng);
    } else {
      records = bundle.train;
    }
    Rng shuffle_rng = make_rng(run.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(records, shuffle_rng);

    double data_loss = 0.0;
    for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(run.batch)) {
      std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(run.batch));
      tape.clear();
      NodeId total = -1;
      for (std::size_t i = start; i < end; ++i) {
        const auto& rec = records[i];
        NodeId pred = model.forward(tape, rec, bundle, true, &dropout_rng);
        NodeId loss = ranking ? tape.bce_with_logit(pred, rec.label > 0.0 ? 1.0 : 0.0)
                              : tape.squared_error(pred, rec.label);
        total = total < 0 ? loss : tape.add(total, loss);
      }
      double batch_loss = tape.val(total).scalar_value();
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      data_loss += batch_loss;
      // normalize batch gradients so lr ranges are comparable across batch sizes
      NodeId objective = tape.scale(total, 1.0 / static_cast<double>(end - start));
      tape.backward(objective);
      apply_l2(params, run.l2);
      optimizer.step();
    }

    double train_loss = data_loss + l2_penalty({params.begin(), params.end()}, run.l2);
    double metric = valid_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : validation_metric(model, bundle, valid_set);
    result.history.push_back({epoch, train_loss, metric});

    bool improved = valid_set.empty() || result.best_epoch < 0 || better(bundle.task, metric, result.best_metric);
    if (improved) {
      result.model = model.clone();
      result.best_epoch = epoch;
      result.best_metric = metric;
      since_best = 0;
    } else if (++since_best >= run.patience) {
      break;
    }
  }
  return result;
}

void write_history(const std::string& path, const std::vector<EpochStat>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch\ttrain_loss\tvalid_metric\n";
  for (const auto& e : history)
    out << e.epoch << '\t' << format_double(e.train_loss) << '\t' << format_double(e.valid_metric) << '\n';
}

GridResult grid_search(const DatasetBundle& bundle, ModelConfig cfg, const TrainRunConfig& base,
                       const GridSpec& grid) {
  if (grid.lrs.empty() || grid.batches.empty() || grid.l2s.empty() || grid.dropouts.empty())
    throw std::invalid_argument("grid_search: empty grid");
  GridResult out;
  bool have_best = false;
  for (double lr : grid.lrs)
    for (std::int32_t batch : grid.batches)
      for (double l2 : grid.l2s)
        for (double dropout : grid.dropouts) {
          TrainRunConfig run = base;
          run.lr = lr;
          run.batch = batch;
          run.l2 = l2;
          run.dropout = dropout;
          TrainResult res = train(bundle, cfg, run);
          out.leaderboard.push_back({run, res.best_metric, res.best_epoch});
          bool wins = false;
          if (!have_best) {
            wins = true;
          } else if (res.best_metric != out.best->best_metric) {
            wins = better(bundle.task, res.best_metric, out.best->best_metric);
          } else if (run.l2 != out.best_run.l2) {
            wins = run.l2 < out.best_run.l2;
          } else if (run.lr != out.best_run.lr) {
            wins = run.lr < out.best_run.lr;
          }
          if (wins) {
            out.best_run = run;
            out.best = std::move(res);
            have_best = true;
          }
        }
  return out;
}

void write_leaderboard(const std::string& path, const std::vector<GridPoint>& leaderboard,
                       const std::string& metric_name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "lr\tbatch\tl2\tdropout\tbest_epoch\t" << metric_name << "\n";
  for (const auto& p : leaderboard)
    out << format_double(p.run.lr) << '\t' << p.run.batch << '\t' << format_double(p.run.l2) << '\t'
        << format_double(p.run.dropout) << '\t' << p.best_epoch << '\t' << format_double(p.valid_metric)
        << '\n';
}

MetricReport evaluate(const Model& model, const DatasetBundle& bundle, const EvalOptions& opts) {
  model.check_coverage(bundle);
  MetricReport report;
  report.task = task_name(bundle.task);
  if (bundle.test.empty()) throw std::runtime_error("evaluate: empty test set");

  if (bundle.task == TaskKind::Rating) {
    std::vector<double> preds, labels;
    preds.reserve(bundle.test.size());
    labels.reserve(bundle.test.size());
    for (const auto& r : bundle.test) {
      preds.push_back(model.score(r, bundle));
      labels.push_back(r.label);
    }
    auto [rmse, mae] = metric_rmse_mae(preds, labels);
    report.set("rmse", rmse);
    report.set("mae", mae);
    std::vector<double> clamped = preds;
    for (auto& p : clamped) p = std::clamp(p, bundle.scale_min, bundle.scale_max);
    auto [crmse, cmae] = metric_rmse_mae(clamped, labels);
    report.set("rmse_clamped", crmse);
    report.set("mae_clamped", cmae);
    report.note("test_records", std::to_string(bundle.test.size()));
  } else {
    InteractionIndex full_index(bundle);
    Rng rng = make_rng(opts.seed, "eval-negatives");
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& pos : bundle.test) {
      scores.push_back(model.score(pos, bundle));
      labels.push_back(1);
      auto negs = sample_negatives(pos, opts.neg_per_pos, full_index.interacted(pos.user, pos.cs),
                                   bundle.items.size(), rng);
      for (const auto& n : negs.records) {
        scores.push_back(model.score(n, bundle));
        labels.push_back(0);
      }
    }
    report.set("auc", metric_auc(scores, labels));
    report.set("f1", metric_f1(scores, labels));

    if (opts.topk) {
      // candidate set: all items minus the user's train/valid interactions
      // under the evaluation situation
      std::vector<InteractionRecord> seen;
      seen.reserve(bundle.train.size() + bundle.valid.size());
      seen.insert(seen.end(), bundle.train.begin(), bundle.train.end());
      seen.insert(seen.end(), bundle.valid.begin(), bundle.valid.end());
      InteractionIndex train_index(seen, bundle.schema);
      double hr10 = 0.0, hr20 = 0.0, ndcg10 = 0.0, ndcg20 = 0.0;
      for (const auto& pos : bundle.test) {
        const auto& exclude = train_index.interacted(pos.user, pos.cs);
        if (exclude.count(pos.item))
          throw std::runtime_error("evaluate: held-out item '" + bundle.items.name(pos.item) +
                                   "' also appears in training data for the same (user, situation)");
        auto state = model.user_state(pos.user, pos.cs, bundle);
        std::vector<double> cand_scores;
        cand_scores.reserve(static_cast<std::size_t>(bundle.items.size()));
        std::size_t target_index = 0;
        for (std::int32_t item = 0; item < bundle.items.size(); ++item) {
          if (exclude.count(item)) continue;
          if (item == pos.item) target_index = cand_scores.size();
          cand_scores.push_back(model.score_item(state, item, bundle));
        }
        auto rank = rank_of(cand_scores, target_index);
        auto [h10, n10] = metric_topk(rank, 10);
        auto [h20, n20] = metric_topk(rank, 20);
        hr10 += h10;
        ndcg10 += n10;
        hr20 += h20;
        ndcg20 += n20;
      }
      auto n = static_cast<double>(bundle.test.size());
      report.set("hr@10", hr10 / n);
      report.set("hr@20", hr20 / n);
      report.set("ndcg@10", ndcg10 / n);
      report.set("ndcg@20", ndcg20 / n);
    }
    report.note("test_positives", std::to_string(bundle.test.size()));
    report.note("negatives_per_positive", std::to_string(opts.neg_per_pos));
  }
  report.note("seed", std::to_string(opts.seed));
  report.note("aggregator", aggregator_name(model.config().aggregator));
  report.note("head", head_name(model.config().head));
  report.note("ablation", ablation_name(model.config().ablation));
  report.note("d", std::to_string(model.config().d));
  return report;
}

}  // namespace cakgcn
