#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cakgcn {

// (rmse, mae) over aligned predictions and labels
std::pair<double, double> metric_rmse_mae(const std::vector<double>& predictions,
                                          const std::vector<double>& labels);

// Rank-statistic AUC; tied scores count 0.5. Throws when only one class is
// present.
double metric_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// F1 of the positive class at probability >= threshold; scores are logits.
double metric_f1(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

// hr = rank <= K; ndcg = 1/log2(rank+1) if rank <= K else 0 (one relevant item)
std::pair<double, double> metric_topk(std::int64_t rank, std::int64_t k);

// 1-based rank of the candidate at `target_index`, scored descending; ties
// resolve by candidate order.
std::int64_t rank_of(const std::vector<double>& scores, std::size_t target_index);

double sigmoid(double x);

// Flat key:value report plus a one-row TSV for leaderboard aggregation.
struct MetricReport {
  std::string task;
  std::vector<std::pair<std::string, double>> values;
  std::vector<std::pair<std::string, std::string>> info;  // config echo, counts, seed

  void set(const std::string& key, double v) { values.emplace_back(key, v); }
  void note(const std::string& key, const std::string& v) { info.emplace_back(key, v); }
  double get(const std::string& key) const;
  std::string to_text() const;
  std::string to_tsv_header() const;
  std::string to_tsv_row() const;
  void write(const std::string& path_txt, const std::string& path_tsv) const;
};

}  // namespace cakgcn
