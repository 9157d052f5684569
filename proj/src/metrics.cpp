#include "cakgcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cakgcn/data.hpp"

namespace cakgcn {

std::pair<double, double> metric_rmse_mae(const std::vector<double>& predictions,
                                          const std::vector<double>& labels) {
  if (predictions.empty()) throw std::invalid_argument("rmse/mae of empty input");
  if (predictions.size() != labels.size())
    throw std::invalid_argument("rmse/mae: prediction/label lengths differ");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double diff = predictions[i] - labels[i];
    se += diff * diff;
    ae += std::abs(diff);
  }
  auto n = static_cast<double>(predictions.size());
  return {std::sqrt(se / n), ae / n};
}

double metric_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: score/label lengths differ");
  std::size_t pos = 0;
  for (int y : labels) pos += static_cast<std::size_t>(y != 0);
  std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc undefined: only one class present");

  // midrank assignment handles ties as 0.5 pairs
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] != 0) pos_rank_sum += midrank;
    i = j + 1;
  }
  double p = static_cast<double>(pos);
  double n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double metric_f1(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size()) throw std::invalid_argument("f1: score/label lengths differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool predicted = sigmoid(scores[i]) >= threshold;
    bool actual = labels[i] != 0;
    if (predicted && actual)
      ++tp;
    else if (predicted && !actual)
      ++fp;
    else if (!predicted && actual)
      ++fn;
  }
  double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

std::pair<double, double> metric_topk(std::int64_t rank, std::int64_t k) {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (rank > k) return {0.0, 0.0};
  return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

std::int64_t rank_of(const std::vector<double>& scores, std::size_t target_index) {
  if (target_index >= scores.size()) throw std::out_of_range("rank_of: bad target index");
  double target = scores[target_index];
  std::int64_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == target_index) continue;
    if (scores[i] > target || (scores[i] == target && i < target_index)) ++rank;
  }
  return rank;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double MetricReport::get(const std::string& key) const {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  throw std::out_of_range("report has no metric '" + key + "'");
}

std::string MetricReport::to_text() const {
  std::string out = "task: " + task + "\n";
  for (const auto& [k, v] : values) out += k + ": " + format_double(v) + "\n";
  for (const auto& [k, v] : info) out += k + ": " + v + "\n";
  return out;
}

std::string MetricReport::to_tsv_header() const {
  std::string out = "task";
  for (const auto& [k, v] : values) out += "\t" + k;
  for (const auto& [k, v] : info) out += "\t" + k;
  return out + "\n";
}

std::string MetricReport::to_tsv_row() const {
  std::string out = task;
  for (const auto& [k, v] : values) out += "\t" + format_double(v);
  for (const auto& [k, v] : info) out += "\t" + v;
  return out + "\n";
}

void MetricReport::write(const std::string& path_txt, const std::string& path_tsv) const {
  std::ofstream txt(path_txt, std::ios::binary);
  if (!txt) throw std::runtime_error("cannot write " + path_txt);
  txt << to_text();
  std::ofstream tsv(path_tsv, std::ios::binary);
  if (!tsv) throw std::runtime_error("cannot write " + path_tsv);
  tsv << to_tsv_header() << to_tsv_row();
}

}  // namespace cakgcn
