#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cakgcn/autograd.hpp"
#include "cakgcn/data.hpp"

namespace test_support {

// Self-deleting scratch directory under the build tree.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("cakgcn_" + tag + "_" + std::to_string(counter_++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Central finite differences of a scalar-valued function of one parameter
// entry, compared against the recorded analytic gradient.
// Returns the worst relative error over all entries of all params.
inline double max_gradient_error(const std::vector<cakgcn::Parameter*>& params,
                                 const std::function<double()>& loss_value,
                                 const std::function<void()>& compute_grads, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  compute_grads();
  std::vector<cakgcn::Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    cakgcn::Parameter& p = *params[pi];
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
      double saved = p.value[i];
      p.value[i] = saved + h;
      double up = loss_value();
      p.value[i] = saved - h;
      double down = loss_value();
      p.value[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

// Adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  auto n = a.size();
  std::int32_t ka = 0, kb = 0;
  for (auto x : a) ka = std::max(ka, x + 1);
  for (auto x : b) kb = std::max(kb, x + 1);
  std::vector<std::vector<std::int64_t>> table(static_cast<std::size_t>(ka),
                                               std::vector<std::int64_t>(static_cast<std::size_t>(kb), 0));
  for (std::size_t i = 0; i < n; ++i) ++table[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])];
  auto comb2 = [](std::int64_t x) { return x * (x - 1) / 2; };
  std::int64_t sum_ij = 0;
  std::vector<std::int64_t> rows(static_cast<std::size_t>(ka), 0), cols(static_cast<std::size_t>(kb), 0);
  for (std::int32_t i = 0; i < ka; ++i)
    for (std::int32_t j = 0; j < kb; ++j) {
      auto v = table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      sum_ij += comb2(v);
      rows[static_cast<std::size_t>(i)] += v;
      cols[static_cast<std::size_t>(j)] += v;
    }
  std::int64_t sum_a = 0, sum_b = 0;
  for (auto v : rows) sum_a += comb2(v);
  for (auto v : cols) sum_b += comb2(v);
  double expected = static_cast<double>(sum_a) * static_cast<double>(sum_b) / static_cast<double>(comb2(static_cast<std::int64_t>(n)));
  double maximum = (static_cast<double>(sum_a) + static_cast<double>(sum_b)) / 2.0;
  if (maximum == expected) return 1.0;
  return (static_cast<double>(sum_ij) - expected) / (maximum - expected);
}

}  // namespace test_support
