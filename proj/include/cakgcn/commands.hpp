#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cakgcn/metrics.hpp"

namespace cakgcn {

// High-level entry points shared by the CLI and the python bindings. Each
// writes a manifest.json into its output directory before heavy work and
// throws std::runtime_error on validation failures.

struct PrepareArgs {
  std::string interactions;
  std::string kg;      // optional; empty -> bundle gets an empty graph
  std::string schema;  // optional sidecar; overrides task/scale/factor order
  std::string out_dir;
  std::string task = "ranking";
  double scale_min = 1.0;
  double scale_max = 5.0;
  std::string split;  // random | loo; default: rating -> random, ranking -> loo
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::vector<std::string> drop_factors;
  std::vector<std::string> factors_to_kg;  // context columns moved into the KG as relations
  std::uint64_t seed = 42;
};

void cmd_prepare(const PrepareArgs& args);

struct TrainArgs {
  std::string bundle_dir;
  std::string out_dir;
  std::string aggregator = "sum";
  std::string head = "mf";
  std::string ablation = "full";
  std::int32_t d = 128;
  std::int32_t fm_k = 16;
  double lr = 1e-3;
  std::int32_t batch = 256;
  double l2 = 0.0;
  double dropout = 0.0;
  std::int32_t epochs = 200;
  std::int32_t patience = 10;
  std::int32_t neg_per_pos = 2;
  std::uint64_t seed = 42;
  bool grid = false;  // grid-search lr/batch/l2/dropout instead of single point
  std::vector<double> grid_lrs;
  std::vector<std::int32_t> grid_batches;
  std::vector<double> grid_l2s;
  std::vector<double> grid_dropouts;
};

// Returns the best validation metric.
double cmd_train(const TrainArgs& args);

struct EvaluateArgs {
  std::string checkpoint;
  std::string bundle_dir;
  std::string out_dir;
  std::string task;  // optional assertion; mismatch is an error
  std::int32_t neg_per_pos = 2;
  bool topk = true;
  std::uint64_t seed = 42;
};

MetricReport cmd_evaluate(const EvaluateArgs& args);

struct ExplainArgs {
  std::string checkpoint;
  std::string bundle_dir;
  std::string out_dir;
  std::string user;                     // required unless --cluster only
  std::vector<std::string> situation;   // factor=condition pairs, all factors
  std::string item;                     // optional; empty -> top-ranked candidate
  std::int32_t top_n = 2;
  bool cluster = false;
  std::string k = "auto";  // or an integer
  std::uint64_t seed = 42;
};

void cmd_explain(const ExplainArgs& args);

struct SynthArgs {
  std::string out_dir;
  std::int32_t users = 200;
  std::int32_t items = 300;
  std::int32_t factors = 3;
  std::int32_t conditions_per_factor = 4;
  std::int32_t relations = 4;
  std::int32_t entities_per_relation = 6;
  std::int32_t groups = 3;
  std::int32_t interactions_per_user = 60;
  std::string task = "ranking";
  double noise = 0.1;
  double dominant_factor_weight = 0.8;
  double dominant_relation_weight = 0.8;
  std::uint64_t seed = 42;
};

void cmd_synth(const SynthArgs& args);

}  // namespace cakgcn
