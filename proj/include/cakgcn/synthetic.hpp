#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cakgcn/data.hpp"

namespace cakgcn {

// Generator controls. Users fall into `groups` planted groups; each group has
// a dominant contextual factor and, per condition of that factor, a dominant
// KG relation. Labels follow condition-attribute compatibility weighted by
// those planted attentions, so the attention a trained model learns can be
// checked against the plant.
struct SyntheticSpec {
  std::int32_t users = 200;
  std::int32_t items = 300;
  std::int32_t factors = 3;
  std::int32_t conditions_per_factor = 4;
  std::int32_t relations = 4;
  std::int32_t entities_per_relation = 6;
  std::int32_t groups = 3;
  std::int32_t interactions_per_user = 60;
  TaskKind task = TaskKind::Ranking;
  double noise = 0.1;
  double dominant_factor_weight = 0.8;
  double dominant_relation_weight = 0.8;
  double edge_prob = 0.9;
  double popularity_weight = 0.05;
  double temperature = 0.01;
  std::uint64_t seed = 42;
};

struct SyntheticData {
  DatasetBundle bundle;  // all records in train; splitting happens at prepare time

  // planted ground truth; kept out of the training files
  std::vector<std::vector<double>> user_factor_attention;  // [user][factor]
  std::vector<std::int32_t> planted_group;                 // [user]
  std::vector<std::int32_t> dominant_factor;               // [user]

  // planted relation attention for a (user, situation) pair
  std::vector<double> relation_attention(std::int32_t user, const Situation& cs) const;

  // internals needed by relation_attention
  std::vector<std::vector<std::vector<double>>> group_condition_relations;  // [group][cond idx][relation]
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Writes interactions.tsv / kg.tsv / schema.txt plus truth_factors.tsv and
// truth_relations.tsv into dir.
void write_synthetic(const std::string& dir, const SyntheticData& data);

}  // namespace cakgcn
