#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cakgcn/adam.hpp"
#include "cakgcn/autograd.hpp"
#include "cakgcn/data.hpp"

namespace cakgcn {

enum class Aggregator { Sum, Cat, Avg };
enum class Head { MF, FM, MLP, NFM };
enum class Ablation { Full, ContextOnly, KgOnly, Plain };

std::string aggregator_name(Aggregator a);
std::string head_name(Head h);
std::string ablation_name(Ablation a);
Aggregator aggregator_from_name(const std::string& s);
Head head_from_name(const std::string& s);
Ablation ablation_from_name(const std::string& s);

struct ModelConfig {
  Aggregator aggregator = Aggregator::Sum;
  Head head = Head::MF;
  Ablation ablation = Ablation::Full;
  std::int32_t d = 128;
  std::int32_t fm_k = 16;  // factor size of the pairwise-interaction embeddings
  double dropout = 0.0;
  double leaky_slope = 0.01;
  TaskKind task = TaskKind::Ranking;

  bool context_layer() const { return ablation == Ablation::Full || ablation == Ablation::ContextOnly; }
  bool kg_layer() const { return ablation == Ablation::Full || ablation == Ablation::KgOnly; }
};

// Normalized attention with the raw scores alongside. Vectors are empty for
// variants that do not compute the corresponding attention (AVG aggregator,
// skipped layers).
struct AttentionProfile {
  std::int32_t user = -1;
  Situation cs;
  std::vector<double> factor_scores;
  std::vector<double> factor_attention;
  std::vector<double> relation_scores;
  std::vector<double> relation_attention;
};

// Vocabulary snapshot a checkpoint carries so predictions are reproducible
// against a matching bundle.
struct ModelMeta {
  TaskKind task = TaskKind::Ranking;
  double scale_min = 1.0;
  double scale_max = 5.0;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  ContextSchema schema;

  static ModelMeta from_bundle(const DatasetBundle& b);
};

class Model {
 public:
  Model(const DatasetBundle& bundle, ModelConfig cfg, std::uint64_t seed);
  Model(ModelMeta meta, ModelConfig cfg);  // parameters zero-filled; used by checkpoint loading

  const ModelConfig& config() const { return cfg_; }
  const ModelMeta& meta() const { return meta_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;

  // Tape forward for training. Returns the raw-score node; ranking wraps it
  // in the loss-side sigmoid.
  NodeId forward(Tape& tape, const InteractionRecord& rec, const DatasetBundle& bundle, bool training,
                 Rng* dropout_rng, AttentionProfile* attn = nullptr);

  // Tape-free forward, bit-identical to forward() in evaluation mode.
  double score(const InteractionRecord& rec, const DatasetBundle& bundle,
               AttentionProfile* attn = nullptr) const;

  // Ranking helper: everything that depends only on (user, situation), reused
  // across candidate items.
  struct UserState {
    std::vector<double> u_final;
    std::vector<double> relation_beta;  // per relation id; empty when unused
    bool uniform_neighbors = false;     // AVG aggregator
  };
  UserState user_state(std::int32_t user, const Situation& cs, const DatasetBundle& bundle,
                       AttentionProfile* attn = nullptr) const;
  double score_item(const UserState& state, std::int32_t item, const DatasetBundle& bundle) const;

  AttentionProfile attention(std::int32_t user, const Situation& cs, const DatasetBundle& bundle) const;

  // Bundle ids must line up with checkpoint vocabularies (bundle names are a
  // prefix-match of the checkpoint's); throws otherwise.
  void check_coverage(const DatasetBundle& bundle) const;

  std::uint64_t parameter_digest() const;
  Model clone() const;

 private:
  void allocate_parameters();
  void initialize_parameters(std::uint64_t seed);
  void validate_record(const InteractionRecord& rec) const;
  void validate_user_cs(std::int32_t user, const Situation& cs) const;

  ModelMeta meta_;
  ModelConfig cfg_;
  // parameter storage; unique_ptr keeps addresses stable for tapes/optimizer
  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace cakgcn
