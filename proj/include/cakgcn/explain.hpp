#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cakgcn/model.hpp"

namespace cakgcn {

struct UserAttentionVector {
  std::int32_t user = -1;
  std::vector<double> weights;  // one per contextual factor, sums to 1
};

// Factor attention per user (situation-independent) plus relation attention
// for each requested (user, situation) pair.
struct AttentionExtract {
  std::vector<UserAttentionVector> factor_attention;
  struct SituationAttention {
    std::int32_t user = -1;
    Situation cs;
    std::vector<double> relation_weights;
  };
  std::vector<SituationAttention> relation_attention;
};

AttentionExtract extract_attention(const Model& model, const DatasetBundle& bundle,
                                   const std::vector<std::int32_t>& users,
                                   const std::vector<Situation>& situations);

// --- k-means --------------------------------------------------------------

struct ClusterAssignment {
  std::int32_t k = 0;
  std::vector<std::int32_t> labels;           // per input vector
  std::vector<std::vector<double>> centroids;  // k rows
  double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia;
// empty clusters are re-seeded to the farthest point.
ClusterAssignment kmeans(const std::vector<std::vector<double>>& vectors, std::int32_t k,
                         std::uint64_t seed, std::int32_t max_iters = 100, std::int32_t restarts = 8);

double mean_silhouette(const std::vector<std::vector<double>>& vectors,
                       const std::vector<std::int32_t>& labels, std::int32_t k);

struct KSelection {
  std::int32_t k = 0;
  bool clear_structure = true;  // false when every silhouette is weak
  struct Diag {
    std::int32_t k;
    double inertia;
    double silhouette;
  };
  std::vector<Diag> diagnostics;
};

// Chooses k by mean silhouette over k_range; flags "no clear structure" when
// every candidate scores below 0.3.
KSelection select_k(const std::vector<std::vector<double>>& vectors,
                    const std::vector<std::int32_t>& k_range, std::uint64_t seed);

// --- explanations -----------------------------------------------------------

struct Explanation {
  std::int32_t user = -1;
  std::int32_t item = -1;
  Situation cs;
  struct FactorHighlight {
    std::string factor;
    std::string condition;
    double weight;
  };
  struct RelationHighlight {
    std::string relation;
    std::string value;
    double weight;
  };
  std::vector<FactorHighlight> factors;     // top factors, descending weight
  std::vector<RelationHighlight> relations;  // top relations with the item's attribute values
  std::string sentence;
};

// Renders the top-n relations (restricted to relations the item actually has
// triplets for) and the top factor into a template sentence; items without KG
// triplets fall back to context-only wording.
Explanation render_explanation(const AttentionProfile& profile, std::int32_t item,
                               const DatasetBundle& bundle, std::int32_t top_n);

std::string explanation_to_json(const Explanation& e, const DatasetBundle& bundle);

// clusters.tsv (user, cluster), centroids.tsv (cluster, per-factor means),
// attention.tsv (user, per-factor weights); columns follow the schema order.
void export_analysis(const std::string& dir, const ClusterAssignment& assignment,
                     const std::vector<UserAttentionVector>& vectors, const DatasetBundle& bundle);

}  // namespace cakgcn
