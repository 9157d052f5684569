#include "cakgcn/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace cakgcn {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) { return std::sqrt(sq_dist(a, b)); }

std::vector<std::vector<double>> kmeanspp_seed(const std::vector<std::vector<double>>& pts, std::int32_t k,
                                               Rng& rng) {
  std::vector<std::vector<double>> centroids;
  centroids.push_back(pts[rng.next_index(pts.size())]);
  std::vector<double> d2(pts.size());
  while (static_cast<std::int32_t>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.next_index(pts.size());
    } else {
      double ticket = rng.next_real() * total;
      double acc = 0.0;
      pick = pts.size() - 1;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        acc += d2[i];
        if (ticket < acc) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(pts[pick]);
  }
  return centroids;
}

ClusterAssignment lloyd(const std::vector<std::vector<double>>& pts, std::int32_t k, Rng& rng,
                        std::int32_t max_iters) {
  auto n = pts.size();
  auto dim = pts[0].size();
  ClusterAssignment out;
  out.k = k;
  out.centroids = kmeanspp_seed(pts, k, rng);
  out.labels.assign(n, 0);
  double prev_inertia = std::numeric_limits<double>::infinity();

  for (std::int32_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::int32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::int32_t c = 0; c < k; ++c) {
        double d = sq_dist(pts[i], out.centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (out.labels[i] != best) changed = true;
      out.labels[i] = best;
    }

    // occupied clusters; empty ones steal the farthest point
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (auto l : out.labels) ++counts[static_cast<std::size_t>(l)];
    for (std::int32_t c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(out.labels[i])] <= 1) continue;
        double d = sq_dist(pts[i], out.centroids[static_cast<std::size_t>(out.labels[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(out.labels[far])];
      out.labels[far] = c;
      ++counts[static_cast<std::size_t>(c)];
      changed = true;
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inertia += sq_dist(pts[i], out.centroids[static_cast<std::size_t>(out.labels[i])]);
    if (inertia > prev_inertia * (1.0 + 1e-9) + 1e-12)
      throw std::logic_error("kmeans: inertia increased across an iteration");
    prev_inertia = inertia;

    for (auto& c : out.centroids) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = out.centroids[static_cast<std::size_t>(out.labels[i])];
      for (std::size_t j = 0; j < dim; ++j) c[j] += pts[i][j];
    }
    for (std::int32_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < dim; ++j)
        out.centroids[static_cast<std::size_t>(c)][j] /= static_cast<double>(counts[static_cast<std::size_t>(c)]);

    if (!changed) break;
  }

  out.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    out.inertia += sq_dist(pts[i], out.centroids[static_cast<std::size_t>(out.labels[i])]);
  return out;
}

}  // namespace

AttentionExtract extract_attention(const Model& model, const DatasetBundle& bundle,
                                   const std::vector<std::int32_t>& users,
                                   const std::vector<Situation>& situations) {
  const auto& cfg = model.config();
  if (!cfg.context_layer() || cfg.aggregator == Aggregator::Avg)
    throw std::runtime_error("this model variant computes no factor attention");
  AttentionExtract out;
  // factor attention does not depend on the situation, so any well-formed
  // situation works as a probe
  Situation probe;
  for (const auto& conds : model.meta().schema.factor_conditions) {
    if (conds.empty()) throw std::runtime_error("contextual factor without conditions");
    probe.push_back(conds.front());
  }
  for (std::int32_t user : users) {
    auto attn = model.attention(user, probe, bundle);
    out.factor_attention.push_back({user, attn.factor_attention});
  }
  if (cfg.kg_layer()) {
    for (std::int32_t user : users)
      for (const auto& cs : situations) {
        auto attn = model.attention(user, cs, bundle);
        out.relation_attention.push_back({user, cs, attn.relation_attention});
      }
  }
  return out;
}

ClusterAssignment kmeans(const std::vector<std::vector<double>>& vectors, std::int32_t k, std::uint64_t seed,
                         std::int32_t max_iters, std::int32_t restarts) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (vectors.empty() || static_cast<std::size_t>(k) > vectors.size())
    throw std::invalid_argument("kmeans: k exceeds the number of vectors");
  ClusterAssignment best;
  bool have = false;
  for (std::int32_t r = 0; r < std::max(1, restarts); ++r) {
    Rng rng = make_rng(seed, "kmeans", static_cast<std::uint64_t>(r));
    ClusterAssignment cand = lloyd(vectors, k, rng, max_iters);
    if (!have || cand.inertia < best.inertia) {
      best = std::move(cand);
      have = true;
    }
  }
  return best;
}

double mean_silhouette(const std::vector<std::vector<double>>& vectors,
                       const std::vector<std::int32_t>& labels, std::int32_t k) {
  auto n = vectors.size();
  if (k < 2) return 0.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (auto l : labels) ++counts[static_cast<std::size_t>(l)];
  double total = 0.0;
  std::vector<double> mean_to(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(mean_to.begin(), mean_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_to[static_cast<std::size_t>(labels[j])] += euclid(vectors[i], vectors[j]);
    }
    auto own = static_cast<std::size_t>(labels[i]);
    if (counts[own] <= 1) continue;  // silhouette of a singleton is 0
    double a = mean_to[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::int32_t c = 0; c < k; ++c) {
      if (c == labels[i] || counts[static_cast<std::size_t>(c)] == 0) continue;
      b = std::min(b, mean_to[static_cast<std::size_t>(c)] / static_cast<double>(counts[static_cast<std::size_t>(c)]));
    }
    double s = (b - a) / std::max(a, b);
    if (std::isfinite(s)) total += s;
  }
  return total / static_cast<double>(n);
}

KSelection select_k(const std::vector<std::vector<double>>& vectors,
                    const std::vector<std::int32_t>& k_range, std::uint64_t seed) {
  if (k_range.empty()) throw std::invalid_argument("select_k: empty k range");
  KSelection out;
  double best_sil = -2.0;
  for (std::int32_t k : k_range) {
    if (k < 1 || static_cast<std::size_t>(k) > vectors.size()) continue;
    auto assignment = kmeans(vectors, k, seed);
    double sil = mean_silhouette(vectors, assignment.labels, k);
    out.diagnostics.push_back({k, assignment.inertia, sil});
    if (sil > best_sil) {
      best_sil = sil;
      out.k = k;
    }
  }
  if (out.diagnostics.empty()) throw std::invalid_argument("select_k: no feasible k in range");
  out.clear_structure = best_sil >= 0.3;
  return out;
}

Explanation render_explanation(const AttentionProfile& profile, std::int32_t item,
                               const DatasetBundle& bundle, std::int32_t top_n) {
  Explanation e;
  e.user = profile.user;
  e.item = item;
  e.cs = profile.cs;
  const auto& schema = bundle.schema;

  std::string situation_phrase;
  for (std::size_t f = 0; f < profile.cs.size(); ++f) {
    if (f) situation_phrase += ", ";
    situation_phrase += schema.factors[f] + "=" +
                        schema.condition_names[static_cast<std::size_t>(profile.cs[f])];
  }

  if (top_n <= 0) {
    e.sentence = "Under " + situation_phrase + ", this is recommended based on your learned preferences.";
    return e;
  }

  // factors, descending attention
  std::vector<std::size_t> forder(profile.factor_attention.size());
  std::iota(forder.begin(), forder.end(), 0);
  std::stable_sort(forder.begin(), forder.end(), [&](std::size_t a, std::size_t b) {
    return profile.factor_attention[a] > profile.factor_attention[b];
  });
  for (std::size_t f : forder)
    e.factors.push_back({schema.factors[f],
                         schema.condition_names[static_cast<std::size_t>(profile.cs[f])],
                         profile.factor_attention[f]});

  // the item's attributes, one value per relation (first triplet wins)
  std::int32_t entity = -1;
  if (static_cast<std::size_t>(item) < bundle.item_entity.size())
    entity = bundle.item_entity[static_cast<std::size_t>(item)];
  std::vector<std::pair<std::int32_t, std::int32_t>> attributes;  // (relation, tail)
  if (entity >= 0)
    for (const auto& [rel, tail] : bundle.kg.neighbors(entity)) {
      bool seen = false;
      for (const auto& [r, t] : attributes) seen = seen || r == rel;
      if (!seen) attributes.emplace_back(rel, tail);
    }

  if (!attributes.empty() && !profile.relation_attention.empty()) {
    std::stable_sort(attributes.begin(), attributes.end(), [&](const auto& a, const auto& b) {
      return profile.relation_attention[static_cast<std::size_t>(a.first)] >
             profile.relation_attention[static_cast<std::size_t>(b.first)];
    });
    for (std::size_t i = 0; i < attributes.size() && i < static_cast<std::size_t>(top_n); ++i) {
      const auto& [rel, tail] = attributes[i];
      e.relations.push_back({bundle.kg.relations.name(rel), bundle.kg.entities.name(tail),
                             profile.relation_attention[static_cast<std::size_t>(rel)]});
    }
  }

  auto percent = [](double w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", w * 100.0);
    return std::string(buf);
  };

  if (!e.relations.empty()) {
    e.sentence = "Under " + situation_phrase + ", this is recommended because its " +
                 e.relations.front().relation + ": " + e.relations.front().value +
                 " matches what matters most to you (" + percent(e.relations.front().weight) + ")";
    if (!e.factors.empty())
      e.sentence += ", especially given " + e.factors.front().factor + ": " + e.factors.front().condition;
    e.sentence += ".";
  } else if (!e.factors.empty()) {
    e.sentence = "Under " + situation_phrase + ", this is recommended especially given " +
                 e.factors.front().factor + ": " + e.factors.front().condition + " (" +
                 percent(e.factors.front().weight) + ").";
  } else {
    e.sentence = "Under " + situation_phrase + ", this is recommended based on your learned preferences.";
  }
  return e;
}

std::string explanation_to_json(const Explanation& e, const DatasetBundle& bundle) {
  nlohmann::ordered_json j;
  j["user"] = bundle.users.name(e.user);
  j["item"] = bundle.items.name(e.item);
  nlohmann::ordered_json cs;
  for (std::size_t f = 0; f < e.cs.size(); ++f)
    cs[bundle.schema.factors[f]] = bundle.schema.condition_names[static_cast<std::size_t>(e.cs[f])];
  j["situation"] = std::move(cs);
  nlohmann::ordered_json factors = nlohmann::ordered_json::array();
  for (const auto& f : e.factors)
    factors.push_back({{"factor", f.factor}, {"condition", f.condition}, {"weight", f.weight}});
  j["factors"] = std::move(factors);
  nlohmann::ordered_json relations = nlohmann::ordered_json::array();
  for (const auto& r : e.relations)
    relations.push_back({{"relation", r.relation}, {"value", r.value}, {"weight", r.weight}});
  j["relations"] = std::move(relations);
  j["sentence"] = e.sentence;
  return j.dump();
}

void export_analysis(const std::string& dir, const ClusterAssignment& assignment,
                     const std::vector<UserAttentionVector>& vectors, const DatasetBundle& bundle) {
  if (assignment.labels.size() != vectors.size())
    throw std::invalid_argument("export_analysis: assignment/vector count mismatch");
  std::filesystem::create_directories(dir);

  std::ofstream clusters(dir + "/clusters.tsv", std::ios::binary);
  if (!clusters) throw std::runtime_error("cannot write " + dir + "/clusters.tsv");
  clusters << "user\tcluster\n";
  for (std::size_t i = 0; i < vectors.size(); ++i)
    clusters << bundle.users.name(vectors[i].user) << '\t' << assignment.labels[i] << '\n';

  std::ofstream centroids(dir + "/centroids.tsv", std::ios::binary);
  if (!centroids) throw std::runtime_error("cannot write " + dir + "/centroids.tsv");
  centroids << "cluster";
  for (const auto& f : bundle.schema.factors) centroids << '\t' << f;
  centroids << '\n';
  for (std::int32_t c = 0; c < assignment.k; ++c) {
    centroids << c;
    for (double v : assignment.centroids[static_cast<std::size_t>(c)]) centroids << '\t' << format_double(v);
    centroids << '\n';
  }

  std::ofstream attention(dir + "/attention.tsv", std::ios::binary);
  if (!attention) throw std::runtime_error("cannot write " + dir + "/attention.tsv");
  attention << "user";
  for (const auto& f : bundle.schema.factors) attention << '\t' << f;
  attention << '\n';
  for (const auto& v : vectors) {
    attention << bundle.users.name(v.user);
    for (double w : v.weights) attention << '\t' << format_double(w);
    attention << '\n';
  }
}

}  // namespace cakgcn
