#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cakgcn/rng.hpp"

namespace cakgcn {

// String <-> dense id mapping; ids are assigned in first-seen order so
// re-ingesting the same files yields identical assignments.
class Vocab {
 public:
  std::int32_t add(const std::string& name);
  std::optional<std::int32_t> find(const std::string& name) const;
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::int32_t size() const { return static_cast<std::int32_t>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::string> names_;
};

enum class TaskKind { Rating, Ranking };

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);

// Ordered contextual factors, each with its vocabulary of conditions.
// Conditions carry global ids (shared across factors) so one embedding table
// covers them all.
struct ContextSchema {
  std::vector<std::string> factors;
  std::vector<std::vector<std::int32_t>> factor_conditions;  // per factor, global condition ids
  std::vector<std::string> condition_names;                  // by global id
  std::vector<std::int32_t> condition_factor;                // global id -> factor index

  std::int32_t num_factors() const { return static_cast<std::int32_t>(factors.size()); }
  std::int32_t num_conditions() const { return static_cast<std::int32_t>(condition_names.size()); }
  std::int32_t add_factor(const std::string& name);
  std::int32_t add_condition(std::int32_t factor, const std::string& name);
  std::optional<std::int32_t> find_condition(std::int32_t factor, const std::string& name) const;
  std::optional<std::int32_t> find_factor(const std::string& name) const;
};

// One condition per factor, in schema order; values are global condition ids.
using Situation = std::vector<std::int32_t>;

std::string situation_key(const ContextSchema& schema, const Situation& cs);

struct InteractionRecord {
  std::int32_t user = -1;
  std::int32_t item = -1;
  Situation cs;
  double label = 0.0;
};

struct Triplet {
  std::int32_t head = -1;
  std::int32_t rel = -1;
  std::int32_t tail = -1;
};

struct KnowledgeGraph {
  Vocab entities;
  Vocab relations;
  std::vector<Triplet> triplets;
  // head entity id -> (relation, tail entity) edges, in file order
  std::unordered_map<std::int32_t, std::vector<std::pair<std::int32_t, std::int32_t>>> adjacency;

  void add_triplet(const std::string& head, const std::string& rel, const std::string& tail);
  const std::vector<std::pair<std::int32_t, std::int32_t>>& neighbors(std::int32_t entity) const;
};

struct DatasetBundle {
  TaskKind task = TaskKind::Ranking;
  double scale_min = 1.0;
  double scale_max = 5.0;
  Vocab users;
  Vocab items;
  ContextSchema schema;
  KnowledgeGraph kg;
  std::vector<std::int32_t> item_entity;  // item id -> kg entity id, or -1
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> valid;
  std::vector<InteractionRecord> test;

  std::vector<InteractionRecord> all_records() const;
  void link_items_to_entities();
};

// --- ingestion ---------------------------------------------------------

// Parses `user<TAB>item<TAB><factor...><TAB>label` rows, extending the given
// vocabularies and schema in first-seen order. If the schema already has
// factors, the header must match them. `scale`, when set, bounds labels.
std::vector<InteractionRecord> load_interactions(const std::string& path, Vocab& users, Vocab& items,
                                                 ContextSchema& schema,
                                                 std::optional<std::pair<double, double>> scale);

// Parses `head<TAB>relation<TAB>tail` rows; rejects self loops.
KnowledgeGraph load_kg(const std::string& path);

struct SidecarInfo {
  TaskKind task = TaskKind::Ranking;
  double scale_min = 1.0;
  double scale_max = 5.0;
  std::vector<std::string> factors;
};

SidecarInfo load_sidecar(const std::string& path);
void write_sidecar(const std::string& path, const SidecarInfo& info);

// --- splitting ---------------------------------------------------------

struct SplitResult {
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> valid;
  std::vector<InteractionRecord> test;
};

// Seed-deterministic random partition. Sizes follow floor-then-largest-
// fraction apportionment with ties broken train-first.
SplitResult split_random(const std::vector<InteractionRecord>& records,
                         const std::array<double, 3>& ratios, std::uint64_t seed);

// One held-out record per user with >= 2 records; single-record users stay
// entirely in train.
SplitResult split_leave_one_out(const std::vector<InteractionRecord>& records, std::uint64_t seed);

// --- negative sampling --------------------------------------------------

// Items each (user, situation) pair has interacted with, over every split.
class InteractionIndex {
 public:
  InteractionIndex(const DatasetBundle& bundle);
  InteractionIndex(const std::vector<InteractionRecord>& records, const ContextSchema& schema);
  const std::unordered_set<std::int32_t>& interacted(std::int32_t user, const Situation& cs) const;

 private:
  void insert(const InteractionRecord& r);
  std::string key(std::int32_t user, const Situation& cs) const;
  std::unordered_map<std::string, std::unordered_set<std::int32_t>> sets_;
  std::unordered_set<std::int32_t> empty_;
};

struct NegativeSample {
  std::vector<InteractionRecord> records;
  bool exhausted = false;  // fewer than k candidates existed
};

// k items the user has not interacted with under the positive's situation,
// uniform without replacement, labeled 0.
NegativeSample sample_negatives(const InteractionRecord& positive, std::int32_t k,
                                const std::unordered_set<std::int32_t>& interacted,
                                std::int32_t num_items, Rng& rng);

// --- bundle directory I/O ------------------------------------------------

void write_interactions(const std::string& path, const std::vector<InteractionRecord>& records,
                        const Vocab& users, const Vocab& items, const ContextSchema& schema);
void write_kg(const std::string& path, const KnowledgeGraph& kg);
void write_bundle(const std::string& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::string& dir);

std::string format_double(double v);

}  // namespace cakgcn
