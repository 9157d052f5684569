#include "cakgcn/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include "cakgcn/checkpoint.hpp"
#include "cakgcn/explain.hpp"
#include "cakgcn/manifest.hpp"
#include "cakgcn/synthetic.hpp"
#include "cakgcn/train.hpp"

namespace cakgcn {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw std::runtime_error("output directory not set");
  fs::create_directories(dir);
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

// Removes the given factors from the schema, rewriting every record's
// situation; `to_kg` factors additionally become (item, factor, value)
// triplets, first value seen per item winning.
void apply_transforms(std::vector<InteractionRecord>& records, ContextSchema& schema, KnowledgeGraph& kg,
                      const Vocab& items, const std::vector<std::string>& drop,
                      const std::vector<std::string>& to_kg) {
  std::vector<bool> keep(schema.factors.size(), true);
  std::vector<bool> move(schema.factors.size(), false);
  for (const auto& name : drop) {
    auto f = schema.find_factor(name);
    if (!f) throw std::runtime_error("cannot drop unknown factor '" + name + "'");
    keep[static_cast<std::size_t>(*f)] = false;
  }
  for (const auto& name : to_kg) {
    auto f = schema.find_factor(name);
    if (!f) throw std::runtime_error("cannot move unknown factor '" + name + "' to the KG");
    if (!keep[static_cast<std::size_t>(*f)])
      throw std::runtime_error("factor '" + name + "' both dropped and moved to the KG");
    keep[static_cast<std::size_t>(*f)] = false;
    move[static_cast<std::size_t>(*f)] = true;
  }
  if (std::all_of(keep.begin(), keep.end(), [](bool b) { return !b; }))
    throw std::runtime_error("transforms would remove every contextual factor");

  std::set<std::pair<std::string, std::string>> kg_seen;  // (item, relation)
  for (const auto& r : records)
    for (std::size_t f = 0; f < move.size(); ++f) {
      if (!move[f]) continue;
      auto key = std::make_pair(items.name(r.item), schema.factors[f]);
      if (kg_seen.count(key)) continue;
      kg_seen.insert(key);
      kg.add_triplet(key.first, key.second,
                     schema.condition_names[static_cast<std::size_t>(r.cs[f])]);
    }

  ContextSchema reduced;
  std::vector<std::int32_t> cond_map(schema.condition_names.size(), -1);
  for (std::size_t f = 0; f < schema.factors.size(); ++f) {
    if (!keep[f]) continue;
    auto nf = reduced.add_factor(schema.factors[f]);
    for (auto cid : schema.factor_conditions[f])
      cond_map[static_cast<std::size_t>(cid)] =
          reduced.add_condition(nf, schema.condition_names[static_cast<std::size_t>(cid)]);
  }
  for (auto& r : records) {
    Situation reduced_cs;
    for (std::size_t f = 0; f < keep.size(); ++f)
      if (keep[f]) reduced_cs.push_back(cond_map[static_cast<std::size_t>(r.cs[f])]);
    r.cs = std::move(reduced_cs);
  }
  schema = std::move(reduced);
}

void write_stats(const std::string& path, const DatasetBundle& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto interactions = b.train.size() + b.valid.size() + b.test.size();
  std::size_t non_item_entities = 0;
  for (std::int32_t e = 0; e < b.kg.entities.size(); ++e)
    if (!b.items.find(b.kg.entities.name(e))) ++non_item_entities;
  double denom = static_cast<double>(b.users.size()) * static_cast<double>(b.items.size());
  double sparsity = denom > 0.0 ? 1.0 - static_cast<double>(interactions) / denom : 0.0;
  out << "users: " << b.users.size() << "\n";
  out << "items: " << b.items.size() << "\n";
  out << "interactions: " << interactions << "\n";
  out << "sparsity: " << format_double(sparsity) << "\n";
  out << "contextual_factors: " << b.schema.num_factors() << "\n";
  out << "contextual_conditions: " << b.schema.num_conditions() << "\n";
  out << "relations: " << b.kg.relations.size() << "\n";
  out << "non_item_entities: " << non_item_entities << "\n";
  out << "kg_triplets: " << b.kg.triplets.size() << "\n";
  out << "train: " << b.train.size() << "\n";
  out << "valid: " << b.valid.size() << "\n";
  out << "test: " << b.test.size() << "\n";
}

Situation parse_situation(const std::vector<std::string>& pairs, const ContextSchema& schema) {
  if (pairs.size() != schema.factors.size())
    throw std::runtime_error("situation needs one factor=condition pair per factor (" +
                             std::to_string(schema.factors.size()) + " factors)");
  Situation cs(schema.factors.size(), -1);
  for (const auto& p : pairs) {
    auto eq = p.find('=');
    if (eq == std::string::npos) throw std::runtime_error("situation entry '" + p + "' is not factor=condition");
    auto f = schema.find_factor(p.substr(0, eq));
    if (!f) throw std::runtime_error("unknown factor '" + p.substr(0, eq) + "'");
    auto c = schema.find_condition(*f, p.substr(eq + 1));
    if (!c) throw std::runtime_error("unknown condition '" + p.substr(eq + 1) + "' for factor '" + p.substr(0, eq) + "'");
    cs[static_cast<std::size_t>(*f)] = *c;
  }
  for (std::size_t f = 0; f < cs.size(); ++f)
    if (cs[f] < 0) throw std::runtime_error("situation is missing factor '" + schema.factors[f] + "'");
  return cs;
}

void add_bundle_inputs(RunManifest& m, const std::string& dir) {
  for (const char* f : {"schema.txt", "train.tsv", "valid.tsv", "test.tsv", "kg.tsv"})
    m.add_input(dir + "/" + f);
}

}  // namespace

void cmd_prepare(const PrepareArgs& args) {
  ensure_dir(args.out_dir);
  RunManifest manifest;
  manifest.command = "prepare";
  manifest.seed = args.seed;
  manifest.add_input(args.interactions);
  if (!args.kg.empty()) manifest.add_input(args.kg);
  if (!args.schema.empty()) manifest.add_input(args.schema);

  SidecarInfo info;
  if (!args.schema.empty()) {
    info = load_sidecar(args.schema);
  } else {
    info.task = task_from_name(args.task);
    info.scale_min = args.scale_min;
    info.scale_max = args.scale_max;
  }
  std::string split = args.split;
  if (split.empty()) split = info.task == TaskKind::Rating ? "random" : "loo";
  if (split != "random" && split != "loo")
    throw std::runtime_error("unknown split '" + split + "' (expected random|loo)");

  manifest.set("task", task_name(info.task));
  manifest.set("split", split);
  manifest.set("drop_factors", join_list(args.drop_factors));
  manifest.set("factors_to_kg", join_list(args.factors_to_kg));
  for (const char* f : {"schema.txt", "train.tsv", "valid.tsv", "test.tsv", "kg.tsv", "stats.txt"})
    manifest.artifacts.push_back(args.out_dir + "/" + std::string(f));
  manifest.write(args.out_dir + "/manifest.json");

  DatasetBundle b;
  b.task = info.task;
  b.scale_min = info.scale_min;
  b.scale_max = info.scale_max;
  for (const auto& f : info.factors) b.schema.add_factor(f);
  std::optional<std::pair<double, double>> scale;
  if (b.task == TaskKind::Rating) scale = std::make_pair(b.scale_min, b.scale_max);
  auto records = load_interactions(args.interactions, b.users, b.items, b.schema, scale);
  if (!args.kg.empty()) b.kg = load_kg(args.kg);
  apply_transforms(records, b.schema, b.kg, b.items, args.drop_factors, args.factors_to_kg);

  if (split == "random") {
    auto parts = split_random(records, args.ratios, args.seed);
    b.train = std::move(parts.train);
    b.valid = std::move(parts.valid);
    b.test = std::move(parts.test);
  } else {
    // leave-one-out twice: one held-out test record per user, then one
    // held-out validation record per user from the remainder
    auto first = split_leave_one_out(records, args.seed);
    b.test = std::move(first.test);
    auto second = split_leave_one_out(first.train, args.seed + 1);
    b.train = std::move(second.train);
    b.valid = std::move(second.test);
  }
  b.link_items_to_entities();
  write_bundle(args.out_dir, b);
  write_stats(args.out_dir + "/stats.txt", b);
}

double cmd_train(const TrainArgs& args) {
  ensure_dir(args.out_dir);
  RunManifest manifest;
  manifest.command = "train";
  manifest.seed = args.seed;
  add_bundle_inputs(manifest, args.bundle_dir);
  manifest.set("aggregator", args.aggregator);
  manifest.set("head", args.head);
  manifest.set("ablation", args.ablation);
  manifest.set("d", std::to_string(args.d));
  manifest.set("fm_k", std::to_string(args.fm_k));
  manifest.set("lr", format_double(args.lr));
  manifest.set("batch", std::to_string(args.batch));
  manifest.set("l2", format_double(args.l2));
  manifest.set("dropout", format_double(args.dropout));
  manifest.set("epochs", std::to_string(args.epochs));
  manifest.set("patience", std::to_string(args.patience));
  manifest.set("neg_per_pos", std::to_string(args.neg_per_pos));
  manifest.set("grid", args.grid ? "true" : "false");
  manifest.artifacts.push_back(args.out_dir + "/checkpoint.bin");
  manifest.artifacts.push_back(args.out_dir + "/history.tsv");
  if (args.grid) manifest.artifacts.push_back(args.out_dir + "/leaderboard.tsv");
  manifest.write(args.out_dir + "/manifest.json");

  DatasetBundle bundle = load_bundle(args.bundle_dir);
  ModelConfig cfg;
  cfg.aggregator = aggregator_from_name(args.aggregator);
  cfg.head = head_from_name(args.head);
  cfg.ablation = ablation_from_name(args.ablation);
  cfg.d = args.d;
  cfg.fm_k = args.fm_k;
  cfg.task = bundle.task;

  TrainRunConfig run;
  run.lr = args.lr;
  run.batch = args.batch;
  run.l2 = args.l2;
  run.dropout = args.dropout;
  run.max_epochs = args.epochs;
  run.patience = args.patience;
  run.neg_per_pos = args.neg_per_pos;
  run.seed = args.seed;

  std::string metric_name = bundle.task == TaskKind::Rating ? "valid_rmse" : "valid_auc";
  if (args.grid) {
    GridSpec grid;
    if (!args.grid_lrs.empty()) grid.lrs = args.grid_lrs;
    if (!args.grid_batches.empty()) grid.batches = args.grid_batches;
    if (!args.grid_l2s.empty()) grid.l2s = args.grid_l2s;
    if (!args.grid_dropouts.empty()) grid.dropouts = args.grid_dropouts;
    GridResult res = grid_search(bundle, cfg, run, grid);
    save_model(res.best->model, args.out_dir + "/checkpoint.bin");
    write_history(args.out_dir + "/history.tsv", res.best->history);
    write_leaderboard(args.out_dir + "/leaderboard.tsv", res.leaderboard, metric_name);
    std::cout << "best " << metric_name << ": " << format_double(res.best->best_metric) << " (lr="
              << format_double(res.best_run.lr) << " batch=" << res.best_run.batch
              << " l2=" << format_double(res.best_run.l2) << " dropout=" << format_double(res.best_run.dropout)
              << ")\n";
    return res.best->best_metric;
  }
  TrainResult res = train(bundle, cfg, run);
  save_model(res.model, args.out_dir + "/checkpoint.bin");
  write_history(args.out_dir + "/history.tsv", res.history);
  std::cout << "best " << metric_name << ": " << format_double(res.best_metric) << " at epoch "
            << res.best_epoch << "\n";
  return res.best_metric;
}

MetricReport cmd_evaluate(const EvaluateArgs& args) {
  ensure_dir(args.out_dir);
  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.seed = args.seed;
  manifest.add_input(args.checkpoint);
  add_bundle_inputs(manifest, args.bundle_dir);
  manifest.set("neg_per_pos", std::to_string(args.neg_per_pos));
  manifest.set("topk", args.topk ? "true" : "false");
  manifest.artifacts.push_back(args.out_dir + "/report.txt");
  manifest.artifacts.push_back(args.out_dir + "/report_row.tsv");
  manifest.write(args.out_dir + "/manifest.json");

  Model model = load_model(args.checkpoint);
  DatasetBundle bundle = load_bundle(args.bundle_dir);
  if (!args.task.empty() && task_from_name(args.task) != model.config().task)
    throw std::runtime_error("task mismatch: checkpoint is a " + task_name(model.config().task) +
                             " model, --task requested " + args.task);
  EvalOptions opts;
  opts.seed = args.seed;
  opts.neg_per_pos = args.neg_per_pos;
  opts.topk = args.topk;
  MetricReport report = evaluate(model, bundle, opts);
  report.write(args.out_dir + "/report.txt", args.out_dir + "/report_row.tsv");
  std::cout << report.to_text();
  return report;
}

void cmd_explain(const ExplainArgs& args) {
  ensure_dir(args.out_dir);
  RunManifest manifest;
  manifest.command = "explain";
  manifest.seed = args.seed;
  manifest.add_input(args.checkpoint);
  add_bundle_inputs(manifest, args.bundle_dir);
  manifest.set("user", args.user);
  manifest.set("item", args.item);
  manifest.set("situation", join_list(args.situation));
  manifest.set("top_n", std::to_string(args.top_n));
  manifest.set("cluster", args.cluster ? "true" : "false");
  manifest.set("k", args.k);
  if (!args.user.empty()) manifest.artifacts.push_back(args.out_dir + "/explanations.jsonl");
  if (args.cluster)
    for (const char* f : {"clusters.tsv", "centroids.tsv", "attention.tsv", "k_diagnostics.tsv"})
      manifest.artifacts.push_back(args.out_dir + "/" + std::string(f));
  manifest.write(args.out_dir + "/manifest.json");

  Model model = load_model(args.checkpoint);
  DatasetBundle bundle = load_bundle(args.bundle_dir);
  model.check_coverage(bundle);

  if (args.cluster) {
    // attention vectors of the users appearing in the test set
    std::vector<std::int32_t> users;
    std::set<std::int32_t> seen;
    for (const auto& r : bundle.test)
      if (seen.insert(r.user).second) users.push_back(r.user);
    if (users.empty()) throw std::runtime_error("explain --cluster: test set holds no users");
    auto extract = extract_attention(model, bundle, users, {});
    std::vector<std::vector<double>> vectors;
    vectors.reserve(extract.factor_attention.size());
    for (const auto& v : extract.factor_attention) vectors.push_back(v.weights);

    std::int32_t chosen_k;
    std::ofstream diag(args.out_dir + "/k_diagnostics.tsv", std::ios::binary);
    diag << "k\tinertia\tsilhouette\tchosen\n";
    if (args.k == "auto") {
      std::vector<std::int32_t> range;
      for (std::int32_t k = 2; k <= 6 && static_cast<std::size_t>(k) <= vectors.size(); ++k)
        range.push_back(k);
      auto sel = select_k(vectors, range, args.seed);
      chosen_k = sel.k;
      for (const auto& d : sel.diagnostics)
        diag << d.k << '\t' << format_double(d.inertia) << '\t' << format_double(d.silhouette) << '\t'
             << (d.k == sel.k ? 1 : 0) << '\n';
      if (!sel.clear_structure)
        std::cout << "note: weak silhouette for every k; no clear cluster structure\n";
    } else {
      chosen_k = static_cast<std::int32_t>(std::stol(args.k));
      auto assignment = kmeans(vectors, chosen_k, args.seed);
      diag << chosen_k << '\t' << format_double(assignment.inertia) << '\t'
           << format_double(mean_silhouette(vectors, assignment.labels, chosen_k)) << "\t1\n";
    }
    auto assignment = kmeans(vectors, chosen_k, args.seed);
    export_analysis(args.out_dir, assignment, extract.factor_attention, bundle);
    std::cout << "clustered " << users.size() << " users into k=" << chosen_k << "\n";
  }

  if (!args.user.empty()) {
    auto uid = bundle.users.find(args.user);
    if (!uid) throw std::runtime_error("unknown user '" + args.user + "'");
    Situation cs = parse_situation(args.situation, bundle.schema);
    std::int32_t item_id;
    if (!args.item.empty()) {
      auto iid = bundle.items.find(args.item);
      if (!iid) throw std::runtime_error("unknown item '" + args.item + "'");
      item_id = *iid;
    } else {
      // recommend: best-scoring item the user has not interacted with under cs
      InteractionIndex index(bundle);
      const auto& exclude = index.interacted(*uid, cs);
      auto state = model.user_state(*uid, cs, bundle);
      item_id = -1;
      double best = 0.0;
      for (std::int32_t i = 0; i < bundle.items.size(); ++i) {
        if (exclude.count(i)) continue;
        double s = model.score_item(state, i, bundle);
        if (item_id < 0 || s > best) {
          best = s;
          item_id = i;
        }
      }
      if (item_id < 0) throw std::runtime_error("no candidate item left to recommend");
    }
    auto profile = model.attention(*uid, cs, bundle);
    auto explanation = render_explanation(profile, item_id, bundle, args.top_n);
    std::ofstream out(args.out_dir + "/explanations.jsonl", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + args.out_dir + "/explanations.jsonl");
    out << explanation_to_json(explanation, bundle) << "\n";
    std::cout << explanation.sentence << "\n";
  }
}

void cmd_synth(const SynthArgs& args) {
  ensure_dir(args.out_dir);
  RunManifest manifest;
  manifest.command = "synth";
  manifest.seed = args.seed;
  manifest.set("users", std::to_string(args.users));
  manifest.set("items", std::to_string(args.items));
  manifest.set("factors", std::to_string(args.factors));
  manifest.set("conditions_per_factor", std::to_string(args.conditions_per_factor));
  manifest.set("relations", std::to_string(args.relations));
  manifest.set("entities_per_relation", std::to_string(args.entities_per_relation));
  manifest.set("groups", std::to_string(args.groups));
  manifest.set("interactions_per_user", std::to_string(args.interactions_per_user));
  manifest.set("task", args.task);
  manifest.set("noise", format_double(args.noise));
  for (const char* f :
       {"interactions.tsv", "kg.tsv", "schema.txt", "truth_factors.tsv", "truth_relations.tsv"})
    manifest.artifacts.push_back(args.out_dir + "/" + std::string(f));
  manifest.write(args.out_dir + "/manifest.json");

  SyntheticSpec spec;
  spec.users = args.users;
  spec.items = args.items;
  spec.factors = args.factors;
  spec.conditions_per_factor = args.conditions_per_factor;
  spec.relations = args.relations;
  spec.entities_per_relation = args.entities_per_relation;
  spec.groups = args.groups;
  spec.interactions_per_user = args.interactions_per_user;
  spec.task = task_from_name(args.task);
  spec.noise = args.noise;
  spec.dominant_factor_weight = args.dominant_factor_weight;
  spec.dominant_relation_weight = args.dominant_relation_weight;
  spec.seed = args.seed;
  auto data = generate_synthetic(spec);
  write_synthetic(args.out_dir, data);
  std::cout << "generated " << data.bundle.train.size() << " interactions, "
            << data.bundle.kg.triplets.size() << " kg triplets\n";
}

}  // namespace cakgcn
