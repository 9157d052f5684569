#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cakgcn/commands.hpp"
#include "cakgcn/explain.hpp"
#include "cakgcn/manifest.hpp"
#include "cakgcn/metrics.hpp"

namespace py = pybind11;

namespace {

py::dict report_to_dict(const cakgcn::MetricReport& r) {
  py::dict out;
  out["task"] = r.task;
  for (const auto& [k, v] : r.values) out[k.c_str()] = v;
  for (const auto& [k, v] : r.info) out[k.c_str()] = v;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CA-KGCN: context-aware knowledge-graph recommendations";
  m.attr("__version__") = cakgcn::kToolVersion;

  m.def(
      "synth",
      [](const std::string& out_dir, std::int32_t users, std::int32_t items, std::int32_t factors,
         std::int32_t conditions_per_factor, std::int32_t relations, std::int32_t entities_per_relation,
         std::int32_t groups, std::int32_t interactions_per_user, const std::string& task, double noise,
         std::uint64_t seed) {
        cakgcn::SynthArgs a;
        a.out_dir = out_dir;
        a.users = users;
        a.items = items;
        a.factors = factors;
        a.conditions_per_factor = conditions_per_factor;
        a.relations = relations;
        a.entities_per_relation = entities_per_relation;
        a.groups = groups;
        a.interactions_per_user = interactions_per_user;
        a.task = task;
        a.noise = noise;
        a.seed = seed;
        cakgcn::cmd_synth(a);
      },
      py::arg("out_dir"), py::arg("users") = 200, py::arg("items") = 300, py::arg("factors") = 3,
      py::arg("conditions_per_factor") = 4, py::arg("relations") = 4, py::arg("entities_per_relation") = 6,
      py::arg("groups") = 3, py::arg("interactions_per_user") = 60, py::arg("task") = "ranking",
      py::arg("noise") = 0.1, py::arg("seed") = 42,
      "Generate a synthetic dataset with planted attention ground truth");

  m.def(
      "prepare",
      [](const std::string& interactions, const std::string& kg, const std::string& schema,
         const std::string& out_dir, const std::string& task, const std::string& split,
         std::vector<std::string> drop_factors, std::vector<std::string> factors_to_kg, std::uint64_t seed) {
        cakgcn::PrepareArgs a;
        a.interactions = interactions;
        a.kg = kg;
        a.schema = schema;
        a.out_dir = out_dir;
        a.task = task;
        a.split = split;
        a.drop_factors = std::move(drop_factors);
        a.factors_to_kg = std::move(factors_to_kg);
        a.seed = seed;
        cakgcn::cmd_prepare(a);
      },
      py::arg("interactions"), py::arg("kg") = "", py::arg("schema") = "", py::arg("out_dir") = "bundle",
      py::arg("task") = "ranking", py::arg("split") = "", py::arg("drop_factors") = std::vector<std::string>{},
      py::arg("factors_to_kg") = std::vector<std::string>{}, py::arg("seed") = 42,
      "Ingest raw TSV files into a validated bundle directory");

  m.def(
      "train",
      [](const std::string& bundle_dir, const std::string& out_dir, const std::string& aggregator,
         const std::string& head, const std::string& ablation, std::int32_t d, double lr, std::int32_t batch,
         double l2, double dropout, std::int32_t epochs, std::int32_t patience, std::uint64_t seed,
         bool grid) {
        cakgcn::TrainArgs a;
        a.bundle_dir = bundle_dir;
        a.out_dir = out_dir;
        a.aggregator = aggregator;
        a.head = head;
        a.ablation = ablation;
        a.d = d;
        a.lr = lr;
        a.batch = batch;
        a.l2 = l2;
        a.dropout = dropout;
        a.epochs = epochs;
        a.patience = patience;
        a.seed = seed;
        a.grid = grid;
        return cakgcn::cmd_train(a);
      },
      py::arg("bundle_dir"), py::arg("out_dir"), py::arg("aggregator") = "sum", py::arg("head") = "mf",
      py::arg("ablation") = "full", py::arg("d") = 128, py::arg("lr") = 1e-3, py::arg("batch") = 256,
      py::arg("l2") = 0.0, py::arg("dropout") = 0.0, py::arg("epochs") = 200, py::arg("patience") = 10,
      py::arg("seed") = 42, py::arg("grid") = false,
      "Train on a bundle; returns the best validation metric");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& bundle_dir, const std::string& out_dir,
         bool topk, std::uint64_t seed) {
        cakgcn::EvaluateArgs a;
        a.checkpoint = checkpoint;
        a.bundle_dir = bundle_dir;
        a.out_dir = out_dir;
        a.topk = topk;
        a.seed = seed;
        return report_to_dict(cakgcn::cmd_evaluate(a));
      },
      py::arg("checkpoint"), py::arg("bundle_dir"), py::arg("out_dir"), py::arg("topk") = true,
      py::arg("seed") = 42, "Evaluate a checkpoint; returns the metric report as a dict");

  m.def(
      "explain",
      [](const std::string& checkpoint, const std::string& bundle_dir, const std::string& out_dir,
         const std::string& user, std::vector<std::string> situation, const std::string& item,
         std::int32_t top_n, bool cluster, const std::string& k, std::uint64_t seed) {
        cakgcn::ExplainArgs a;
        a.checkpoint = checkpoint;
        a.bundle_dir = bundle_dir;
        a.out_dir = out_dir;
        a.user = user;
        a.situation = std::move(situation);
        a.item = item;
        a.top_n = top_n;
        a.cluster = cluster;
        a.k = k;
        a.seed = seed;
        cakgcn::cmd_explain(a);
      },
      py::arg("checkpoint"), py::arg("bundle_dir"), py::arg("out_dir"), py::arg("user") = "",
      py::arg("situation") = std::vector<std::string>{}, py::arg("item") = "", py::arg("top_n") = 2,
      py::arg("cluster") = false, py::arg("k") = "auto", py::arg("seed") = 42,
      "Render explanations and/or cluster users by factor attention");

  m.def("auc", &cakgcn::metric_auc, py::arg("scores"), py::arg("labels"),
        "Rank-statistic AUC with 0.5 tie handling");
  m.def(
      "kmeans",
      [](const std::vector<std::vector<double>>& vectors, std::int32_t k, std::uint64_t seed) {
        auto a = cakgcn::kmeans(vectors, k, seed);
        py::dict out;
        out["k"] = a.k;
        out["labels"] = a.labels;
        out["centroids"] = a.centroids;
        out["inertia"] = a.inertia;
        return out;
      },
      py::arg("vectors"), py::arg("k"), py::arg("seed") = 42,
      "Lloyd k-means with k-means++ seeding; deterministic under seed");
}
