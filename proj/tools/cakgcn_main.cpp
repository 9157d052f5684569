#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cakgcn/commands.hpp"
#include "cakgcn/manifest.hpp"

// Exit codes: 0 success, 1 runtime/validation failure, 2 usage error.
int main(int argc, char** argv) {
  CLI::App app{"CA-KGCN: context-aware knowledge-graph recommendations with attention-based explanations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cakgcn::kToolVersion);

  cakgcn::PrepareArgs prepare;
  auto* prep = app.add_subcommand("prepare", "Ingest raw TSV files into a validated bundle directory");
  prep->add_option("--interactions", prepare.interactions, "interactions.tsv path")->required();
  prep->add_option("--kg", prepare.kg, "kg.tsv path (optional)");
  prep->add_option("--schema", prepare.schema, "schema sidecar path (optional)");
  prep->add_option("--out", prepare.out_dir, "output bundle directory")->required();
  prep->add_option("--task", prepare.task, "rating|ranking (ignored when --schema is given)");
  prep->add_option("--scale-min", prepare.scale_min, "rating scale lower bound");
  prep->add_option("--scale-max", prepare.scale_max, "rating scale upper bound");
  prep->add_option("--split", prepare.split, "random|loo (default: rating->random, ranking->loo)");
  prep->add_option("--ratios", prepare.ratios, "random split ratios (default 0.8 0.1 0.1)");
  prep->add_option("--drop-factor", prepare.drop_factors, "drop a contextual factor (repeatable)");
  prep->add_option("--factor-to-kg", prepare.factors_to_kg,
                   "move a contextual factor into the KG as a relation (repeatable)");
  prep->add_option("--seed", prepare.seed, "split seed");

  cakgcn::TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train a model on a prepared bundle");
  tr->add_option("--bundle", train.bundle_dir, "bundle directory")->required();
  tr->add_option("--out", train.out_dir, "output directory")->required();
  tr->add_option("--aggregator", train.aggregator, "sum|cat|avg (default sum)");
  tr->add_option("--head", train.head, "mf|fm|mlp|nfm (default mf)");
  tr->add_option("--ablation", train.ablation, "full|ca|kgcn|plain-mf (default full)");
  tr->add_option("--d", train.d, "embedding size (default 128)");
  tr->add_option("--fm-k", train.fm_k, "FM/NFM factor size (default 16)");
  tr->add_option("--lr", train.lr, "learning rate (default 1e-3)");
  tr->add_option("--batch", train.batch, "batch size (default 256)");
  tr->add_option("--l2", train.l2, "L2 coefficient lambda (default 0)");
  tr->add_option("--dropout", train.dropout, "dropout rate (default 0)");
  tr->add_option("--epochs", train.epochs, "max epochs (default 200)");
  tr->add_option("--patience", train.patience, "early-stop patience (default 10)");
  tr->add_option("--neg", train.neg_per_pos, "negatives per positive, ranking tasks (default 2)");
  tr->add_option("--seed", train.seed, "seed for init/shuffles/sampling/dropout");
  tr->add_flag("--grid", train.grid, "grid-search lr/batch/l2/dropout");
  tr->add_option("--grid-lr", train.grid_lrs, "grid learning rates (default 5e-4 1e-3 5e-3 1e-2 5e-2)");
  tr->add_option("--grid-batch", train.grid_batches, "grid batch sizes (default 128 256 512 1024)");
  tr->add_option("--grid-l2", train.grid_l2s, "grid lambdas (default 5e-4 1e-3 5e-3 1e-2 5e-2 1e-1)");
  tr->add_option("--grid-dropout", train.grid_dropouts, "grid dropout rates (default 0..0.5)");

  cakgcn::EvaluateArgs evaluate;
  bool no_topk = false;
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a bundle's test split");
  ev->add_option("--checkpoint", evaluate.checkpoint, "checkpoint.bin path")->required();
  ev->add_option("--bundle", evaluate.bundle_dir, "bundle directory")->required();
  ev->add_option("--out", evaluate.out_dir, "output directory")->required();
  ev->add_option("--task", evaluate.task, "assert the checkpoint's task kind");
  ev->add_option("--neg", evaluate.neg_per_pos, "negatives per positive for AUC/F1 (default 2)");
  ev->add_flag("--no-topk", no_topk, "skip full-catalog HR/NDCG ranking");
  ev->add_option("--seed", evaluate.seed, "negative-sampling seed");

  cakgcn::ExplainArgs explain;
  auto* ex = app.add_subcommand("explain", "Extract attention, cluster users, render explanations");
  ex->add_option("--checkpoint", explain.checkpoint, "checkpoint.bin path")->required();
  ex->add_option("--bundle", explain.bundle_dir, "bundle directory")->required();
  ex->add_option("--out", explain.out_dir, "output directory")->required();
  ex->add_option("--user", explain.user, "user to explain (name from the data)");
  ex->add_option("--situation", explain.situation, "factor=condition, one per factor");
  ex->add_option("--item", explain.item, "item to explain (default: top-ranked candidate)");
  ex->add_option("--top-n", explain.top_n, "relations to cite (default 2)");
  ex->add_flag("--cluster", explain.cluster, "cluster test-set users by factor attention");
  ex->add_option("--k", explain.k, "cluster count or 'auto' (silhouette over 2..6)");
  ex->add_option("--seed", explain.seed, "k-means seed");

  cakgcn::SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic dataset with planted attention");
  sy->add_option("--out", synth.out_dir, "output directory")->required();
  sy->add_option("--users", synth.users, "user count (default 200)");
  sy->add_option("--items", synth.items, "item count (default 300)");
  sy->add_option("--factors", synth.factors, "contextual factor count (default 3)");
  sy->add_option("--conditions", synth.conditions_per_factor, "conditions per factor (default 4)");
  sy->add_option("--relations", synth.relations, "KG relation count (default 4)");
  sy->add_option("--entities", synth.entities_per_relation, "entities per relation (default 6)");
  sy->add_option("--groups", synth.groups, "planted user groups (default 3)");
  sy->add_option("--per-user", synth.interactions_per_user, "interactions per user (default 60)");
  sy->add_option("--task", synth.task, "rating|ranking (default ranking)");
  sy->add_option("--noise", synth.noise, "label noise level (default 0.1)");
  sy->add_option("--dominant-factor-weight", synth.dominant_factor_weight,
                 "planted weight of the dominant factor (default 0.8)");
  sy->add_option("--dominant-relation-weight", synth.dominant_relation_weight,
                 "planted weight of the dominant relation (default 0.8)");
  sy->add_option("--seed", synth.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  evaluate.topk = !no_topk;

  try {
    if (prep->parsed()) cakgcn::cmd_prepare(prepare);
    if (tr->parsed()) cakgcn::cmd_train(train);
    if (ev->parsed()) cakgcn::cmd_evaluate(evaluate);
    if (ex->parsed()) cakgcn::cmd_explain(explain);
    if (sy->parsed()) cakgcn::cmd_synth(synth);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
