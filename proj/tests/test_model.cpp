#include <doctest.h>

#include <array>
#include <cmath>

#include "cakgcn/checkpoint.hpp"
#include "cakgcn/train.hpp"
#include "support.hpp"

using namespace cakgcn;
using test_support::TempDir;

namespace {

// 3 users, 4 items, 2 factors x 2 conditions, 2 relations; i3 has no KG edges.
DatasetBundle toy_bundle(TaskKind task = TaskKind::Ranking) {
  DatasetBundle b;
  b.task = task;
  for (const char* u : {"u0", "u1", "u2"}) b.users.add(u);
  for (const char* i : {"i0", "i1", "i2", "i3"}) b.items.add(i);
  auto f0 = b.schema.add_factor("daytime");
  auto f1 = b.schema.add_factor("companion");
  auto c00 = b.schema.add_condition(f0, "morning");
  auto c01 = b.schema.add_condition(f0, "evening");
  auto c10 = b.schema.add_condition(f1, "alone");
  auto c11 = b.schema.add_condition(f1, "group");
  b.kg.add_triplet("i0", "category", "social");
  b.kg.add_triplet("i0", "price", "free");
  b.kg.add_triplet("i1", "category", "games");
  b.kg.add_triplet("i2", "price", "paid");
  b.train = {{0, 0, {c00, c10}, 1.0}, {1, 1, {c01, c11}, 1.0}, {2, 2, {c00, c11}, 1.0},
             {0, 1, {c01, c10}, 1.0}, {1, 2, {c00, c10}, 1.0}, {2, 3, {c01, c11}, 1.0}};
  b.valid = {{0, 2, {c00, c11}, 1.0}, {1, 3, {c01, c10}, 1.0}};
  b.test = {{0, 3, {c01, c11}, 1.0}, {2, 0, {c00, c10}, 1.0}};
  if (task == TaskKind::Rating)
    for (auto* split : {&b.train, &b.valid, &b.test})
      for (auto& r : *split) r.label = 1.0 + static_cast<double>((r.user * 7 + r.item * 3) % 5);
  b.link_items_to_entities();
  return b;
}

ModelConfig make_cfg(Aggregator agg, Head head, Ablation abl, TaskKind task, std::int32_t d = 4) {
  ModelConfig cfg;
  cfg.aggregator = agg;
  cfg.head = head;
  cfg.ablation = abl;
  cfg.task = task;
  cfg.d = d;
  cfg.fm_k = 3;
  return cfg;
}

void set_param(Model& m, const std::string& name, std::vector<double> values) {
  auto& p = m.param(name);
  REQUIRE(p.value.data.size() == values.size());
  p.value.data = std::move(values);
}

}  // namespace

TEST_CASE("context attention reproduces the hand trace") {
  // u=[1,0], cf1=[2,0], cf2=[-2,0], slope 0.01 -> beta ~ (0.883, 0.117)
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::ContextOnly, TaskKind::Ranking, 2);
  Model m(b, cfg, 1);
  set_param(m, "users", {1, 0, /*u1*/ 0, 0, /*u2*/ 0, 0});
  set_param(m, "factors", {2, 0, -2, 0});
  auto attn = m.attention(0, {0, 2}, b);
  CHECK(attn.factor_scores[0] == doctest::Approx(2.0));
  CHECK(attn.factor_scores[1] == doctest::Approx(-2.0));
  double e1 = std::exp(2.0), e2 = std::exp(-0.02);
  CHECK(attn.factor_attention[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(attn.factor_attention[1] == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-12));
  CHECK(attn.factor_attention[0] == doctest::Approx(0.883).epsilon(1e-3));
  CHECK(attn.factor_attention[1] == doctest::Approx(0.117).epsilon(2e-2));

  SUBCASE("identical factor embeddings give uniform attention") {
    set_param(m, "factors", {1, 1, 1, 1});
    auto uniform = m.attention(0, {0, 2}, b);
    CHECK(uniform.factor_attention[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(uniform.factor_attention[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("situation vector and sum aggregator follow the hand trace") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::ContextOnly, TaskKind::Ranking, 2);
  Model m(b, cfg, 1);
  set_param(m, "users", {1, 0, 0, 0, 0, 0});
  set_param(m, "factors", {2, 0, -2, 0});
  // conditions: c00=[1,0] (daytime), c10=[0,1] (companion); others unused
  set_param(m, "conditions", {1, 0, 9, 9, 0, 1, 9, 9});
  set_param(m, "w1", {1, 0, 0, 1});
  set_param(m, "b1", {0, 0});
  // i0 = [3,4]; CA-only leaves items untransformed
  set_param(m, "items", {3, 4, 0, 0, 0, 0, 0, 0});

  auto attn = m.attention(0, {0, 2}, b);
  double b1 = attn.factor_attention[0], b2 = attn.factor_attention[1];
  // cs = b1*[1,0] + b2*[0,1]; u_final = relu(u + cs) = [1+b1, b2]
  double expected = (1 + b1) * 3 + b2 * 4;
  InteractionRecord rec{0, 0, {0, 2}, 1.0};
  CHECK(m.score(rec, b) == doctest::Approx(expected).epsilon(1e-12));

  SUBCASE("degenerate attention picks a single condition") {
    // force beta ~ (1, 0): huge scores gap
    set_param(m, "factors", {40, 0, -40, 0});
    auto a2 = m.attention(0, {0, 2}, b);
    CHECK(a2.factor_attention[0] == doctest::Approx(1.0).epsilon(1e-10));
    double exp2 = (1 + a2.factor_attention[0]) * 3 + a2.factor_attention[1] * 4;
    CHECK(m.score(rec, b) == doctest::Approx(exp2).epsilon(1e-9));
  }

  SUBCASE("all-negative pre-activation is killed by relu") {
    set_param(m, "users", {-5, -5, 0, 0, 0, 0});
    InteractionRecord r2{0, 0, {0, 2}, 1.0};
    CHECK(m.score(r2, b) == 0.0);  // u_final = 0 -> inner product 0
  }
}

TEST_CASE("cat aggregator projects the concatenated halves") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Cat, Head::MF, Ablation::ContextOnly, TaskKind::Ranking, 2);
  Model m(b, cfg, 1);
  set_param(m, "users", {1, 0, 0, 0, 0, 0});
  set_param(m, "factors", {1, 1, 1, 1});  // uniform beta = 0.5
  set_param(m, "conditions", {1, 0, 9, 9, 0, 1, 9, 9});
  // w2 = [I | 0]: u_final = relu(cs) ; concat order is (cs, u)
  set_param(m, "w2", {1, 0, 0, 0, 0, 1, 0, 0});
  set_param(m, "b2", {0, 0});
  set_param(m, "items", {1, 1, 0, 0, 0, 0, 0, 0});
  InteractionRecord rec{0, 0, {0, 2}, 1.0};
  // cs = 0.5*[1,0] + 0.5*[0,1] = [.5,.5]; u_final = relu(cs) -> dot with [1,1] = 1
  CHECK(m.score(rec, b) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("relation attention reproduces the hand trace") {
  // kgcn ablation: u_final is the raw user vector [1,1]
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::KgOnly, TaskKind::Ranking, 2);
  Model m(b, cfg, 1);
  set_param(m, "users", {1, 1, 0, 0, 0, 0});
  set_param(m, "relations", {1, 0, 0, -1});
  auto attn = m.attention(0, {0, 2}, b);
  CHECK(attn.relation_scores[0] == doctest::Approx(1.0));
  CHECK(attn.relation_scores[1] == doctest::Approx(-1.0));
  double e1 = std::exp(1.0), e2 = std::exp(-0.01);
  CHECK(attn.relation_attention[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(attn.relation_attention[0] == doctest::Approx(0.733).epsilon(1e-3));

  SUBCASE("equal relation embeddings give uniform attention") {
    set_param(m, "relations", {3, 3, 3, 3});
    auto uniform = m.attention(0, {0, 2}, b);
    CHECK(uniform.relation_attention[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("neighborhood aggregation") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::KgOnly, TaskKind::Ranking, 2);
  Model m(b, cfg, 1);
  set_param(m, "users", {1, 1, 0, 0, 0, 0});
  set_param(m, "relations", {3, 3, 3, 3});  // uniform beta = 0.5 over 2 relations
  set_param(m, "w3", {1, 0, 0, 1});
  set_param(m, "b3", {0, 0});
  set_param(m, "items", {0, 0, 0, 0, 0, 0, 2, 3});

  SUBCASE("no neighbors leaves only the item embedding") {
    // i3 has no KG edges: i_final = relu(w3*(0 + i)) = relu(i) = [2,3]
    InteractionRecord rec{0, 3, {0, 2}, 1.0};
    CHECK(m.score(rec, b) == doctest::Approx(2.0 + 3.0).epsilon(1e-12));
  }

  SUBCASE("two neighbors with beta 0.5 each") {
    // i0 edges: (category, social), (price, free); set social=[1,0], free=[3,2]
    auto social = *b.kg.entities.find("social");
    auto free_e = *b.kg.entities.find("free");
    auto& ent = m.param("entities");
    ent.value.fill(0.0);
    ent.value[social * 2] = 1;
    ent.value[social * 2 + 1] = 0;
    ent.value[free_e * 2] = 3;
    ent.value[free_e * 2 + 1] = 2;
    // E_i = 0.5*[1,0] + 0.5*[3,2] = [2,1]; item i0 embedding is 0 -> i_final = [2,1]
    InteractionRecord rec{0, 0, {0, 2}, 1.0};
    CHECK(m.score(rec, b) == doctest::Approx(2.0 + 1.0).epsilon(1e-12));
  }

  SUBCASE("cat item aggregator with w4 = [0 | I] picks the item half") {
    auto cfg2 = make_cfg(Aggregator::Cat, Head::MF, Ablation::KgOnly, TaskKind::Ranking, 2);
    Model m2(b, cfg2, 1);
    set_param(m2, "users", {1, 1, 0, 0, 0, 0});
    set_param(m2, "relations", {3, 3, 3, 3});
    set_param(m2, "w4", {0, 0, 1, 0, 0, 0, 0, 1});
    set_param(m2, "b4", {0, 0});
    set_param(m2, "items", {2, 5, 0, 0, 0, 0, 0, 0});
    InteractionRecord rec{0, 0, {0, 2}, 1.0};
    CHECK(m2.score(rec, b) == doctest::Approx(2.0 + 5.0).epsilon(1e-12));
  }
}

TEST_CASE("output heads") {
  auto b = toy_bundle();

  SUBCASE("mf head is the inner product") {
    auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::Plain, TaskKind::Ranking, 2);
    Model m(b, cfg, 1);
    set_param(m, "users", {1, 2, 0, 0, 0, 0});
    set_param(m, "items", {3, 4, 0, 0, 0, 0, 0, 0});
    InteractionRecord rec{0, 0, {0, 2}, 1.0};
    CHECK(m.score(rec, b) == 11.0);
  }

  SUBCASE("mlp head with zero hidden weights returns the output bias") {
    auto cfg = make_cfg(Aggregator::Sum, Head::MLP, Ablation::Plain, TaskKind::Ranking, 2);
    Model m(b, cfg, 1);
    m.param("mlp_w").value.fill(0.0);
    m.param("mlp_b").value.fill(0.0);
    set_param(m, "mlp_out_bias", {0.37});
    for (std::int32_t item = 0; item < 4; ++item) {
      InteractionRecord rec{1, item, {1, 3}, 1.0};
      CHECK(m.score(rec, b) == doctest::Approx(0.37).epsilon(1e-15));
    }
  }

  SUBCASE("fm head matches the brute-force pairwise oracle") {
    auto cfg = make_cfg(Aggregator::Sum, Head::FM, Ablation::Plain, TaskKind::Ranking, 2);
    Model m(b, cfg, 7);
    InteractionRecord rec{2, 1, {1, 2}, 1.0};
    double got = m.score(rec, b);

    // oracle: w0 + sum_j w_j x_j + sum_{j<l} <v_j, v_l> x_j x_l
    const auto& users = m.param("users").value;
    const auto& items = m.param("items").value;
    std::vector<double> x = {users[2 * 2], users[2 * 2 + 1], items[1 * 2], items[1 * 2 + 1]};
    const auto& lin = m.param("fm_linear").value;
    const auto& v = m.param("fm_factors").value;
    double expected = m.param("fm_bias").value[0];
    for (std::size_t j = 0; j < 4; ++j) expected += lin[static_cast<std::int64_t>(j)] * x[j];
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t l = j + 1; l < 4; ++l) {
        double dot = 0;
        for (std::int64_t f = 0; f < 3; ++f)
          dot += v[static_cast<std::int64_t>(j) * 3 + f] * v[static_cast<std::int64_t>(l) * 3 + f];
        expected += dot * x[j] * x[l];
      }
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("ablations skip the right layers") {
  auto b = toy_bundle();
  InteractionRecord rec{0, 0, {0, 2}, 1.0};

  SUBCASE("plain ablation ignores both context and kg") {
    auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::Plain, TaskKind::Ranking, 4);
    Model m(b, cfg, 3);
    double before = m.score(rec, b);
    DatasetBundle altered = toy_bundle();
    altered.kg.add_triplet("i0", "category", "games");
    altered.link_items_to_entities();
    CHECK(m.score(rec, altered) == before);
  }

  SUBCASE("ca ablation is invariant to any kg change") {
    auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::ContextOnly, TaskKind::Ranking, 4);
    Model m(b, cfg, 3);
    double before = m.score(rec, b);
    DatasetBundle altered = toy_bundle();
    altered.kg = KnowledgeGraph{};
    altered.kg.add_triplet("i0", "brandnew", "thing");
    altered.link_items_to_entities();
    CHECK(m.score(rec, altered) == before);
  }

  SUBCASE("full model is sensitive to a neighbor entity vector") {
    auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::Full, TaskKind::Ranking, 4);
    Model m(b, cfg, 3);
    double before = m.score(rec, b);
    auto social = *b.kg.entities.find("social");
    m.param("entities").value[social * 4] += 0.5;
    CHECK(m.score(rec, b) != before);
  }
}

TEST_CASE("avg aggregator ignores the attention parameters entirely") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Avg, Head::MF, Ablation::Full, TaskKind::Ranking, 4);
  Model m(b, cfg, 5);
  InteractionRecord rec{1, 0, {1, 3}, 1.0};
  double before = m.score(rec, b);
  auto attn = m.attention(1, {1, 3}, b);
  CHECK(attn.factor_attention.empty());  // avg computes no attention
  Rng rng(17);
  for (auto& v : m.param("factors").value.data) v = rng.next_real(-5, 5);
  for (auto& v : m.param("relations").value.data) v = rng.next_real(-5, 5);
  CHECK(m.score(rec, b) == before);
}

TEST_CASE("attention weights are valid distributions over random models") {
  auto b = toy_bundle();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto cfg = make_cfg(seed % 2 ? Aggregator::Sum : Aggregator::Cat, Head::MF, Ablation::Full,
                        TaskKind::Ranking, 6);
    Model m(b, cfg, seed);
    auto attn = m.attention(static_cast<std::int32_t>(seed % 3),
                            {static_cast<std::int32_t>(seed % 2), static_cast<std::int32_t>(2 + seed % 2)}, b);
    double fsum = 0, rsum = 0;
    for (double v : attn.factor_attention) {
      CHECK(v >= 0);
      fsum += v;
    }
    for (double v : attn.relation_attention) {
      CHECK(v >= 0);
      rsum += v;
    }
    CHECK(fsum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rsum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("factor attention does not depend on the situation") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::NFM, Ablation::Full, TaskKind::Ranking, 6);
  Model m(b, cfg, 11);
  auto a1 = m.attention(0, {0, 2}, b);
  auto a2 = m.attention(0, {1, 3}, b);
  CHECK(a1.factor_attention == a2.factor_attention);  // exact, per the formulas
  CHECK(a1.relation_attention != a2.relation_attention);
}

TEST_CASE("context layer degrades gracefully with zero condition embeddings") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::ContextOnly, TaskKind::Ranking, 2);
  Model m(b, cfg, 1);
  set_param(m, "users", {0.5, 1.5, 0, 0, 0, 0});
  m.param("conditions").value.fill(0.0);
  set_param(m, "w1", {1, 0, 0, 1});
  set_param(m, "b1", {0, 0});
  set_param(m, "items", {1, 1, 0, 0, 0, 0, 0, 0});
  InteractionRecord rec{0, 0, {0, 2}, 1.0};
  CHECK(m.score(rec, b) == doctest::Approx(0.5 + 1.5).epsilon(1e-15));  // relu(u) . [1,1]
}

TEST_CASE("tape forward and fast path agree bitwise for every variant") {
  for (TaskKind task : {TaskKind::Ranking, TaskKind::Rating}) {
    auto b = toy_bundle(task);
    int combo = 0;
    for (auto agg : {Aggregator::Sum, Aggregator::Cat, Aggregator::Avg})
      for (auto head : {Head::MF, Head::FM, Head::MLP, Head::NFM})
        for (auto abl : {Ablation::Full, Ablation::ContextOnly, Ablation::KgOnly, Ablation::Plain}) {
          auto cfg = make_cfg(agg, head, abl, task, 5);
          Model m(b, cfg, static_cast<std::uint64_t>(100 + combo++));
          for (const auto& rec : b.train) {
            Tape t;
            auto node = m.forward(t, rec, b, false, nullptr);
            CHECK(t.val(node).scalar_value() == m.score(rec, b));
          }
        }
  }
}

TEST_CASE("permuting kg neighbor edges leaves predictions within 1e-12") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::Full, TaskKind::Ranking, 6);
  Model m(b, cfg, 9);
  InteractionRecord rec{0, 0, {0, 2}, 1.0};
  double before = m.score(rec, b);
  auto i0 = *b.kg.entities.find("i0");
  auto& edges = b.kg.adjacency[i0];
  std::reverse(edges.begin(), edges.end());
  CHECK(m.score(rec, b) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("end-to-end gradients match finite differences for both losses") {
  auto check_loss = [](TaskKind task) {
    auto b = toy_bundle(task);
    auto cfg = make_cfg(Aggregator::Sum, Head::NFM, Ablation::Full, task, 4);
    Model m(b, cfg, 13);
    auto params = m.parameters();
    const double lambda = 0.01;

    auto build = [&](Tape& t) {
      NodeId total = -1;
      for (const auto& rec : b.train) {
        auto pred = m.forward(t, rec, b, true, nullptr);
        auto loss = task == TaskKind::Ranking ? t.bce_with_logit(pred, rec.label > 0 ? 1.0 : 0.0)
                                              : t.squared_error(pred, rec.label);
        total = total < 0 ? loss : t.add(total, loss);
      }
      return total;
    };
    auto loss_value = [&] {
      Tape t;
      double data = t.val(build(t)).scalar_value();
      auto cparams = m.parameters();
      return data + l2_penalty({cparams.begin(), cparams.end()}, lambda);
    };
    auto grads = [&] {
      Tape t;
      t.backward(build(t));
      apply_l2(params, lambda);
    };
    CHECK(test_support::max_gradient_error(params, loss_value, grads) < 1e-4);
  };
  check_loss(TaskKind::Ranking);
  check_loss(TaskKind::Rating);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Cat, Head::NFM, Ablation::Full, TaskKind::Ranking, 6);
  Model m(b, cfg, 21);
  TempDir dir("ckpt");
  save_model(m, dir.file("model.bin"));
  Model back = load_model(dir.file("model.bin"));
  CHECK(back.parameter_digest() == m.parameter_digest());
  CHECK(back.config().head == Head::NFM);
  CHECK(back.meta().user_names == m.meta().user_names);
  for (const auto& rec : b.train) CHECK(back.score(rec, b) == m.score(rec, b));
  back.check_coverage(b);  // no throw

  DatasetBundle extra = toy_bundle();
  extra.users.add("stranger");
  CHECK_THROWS_AS(back.check_coverage(extra), std::runtime_error);
}

TEST_CASE("record validation errors") {
  auto b = toy_bundle();
  auto cfg = make_cfg(Aggregator::Sum, Head::MF, Ablation::Full, TaskKind::Ranking, 4);
  Model m(b, cfg, 2);
  CHECK_THROWS_AS(m.score({99, 0, {0, 2}, 1.0}, b), std::out_of_range);
  CHECK_THROWS_AS(m.score({0, 99, {0, 2}, 1.0}, b), std::out_of_range);
  CHECK_THROWS_WITH_AS(m.score({0, 0, {0}, 1.0}, b), doctest::Contains("one per factor"),
                       std::invalid_argument);
  // condition 0 belongs to factor 0, not factor 1
  CHECK_THROWS_AS(m.score({0, 0, {0, 0}, 1.0}, b), std::invalid_argument);
}
