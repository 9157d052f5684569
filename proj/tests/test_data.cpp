#include <doctest.h>

#include <algorithm>
#include <set>

#include "cakgcn/data.hpp"
#include "support.hpp"

using namespace cakgcn;
using test_support::TempDir;
using test_support::write_file;

namespace {

std::vector<InteractionRecord> tiny_records(std::size_t n, std::int32_t users = 50) {
  std::vector<InteractionRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].user = static_cast<std::int32_t>(i) % users;
    out[i].item = static_cast<std::int32_t>(i % 7);
    out[i].cs = {0};
    out[i].label = static_cast<double>(i);  // unique tag to track identity through splits
  }
  return out;
}

}  // namespace

TEST_CASE("vocab assigns first-seen ids deterministically") {
  Vocab v;
  CHECK(v.add("b") == 0);
  CHECK(v.add("a") == 1);
  CHECK(v.add("b") == 0);
  CHECK(v.size() == 2);
  CHECK(v.name(1) == "a");
  CHECK_FALSE(v.find("zzz").has_value());
}

TEST_CASE("load_interactions parses rows and builds vocabularies") {
  TempDir dir("ingest");
  write_file(dir.file("x.tsv"),
             "user\titem\tdaytime\tisweekend\tlabel\n"
             "u1\ti1\tmorning\tweekend\t1\n"
             "u2\ti1\tevening\tworkday\t1\n"
             "u1\ti2\tmorning\tworkday\t1\n");
  Vocab users, items;
  ContextSchema schema;
  auto records = load_interactions(dir.file("x.tsv"), users, items, schema, std::nullopt);
  REQUIRE(records.size() == 3);
  CHECK(schema.factors == std::vector<std::string>{"daytime", "isweekend"});
  CHECK(records[0].cs.size() == 2);
  CHECK(users.size() == 2);
  CHECK(items.size() == 2);
  CHECK(schema.num_conditions() == 4);
  // re-ingest gives identical ids
  Vocab users2, items2;
  ContextSchema schema2;
  auto again = load_interactions(dir.file("x.tsv"), users2, items2, schema2, std::nullopt);
  CHECK(users2.names() == users.names());
  CHECK(again[2].cs == records[2].cs);
}

TEST_CASE("load_interactions edge cases") {
  TempDir dir("ingest2");
  write_file(dir.file("empty.tsv"), "user\titem\tdaytime\tlabel\n");
  Vocab users, items;
  ContextSchema schema;
  CHECK(load_interactions(dir.file("empty.tsv"), users, items, schema, std::nullopt).empty());

  write_file(dir.file("badcol.tsv"), "user\titem\tweather\tlabel\nu1\ti1\tsunny\t1\n");
  Vocab u2, i2;
  ContextSchema s2;
  s2.add_factor("daytime");
  CHECK_THROWS_WITH_AS(load_interactions(dir.file("badcol.tsv"), u2, i2, s2, std::nullopt),
                       doctest::Contains("unknown factor column"), std::runtime_error);

  write_file(dir.file("badrow.tsv"), "user\titem\tdaytime\tlabel\nu1\ti1\t1\n");
  Vocab u3, i3;
  ContextSchema s3;
  CHECK_THROWS_WITH_AS(load_interactions(dir.file("badrow.tsv"), u3, i3, s3, std::nullopt),
                       doctest::Contains(":2"), std::runtime_error);

  write_file(dir.file("scale.tsv"), "user\titem\tdaytime\tlabel\nu1\ti1\tmorning\t9\n");
  Vocab u4, i4;
  ContextSchema s4;
  CHECK_THROWS_WITH_AS(load_interactions(dir.file("scale.tsv"), u4, i4, s4, std::make_pair(1.0, 5.0)),
                       doctest::Contains("outside scale"), std::runtime_error);
}

TEST_CASE("load_kg builds adjacency and rejects self loops") {
  TempDir dir("kg");
  write_file(dir.file("kg.tsv"), "head\trelation\ttail\napp1\tcategory\tsocial\n");
  auto kg = load_kg(dir.file("kg.tsv"));
  CHECK(kg.relations.size() == 1);
  CHECK(kg.triplets.size() == 1);
  auto head = kg.entities.find("app1");
  REQUIRE(head.has_value());
  REQUIRE(kg.neighbors(*head).size() == 1);
  CHECK(kg.entities.name(kg.neighbors(*head)[0].second) == "social");

  write_file(dir.file("loop.tsv"), "head\trelation\ttail\nx\tr\tx\n");
  CHECK_THROWS_WITH_AS(load_kg(dir.file("loop.tsv")), doctest::Contains("self-loop"), std::runtime_error);
}

TEST_CASE("split_random apportions sizes and partitions exactly") {
  auto records = tiny_records(10);
  auto parts = split_random(records, {0.8, 0.1, 0.1}, 7);
  CHECK(parts.train.size() == 8);
  CHECK(parts.valid.size() == 1);
  CHECK(parts.test.size() == 1);

  auto again = split_random(records, {0.8, 0.1, 0.1}, 7);
  CHECK(parts.train[3].label == again.train[3].label);
  CHECK(parts.test[0].label == again.test[0].label);

  // partition: disjoint and exhaustive by the unique label tags
  std::multiset<double> tags;
  for (const auto& r : parts.train) tags.insert(r.label);
  for (const auto& r : parts.valid) tags.insert(r.label);
  for (const auto& r : parts.test) tags.insert(r.label);
  CHECK(tags.size() == 10);
  CHECK(std::set<double>(tags.begin(), tags.end()).size() == 10);

  CHECK_THROWS_WITH_AS(split_random(records, {0.8, 0.1, 0.2}, 7), doctest::Contains("sum"),
                       std::invalid_argument);
}

TEST_CASE("split_random matches the Yelp-CO-sized apportionment") {
  auto records = tiny_records(142289, 400);
  auto parts = split_random(records, {0.8, 0.1, 0.1}, 1);
  CHECK(parts.train.size() == 113831);
  CHECK(parts.valid.size() == 14229);
  CHECK(parts.test.size() == 14229);
}

TEST_CASE("leave-one-out holds out one record per eligible user") {
  std::vector<InteractionRecord> records;
  for (int i = 0; i < 5; ++i) records.push_back({0, i, {0}, 1.0});
  records.push_back({1, 0, {0}, 1.0});  // single-record user stays in train
  auto parts = split_leave_one_out(records, 3);
  CHECK(parts.test.size() == 1);
  CHECK(parts.train.size() == 5);
  CHECK(parts.test[0].user == 0);
  int user1_in_train = 0;
  for (const auto& r : parts.train) user1_in_train += r.user == 1;
  CHECK(user1_in_train == 1);

  auto again = split_leave_one_out(records, 3);
  CHECK(again.test[0].item == parts.test[0].item);
}

TEST_CASE("sample_negatives draws uniformly without replacement") {
  InteractionRecord pos{0, 0, {0}, 1.0};
  std::unordered_set<std::int32_t> interacted{0};

  SUBCASE("forced complement") {
    Rng rng(1);
    auto out = sample_negatives(pos, 2, interacted, 3, rng);
    REQUIRE(out.records.size() == 2);
    std::set<std::int32_t> items{out.records[0].item, out.records[1].item};
    CHECK(items == std::set<std::int32_t>{1, 2});
    CHECK(out.records[0].label == 0.0);
    CHECK_FALSE(out.exhausted);
  }

  SUBCASE("k=0") {
    Rng rng(1);
    CHECK(sample_negatives(pos, 0, interacted, 3, rng).records.empty());
  }

  SUBCASE("exhausted candidates flagged") {
    Rng rng(1);
    auto out = sample_negatives(pos, 5, interacted, 3, rng);
    CHECK(out.records.size() == 2);
    CHECK(out.exhausted);
  }

  SUBCASE("uniformity over 1e4 trials") {
    Rng rng(99);
    std::vector<int> counts(11, 0);
    for (int trial = 0; trial < 10000; ++trial) {
      auto out = sample_negatives(pos, 2, interacted, 11, rng);
      REQUIRE(out.records.size() == 2);
      for (const auto& r : out.records) {
        CHECK(r.item != 0);  // never collides with the interacted set
        ++counts[static_cast<std::size_t>(r.item)];
      }
    }
    // 10 eligible items, each drawn with p=0.2 per trial
    double sigma = std::sqrt(10000 * 0.2 * 0.8);
    for (int item = 1; item <= 10; ++item)
      CHECK(std::abs(counts[static_cast<std::size_t>(item)] - 2000.0) < 3 * sigma);
  }
}

TEST_CASE("sidecar round trip") {
  TempDir dir("sidecar");
  SidecarInfo info;
  info.task = TaskKind::Rating;
  info.scale_min = 1;
  info.scale_max = 5;
  info.factors = {"daytime", "companion"};
  write_sidecar(dir.file("schema.txt"), info);
  auto back = load_sidecar(dir.file("schema.txt"));
  CHECK(back.task == TaskKind::Rating);
  CHECK(back.scale_max == 5);
  CHECK(back.factors == info.factors);
}

TEST_CASE("bundle directory round trip preserves ids and records") {
  TempDir dir("bundle");
  DatasetBundle b;
  b.task = TaskKind::Ranking;
  b.users.add("u0");
  b.users.add("u1");
  b.items.add("i0");
  b.items.add("i1");
  auto f = b.schema.add_factor("daytime");
  auto c0 = b.schema.add_condition(f, "morning");
  auto c1 = b.schema.add_condition(f, "evening");
  b.kg.add_triplet("i0", "category", "social");
  b.train = {{0, 0, {c0}, 1.0}, {1, 1, {c1}, 1.0}};
  b.valid = {{0, 1, {c1}, 1.0}};
  b.test = {{1, 0, {c0}, 1.0}};
  b.link_items_to_entities();
  write_bundle(dir.str(), b);

  auto back = load_bundle(dir.str());
  CHECK(back.task == TaskKind::Ranking);
  CHECK(back.users.names() == b.users.names());
  CHECK(back.items.names() == b.items.names());
  CHECK(back.train.size() == 2);
  CHECK(back.train[1].cs == b.train[1].cs);
  CHECK(back.kg.triplets.size() == 1);
  CHECK(back.item_entity[0] == *back.kg.entities.find("i0"));
  CHECK(back.item_entity[1] == -1);
}
