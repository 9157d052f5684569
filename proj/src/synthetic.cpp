#include "cakgcn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace cakgcn {

namespace {

struct Generator {
  const SyntheticSpec& spec;
  SyntheticData out;
  std::vector<std::vector<std::int32_t>> item_attr;  // [item][relation] tail entity id or -1
  std::vector<std::uint8_t> compat;                  // [condition][entity] in {0,1}
  std::vector<double> popularity;                    // [item]

  explicit Generator(const SyntheticSpec& s) : spec(s) {}

  double compat_at(std::int32_t cond, std::int32_t entity) const {
    return compat[static_cast<std::size_t>(cond) * static_cast<std::size_t>(out.bundle.kg.entities.size()) +
                  static_cast<std::size_t>(entity)];
  }

  void build_vocabs() {
    auto& b = out.bundle;
    b.task = spec.task;
    b.scale_min = 1.0;
    b.scale_max = 5.0;
    for (std::int32_t u = 0; u < spec.users; ++u) b.users.add("u" + std::to_string(u));
    for (std::int32_t i = 0; i < spec.items; ++i) b.items.add("i" + std::to_string(i));
    for (std::int32_t f = 0; f < spec.factors; ++f) {
      std::string fname = "f" + std::to_string(f);
      b.schema.add_factor(fname);
      for (std::int32_t c = 0; c < spec.conditions_per_factor; ++c)
        b.schema.add_condition(f, fname + "_c" + std::to_string(c));
    }
  }

  void build_kg() {
    auto& b = out.bundle;
    Rng rng = make_rng(spec.seed, "synthetic-kg");
    // register relation and entity names up front so vocab ids match the
    // generator's relation/entity numbering regardless of edge draws
    std::vector<std::vector<std::string>> pools(static_cast<std::size_t>(spec.relations));
    for (std::int32_t r = 0; r < spec.relations; ++r) {
      b.kg.relations.add("r" + std::to_string(r));
      for (std::int32_t v = 0; v < spec.entities_per_relation; ++v) {
        std::string name = "r" + std::to_string(r) + "_v" + std::to_string(v);
        b.kg.entities.add(name);
        pools[static_cast<std::size_t>(r)].push_back(std::move(name));
      }
    }
    item_attr.assign(static_cast<std::size_t>(spec.items),
                     std::vector<std::int32_t>(static_cast<std::size_t>(spec.relations), -1));
    for (std::int32_t i = 0; i < spec.items; ++i) {
      for (std::int32_t r = 0; r < spec.relations; ++r) {
        if (!rng.next_bernoulli(spec.edge_prob)) continue;
        const auto& pool = pools[static_cast<std::size_t>(r)];
        const std::string& tail = pool[rng.next_index(pool.size())];
        b.kg.add_triplet(b.items.name(i), "r" + std::to_string(r), tail);
        item_attr[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] = *b.kg.entities.find(tail);
      }
    }
    b.link_items_to_entities();
  }

  void build_compat_and_popularity() {
    Rng rng = make_rng(spec.seed, "synthetic-compat");
    auto conds = static_cast<std::size_t>(out.bundle.schema.num_conditions());
    auto ents = static_cast<std::size_t>(out.bundle.kg.entities.size());
    compat.resize(conds * ents);
    for (auto& v : compat) v = rng.next_bernoulli(0.5) ? 1 : 0;
    popularity.resize(static_cast<std::size_t>(spec.items));
    for (auto& p : popularity) p = rng.next_real();
  }

  void build_users() {
    Rng rng = make_rng(spec.seed, "synthetic-users");
    out.user_factor_attention.resize(static_cast<std::size_t>(spec.users));
    out.planted_group.resize(static_cast<std::size_t>(spec.users));
    out.dominant_factor.resize(static_cast<std::size_t>(spec.users));
    for (std::int32_t u = 0; u < spec.users; ++u) {
      std::int32_t g = u % spec.groups;
      std::int32_t fd = g % spec.factors;
      out.planted_group[static_cast<std::size_t>(u)] = g;
      out.dominant_factor[static_cast<std::size_t>(u)] = fd;
      std::vector<double> attn(static_cast<std::size_t>(spec.factors),
                               spec.factors > 1 ? (1.0 - spec.dominant_factor_weight) / (spec.factors - 1) : 0.0);
      attn[static_cast<std::size_t>(fd)] = spec.factors > 1 ? spec.dominant_factor_weight : 1.0;
      out.user_factor_attention[static_cast<std::size_t>(u)] = std::move(attn);
    }
    // per (group, condition of the group's dominant factor): a dominant relation
    out.group_condition_relations.assign(
        static_cast<std::size_t>(spec.groups),
        std::vector<std::vector<double>>(static_cast<std::size_t>(spec.conditions_per_factor)));
    for (std::int32_t g = 0; g < spec.groups; ++g)
      for (std::int32_t c = 0; c < spec.conditions_per_factor; ++c) {
        auto rd = static_cast<std::int32_t>(rng.next_index(static_cast<std::uint64_t>(spec.relations)));
        std::vector<double> rho(static_cast<std::size_t>(spec.relations),
                                spec.relations > 1 ? (1.0 - spec.dominant_relation_weight) / (spec.relations - 1)
                                                   : 0.0);
        rho[static_cast<std::size_t>(rd)] = spec.relations > 1 ? spec.dominant_relation_weight : 1.0;
        out.group_condition_relations[static_cast<std::size_t>(g)][static_cast<std::size_t>(c)] = std::move(rho);
      }
  }

  // condition index of cs within the user's dominant factor
  std::int32_t dominant_condition_index(std::int32_t user, const Situation& cs) const {
    std::int32_t fd = out.dominant_factor[static_cast<std::size_t>(user)];
    std::int32_t cond = cs[static_cast<std::size_t>(fd)];
    const auto& ids = out.bundle.schema.factor_conditions[static_cast<std::size_t>(fd)];
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == cond) return static_cast<std::int32_t>(i);
    throw std::logic_error("condition not in its factor's vocabulary");
  }

  double score(std::int32_t user, std::int32_t item, const Situation& cs,
               const std::vector<double>& rho) const {
    const auto& attn = out.user_factor_attention[static_cast<std::size_t>(user)];
    double ctx_kg = 0.0;
    for (std::int32_t f = 0; f < spec.factors; ++f) {
      double per_factor = 0.0;
      for (std::int32_t r = 0; r < spec.relations; ++r) {
        std::int32_t e = item_attr[static_cast<std::size_t>(item)][static_cast<std::size_t>(r)];
        if (e < 0) continue;
        per_factor += rho[static_cast<std::size_t>(r)] * compat_at(cs[static_cast<std::size_t>(f)], e);
      }
      ctx_kg += attn[static_cast<std::size_t>(f)] * per_factor;
    }
    return ctx_kg + spec.popularity_weight * popularity[static_cast<std::size_t>(item)];
  }

  Situation draw_situation(Rng& rng) const {
    const auto& schema = out.bundle.schema;
    Situation cs(static_cast<std::size_t>(spec.factors));
    for (std::int32_t f = 0; f < spec.factors; ++f) {
      const auto& ids = schema.factor_conditions[static_cast<std::size_t>(f)];
      cs[static_cast<std::size_t>(f)] = ids[rng.next_index(ids.size())];
    }
    return cs;
  }

  void build_records() {
    Rng rng = make_rng(spec.seed, "synthetic-records");
    auto& b = out.bundle;
    std::vector<double> weights(static_cast<std::size_t>(spec.items));
    for (std::int32_t u = 0; u < spec.users; ++u) {
      std::unordered_set<std::string> seen;  // dedupe (item, situation) per user
      for (std::int32_t t = 0; t < spec.interactions_per_user; ++t) {
        InteractionRecord rec;
        rec.user = u;
        for (int attempt = 0; attempt < 64; ++attempt) {
          rec.cs = draw_situation(rng);
          auto rho = relation_attention_for(u, rec.cs);
          std::int32_t item;
          if (spec.noise > 0.0 && rng.next_bernoulli(spec.noise)) {
            item = static_cast<std::int32_t>(rng.next_index(static_cast<std::uint64_t>(spec.items)));
          } else {
            double mx = -1e300;
            for (std::int32_t i = 0; i < spec.items; ++i) {
              weights[static_cast<std::size_t>(i)] = score(u, i, rec.cs, rho);
              mx = std::max(mx, weights[static_cast<std::size_t>(i)]);
            }
            double total = 0.0;
            for (auto& w : weights) {
              w = std::exp((w - mx) / spec.temperature);
              total += w;
            }
            double ticket = rng.next_real() * total;
            item = spec.items - 1;
            double acc = 0.0;
            for (std::int32_t i = 0; i < spec.items; ++i) {
              acc += weights[static_cast<std::size_t>(i)];
              if (ticket < acc) {
                item = i;
                break;
              }
            }
          }
          std::string key = std::to_string(item) + "|" + situation_key(b.schema, rec.cs);
          if (seen.count(key)) continue;
          seen.insert(key);
          rec.item = item;
          break;
        }
        if (rec.item < 0) continue;  // user exhausted fresh (item, cs) pairs

        if (spec.task == TaskKind::Ranking) {
          rec.label = 1.0;
        } else {
          auto rho = relation_attention_for(u, rec.cs);
          double s = score(u, rec.item, rec.cs, rho) / (1.0 + spec.popularity_weight);
          s = s + spec.noise * rng.next_normal();
          s = std::clamp(s, 0.0, 1.0);
          rec.label = b.scale_min + (b.scale_max - b.scale_min) * s;
        }
        b.train.push_back(std::move(rec));
      }
    }
  }

  std::vector<double> relation_attention_for(std::int32_t user, const Situation& cs) const {
    std::int32_t g = out.planted_group[static_cast<std::size_t>(user)];
    std::int32_t ci = dominant_condition_index(user, cs);
    return out.group_condition_relations[static_cast<std::size_t>(g)][static_cast<std::size_t>(ci)];
  }
};

}  // namespace

std::vector<double> SyntheticData::relation_attention(std::int32_t user, const Situation& cs) const {
  std::int32_t g = planted_group[static_cast<std::size_t>(user)];
  std::int32_t fd = dominant_factor[static_cast<std::size_t>(user)];
  std::int32_t cond = cs[static_cast<std::size_t>(fd)];
  const auto& ids = bundle.schema.factor_conditions[static_cast<std::size_t>(fd)];
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == cond) return group_condition_relations[static_cast<std::size_t>(g)][i];
  throw std::logic_error("condition not in its factor's vocabulary");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.users <= 0 || spec.items <= 0 || spec.factors <= 0 || spec.conditions_per_factor <= 0 ||
      spec.relations <= 0 || spec.entities_per_relation <= 0 || spec.groups <= 0 ||
      spec.interactions_per_user <= 0)
    throw std::invalid_argument("degenerate synthetic spec: all counts must be positive");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0))
    throw std::invalid_argument("synthetic noise must lie in [0,1]");
  Generator gen(spec);
  gen.build_vocabs();
  gen.build_kg();
  gen.build_compat_and_popularity();
  gen.build_users();
  gen.build_records();
  return std::move(gen.out);
}

void write_synthetic(const std::string& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  const auto& b = data.bundle;
  SidecarInfo info;
  info.task = b.task;
  info.scale_min = b.scale_min;
  info.scale_max = b.scale_max;
  info.factors = b.schema.factors;
  write_sidecar(dir + "/schema.txt", info);
  write_interactions(dir + "/interactions.tsv", b.train, b.users, b.items, b.schema);
  write_kg(dir + "/kg.tsv", b.kg);

  std::ofstream tf(dir + "/truth_factors.tsv", std::ios::binary);
  tf << "user\tfactor\tweight\n";
  for (std::int32_t u = 0; u < b.users.size(); ++u)
    for (std::int32_t f = 0; f < b.schema.num_factors(); ++f)
      tf << b.users.name(u) << '\t' << b.schema.factors[static_cast<std::size_t>(f)] << '\t'
         << format_double(data.user_factor_attention[static_cast<std::size_t>(u)][static_cast<std::size_t>(f)])
         << '\n';

  std::ofstream tr(dir + "/truth_relations.tsv", std::ios::binary);
  tr << "user\tsituation\trelation\tweight\n";
  std::unordered_set<std::string> seen;
  for (const auto& rec : b.train) {
    std::string skey = situation_key(b.schema, rec.cs);
    std::string ukey = b.users.name(rec.user) + "\t" + skey;
    if (seen.count(ukey)) continue;
    seen.insert(ukey);
    auto rho = data.relation_attention(rec.user, rec.cs);
    for (std::int32_t r = 0; r < b.kg.relations.size(); ++r)
      tr << ukey << '\t' << b.kg.relations.name(r) << '\t' << format_double(rho[static_cast<std::size_t>(r)])
         << '\n';
  }
}

}  // namespace cakgcn
