#include "cakgcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace cakgcn {

namespace {

const std::unordered_set<std::string>& bias_names() {
  static const std::unordered_set<std::string> names{"b1", "b2", "b3", "b4", "fm_bias",
                                                     "mlp_b", "mlp_out_bias", "nfm_b"};
  return names;
}

void softmax_inplace(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double total = 0.0;
  for (auto& x : v) {
    x = std::exp(x - mx);
    total += x;
  }
  for (auto& x : v) x /= total;
}

}  // namespace

std::string aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::Sum: return "sum";
    case Aggregator::Cat: return "cat";
    case Aggregator::Avg: return "avg";
  }
  return "?";
}

std::string head_name(Head h) {
  switch (h) {
    case Head::MF: return "mf";
    case Head::FM: return "fm";
    case Head::MLP: return "mlp";
    case Head::NFM: return "nfm";
  }
  return "?";
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::ContextOnly: return "ca";
    case Ablation::KgOnly: return "kgcn";
    case Ablation::Plain: return "plain-mf";
  }
  return "?";
}

Aggregator aggregator_from_name(const std::string& s) {
  if (s == "sum") return Aggregator::Sum;
  if (s == "cat") return Aggregator::Cat;
  if (s == "avg") return Aggregator::Avg;
  throw std::runtime_error("unknown aggregator '" + s + "' (expected sum|cat|avg)");
}

Head head_from_name(const std::string& s) {
  if (s == "mf") return Head::MF;
  if (s == "fm") return Head::FM;
  if (s == "mlp") return Head::MLP;
  if (s == "nfm") return Head::NFM;
  throw std::runtime_error("unknown head '" + s + "' (expected mf|fm|mlp|nfm)");
}

Ablation ablation_from_name(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "ca") return Ablation::ContextOnly;
  if (s == "kgcn") return Ablation::KgOnly;
  if (s == "plain-mf") return Ablation::Plain;
  throw std::runtime_error("unknown ablation '" + s + "' (expected full|ca|kgcn|plain-mf)");
}

ModelMeta ModelMeta::from_bundle(const DatasetBundle& b) {
  ModelMeta m;
  m.task = b.task;
  m.scale_min = b.scale_min;
  m.scale_max = b.scale_max;
  m.user_names = b.users.names();
  m.item_names = b.items.names();
  m.entity_names = b.kg.entities.names();
  m.relation_names = b.kg.relations.names();
  m.schema = b.schema;
  return m;
}

Model::Model(const DatasetBundle& bundle, ModelConfig cfg, std::uint64_t seed)
    : meta_(ModelMeta::from_bundle(bundle)), cfg_(cfg) {
  if (cfg_.task != bundle.task)
    throw std::runtime_error("model task '" + task_name(cfg_.task) + "' mismatches bundle task '" +
                             task_name(bundle.task) + "'");
  if (cfg_.d <= 0 || cfg_.fm_k <= 0) throw std::invalid_argument("embedding sizes must be positive");
  allocate_parameters();
  initialize_parameters(seed);
}

Model::Model(ModelMeta meta, ModelConfig cfg) : meta_(std::move(meta)), cfg_(cfg) { allocate_parameters(); }

void Model::allocate_parameters() {
  std::int64_t d = cfg_.d;
  std::int64_t k = cfg_.fm_k;
  auto add = [&](const std::string& name, Shape shape) {
    params_.push_back(std::make_unique<Parameter>(name, Tensor(std::move(shape))));
  };
  add("users", {static_cast<std::int64_t>(meta_.user_names.size()), d});
  add("items", {static_cast<std::int64_t>(meta_.item_names.size()), d});
  if (cfg_.context_layer()) {
    add("factors", {static_cast<std::int64_t>(meta_.schema.factors.size()), d});
    add("conditions", {static_cast<std::int64_t>(meta_.schema.condition_names.size()), d});
    if (cfg_.aggregator == Aggregator::Cat) {
      add("w2", {d, 2 * d});
      add("b2", {d});
    } else {
      add("w1", {d, d});
      add("b1", {d});
    }
  }
  if (cfg_.kg_layer()) {
    add("entities", {static_cast<std::int64_t>(meta_.entity_names.size()), d});
    add("relations", {static_cast<std::int64_t>(meta_.relation_names.size()), d});
    if (cfg_.aggregator == Aggregator::Cat) {
      add("w4", {d, 2 * d});
      add("b4", {d});
    } else {
      add("w3", {d, d});
      add("b3", {d});
    }
  }
  switch (cfg_.head) {
    case Head::MF:
      break;
    case Head::FM:
      add("fm_bias", {1});
      add("fm_linear", {2 * d});
      add("fm_factors", {2 * d, k});
      break;
    case Head::MLP:
      add("mlp_w", {d, 2 * d});
      add("mlp_b", {d});
      add("mlp_out", {d});
      add("mlp_out_bias", {1});
      break;
    case Head::NFM:
      add("fm_bias", {1});
      add("fm_linear", {2 * d});
      add("fm_factors", {2 * d, k});
      add("nfm_w", {d, k});
      add("nfm_b", {d});
      add("nfm_out", {d});
      break;
  }
}

void Model::initialize_parameters(std::uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
  for (auto& p : params_) {
    if (bias_names().count(p->name)) continue;  // biases stay zero
    Rng rng = make_rng(seed, "init-" + p->name);
    for (auto& v : p->value.data) v = rng.next_real(-bound, bound);
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

Parameter& Model::param(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw std::out_of_range("model has no parameter '" + name + "'");
}

const Parameter& Model::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw std::out_of_range("model has no parameter '" + name + "'");
}

void Model::validate_record(const InteractionRecord& rec) const {
  validate_user_cs(rec.user, rec.cs);
  if (rec.item < 0 || rec.item >= static_cast<std::int32_t>(meta_.item_names.size()))
    throw std::out_of_range("item id " + std::to_string(rec.item) + " out of range");
}

void Model::validate_user_cs(std::int32_t user, const Situation& cs) const {
  if (user < 0 || user >= static_cast<std::int32_t>(meta_.user_names.size()))
    throw std::out_of_range("user id " + std::to_string(user) + " out of range");
  auto nf = static_cast<std::size_t>(meta_.schema.num_factors());
  if (cs.size() != nf)
    throw std::invalid_argument("situation has " + std::to_string(cs.size()) + " conditions, expected one per factor (" +
                                std::to_string(nf) + ")");
  for (std::size_t f = 0; f < nf; ++f) {
    std::int32_t c = cs[f];
    if (c < 0 || c >= meta_.schema.num_conditions() ||
        meta_.schema.condition_factor[static_cast<std::size_t>(c)] != static_cast<std::int32_t>(f))
      throw std::invalid_argument("condition id " + std::to_string(c) + " does not belong to factor '" +
                                  meta_.schema.factors[f] + "'");
  }
}

NodeId Model::forward(Tape& tape, const InteractionRecord& rec, const DatasetBundle& bundle, bool training,
                      Rng* dropout_rng, AttentionProfile* attn) {
  validate_record(rec);
  if (training && cfg_.dropout > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("training forward with dropout requires an rng");
  if (attn) {
    *attn = AttentionProfile{};
    attn->user = rec.user;
    attn->cs = rec.cs;
  }
  std::int64_t d = cfg_.d;

  NodeId u = tape.row(param("users"), rec.user);
  NodeId u_final = u;
  if (cfg_.context_layer()) {
    auto num_factors = meta_.schema.num_factors();
    if (num_factors == 0) throw std::runtime_error("context attention over an empty factor set");
    NodeId cmat = tape.gather(param("conditions"), rec.cs);
    NodeId weights;
    if (cfg_.aggregator != Aggregator::Avg) {
      NodeId fmat = tape.leaf(param("factors"));
      NodeId pi = tape.matmul(fmat, u);
      NodeId beta = tape.softmax(tape.leaky_relu(pi, cfg_.leaky_slope));
      if (attn) {
        attn->factor_scores = tape.val(pi).data;
        attn->factor_attention = tape.val(beta).data;
      }
      weights = beta;
    } else {
      weights = tape.constant(Tensor::full({num_factors}, 1.0 / static_cast<double>(num_factors)));
    }
    NodeId cs_vec = tape.matmul(weights, cmat);
    if (cfg_.aggregator == Aggregator::Cat) {
      NodeId z = tape.concat(cs_vec, u);
      u_final = tape.relu(tape.add(tape.matmul(tape.leaf(param("w2")), z), tape.leaf(param("b2"))));
    } else {
      u_final = tape.relu(
          tape.add(tape.matmul(tape.leaf(param("w1")), tape.add(u, cs_vec)), tape.leaf(param("b1"))));
    }
  }

  NodeId i_node = tape.row(param("items"), rec.item);
  NodeId i_final = i_node;
  if (cfg_.kg_layer()) {
    NodeId beta_r = -1;
    if (cfg_.aggregator != Aggregator::Avg) {
      if (meta_.relation_names.empty())
        throw std::runtime_error("relation attention over an empty relation vocabulary");
      NodeId rmat = tape.leaf(param("relations"));
      NodeId pi_r = tape.matmul(rmat, u_final);
      beta_r = tape.softmax(tape.leaky_relu(pi_r, cfg_.leaky_slope));
      if (attn) {
        attn->relation_scores = tape.val(pi_r).data;
        attn->relation_attention = tape.val(beta_r).data;
      }
    }
    std::int32_t entity = -1;
    if (static_cast<std::size_t>(rec.item) < bundle.item_entity.size())
      entity = bundle.item_entity[static_cast<std::size_t>(rec.item)];
    const auto& edges = entity >= 0 ? bundle.kg.neighbors(entity)
                                    : std::vector<std::pair<std::int32_t, std::int32_t>>{};
    NodeId ei;
    if (edges.empty()) {
      ei = tape.constant(Tensor::zeros({d}));
    } else {
      std::vector<std::int32_t> rels, tails;
      rels.reserve(edges.size());
      tails.reserve(edges.size());
      for (const auto& [r, e] : edges) {
        rels.push_back(r);
        tails.push_back(e);
      }
      NodeId tmat = tape.gather(param("entities"), tails);
      NodeId ew = cfg_.aggregator == Aggregator::Avg
                      ? tape.constant(Tensor::full({static_cast<std::int64_t>(edges.size())},
                                                   1.0 / static_cast<double>(edges.size())))
                      : tape.rows(beta_r, rels);
      ei = tape.matmul(ew, tmat);
    }
    if (cfg_.aggregator == Aggregator::Cat) {
      NodeId z = tape.concat(ei, i_node);
      i_final = tape.relu(tape.add(tape.matmul(tape.leaf(param("w4")), z), tape.leaf(param("b4"))));
    } else {
      i_final = tape.relu(
          tape.add(tape.matmul(tape.leaf(param("w3")), tape.add(ei, i_node)), tape.leaf(param("b3"))));
    }
  }

  if (training && cfg_.dropout > 0.0) {
    u_final = tape.dropout(u_final, cfg_.dropout, true, *dropout_rng);
    i_final = tape.dropout(i_final, cfg_.dropout, true, *dropout_rng);
  }

  switch (cfg_.head) {
    case Head::MF:
      return tape.dot(u_final, i_final);
    case Head::FM: {
      NodeId x = tape.concat(u_final, i_final);
      NodeId lin = tape.dot(tape.leaf(param("fm_linear")), x);
      NodeId v = tape.leaf(param("fm_factors"));
      NodeId q = tape.matmul(x, v);
      NodeId s1 = tape.sum(tape.mul(q, q));
      NodeId x2 = tape.mul(x, x);
      NodeId v2 = tape.mul(v, v);
      NodeId s2 = tape.sum(tape.matmul(x2, v2));
      return tape.add(tape.leaf(param("fm_bias")), tape.add(lin, tape.scale(tape.sub(s1, s2), 0.5)));
    }
    case Head::MLP: {
      NodeId z = tape.concat(u_final, i_final);
      NodeId h =
          tape.relu(tape.add(tape.matmul(tape.leaf(param("mlp_w")), z), tape.leaf(param("mlp_b"))));
      if (training && cfg_.dropout > 0.0) h = tape.dropout(h, cfg_.dropout, true, *dropout_rng);
      return tape.add(tape.dot(tape.leaf(param("mlp_out")), h), tape.leaf(param("mlp_out_bias")));
    }
    case Head::NFM: {
      NodeId x = tape.concat(u_final, i_final);
      NodeId lin = tape.dot(tape.leaf(param("fm_linear")), x);
      NodeId v = tape.leaf(param("fm_factors"));
      NodeId q = tape.matmul(x, v);
      NodeId x2 = tape.mul(x, x);
      NodeId v2 = tape.mul(v, v);
      NodeId pooled = tape.scale(tape.sub(tape.mul(q, q), tape.matmul(x2, v2)), 0.5);
      NodeId h =
          tape.relu(tape.add(tape.matmul(tape.leaf(param("nfm_w")), pooled), tape.leaf(param("nfm_b"))));
      if (training && cfg_.dropout > 0.0) h = tape.dropout(h, cfg_.dropout, true, *dropout_rng);
      return tape.add(tape.leaf(param("fm_bias")), tape.add(lin, tape.dot(tape.leaf(param("nfm_out")), h)));
    }
  }
  throw std::logic_error("unreachable head");
}

// ---- tape-free evaluation path ------------------------------------------
// Loop order mirrors the tape kernels exactly so both paths agree bitwise.

Model::UserState Model::user_state(std::int32_t user, const Situation& cs, const DatasetBundle& bundle,
                                   AttentionProfile* attn) const {
  validate_user_cs(user, cs);
  (void)bundle;
  if (attn) {
    *attn = AttentionProfile{};
    attn->user = user;
    attn->cs = cs;
  }
  auto d = static_cast<std::size_t>(cfg_.d);
  const Parameter& users = *params_.front();  // "users" is always first
  UserState state;
  state.u_final.assign(users.value.data.begin() + static_cast<std::ptrdiff_t>(user * cfg_.d),
                       users.value.data.begin() + static_cast<std::ptrdiff_t>((user + 1) * cfg_.d));

  if (cfg_.context_layer()) {
    auto num_factors = static_cast<std::size_t>(meta_.schema.num_factors());
    if (num_factors == 0) throw std::runtime_error("context attention over an empty factor set");
    const auto& conditions = param("conditions").value;
    std::vector<double> weights;
    if (cfg_.aggregator != Aggregator::Avg) {
      const auto& factors = param("factors").value;
      std::vector<double> pi(num_factors);
      for (std::size_t f = 0; f < num_factors; ++f) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += factors.data[f * d + k] * state.u_final[k];
        pi[f] = acc;
      }
      std::vector<double> beta(num_factors);
      for (std::size_t f = 0; f < num_factors; ++f)
        beta[f] = pi[f] > 0.0 ? pi[f] : cfg_.leaky_slope * pi[f];
      softmax_inplace(beta);
      if (attn) {
        attn->factor_scores = pi;
        attn->factor_attention = beta;
      }
      weights = std::move(beta);
    } else {
      weights.assign(num_factors, 1.0 / static_cast<double>(num_factors));
    }
    std::vector<double> cs_vec(d);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t f = 0; f < num_factors; ++f)
        acc += weights[f] * conditions.data[static_cast<std::size_t>(cs[f]) * d + j];
      cs_vec[j] = acc;
    }
    std::vector<double> u_out(d);
    if (cfg_.aggregator == Aggregator::Cat) {
      const auto& w2 = param("w2").value;
      const auto& b2 = param("b2").value;
      std::vector<double> z(2 * d);
      for (std::size_t j = 0; j < d; ++j) z[j] = cs_vec[j];
      for (std::size_t j = 0; j < d; ++j) z[d + j] = state.u_final[j];
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 2 * d; ++k) acc += w2.data[r * 2 * d + k] * z[k];
        acc += b2.data[r];
        u_out[r] = acc > 0.0 ? acc : 0.0;
      }
    } else {
      const auto& w1 = param("w1").value;
      const auto& b1 = param("b1").value;
      std::vector<double> tmp(d);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = state.u_final[j] + cs_vec[j];
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += w1.data[r * d + k] * tmp[k];
        acc += b1.data[r];
        u_out[r] = acc > 0.0 ? acc : 0.0;
      }
    }
    state.u_final = std::move(u_out);
  }

  if (cfg_.kg_layer()) {
    if (cfg_.aggregator != Aggregator::Avg) {
      if (meta_.relation_names.empty())
        throw std::runtime_error("relation attention over an empty relation vocabulary");
      const auto& relations = param("relations").value;
      auto num_rel = meta_.relation_names.size();
      std::vector<double> pi(num_rel);
      for (std::size_t r = 0; r < num_rel; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += relations.data[r * d + k] * state.u_final[k];
        pi[r] = acc;
      }
      std::vector<double> beta(num_rel);
      for (std::size_t r = 0; r < num_rel; ++r) beta[r] = pi[r] > 0.0 ? pi[r] : cfg_.leaky_slope * pi[r];
      softmax_inplace(beta);
      if (attn) {
        attn->relation_scores = pi;
        attn->relation_attention = beta;
      }
      state.relation_beta = std::move(beta);
    } else {
      state.uniform_neighbors = true;
    }
  }
  return state;
}

double Model::score_item(const UserState& state, std::int32_t item, const DatasetBundle& bundle) const {
  if (item < 0 || item >= static_cast<std::int32_t>(meta_.item_names.size()))
    throw std::out_of_range("item id " + std::to_string(item) + " out of range");
  auto d = static_cast<std::size_t>(cfg_.d);
  const auto& items = param("items").value;
  std::vector<double> i_final(items.data.begin() + static_cast<std::ptrdiff_t>(item * cfg_.d),
                              items.data.begin() + static_cast<std::ptrdiff_t>((item + 1) * cfg_.d));

  if (cfg_.kg_layer()) {
    std::int32_t entity = -1;
    if (static_cast<std::size_t>(item) < bundle.item_entity.size())
      entity = bundle.item_entity[static_cast<std::size_t>(item)];
    static const std::vector<std::pair<std::int32_t, std::int32_t>> none;
    const auto& edges = entity >= 0 ? bundle.kg.neighbors(entity) : none;
    std::vector<double> ei(d, 0.0);
    if (!edges.empty()) {
      const auto& entities = param("entities").value;
      std::vector<double> ew(edges.size());
      if (state.uniform_neighbors) {
        double w = 1.0 / static_cast<double>(edges.size());
        for (auto& v : ew) v = w;
      } else {
        for (std::size_t e = 0; e < edges.size(); ++e)
          ew[e] = state.relation_beta[static_cast<std::size_t>(edges[e].first)];
      }
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < edges.size(); ++e)
          acc += ew[e] * entities.data[static_cast<std::size_t>(edges[e].second) * d + j];
        ei[j] = acc;
      }
    }
    std::vector<double> out(d);
    if (cfg_.aggregator == Aggregator::Cat) {
      const auto& w4 = param("w4").value;
      const auto& b4 = param("b4").value;
      std::vector<double> z(2 * d);
      for (std::size_t j = 0; j < d; ++j) z[j] = ei[j];
      for (std::size_t j = 0; j < d; ++j) z[d + j] = i_final[j];
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 2 * d; ++k) acc += w4.data[r * 2 * d + k] * z[k];
        acc += b4.data[r];
        out[r] = acc > 0.0 ? acc : 0.0;
      }
    } else {
      const auto& w3 = param("w3").value;
      const auto& b3 = param("b3").value;
      std::vector<double> tmp(d);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = ei[j] + i_final[j];
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += w3.data[r * d + k] * tmp[k];
        acc += b3.data[r];
        out[r] = acc > 0.0 ? acc : 0.0;
      }
    }
    i_final = std::move(out);
  }

  const auto& uf = state.u_final;
  switch (cfg_.head) {
    case Head::MF: {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += uf[j] * i_final[j];
      return acc;
    }
    case Head::FM: {
      auto k = static_cast<std::size_t>(cfg_.fm_k);
      const auto& lin_w = param("fm_linear").value;
      const auto& v = param("fm_factors").value;
      const auto& bias = param("fm_bias").value;
      std::vector<double> x(2 * d);
      for (std::size_t j = 0; j < d; ++j) x[j] = uf[j];
      for (std::size_t j = 0; j < d; ++j) x[d + j] = i_final[j];
      double lin = 0.0;
      for (std::size_t j = 0; j < 2 * d; ++j) lin += lin_w.data[j] * x[j];
      std::vector<double> q(k, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 2 * d; ++i) acc += x[i] * v.data[i * k + j];
        q[j] = acc;
      }
      double s1 = 0.0;
      for (std::size_t j = 0; j < k; ++j) s1 += q[j] * q[j];
      double s2 = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 2 * d; ++i) acc += (x[i] * x[i]) * (v.data[i * k + j] * v.data[i * k + j]);
        s2 += acc;
      }
      return bias.data[0] + (lin + (s1 - s2) * 0.5);
    }
    case Head::MLP: {
      const auto& w = param("mlp_w").value;
      const auto& b = param("mlp_b").value;
      const auto& out_w = param("mlp_out").value;
      const auto& out_b = param("mlp_out_bias").value;
      std::vector<double> z(2 * d);
      for (std::size_t j = 0; j < d; ++j) z[j] = uf[j];
      for (std::size_t j = 0; j < d; ++j) z[d + j] = i_final[j];
      double pred = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t kk = 0; kk < 2 * d; ++kk) acc += w.data[r * 2 * d + kk] * z[kk];
        acc += b.data[r];
        double h = acc > 0.0 ? acc : 0.0;
        pred += out_w.data[r] * h;
      }
      return pred + out_b.data[0];
    }
    case Head::NFM: {
      auto k = static_cast<std::size_t>(cfg_.fm_k);
      const auto& lin_w = param("fm_linear").value;
      const auto& v = param("fm_factors").value;
      const auto& bias = param("fm_bias").value;
      const auto& nw = param("nfm_w").value;
      const auto& nb = param("nfm_b").value;
      const auto& nout = param("nfm_out").value;
      std::vector<double> x(2 * d);
      for (std::size_t j = 0; j < d; ++j) x[j] = uf[j];
      for (std::size_t j = 0; j < d; ++j) x[d + j] = i_final[j];
      double lin = 0.0;
      for (std::size_t j = 0; j < 2 * d; ++j) lin += lin_w.data[j] * x[j];
      std::vector<double> pooled(k, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 2 * d; ++i) acc += x[i] * v.data[i * k + j];
        double acc2 = 0.0;
        for (std::size_t i = 0; i < 2 * d; ++i)
          acc2 += (x[i] * x[i]) * (v.data[i * k + j] * v.data[i * k + j]);
        pooled[j] = (acc * acc - acc2) * 0.5;
      }
      double hterm = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) acc += nw.data[r * k + kk] * pooled[kk];
        acc += nb.data[r];
        double h = acc > 0.0 ? acc : 0.0;
        hterm += nout.data[r] * h;
      }
      return bias.data[0] + (lin + hterm);
    }
  }
  throw std::logic_error("unreachable head");
}

double Model::score(const InteractionRecord& rec, const DatasetBundle& bundle, AttentionProfile* attn) const {
  validate_record(rec);
  UserState state = user_state(rec.user, rec.cs, bundle, attn);
  return score_item(state, rec.item, bundle);
}

AttentionProfile Model::attention(std::int32_t user, const Situation& cs, const DatasetBundle& bundle) const {
  AttentionProfile attn;
  user_state(user, cs, bundle, &attn);
  return attn;
}

void Model::check_coverage(const DatasetBundle& bundle) const {
  auto prefix_match = [](const std::vector<std::string>& got, const std::vector<std::string>& have,
                         const char* what) {
    if (got.size() > have.size())
      throw std::runtime_error(std::string("bundle has more ") + what + " than the checkpoint knows");
    for (std::size_t i = 0; i < got.size(); ++i)
      if (got[i] != have[i])
        throw std::runtime_error(std::string("bundle ") + what + " vocabulary does not line up with checkpoint (entry " +
                                 std::to_string(i) + ": '" + got[i] + "' vs '" + have[i] + "')");
  };
  prefix_match(bundle.users.names(), meta_.user_names, "user");
  prefix_match(bundle.items.names(), meta_.item_names, "item");
  prefix_match(bundle.kg.entities.names(), meta_.entity_names, "entity");
  prefix_match(bundle.kg.relations.names(), meta_.relation_names, "relation");
  if (bundle.schema.factors != meta_.schema.factors)
    throw std::runtime_error("bundle contextual factors do not match checkpoint");
  prefix_match(bundle.schema.condition_names, meta_.schema.condition_names, "condition");
  if (bundle.task != cfg_.task)
    throw std::runtime_error("bundle task '" + task_name(bundle.task) + "' mismatches checkpoint task '" +
                             task_name(cfg_.task) + "'");
}

std::uint64_t Model::parameter_digest() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params_)
    h = fnv1a64(p->value.data.data(), p->value.data.size() * sizeof(double), h);
  return h;
}

Model Model::clone() const {
  Model copy(meta_, cfg_);
  for (std::size_t i = 0; i < params_.size(); ++i) copy.params_[i]->value = params_[i]->value;
  return copy;
}

}  // namespace cakgcn
