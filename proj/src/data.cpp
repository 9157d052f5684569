#include "cakgcn/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cakgcn {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse number '" + s + "'");
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-identical output on every platform
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), end);
}

std::int32_t Vocab::add(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  auto id = static_cast<std::int32_t>(names_.size());
  index_.emplace(name, id);
  names_.push_back(name);
  return id;
}

std::optional<std::int32_t> Vocab::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string task_name(TaskKind t) { return t == TaskKind::Rating ? "rating" : "ranking"; }

TaskKind task_from_name(const std::string& s) {
  if (s == "rating") return TaskKind::Rating;
  if (s == "ranking") return TaskKind::Ranking;
  throw std::runtime_error("unknown task kind '" + s + "' (expected rating|ranking)");
}

std::int32_t ContextSchema::add_factor(const std::string& name) {
  if (find_factor(name)) throw std::runtime_error("duplicate contextual factor '" + name + "'");
  factors.push_back(name);
  factor_conditions.emplace_back();
  return static_cast<std::int32_t>(factors.size() - 1);
}

std::optional<std::int32_t> ContextSchema::find_factor(const std::string& name) const {
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (factors[i] == name) return static_cast<std::int32_t>(i);
  return std::nullopt;
}

std::int32_t ContextSchema::add_condition(std::int32_t factor, const std::string& name) {
  if (auto existing = find_condition(factor, name)) return *existing;
  auto id = static_cast<std::int32_t>(condition_names.size());
  condition_names.push_back(name);
  condition_factor.push_back(factor);
  factor_conditions[static_cast<std::size_t>(factor)].push_back(id);
  return id;
}

std::optional<std::int32_t> ContextSchema::find_condition(std::int32_t factor, const std::string& name) const {
  for (std::int32_t id : factor_conditions[static_cast<std::size_t>(factor)])
    if (condition_names[static_cast<std::size_t>(id)] == name) return id;
  return std::nullopt;
}

std::string situation_key(const ContextSchema& schema, const Situation& cs) {
  std::string key;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (i) key += '|';
    key += schema.condition_names.at(static_cast<std::size_t>(cs[i]));
  }
  return key;
}

void KnowledgeGraph::add_triplet(const std::string& head, const std::string& rel, const std::string& tail) {
  if (head == tail) throw std::runtime_error("self-loop triplet (" + head + ", " + rel + ", " + tail + ")");
  Triplet t;
  t.head = entities.add(head);
  t.rel = relations.add(rel);
  t.tail = entities.add(tail);
  triplets.push_back(t);
  adjacency[t.head].emplace_back(t.rel, t.tail);
}

const std::vector<std::pair<std::int32_t, std::int32_t>>& KnowledgeGraph::neighbors(std::int32_t entity) const {
  static const std::vector<std::pair<std::int32_t, std::int32_t>> none;
  auto it = adjacency.find(entity);
  return it == adjacency.end() ? none : it->second;
}

std::vector<InteractionRecord> DatasetBundle::all_records() const {
  std::vector<InteractionRecord> all;
  all.reserve(train.size() + valid.size() + test.size());
  all.insert(all.end(), train.begin(), train.end());
  all.insert(all.end(), valid.begin(), valid.end());
  all.insert(all.end(), test.begin(), test.end());
  return all;
}

void DatasetBundle::link_items_to_entities() {
  item_entity.assign(static_cast<std::size_t>(items.size()), -1);
  for (std::int32_t i = 0; i < items.size(); ++i)
    if (auto e = kg.entities.find(items.name(i))) item_entity[static_cast<std::size_t>(i)] = *e;
}

std::vector<InteractionRecord> load_interactions(const std::string& path, Vocab& users, Vocab& items,
                                                 ContextSchema& schema,
                                                 std::optional<std::pair<double, double>> scale) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file (missing header)");
  auto header = split_tabs(strip_cr(line));
  if (header.size() < 3 || header.front() != "user" || header[1] != "item" || header.back() != "label")
    throw std::runtime_error(path + ":1: header must be user<TAB>item<TAB><factors...><TAB>label");
  std::vector<std::string> file_factors(header.begin() + 2, header.end() - 1);
  if (schema.factors.empty()) {
    for (const auto& f : file_factors) schema.add_factor(f);
  } else {
    if (file_factors.size() != schema.factors.size())
      throw std::runtime_error(path + ":1: expected " + std::to_string(schema.factors.size()) +
                               " factor columns, found " + std::to_string(file_factors.size()));
    for (std::size_t i = 0; i < file_factors.size(); ++i)
      if (file_factors[i] != schema.factors[i])
        throw std::runtime_error(path + ":1: unknown factor column '" + file_factors[i] + "' (expected '" +
                                 schema.factors[i] + "')");
  }

  std::vector<InteractionRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cols.size() != header.size())
      throw std::runtime_error(where + ": expected " + std::to_string(header.size()) + " columns, found " +
                               std::to_string(cols.size()));
    InteractionRecord r;
    r.user = users.add(cols[0]);
    r.item = items.add(cols[1]);
    r.cs.resize(file_factors.size());
    for (std::size_t f = 0; f < file_factors.size(); ++f)
      r.cs[f] = schema.add_condition(static_cast<std::int32_t>(f), cols[2 + f]);
    r.label = parse_double(cols.back(), where);
    if (scale && (r.label < scale->first || r.label > scale->second))
      throw std::runtime_error(where + ": rating " + cols.back() + " outside scale [" +
                               format_double(scale->first) + "," + format_double(scale->second) + "]");
    records.push_back(std::move(r));
  }
  return records;
}

KnowledgeGraph load_kg(const std::string& path) {
  auto in = open_input(path);
  KnowledgeGraph kg;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file (missing header)");
  auto header = split_tabs(strip_cr(line));
  if (header != std::vector<std::string>{"head", "relation", "tail"})
    throw std::runtime_error(path + ":1: header must be head<TAB>relation<TAB>tail");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 3 columns, found " +
                               std::to_string(cols.size()));
    try {
      kg.add_triplet(cols[0], cols[1], cols[2]);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return kg;
}

SidecarInfo load_sidecar(const std::string& path) {
  auto in = open_input(path);
  SidecarInfo info;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    auto pos = line.find(':');
    if (pos == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key: value");
    std::string key = line.substr(0, pos);
    std::string value = line.substr(pos + 1);
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    if (key == "task") {
      info.task = task_from_name(value);
    } else if (key == "scale_min") {
      info.scale_min = parse_double(value, path + ":" + std::to_string(line_no));
    } else if (key == "scale_max") {
      info.scale_max = parse_double(value, path + ":" + std::to_string(line_no));
    } else if (key == "factors") {
      info.factors.clear();
      std::stringstream ss(value);
      std::string f;
      while (std::getline(ss, f, ',')) info.factors.push_back(f);
    } else {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return info;
}

void write_sidecar(const std::string& path, const SidecarInfo& info) {
  auto out = open_output(path);
  out << "task: " << task_name(info.task) << "\n";
  out << "scale_min: " << format_double(info.scale_min) << "\n";
  out << "scale_max: " << format_double(info.scale_max) << "\n";
  out << "factors: ";
  for (std::size_t i = 0; i < info.factors.size(); ++i) {
    if (i) out << ",";
    out << info.factors[i];
  }
  out << "\n";
}

SplitResult split_random(const std::vector<InteractionRecord>& records, const std::array<double, 3>& ratios,
                         std::uint64_t seed) {
  double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios sum to " + format_double(total) + ", expected 1");
  auto n = records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(seed, "split-random");
  shuffle(order, rng);

  // floor each share, then hand remaining records to the largest fractional
  // parts; ties go to the earlier split (train first)
  std::array<std::size_t, 3> sizes;
  std::array<double, 3> frac;
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    double exact = ratios[static_cast<std::size_t>(s)] * static_cast<double>(n);
    sizes[static_cast<std::size_t>(s)] = static_cast<std::size_t>(std::floor(exact));
    frac[static_cast<std::size_t>(s)] = exact - std::floor(exact);
    assigned += sizes[static_cast<std::size_t>(s)];
  }
  std::size_t remainder = n - assigned;
  std::array<int, 3> order_by_frac{0, 1, 2};
  std::stable_sort(order_by_frac.begin(), order_by_frac.end(),
                   [&](int a, int b) { return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)]; });
  for (std::size_t r = 0; r < remainder; ++r) sizes[static_cast<std::size_t>(order_by_frac[r % 3])] += 1;

  SplitResult out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(records[order[pos++]]);
  for (std::size_t i = 0; i < sizes[1]; ++i) out.valid.push_back(records[order[pos++]]);
  for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(records[order[pos++]]);
  return out;
}

SplitResult split_leave_one_out(const std::vector<InteractionRecord>& records, std::uint64_t seed) {
  std::int32_t max_user = -1;
  for (const auto& r : records) max_user = std::max(max_user, r.user);
  std::vector<std::vector<std::size_t>> by_user(static_cast<std::size_t>(max_user + 1));
  for (std::size_t i = 0; i < records.size(); ++i)
    by_user[static_cast<std::size_t>(records[i].user)].push_back(i);

  Rng rng = make_rng(seed, "split-loo");
  std::vector<bool> held(records.size(), false);
  for (const auto& idxs : by_user) {
    if (idxs.size() < 2) continue;
    held[idxs[rng.next_index(idxs.size())]] = true;
  }
  SplitResult out;
  for (std::size_t i = 0; i < records.size(); ++i)
    (held[i] ? out.test : out.train).push_back(records[i]);
  return out;
}

InteractionIndex::InteractionIndex(const DatasetBundle& bundle) {
  for (const auto& r : bundle.train) insert(r);
  for (const auto& r : bundle.valid) insert(r);
  for (const auto& r : bundle.test) insert(r);
}

InteractionIndex::InteractionIndex(const std::vector<InteractionRecord>& records, const ContextSchema&) {
  for (const auto& r : records) insert(r);
}

void InteractionIndex::insert(const InteractionRecord& r) { sets_[key(r.user, r.cs)].insert(r.item); }

std::string InteractionIndex::key(std::int32_t user, const Situation& cs) const {
  std::string k = std::to_string(user);
  for (auto c : cs) {
    k += ',';
    k += std::to_string(c);
  }
  return k;
}

const std::unordered_set<std::int32_t>& InteractionIndex::interacted(std::int32_t user, const Situation& cs) const {
  auto it = sets_.find(key(user, cs));
  return it == sets_.end() ? empty_ : it->second;
}

NegativeSample sample_negatives(const InteractionRecord& positive, std::int32_t k,
                                const std::unordered_set<std::int32_t>& interacted, std::int32_t num_items,
                                Rng& rng) {
  NegativeSample out;
  if (k <= 0) return out;
  auto make_negative = [&](std::int32_t item) {
    InteractionRecord r = positive;
    r.item = item;
    r.label = 0.0;
    out.records.push_back(std::move(r));
  };
  std::int64_t candidates = static_cast<std::int64_t>(num_items) - static_cast<std::int64_t>(interacted.size());
  if (candidates <= k) {
    for (std::int32_t i = 0; i < num_items; ++i)
      if (!interacted.count(i)) make_negative(i);
    out.exhausted = static_cast<std::int64_t>(out.records.size()) < k;
    return out;
  }
  if (candidates > 3ll * k) {
    // sparse case: rejection sampling
    std::unordered_set<std::int32_t> chosen;
    while (static_cast<std::int32_t>(chosen.size()) < k) {
      auto item = static_cast<std::int32_t>(rng.next_index(static_cast<std::uint64_t>(num_items)));
      if (interacted.count(item) || chosen.count(item)) continue;
      chosen.insert(item);
      make_negative(item);
    }
  } else {
    std::vector<std::int32_t> pool;
    pool.reserve(static_cast<std::size_t>(candidates));
    for (std::int32_t i = 0; i < num_items; ++i)
      if (!interacted.count(i)) pool.push_back(i);
    for (std::int32_t drawn = 0; drawn < k; ++drawn) {
      std::size_t j = drawn + static_cast<std::size_t>(rng.next_index(pool.size() - static_cast<std::size_t>(drawn)));
      std::swap(pool[static_cast<std::size_t>(drawn)], pool[j]);
      make_negative(pool[static_cast<std::size_t>(drawn)]);
    }
  }
  return out;
}

void write_interactions(const std::string& path, const std::vector<InteractionRecord>& records,
                        const Vocab& users, const Vocab& items, const ContextSchema& schema) {
  auto out = open_output(path);
  out << "user\titem";
  for (const auto& f : schema.factors) out << '\t' << f;
  out << "\tlabel\n";
  for (const auto& r : records) {
    out << users.name(r.user) << '\t' << items.name(r.item);
    for (auto c : r.cs) out << '\t' << schema.condition_names[static_cast<std::size_t>(c)];
    out << '\t' << format_double(r.label) << '\n';
  }
}

void write_kg(const std::string& path, const KnowledgeGraph& kg) {
  auto out = open_output(path);
  out << "head\trelation\ttail\n";
  for (const auto& t : kg.triplets)
    out << kg.entities.name(t.head) << '\t' << kg.relations.name(t.rel) << '\t' << kg.entities.name(t.tail)
        << '\n';
}

void write_bundle(const std::string& dir, const DatasetBundle& bundle) {
  std::filesystem::create_directories(dir);
  SidecarInfo info;
  info.task = bundle.task;
  info.scale_min = bundle.scale_min;
  info.scale_max = bundle.scale_max;
  info.factors = bundle.schema.factors;
  write_sidecar(dir + "/schema.txt", info);
  write_interactions(dir + "/train.tsv", bundle.train, bundle.users, bundle.items, bundle.schema);
  write_interactions(dir + "/valid.tsv", bundle.valid, bundle.users, bundle.items, bundle.schema);
  write_interactions(dir + "/test.tsv", bundle.test, bundle.users, bundle.items, bundle.schema);
  write_kg(dir + "/kg.tsv", bundle.kg);
}

DatasetBundle load_bundle(const std::string& dir) {
  DatasetBundle b;
  SidecarInfo info = load_sidecar(dir + "/schema.txt");
  b.task = info.task;
  b.scale_min = info.scale_min;
  b.scale_max = info.scale_max;
  for (const auto& f : info.factors) b.schema.add_factor(f);
  std::optional<std::pair<double, double>> scale;
  if (b.task == TaskKind::Rating) scale = std::make_pair(b.scale_min, b.scale_max);
  b.train = load_interactions(dir + "/train.tsv", b.users, b.items, b.schema, scale);
  b.valid = load_interactions(dir + "/valid.tsv", b.users, b.items, b.schema, scale);
  b.test = load_interactions(dir + "/test.tsv", b.users, b.items, b.schema, scale);
  b.kg = load_kg(dir + "/kg.tsv");
  b.link_items_to_entities();
  return b;
}

}  // namespace cakgcn
