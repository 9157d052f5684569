#include "cakgcn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cakgcn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'K', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

using Json = nlohmann::ordered_json;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

Json schema_to_json(const ContextSchema& s) {
  Json j;
  j["factors"] = s.factors;
  Json conds = Json::array();
  for (std::size_t i = 0; i < s.condition_names.size(); ++i)
    conds.push_back({{"name", s.condition_names[i]}, {"factor", s.condition_factor[i]}});
  j["conditions"] = std::move(conds);
  return j;
}

ContextSchema schema_from_json(const Json& j) {
  ContextSchema s;
  for (const auto& f : j.at("factors")) s.add_factor(f.get<std::string>());
  for (const auto& c : j.at("conditions"))
    s.add_condition(c.at("factor").get<std::int32_t>(), c.at("name").get<std::string>());
  return s;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  Json header;
  header["format_version"] = kVersion;
  const auto& cfg = model.config();
  header["config"] = {
      {"aggregator", aggregator_name(cfg.aggregator)},
      {"head", head_name(cfg.head)},
      {"ablation", ablation_name(cfg.ablation)},
      {"d", cfg.d},
      {"fm_k", cfg.fm_k},
      {"dropout", cfg.dropout},
      {"leaky_slope", cfg.leaky_slope},
      {"task", task_name(cfg.task)},
  };
  const auto& meta = model.meta();
  header["meta"] = {
      {"task", task_name(meta.task)},
      {"scale_min", meta.scale_min},
      {"scale_max", meta.scale_max},
      {"users", meta.user_names},
      {"items", meta.item_names},
      {"entities", meta.entity_names},
      {"relations", meta.relation_names},
      {"schema", schema_to_json(meta.schema)},
  };
  Json params = Json::array();
  for (const Parameter* p : model.parameters()) params.push_back({{"name", p->name}, {"shape", p->value.shape}});
  header["params"] = std::move(params);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  std::string blob = header.dump();
  write_pod(out, static_cast<std::uint64_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const Parameter* p : model.parameters()) {
    write_pod(out, static_cast<std::uint64_t>(p->value.data.size()));
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed while writing checkpoint " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + " is not a checkpoint file");
  auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  auto blob_len = read_pod<std::uint64_t>(in);
  std::string blob(blob_len, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_len));
  if (!in) throw std::runtime_error("truncated checkpoint header");
  Json header = Json::parse(blob);

  const auto& jc = header.at("config");
  ModelConfig cfg;
  cfg.aggregator = aggregator_from_name(jc.at("aggregator").get<std::string>());
  cfg.head = head_from_name(jc.at("head").get<std::string>());
  cfg.ablation = ablation_from_name(jc.at("ablation").get<std::string>());
  cfg.d = jc.at("d").get<std::int32_t>();
  cfg.fm_k = jc.at("fm_k").get<std::int32_t>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.leaky_slope = jc.at("leaky_slope").get<double>();
  cfg.task = task_from_name(jc.at("task").get<std::string>());

  const auto& jm = header.at("meta");
  ModelMeta meta;
  meta.task = task_from_name(jm.at("task").get<std::string>());
  meta.scale_min = jm.at("scale_min").get<double>();
  meta.scale_max = jm.at("scale_max").get<double>();
  meta.user_names = jm.at("users").get<std::vector<std::string>>();
  meta.item_names = jm.at("items").get<std::vector<std::string>>();
  meta.entity_names = jm.at("entities").get<std::vector<std::string>>();
  meta.relation_names = jm.at("relations").get<std::vector<std::string>>();
  meta.schema = schema_from_json(jm.at("schema"));

  Model model(std::move(meta), cfg);
  auto params = model.parameters();
  const auto& jp = header.at("params");
  if (jp.size() != params.size()) throw std::runtime_error("checkpoint parameter list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (jp[i].at("name").get<std::string>() != params[i]->name)
      throw std::runtime_error("checkpoint parameter order mismatch at '" + params[i]->name + "'");
    auto shape = jp[i].at("shape").get<Shape>();
    if (shape != params[i]->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for '" + params[i]->name + "'");
    auto count = read_pod<std::uint64_t>(in);
    if (count != params[i]->value.data.size())
      throw std::runtime_error("checkpoint size mismatch for '" + params[i]->name + "'");
    in.read(reinterpret_cast<char*>(params[i]->value.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint tensor '" + params[i]->name + "'");
  }
  return model;
}

}  // namespace cakgcn
