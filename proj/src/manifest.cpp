#include "cakgcn/manifest.hpp"

#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "cakgcn/rng.hpp"

namespace cakgcn {

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for digest");
  std::uint64_t h = 1469598103934665603ull;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[digest & 0xf];
    digest >>= 4;
  }
  return out;
}

void RunManifest::add_input(const std::string& path) {
  inputs.emplace_back(path, digest_hex(file_digest(path)));
}

void RunManifest::write(const std::string& path) const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = std::move(cfg);
  nlohmann::ordered_json ins;
  for (const auto& [k, v] : inputs) ins[k] = v;
  j["inputs"] = std::move(ins);
  j["artifacts"] = artifacts;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace cakgcn
