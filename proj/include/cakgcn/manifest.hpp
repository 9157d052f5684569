#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cakgcn {

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t file_digest(const std::string& path);
std::string digest_hex(std::uint64_t digest);

// Provenance record written into the output directory before any heavy work:
// resolved config, seed, input digests and declared artifact paths.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;  // resolved flag -> value
  std::vector<std::pair<std::string, std::string>> inputs;  // path -> digest hex
  std::vector<std::string> artifacts;

  void set(const std::string& key, const std::string& value) { config.emplace_back(key, value); }
  void add_input(const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace cakgcn
