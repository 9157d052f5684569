#pragma once

#include <string>

#include "cakgcn/model.hpp"

namespace cakgcn {

// Single-file checkpoint: magic + version, a JSON header with the config echo
// and all vocabularies, then each parameter's raw doubles in declaration
// order. Loading reproduces predictions bit-exactly.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace cakgcn
