#pragma once

// Run configuration: one JSON document with data, model, train and decode
// sections (configs/schema.json). Unknown keys are rejected; missing keys
// keep their defaults.

#include <filesystem>
#include <string>

#include "empsoa/model.hpp"
#include "empsoa/training.hpp"

namespace empsoa {

struct DataConfig {
  std::string root;  // base for relative paths; EMPSOA_DATA_ROOT overrides it
  std::string train, valid, test;
  std::string knowledge;   // empty: synthetic vectors
  std::string embeddings;  // empty: random initialization
  std::string emotions;    // empty: built-in label list
  std::size_t min_freq = 1;
  std::uint64_t knowledge_seed = 17;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  HyperParams train;
  std::string diversity = "off";
  GenerationConfig decode;

  std::filesystem::path source_dir;  // directory of the file it came from

  static RunConfig load(const std::filesystem::path& path);  // ConfigError
  static RunConfig parse(const std::string& text, const std::filesystem::path& source_dir = ".");
  std::string dump() const;  // JSON; parse(dump()) round-trips

  void validate() const;
  // Absolute paths pass through; relative ones resolve against
  // EMPSOA_DATA_ROOT, else data.root, else the config file's directory.
  std::filesystem::path resolve(const std::string& path) const;
};

}  // namespace empsoa
