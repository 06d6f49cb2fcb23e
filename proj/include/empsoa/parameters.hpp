#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "empsoa/tensor.hpp"

namespace empsoa {

enum class Init {
  kZeros,
  kOnes,
  kXavier,       // uniform ±sqrt(6 / (fan_in + fan_out)) over the last two axes
  kNormalSmall,  // N(0, 0.02²)
};

// Named trainable tensors, keyed by dotted path ("encoder.layer0.attn.wq").
// Iteration order is lexicographic by path, which fixes the checkpoint order.
class ParameterStore {
 public:
  // Creates and initializes a parameter. Draws from `rng` in call order.
  Tensor add(const std::string& path, Shape shape, Init init, std::mt19937_64& rng);

  const Tensor& get(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) != 0; }
  const std::map<std::string, Tensor>& entries() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::map<std::string, Tensor> params_;
};

// Checkpoint container, little-endian throughout:
//
//   "EMPSOACK"                          8-byte magic
//   u32 version (= 1)
//   u64 entry count
//   per entry, ascending by path:
//     u32 path byte length, path bytes (UTF-8)
//     u32 rank, rank × u64 dims
//     product(dims) × f64 (IEEE-754 binary64)
//
// save/load round-trips every value bit-exactly.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);
// Copies checkpoint values into an existing store. Missing paths, extra paths
// and shape disagreements are FormatError / DimensionError.
void load_checkpoint(ParameterStore& store, const std::filesystem::path& path);

}  // namespace empsoa
