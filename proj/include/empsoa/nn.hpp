#pragma once

// Layers shared by the encoder, the awareness graphs, modulation and the
// decoder. All of them are thin structs over parameter handles; the forward
// functions are free of hidden state.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "empsoa/parameters.hpp"
#include "empsoa/tensor.hpp"

namespace empsoa {

// Per-call forward settings. Dropout is active only when `training` is set.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  Tensor drop(const Tensor& x, double rate) const;
};

// Creates parameters under a common path prefix.
class ParamBuilder {
 public:
  ParamBuilder(ParameterStore& store, std::mt19937_64& rng, std::string prefix = {})
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  Tensor make(const std::string& name, Shape shape, Init init) const;
  ParamBuilder sub(const std::string& name) const;

 private:
  ParameterStore* store_;
  std::mt19937_64* rng_;
  std::string prefix_;
};

struct Linear {
  Tensor weight;  // [in × out]
  Tensor bias;    // [out]; undefined for a bias-free map

  static Linear create(const ParamBuilder& pb, std::size_t in, std::size_t out, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(const ParamBuilder& pb, std::size_t width);
  Tensor operator()(const Tensor& x) const;
};

// Two affine maps with a ReLU between them.
struct FeedForward {
  Linear in;
  Linear out;

  static FeedForward create(const ParamBuilder& pb, std::size_t width_in, std::size_t hidden,
                            std::size_t width_out);
  Tensor operator()(const Tensor& x) const;
};

// Projections of a multi-head attention block. Head h uses columns
// [h·d/H, (h+1)·d/H) of each projection. `wo` is undefined when the heads'
// concatenation is the output (graph attention).
struct AttentionWeights {
  Tensor wq, wk, wv, wo;

  static AttentionWeights create(const ParamBuilder& pb, std::size_t d, bool with_output);
};

// Attention probabilities per head, each [n_query × n_key], for inspection.
struct AttentionTrace {
  std::vector<Tensor> heads;
};

// softmax(scale · Q_h K_hᵀ) V_h for every head h, concatenated, then · wo when
// present. `allowed` is [n_query × n_key] (empty means all keys allowed);
// queries with no allowed key produce zero rows. scale is 1/sqrt(d/H) when
// `scaled` is set, else 1.
Tensor multi_head_attention(const Tensor& query_in, const Tensor& key_in, const AttentionWeights& w,
                            std::size_t heads, std::span<const std::uint8_t> allowed, bool scaled,
                            AttentionTrace* trace = nullptr);

// Fixed sinusoidal position table [n × d]:
// P[p, 2i] = sin(p / 10000^(2i/d)), P[p, 2i+1] = cos(p / 10000^(2i/d)).
Tensor sinusoidal_positions(std::size_t n, std::size_t d);

// Pre-norm transformer block used by the context encoder.
struct EncoderLayer {
  LayerNorm norm_attn;
  AttentionWeights attn;
  LayerNorm norm_ffn;
  FeedForward ffn;

  static EncoderLayer create(const ParamBuilder& pb, std::size_t d, std::size_t ffn_width);
};

// Rows `keep[i] ? updated[i] : original[i]`.
Tensor select_rows(const Tensor& original, const Tensor& updated, const std::vector<bool>& keep);

}  // namespace empsoa
