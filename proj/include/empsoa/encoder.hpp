#pragma once

#include <vector>

#include "empsoa/corpus.hpp"
#include "empsoa/nn.hpp"

namespace empsoa {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 6;
  std::size_t d_h = 300;
  std::size_t ffn = 600;
  double dropout = 0.1;
  // Test switch: drop the position term from the input sum.
  bool use_positions = true;

  void validate() const;
};

// Per-token encoder output plus the role metadata needed to slice it.
struct ContextStates {
  Tensor states;  // [N_tok × d_h]
  std::vector<std::size_t> marker_indices;
  std::vector<std::size_t> utterance_ids;
  std::vector<Role> marker_roles;
  std::vector<std::uint8_t> self_mask;
  std::vector<std::uint8_t> other_mask;
  std::size_t content_length = 0;

  std::size_t length() const { return states.rows(); }
  // Token positions of one side, markers included, in order.
  std::vector<std::size_t> positions_of(Role role) const;
  // Marker positions of one side's utterances, oldest first.
  std::vector<std::size_t> markers_of(Role role) const;
};

class Encoder {
 public:
  Encoder(const EncoderConfig& config, const ParamBuilder& pb, Tensor word_embedding);

  // E_w + E_r + E_p for every position of the input.
  Tensor embed(const EncoderInput& input) const;

  // Pre-norm self-attention stack over the embedding sum. PAD keys are
  // masked out. A final layer norm closes a non-empty stack; with zero
  // layers the output is the embedding sum itself.
  ContextStates encode(const EncoderInput& input, const ForwardContext& ctx,
                       std::vector<AttentionTrace>* traces = nullptr) const;

  const EncoderConfig& config() const { return config_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  const Tensor& role_embedding() const { return role_embedding_; }

 private:
  EncoderConfig config_;
  Tensor word_embedding_;
  Tensor role_embedding_;  // [2 × d_h], row 0 self, row 1 other
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
};

}  // namespace empsoa
