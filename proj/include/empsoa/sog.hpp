#pragma once

// Self-other generation: a pre-norm transformer decoder whose cross-attention
// reads the modulated context, a per-position gate that injects S and O into
// the hidden state, and an untied softmax over the vocabulary.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "empsoa/nn.hpp"
#include "empsoa/som.hpp"

namespace empsoa {

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 6;
  std::size_t d_h = 300;
  std::size_t ffn = 600;
  double dropout = 0.1;
  std::size_t max_steps = 30;
  // Negative-control switch for the causality check; always true in models.
  bool causal = true;

  void validate() const;
};

struct DecoderLayer {
  LayerNorm norm_self;
  AttentionWeights self_attn;
  LayerNorm norm_cross;
  AttentionWeights cross_attn;
  LayerNorm norm_ffn;
  FeedForward ffn;

  static DecoderLayer create(const ParamBuilder& pb, std::size_t d, std::size_t ffn_width);
};

// What the decoder reads: the memory it cross-attends to, which memory rows
// are real tokens, and the awareness pair to inject (absent: h = h_t).
struct DecoderMemory {
  Tensor states;                      // [N × d_h]
  std::vector<std::uint8_t> key_mask; // N entries, 1 = attend; empty = all
  std::optional<AwarenessPair> awareness;
};

struct DecoderOutput {
  Tensor h_t;     // [T × d_h] decoder stack output
  Tensor h;       // after injection
  Tensor gate;    // undefined without injection
  Tensor logits;  // [T × |V|]
  Tensor probs;
};

class Decoder {
 public:
  Decoder(const DecoderConfig& config, const ParamBuilder& pb, Tensor word_embedding);

  // Teacher-forced pass over a BOS-led prefix; row t predicts token t + 1.
  DecoderOutput forward(std::span<const std::size_t> prefix, const DecoderMemory& memory,
                        const ForwardContext& ctx, std::vector<AttentionTrace>* traces = nullptr) const;

  // Distribution for the token after `prefix` [1 × |V|]. ContractError when
  // the prefix is empty or longer than max_steps.
  Tensor decode_step(std::span<const std::size_t> prefix, const DecoderMemory& memory) const;

  // h = h_t + g ⊙ S + (1 − g) ⊙ O, g = σ([h_t; S; O] W^f + b^f), S and O
  // broadcast over rows.
  Tensor inject(const Tensor& h_t, const AwarenessPair& pair, Tensor* gate = nullptr) const;

  const DecoderConfig& config() const { return config_; }
  const Linear& output() const { return output_; }
  const std::vector<DecoderLayer>& layers() const { return layers_; }
  std::size_t vocab_size() const { return word_embedding_.rows(); }

 private:
  DecoderConfig config_;
  Tensor word_embedding_;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
  Linear inject_;
  Linear output_;
};

// Mean over target positions of −log P(y_t); weights (one per vocabulary id)
// turn it into the weighted variant used by the diversity term.
Tensor generation_loss(const Tensor& probs, std::span<const std::size_t> targets,
                       std::span<const double> weights = {});

struct GenerationConfig {
  std::size_t beam_width = 1;  // 1 = greedy; PAD and BOS are never emitted
  std::size_t max_steps = 30;
};

struct Generation {
  std::vector<std::size_t> tokens;  // EOS excluded
  std::size_t steps = 0;            // decoder calls made for the returned hypothesis
  bool hit_eos = false;
};

// Step function: distribution [1 × |V|] for the token following a BOS-led prefix.
using StepFn = std::function<Tensor(std::span<const std::size_t>)>;

// Greedy or beam decoding from BOS until EOS or max_steps tokens. Beam search
// ranks hypotheses by summed log-probability; ties keep the earlier one.
Generation generate(const StepFn& step, const GenerationConfig& config);

// True iff every row t of forward(prefix) is unchanged when any token at a
// position > t is replaced. `vocab` bounds the replacement ids.
bool causal_mask_check(const std::function<Tensor(std::span<const std::size_t>)>& forward,
                       std::span<const std::size_t> prefix, std::size_t vocab);

}  // namespace empsoa
