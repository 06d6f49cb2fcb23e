#pragma once

// Self-other modulation: gate each side's emotional and cognitive states into
// one awareness vector, refine that side's context tokens with it, and let the
// full context attend to both refined slices before a final gate.

#include "empsoa/encoder.hpp"
#include "empsoa/nn.hpp"

namespace empsoa {

// g ⊙ a + (1 − g) ⊙ b
Tensor gated_blend(const Tensor& g, const Tensor& a, const Tensor& b);

struct AwarenessPair {
  Tensor S;  // [1 × d_h]
  Tensor O;
  Tensor gate_s;  // undefined when S was not fused (variants)
  Tensor gate_o;
};

struct RefinedContext {
  Tensor self;   // [n_self × d_h]; zero rows when the self never spoke
  Tensor other;  // [n_other × d_h]
};

struct ModulatedContext {
  Tensor C_so;  // [N_tok × d_h]
  Tensor C_s, C_o;
  Tensor gate;
};

// What an empty slice (no self utterance yet) contributes to C^so.
//   kZero:   C^x is all zeros and the gate still applies.
//   kMirror: C^x copies the non-empty branch, so C^so is that branch.
enum class EmptySlice : std::uint8_t { kZero, kMirror };

std::string_view empty_slice_name(EmptySlice e);
EmptySlice parse_empty_slice(std::string_view name);  // ConfigError on anything else

struct SomConfig {
  std::size_t heads = 6;
  EmptySlice empty_slice = EmptySlice::kZero;
};

class SelfOtherModulation {
 public:
  SelfOtherModulation(const SomConfig& config, std::size_t d_h, const ParamBuilder& pb);

  // gate = σ([e; c] W + b); result = gate ⊙ e + (1 − gate) ⊙ c.
  Tensor fuse_self(const Tensor& emotional, const Tensor& cognitive, Tensor* gate = nullptr) const;
  Tensor fuse_other(const Tensor& emotional, const Tensor& cognitive, Tensor* gate = nullptr) const;
  AwarenessPair fuse_states(const Tensor& self_emotional, const Tensor& self_cognitive,
                            const Tensor& other_emotional, const Tensor& other_cognitive) const;

  // Per token of a side's slice (markers included): FFN([awareness ; H[i]]).
  RefinedContext refine_context(const ContextStates& context, const AwarenessPair& pair) const;

  // C^x = LayerNorm(H + CrossAtt(H, H̃^x)) with queries from H^so; an empty
  // slice is handled per SomConfig::empty_slice. C^so = g ⊙ C^s + (1 − g) ⊙ C^o.
  ModulatedContext modulate(const ContextStates& context, const RefinedContext& refined,
                            std::vector<AttentionTrace>* traces = nullptr) const;

  std::size_t heads() const { return config_.heads; }

 private:
  Tensor cross(const Tensor& h, const Tensor& slice, const AttentionWeights& w, const LayerNorm& norm,
               AttentionTrace* trace) const;

  SomConfig config_;
  std::size_t d_h_;
  Linear fuse_s_, fuse_o_, gate_m_;
  FeedForward ffn_s_, ffn_o_;
  AttentionWeights cross_s_, cross_o_;
  LayerNorm norm_s_, norm_o_;
};

}  // namespace empsoa
