#pragma once

// The assembled model: context encoder → SOD → SOM → SOG, with the ablation
// and merge/one-sided variants wired in one place.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "empsoa/encoder.hpp"
#include "empsoa/knowledge.hpp"
#include "empsoa/sod.hpp"
#include "empsoa/sog.hpp"
#include "empsoa/som.hpp"

namespace empsoa {

enum class Variant : std::uint8_t { kFull, kNoSog, kNoSom, kNoSod, kEmpNa, kEmpOa, kEmpSa };

inline constexpr std::array<Variant, 7> kAllVariants = {Variant::kFull,  Variant::kNoSog, Variant::kNoSom,
                                                        Variant::kNoSod, Variant::kEmpNa, Variant::kEmpOa,
                                                        Variant::kEmpSa};

std::string_view variant_name(Variant v);  // "full", "no_sog", ...
Variant parse_variant(std::string_view name);  // ConfigError on anything else

struct ModelConfig {
  std::size_t d_h = 300;
  std::size_t d_k = 1024;
  std::size_t heads = 6;        // encoder and decoder self/cross attention
  std::size_t graph_heads = 6;  // SOD graph attention
  std::size_t cross_heads = 6;  // SOM cross attention
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t graph_layers = 2;
  std::size_t ffn = 600;
  double dropout = 0.1;
  std::size_t max_len = 128;
  std::size_t max_steps = 30;
  Variant variant = Variant::kFull;
  EmptySlice empty_slice = EmptySlice::kZero;

  void validate() const;  // ConfigError
  EncoderConfig encoder() const;
  DecoderConfig decoder() const;
};

// A sample turned into ids once, reused every epoch.
struct PreparedSample {
  const DialogueSample* sample = nullptr;
  EncoderInput input;
  std::vector<std::size_t> decoder_input;  // BOS, y_1 .. y_M
  std::vector<std::size_t> targets;        // y_1 .. y_M, EOS
  std::size_t emotion = 0;
};

PreparedSample prepare_sample(const DialogueSample& sample, const Vocabulary& vocab, const EmotionLabels& labels,
                              std::size_t max_len);

// Everything computed before decoding.
struct Perception {
  ContextStates context;
  std::optional<DifferentiatedStates> states;  // absent for no_sod; joint states sit in both halves for emp_na
  std::optional<AwarenessPair> pair;
  std::optional<ModulatedContext> modulated;
  EmotionPerception emotion;
  DecoderMemory memory;
};

struct ModelOutput {
  Perception perception;
  DecoderOutput decoder;
};

class EmpSoaModel {
 public:
  // Parameters are drawn from mt19937_64(seed) in a fixed order. When given,
  // `word_embedding` ([|V| × d_h]) overwrites the random embedding table.
  EmpSoaModel(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed,
              const Tensor* word_embedding = nullptr);
  EmpSoaModel(const EmpSoaModel&) = delete;
  EmpSoaModel& operator=(const EmpSoaModel&) = delete;

  Perception perceive(const PreparedSample& sample, const KnowledgeStore& knowledge, const ForwardContext& ctx) const;
  ModelOutput forward(const PreparedSample& sample, const KnowledgeStore& knowledge, const ForwardContext& ctx) const;
  Generation generate(const PreparedSample& sample, const KnowledgeStore& knowledge,
                      const GenerationConfig& config) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const Encoder& encoder() const { return *encoder_; }
  const SelfOtherDifferentiation& sod() const { return *sod_; }
  const SelfOtherModulation& som() const { return *som_; }
  const Decoder& decoder() const { return *decoder_; }
  const EmotionHead& emotion_head() const { return emotion_head_; }

 private:
  ModelConfig config_;
  ParameterStore params_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<SelfOtherDifferentiation> sod_;
  EmotionHead emotion_head_;
  std::unique_ptr<SelfOtherModulation> som_;
  std::unique_ptr<Decoder> decoder_;
};

}  // namespace empsoa
