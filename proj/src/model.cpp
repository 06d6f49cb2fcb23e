#include "empsoa/model.hpp"

#include <algorithm>

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

namespace {
constexpr std::array<std::string_view, 7> kVariantNames = {"full",   "no_sog", "no_som", "no_sod",
                                                           "emp_na", "emp_oa", "emp_sa"};
}

std::string_view variant_name(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

Variant parse_variant(std::string_view name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i)
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected full, no_sog, no_som, no_sod, emp_na, emp_oa or emp_sa)");
}

void ModelConfig::validate() const {
  encoder().validate();
  decoder().validate();
  if (d_k == 0) throw ConfigError("d_k must be positive");
  if (graph_heads == 0 || d_h % graph_heads != 0) throw ConfigError("graph_heads must divide d_h");
  if (cross_heads == 0 || d_h % cross_heads != 0) throw ConfigError("cross_heads must divide d_h");
  if (graph_layers == 0) throw ConfigError("graph_layers must be positive");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
}

EncoderConfig ModelConfig::encoder() const {
  EncoderConfig c;
  c.layers = encoder_layers;
  c.heads = heads;
  c.d_h = d_h;
  c.ffn = ffn;
  c.dropout = dropout;
  return c;
}

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig c;
  c.layers = decoder_layers;
  c.heads = heads;
  c.d_h = d_h;
  c.ffn = ffn;
  c.dropout = dropout;
  c.max_steps = max_steps;
  return c;
}

PreparedSample prepare_sample(const DialogueSample& sample, const Vocabulary& vocab, const EmotionLabels& labels,
                              std::size_t max_len) {
  PreparedSample p;
  p.sample = &sample;
  p.input = assemble_encoder_input(sample, vocab, max_len);
  p.targets = response_targets(sample, vocab);
  p.decoder_input.push_back(Vocabulary::kBos);
  p.decoder_input.insert(p.decoder_input.end(), p.targets.begin(), p.targets.end() - 1);
  p.emotion = labels.index_of(sample.emotion);
  return p;
}

EmpSoaModel::EmpSoaModel(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed,
                         const Tensor* word_embedding)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  ParamBuilder pb(params_, rng);
  Tensor words = pb.make("embedding.word", {vocab_size, config_.d_h}, Init::kNormalSmall);
  if (word_embedding) {
    if (word_embedding->shape() != words.shape())
      throw DimensionError("pretrained embedding " + shape_string(word_embedding->shape()) + " vs " +
                           shape_string(words.shape()));
    std::ranges::copy(word_embedding->data(), words.mutable_data().begin());
  }
  encoder_ = std::make_unique<Encoder>(config_.encoder(), pb.sub("encoder"), words);
  sod_ = std::make_unique<SelfOtherDifferentiation>(SodConfig{config_.graph_layers, config_.graph_heads},
                                                    config_.d_h, config_.d_k, pb.sub("sod"));
  emotion_head_ = EmotionHead::create(pb.sub("emotion"), config_.d_h);
  som_ = std::make_unique<SelfOtherModulation>(SomConfig{config_.cross_heads, config_.empty_slice}, config_.d_h, pb.sub("som"));
  decoder_ = std::make_unique<Decoder>(config_.decoder(), pb.sub("decoder"), words);
}

Perception EmpSoaModel::perceive(const PreparedSample& sample, const KnowledgeStore& knowledge,
                                 const ForwardContext& ctx) const {
  if (!sample.sample) throw ContractError("prepared sample has no source dialogue");
  if (knowledge.d_k() != config_.d_k)
    throw ConfigError("knowledge d_k=" + std::to_string(knowledge.d_k()) + " but model expects " +
                      std::to_string(config_.d_k));
  const Variant v = config_.variant;
  Perception p;
  p.context = encoder_->encode(sample.input, ctx);
  p.memory.states = p.context.states;
  p.memory.key_mask.assign(p.context.length(), 0);
  std::fill_n(p.memory.key_mask.begin(), p.context.content_length, 1);

  if (v == Variant::kNoSod) {
    p.emotion = perceive_emotion(p.context, Tensor{}, emotion_head_);
    return p;
  }

  const DialogueSample& dialogue = *sample.sample;
  if (v == Variant::kEmpNa) {
    const auto joint = sod_->propagate(sod_->build_graph(GraphSide::kJoint, dialogue, p.context, knowledge));
    const Tensor je = joint.emotional_state(), jc = joint.cognitive_state();
    p.states = DifferentiatedStates{je, jc, je, jc};
  } else {
    DifferentiatedStates s;
    if (v != Variant::kEmpOa) {
      const auto g = sod_->propagate(sod_->build_graph(GraphSide::kSelf, dialogue, p.context, knowledge));
      s.self_emotional = g.emotional_state();
      s.self_cognitive = g.cognitive_state();
    }
    const auto g = sod_->propagate(sod_->build_graph(GraphSide::kOther, dialogue, p.context, knowledge));
    s.other_emotional = g.emotional_state();
    s.other_cognitive = g.cognitive_state();
    p.states = s;
  }
  p.emotion = perceive_emotion(p.context, p.states->other_emotional, emotion_head_);
  if (v == Variant::kNoSom) return p;

  const auto& s = *p.states;
  AwarenessPair pair;
  switch (v) {
    case Variant::kEmpNa:  // joint states sit in the other slots
    case Variant::kEmpOa:
      pair.O = som_->fuse_other(s.other_emotional, s.other_cognitive, &pair.gate_o);
      pair.S = pair.O;
      break;
    case Variant::kEmpSa:
      pair.S = som_->fuse_self(s.self_emotional, s.self_cognitive, &pair.gate_s);
      pair.O = pair.S;
      break;
    default:
      pair = som_->fuse_states(s.self_emotional, s.self_cognitive, s.other_emotional, s.other_cognitive);
  }
  p.pair = pair;
  p.modulated = som_->modulate(p.context, som_->refine_context(p.context, pair));
  p.memory.states = p.modulated->C_so;
  if (v != Variant::kNoSog) p.memory.awareness = pair;
  return p;
}

ModelOutput EmpSoaModel::forward(const PreparedSample& sample, const KnowledgeStore& knowledge,
                                 const ForwardContext& ctx) const {
  ModelOutput out;
  out.perception = perceive(sample, knowledge, ctx);
  out.decoder = decoder_->forward(sample.decoder_input, out.perception.memory, ctx);
  return out;
}

Generation EmpSoaModel::generate(const PreparedSample& sample, const KnowledgeStore& knowledge,
                                 const GenerationConfig& config) const {
  const Perception p = perceive(sample, knowledge, {});
  GenerationConfig capped = config;
  capped.max_steps = std::min(config.max_steps, config_.max_steps);
  return empsoa::generate([&](std::span<const std::size_t> prefix) { return decoder_->decode_step(prefix, p.memory); },
                          capped);
}

}  // namespace empsoa
