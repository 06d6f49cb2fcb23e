#include "empsoa/sog.hpp"

#include <algorithm>
#include <cmath>

#include "empsoa/corpus.hpp"
#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

void DecoderConfig::validate() const {
  if (d_h == 0 || heads == 0 || d_h % heads != 0)
    throw ConfigError("decoder d_h=" + std::to_string(d_h) + " must be divisible by heads=" +
                      std::to_string(heads));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("decoder dropout must lie in [0, 1)");
  if (max_steps == 0) throw ConfigError("max decoding steps must be positive");
}

DecoderLayer DecoderLayer::create(const ParamBuilder& pb, std::size_t d, std::size_t ffn_width) {
  return {LayerNorm::create(pb.sub("norm_self"), d),  AttentionWeights::create(pb.sub("self_attn"), d, true),
          LayerNorm::create(pb.sub("norm_cross"), d), AttentionWeights::create(pb.sub("cross_attn"), d, true),
          LayerNorm::create(pb.sub("norm_ffn"), d),   FeedForward::create(pb.sub("ffn"), d, ffn_width, d)};
}

Decoder::Decoder(const DecoderConfig& config, const ParamBuilder& pb, Tensor word_embedding)
    : config_(config), word_embedding_(std::move(word_embedding)) {
  config_.validate();
  if (word_embedding_.cols() != config_.d_h) throw ConfigError("word embedding width differs from decoder d_h");
  for (std::size_t l = 0; l < config_.layers; ++l)
    layers_.push_back(DecoderLayer::create(pb.sub("layer" + std::to_string(l)), config_.d_h, config_.ffn));
  if (config_.layers > 0) final_norm_ = LayerNorm::create(pb.sub("final_norm"), config_.d_h);
  inject_ = Linear::create(pb.sub("inject"), 3 * config_.d_h, config_.d_h);
  output_ = Linear::create(pb.sub("output"), config_.d_h, word_embedding_.rows());
}

Tensor Decoder::inject(const Tensor& h_t, const AwarenessPair& pair, Tensor* gate) const {
  const std::size_t n = h_t.rows();
  const Tensor S = repeat_rows(pair.S, n), O = repeat_rows(pair.O, n);
  Tensor g = sigmoid(inject_(concat({h_t, S, O}, 1)));
  if (gate) *gate = g;
  return add(h_t, gated_blend(g, S, O));
}

DecoderOutput Decoder::forward(std::span<const std::size_t> prefix, const DecoderMemory& memory,
                               const ForwardContext& ctx, std::vector<AttentionTrace>* traces) const {
  const std::size_t T = prefix.size(), N = memory.states.rows();
  if (T == 0) throw ContractError("decoder prefix is empty");
  for (auto id : prefix)
    if (id >= vocab_size()) throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  if (!memory.key_mask.empty() && memory.key_mask.size() != N)
    throw ContractError("memory key mask length differs from memory rows");

  std::vector<std::uint8_t> self_allowed(T * T, 1);
  if (config_.causal)
    for (std::size_t q = 0; q < T; ++q)
      for (std::size_t k = q + 1; k < T; ++k) self_allowed[q * T + k] = 0;
  std::vector<std::uint8_t> cross_allowed;
  if (!memory.key_mask.empty()) {
    cross_allowed.resize(T * N);
    for (std::size_t q = 0; q < T; ++q) std::copy(memory.key_mask.begin(), memory.key_mask.end(), cross_allowed.begin() + q * N);
  }

  Tensor x = add(gather_rows(word_embedding_, prefix), sinusoidal_positions(T, config_.d_h));
  x = ctx.drop(x, config_.dropout);
  for (const auto& layer : layers_) {
    AttentionTrace* ts = traces ? &traces->emplace_back() : nullptr;
    const Tensor h = layer.norm_self(x);
    x = add(x, ctx.drop(multi_head_attention(h, h, layer.self_attn, config_.heads, self_allowed, true, ts),
                        config_.dropout));
    AttentionTrace* tc = traces ? &traces->emplace_back() : nullptr;
    x = add(x, ctx.drop(multi_head_attention(layer.norm_cross(x), memory.states, layer.cross_attn, config_.heads,
                                             cross_allowed, true, tc),
                        config_.dropout));
    x = add(x, ctx.drop(layer.ffn(layer.norm_ffn(x)), config_.dropout));
  }
  if (!layers_.empty()) x = final_norm_(x);

  DecoderOutput out;
  out.h_t = x;
  out.h = memory.awareness ? inject(x, *memory.awareness, &out.gate) : x;
  out.logits = output_(out.h);
  out.probs = softmax(out.logits);
  return out;
}

Tensor Decoder::decode_step(std::span<const std::size_t> prefix, const DecoderMemory& memory) const {
  if (prefix.empty()) throw ContractError("decoder prefix is empty");
  if (prefix.size() > config_.max_steps)
    throw ContractError("prefix of " + std::to_string(prefix.size()) + " exceeds " +
                        std::to_string(config_.max_steps) + " decoding steps");
  const Tensor probs = forward(prefix, memory, {}).probs;
  return slice(probs, 0, prefix.size() - 1, prefix.size());
}

Tensor generation_loss(const Tensor& probs, std::span<const std::size_t> targets, std::span<const double> weights) {
  if (probs.rows() != targets.size())
    throw DimensionError("generation loss: " + std::to_string(probs.rows()) + " positions vs " +
                         std::to_string(targets.size()) + " targets");
  return cross_entropy(probs, targets, 1e-12, weights);
}

namespace {

// PAD and BOS are never emitted.
bool emittable(std::size_t v) { return v != Vocabulary::kPad && v != Vocabulary::kBos; }

std::size_t argmax(std::span<const double> p) {
  std::size_t best = Vocabulary::kEos;
  for (std::size_t v = 0; v < p.size(); ++v)
    if (emittable(v) && p[v] > p[best]) best = v;
  return best;
}

struct Hypothesis {
  std::vector<std::size_t> prefix;  // BOS-led
  double score = 0.0;
  bool finished = false;
  std::size_t steps = 0;
};

}  // namespace

Generation generate(const StepFn& step, const GenerationConfig& config) {
  if (config.beam_width == 0) throw ConfigError("beam width must be positive");
  Generation out;
  if (config.beam_width == 1) {
    std::vector<std::size_t> prefix = {Vocabulary::kBos};
    while (out.steps < config.max_steps) {
      const Tensor p = step(prefix);
      ++out.steps;
      const std::size_t next = argmax(p.data());
      if (next == Vocabulary::kEos) {
        out.hit_eos = true;
        break;
      }
      prefix.push_back(next);
    }
    out.tokens.assign(prefix.begin() + 1, prefix.end());
    return out;
  }

  std::vector<Hypothesis> beams = {{{Vocabulary::kBos}, 0.0, false, 0}};
  for (std::size_t t = 0; t < config.max_steps; ++t) {
    std::vector<Hypothesis> candidates;
    for (const auto& b : beams) {
      if (b.finished) {
        candidates.push_back(b);
        continue;
      }
      const Tensor p = step(b.prefix);
      const auto probs = p.data();
      for (std::size_t v = 0; v < probs.size(); ++v) {
        if (probs[v] <= 0.0 || !emittable(v)) continue;
        Hypothesis h = b;
        h.score += std::log(probs[v]);
        h.steps += 1;
        if (v == Vocabulary::kEos) h.finished = true;
        else h.prefix.push_back(v);
        candidates.push_back(std::move(h));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
    if (candidates.size() > config.beam_width) candidates.resize(config.beam_width);
    beams = std::move(candidates);
    if (std::all_of(beams.begin(), beams.end(), [](const Hypothesis& h) { return h.finished; })) break;
  }
  const Hypothesis& best = beams.front();
  out.tokens.assign(best.prefix.begin() + 1, best.prefix.end());
  out.steps = best.steps;
  out.hit_eos = best.finished;
  return out;
}

bool causal_mask_check(const std::function<Tensor(std::span<const std::size_t>)>& forward,
                       std::span<const std::size_t> prefix, std::size_t vocab) {
  if (vocab < 2) throw ContractError("causality check needs at least two token ids");
  const Tensor base = forward(prefix);
  const std::size_t cols = base.cols();
  std::vector<std::size_t> changed(prefix.begin(), prefix.end());
  for (std::size_t p = 1; p < prefix.size(); ++p) {
    changed[p] = (prefix[p] + 1) % vocab;
    const Tensor other = forward(changed);
    changed[p] = prefix[p];
    for (std::size_t t = 0; t < p; ++t)
      for (std::size_t j = 0; j < cols; ++j)
        if (other.at(t, j) != base.at(t, j)) return false;
  }
  return true;
}

}  // namespace empsoa
