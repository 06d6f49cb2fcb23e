#include "empsoa/encoder.hpp"

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

void EncoderConfig::validate() const {
  if (d_h == 0 || heads == 0 || d_h % heads != 0)
    throw ConfigError("encoder d_h=" + std::to_string(d_h) + " must be divisible by heads=" +
                      std::to_string(heads));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder dropout must lie in [0, 1)");
}

std::vector<std::size_t> ContextStates::positions_of(Role role) const {
  const auto& mask = role == Role::kSelf ? self_mask : other_mask;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> ContextStates::markers_of(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < marker_indices.size(); ++i)
    if (marker_roles[i] == role) out.push_back(marker_indices[i]);
  return out;
}

Encoder::Encoder(const EncoderConfig& config, const ParamBuilder& pb, Tensor word_embedding)
    : config_(config), word_embedding_(std::move(word_embedding)) {
  config_.validate();
  if (word_embedding_.cols() != config_.d_h)
    throw ConfigError("word embedding width differs from encoder d_h");
  role_embedding_ = pb.make("role_embedding", {2, config_.d_h}, Init::kNormalSmall);
  for (std::size_t l = 0; l < config_.layers; ++l)
    layers_.push_back(EncoderLayer::create(pb.sub("layer" + std::to_string(l)), config_.d_h, config_.ffn));
  if (config_.layers > 0) final_norm_ = LayerNorm::create(pb.sub("final_norm"), config_.d_h);
}

Tensor Encoder::embed(const EncoderInput& input) const {
  const std::size_t vocab = word_embedding_.rows();
  for (auto id : input.token_ids)
    if (id >= vocab)
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
  for (auto r : input.role_ids)
    if (r > 1) throw ContractError("role id " + std::to_string(r) + " outside {0, 1}");
  Tensor x = add(gather_rows(word_embedding_, input.token_ids), gather_rows(role_embedding_, input.role_ids));
  if (config_.use_positions) {
    const Tensor table = sinusoidal_positions(input.length(), config_.d_h);
    x = add(x, gather_rows(table, input.positions));
  }
  return x;
}

ContextStates Encoder::encode(const EncoderInput& input, const ForwardContext& ctx,
                              std::vector<AttentionTrace>* traces) const {
  if (input.role_ids.size() != input.length() || input.positions.size() != input.length() ||
      input.self_mask.size() != input.length() || input.other_mask.size() != input.length())
    throw ContractError("encoder input arrays disagree in length");
  const std::size_t n = input.length();
  std::vector<std::uint8_t> allowed(n * n);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k) allowed[q * n + k] = !input.is_pad(k);

  Tensor x = ctx.drop(embed(input), config_.dropout);
  for (const auto& layer : layers_) {
    AttentionTrace* trace = nullptr;
    if (traces) trace = &traces->emplace_back();
    const Tensor h = layer.norm_attn(x);
    Tensor a = multi_head_attention(h, h, layer.attn, config_.heads, allowed, true, trace);
    x = add(x, ctx.drop(a, config_.dropout));
    x = add(x, ctx.drop(layer.ffn(layer.norm_ffn(x)), config_.dropout));
  }
  if (!layers_.empty()) x = final_norm_(x);

  ContextStates out;
  out.states = x;
  out.marker_indices = input.marker_indices;
  out.utterance_ids = input.utterance_ids;
  out.marker_roles = input.marker_roles;
  out.self_mask = input.self_mask;
  out.other_mask = input.other_mask;
  out.content_length = input.content_length;
  return out;
}

}  // namespace empsoa
