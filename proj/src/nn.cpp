#include "empsoa/nn.hpp"

#include <cmath>

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

Tensor ForwardContext::drop(const Tensor& x, double rate) const {
  if (!training || rate <= 0.0) return x;
  if (!rng) throw ContractError("training forward without a random generator");
  return dropout(x, rate, *rng);
}

Tensor ParamBuilder::make(const std::string& name, Shape shape, Init init) const {
  return store_->add(prefix_.empty() ? name : prefix_ + "." + name, std::move(shape), init, *rng_);
}

ParamBuilder ParamBuilder::sub(const std::string& name) const {
  return ParamBuilder(*store_, *rng_, prefix_.empty() ? name : prefix_ + "." + name);
}

Linear Linear::create(const ParamBuilder& pb, std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = pb.make("w", {in, out}, Init::kXavier);
  if (with_bias) l.bias = pb.make("b", {out}, Init::kZeros);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

LayerNorm LayerNorm::create(const ParamBuilder& pb, std::size_t width) {
  return {pb.make("gamma", {width}, Init::kOnes), pb.make("beta", {width}, Init::kZeros)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

FeedForward FeedForward::create(const ParamBuilder& pb, std::size_t width_in, std::size_t hidden,
                                std::size_t width_out) {
  return {Linear::create(pb.sub("in"), width_in, hidden), Linear::create(pb.sub("out"), hidden, width_out)};
}

Tensor FeedForward::operator()(const Tensor& x) const { return out(relu(in(x))); }

AttentionWeights AttentionWeights::create(const ParamBuilder& pb, std::size_t d, bool with_output) {
  AttentionWeights w;
  w.wq = pb.make("wq", {d, d}, Init::kXavier);
  w.wk = pb.make("wk", {d, d}, Init::kXavier);
  w.wv = pb.make("wv", {d, d}, Init::kXavier);
  if (with_output) w.wo = pb.make("wo", {d, d}, Init::kXavier);
  return w;
}

Tensor multi_head_attention(const Tensor& query_in, const Tensor& key_in, const AttentionWeights& w,
                            std::size_t heads, std::span<const std::uint8_t> allowed, bool scaled,
                            AttentionTrace* trace) {
  const std::size_t d = w.wq.cols();
  if (heads == 0 || d % heads != 0)
    throw ContractError("attention width " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
  const std::size_t nq = query_in.rows(), nk = key_in.rows();
  if (!allowed.empty() && allowed.size() != nq * nk)
    throw DimensionError("attention mask has " + std::to_string(allowed.size()) + " entries for " +
                         std::to_string(nq) + "x" + std::to_string(nk) + " scores");
  if (nk == 0) throw ContractError("attention over zero keys");
  const std::vector<std::uint8_t> all(allowed.empty() ? nq * nk : 0, 1);
  const std::span<const std::uint8_t> mask = allowed.empty() ? std::span<const std::uint8_t>(all) : allowed;

  const std::size_t dh = d / heads;
  const double factor = scaled ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  Tensor q = matmul(query_in, w.wq);
  Tensor k = matmul(key_in, w.wk);
  Tensor v = matmul(key_in, w.wv);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
    Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
    Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = matmul(qh, transpose(kh));
    if (scaled) scores = scale(scores, factor);
    Tensor probs = masked_softmax(scores, mask);
    if (trace) trace->heads.push_back(probs);
    outs.push_back(matmul(probs, vh));
  }
  Tensor joined = heads == 1 ? outs.front() : concat(outs, 1);
  return w.wo.defined() ? matmul(joined, w.wo) : joined;
}

Tensor sinusoidal_positions(std::size_t n, std::size_t d) {
  std::vector<double> table(n * d);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double exponent = static_cast<double>(i - i % 2) / static_cast<double>(d);
      const double angle = static_cast<double>(p) / std::pow(10000.0, exponent);
      table[p * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({n, d}, std::move(table));
}

EncoderLayer EncoderLayer::create(const ParamBuilder& pb, std::size_t d, std::size_t ffn_width) {
  return {LayerNorm::create(pb.sub("norm_attn"), d), AttentionWeights::create(pb.sub("attn"), d, true),
          LayerNorm::create(pb.sub("norm_ffn"), d), FeedForward::create(pb.sub("ffn"), d, ffn_width, d)};
}

Tensor select_rows(const Tensor& original, const Tensor& updated, const std::vector<bool>& keep) {
  const std::size_t n = original.rows();
  if (updated.rows() != n || keep.size() != n)
    throw DimensionError("select_rows: row counts differ");
  bool any_old = false, any_new = false;
  for (bool k : keep) (k ? any_new : any_old) = true;
  if (!any_old) return updated;
  if (!any_new) return original;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = keep[i] ? n + i : i;
  return gather_rows(concat({original, updated}, 0), idx);
}

}  // namespace empsoa
