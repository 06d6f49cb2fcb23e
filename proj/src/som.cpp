#include "empsoa/som.hpp"

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

Tensor gated_blend(const Tensor& g, const Tensor& a, const Tensor& b) {
  return add(mul(g, a), mul(one_minus(g), b));
}

std::string_view empty_slice_name(EmptySlice e) { return e == EmptySlice::kZero ? "zero" : "mirror"; }

EmptySlice parse_empty_slice(std::string_view name) {
  if (name == "zero") return EmptySlice::kZero;
  if (name == "mirror") return EmptySlice::kMirror;
  throw ConfigError("unknown empty_slice '" + std::string(name) + "' (expected zero or mirror)");
}

SelfOtherModulation::SelfOtherModulation(const SomConfig& config, std::size_t d_h, const ParamBuilder& pb)
    : config_(config), d_h_(d_h) {
  if (config_.heads == 0 || d_h % config_.heads != 0)
    throw ConfigError("modulation heads must divide d_h");
  fuse_s_ = Linear::create(pb.sub("fuse_self"), 2 * d_h, d_h);
  fuse_o_ = Linear::create(pb.sub("fuse_other"), 2 * d_h, d_h);
  ffn_s_ = FeedForward::create(pb.sub("ffn_self"), 2 * d_h, d_h, d_h);
  ffn_o_ = FeedForward::create(pb.sub("ffn_other"), 2 * d_h, d_h, d_h);
  cross_s_ = AttentionWeights::create(pb.sub("cross_self"), d_h, true);
  cross_o_ = AttentionWeights::create(pb.sub("cross_other"), d_h, true);
  norm_s_ = LayerNorm::create(pb.sub("norm_self"), d_h);
  norm_o_ = LayerNorm::create(pb.sub("norm_other"), d_h);
  gate_m_ = Linear::create(pb.sub("gate"), 2 * d_h, d_h);
}

namespace {

Tensor fuse(const Linear& gate_map, const Tensor& e, const Tensor& c, Tensor* gate) {
  Tensor g = sigmoid(gate_map(concat({e, c}, 1)));
  if (gate) *gate = g;
  return gated_blend(g, e, c);
}

}  // namespace

Tensor SelfOtherModulation::fuse_self(const Tensor& e, const Tensor& c, Tensor* gate) const {
  return fuse(fuse_s_, e, c, gate);
}

Tensor SelfOtherModulation::fuse_other(const Tensor& e, const Tensor& c, Tensor* gate) const {
  return fuse(fuse_o_, e, c, gate);
}

AwarenessPair SelfOtherModulation::fuse_states(const Tensor& se, const Tensor& sc, const Tensor& oe,
                                               const Tensor& oc) const {
  AwarenessPair p;
  p.S = fuse_self(se, sc, &p.gate_s);
  p.O = fuse_other(oe, oc, &p.gate_o);
  return p;
}

RefinedContext SelfOtherModulation::refine_context(const ContextStates& context, const AwarenessPair& pair) const {
  auto refine = [&](Role role, const Tensor& awareness, const FeedForward& ffn) {
    const auto pos = context.positions_of(role);
    if (pos.empty()) return Tensor::zeros({0, d_h_});
    const Tensor h = gather_rows(context.states, pos);
    return ffn(concat({repeat_rows(awareness, pos.size()), h}, 1));
  };
  return {refine(Role::kSelf, pair.S, ffn_s_), refine(Role::kOther, pair.O, ffn_o_)};
}

Tensor SelfOtherModulation::cross(const Tensor& h, const Tensor& slice, const AttentionWeights& w,
                                  const LayerNorm& norm, AttentionTrace* trace) const {
  if (slice.rows() == 0) return Tensor::zeros({h.rows(), d_h_});
  return norm(add(h, multi_head_attention(h, slice, w, config_.heads, {}, true, trace)));
}

ModulatedContext SelfOtherModulation::modulate(const ContextStates& context, const RefinedContext& refined,
                                               std::vector<AttentionTrace>* traces) const {
  if (refined.self.rows() == 0 && refined.other.rows() == 0)
    throw ContractError("modulation needs a non-empty self or other slice");
  AttentionTrace *ts = nullptr, *to = nullptr;
  if (traces) {
    traces->resize(traces->size() + 2);
    ts = &traces->end()[-2];
    to = &traces->end()[-1];
  }
  ModulatedContext m;
  m.C_s = cross(context.states, refined.self, cross_s_, norm_s_, ts);
  m.C_o = cross(context.states, refined.other, cross_o_, norm_o_, to);
  const bool mirror = config_.empty_slice == EmptySlice::kMirror;
  if (mirror && refined.self.rows() == 0) m.C_s = m.C_o;
  if (mirror && refined.other.rows() == 0) m.C_o = m.C_s;
  m.gate = sigmoid(gate_m_(concat({m.C_s, m.C_o}, 1)));
  // A mirrored blend would only equal the branch up to rounding; take it as is.
  const bool one_sided = refined.self.rows() == 0 || refined.other.rows() == 0;
  m.C_so = mirror && one_sided ? m.C_s : gated_blend(m.gate, m.C_s, m.C_o);
  return m;
}

}  // namespace empsoa
