#include "empsoa/sod.hpp"

#include <algorithm>

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

GraphTopology awareness_topology(std::size_t k) {
  GraphTopology t;
  t.utterances = k;
  t.kinds.insert(t.kinds.end(), k, NodeKind::kUtterance);
  t.kinds.insert(t.kinds.end(), k, NodeKind::kEmotionalKnowledge);
  t.kinds.insert(t.kinds.end(), k, NodeKind::kCognitiveKnowledge);
  t.kinds.push_back(NodeKind::kEmotionalState);
  t.kinds.push_back(NodeKind::kCognitiveState);
  const std::size_t u = 0, e = k, c = 2 * k, se = 3 * k, sc = 3 * k + 1;
  for (std::size_t i = 0; i + 1 < k; ++i) t.edges.emplace_back(u + i, u + i + 1);
  for (std::size_t i = 0; i < k; ++i) {
    t.edges.emplace_back(u + i, e + i);
    t.edges.emplace_back(u + i, c + i);
  }
  for (std::size_t i = 0; i < k; ++i) {
    t.edges.emplace_back(u + i, se);
    t.edges.emplace_back(e + i, se);
  }
  for (std::size_t i = 0; i < k; ++i) {
    t.edges.emplace_back(u + i, sc);
    t.edges.emplace_back(c + i, sc);
  }
  return t;
}

std::vector<std::uint8_t> GraphTopology::adjacency() const {
  const std::size_t n = node_count();
  std::vector<std::uint8_t> adj(n * n, 0);
  for (auto [a, b] : edges) {
    adj[a * n + b] = 1;
    adj[b * n + a] = 1;
  }
  return adj;
}

std::vector<bool> GraphTopology::has_neighbor() const {
  std::vector<bool> out(node_count(), false);
  for (auto [a, b] : edges) out[a] = out[b] = true;
  return out;
}

Tensor AwarenessGraph::emotional_state() const {
  const std::size_t i = topology.emotional_state();
  return slice(nodes, 0, i, i + 1);
}

Tensor AwarenessGraph::cognitive_state() const {
  const std::size_t i = topology.cognitive_state();
  return slice(nodes, 0, i, i + 1);
}

GraphAttentionLayer GraphAttentionLayer::create(const ParamBuilder& pb, std::size_t d) {
  return {AttentionWeights::create(pb.sub("attn"), d, false), LayerNorm::create(pb.sub("norm"), d)};
}

Tensor graph_attention_layer(const Tensor& nodes, const GraphTopology& topology, const GraphAttentionLayer& layer,
                             std::size_t heads, AttentionTrace* trace) {
  if (nodes.rows() != topology.node_count())
    throw DimensionError("graph has " + std::to_string(topology.node_count()) + " nodes but " +
                         std::to_string(nodes.rows()) + " node vectors");
  const auto keep = topology.has_neighbor();
  if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; })) return nodes;
  const auto adj = topology.adjacency();
  Tensor aggregated = multi_head_attention(nodes, nodes, layer.weights, heads, adj, false, trace);
  Tensor updated = layer.norm(add(nodes, aggregated));
  return select_rows(nodes, updated, keep);
}

SelfOtherDifferentiation::SelfOtherDifferentiation(const SodConfig& config, std::size_t d_h, std::size_t d_k,
                                                   const ParamBuilder& pb)
    : config_(config), d_h_(d_h) {
  if (config_.layers == 0) throw ConfigError("graph attention needs at least one layer");
  if (config_.heads == 0 || d_h % config_.heads != 0)
    throw ConfigError("graph attention heads must divide d_h");
  const ParamBuilder kp = pb.sub("knowledge_proj");
  projection_.weight = kp.make("w", {d_k, d_h}, Init::kXavier);
  projection_.bias = kp.make("b", {d_h}, Init::kZeros);
  auto states = [&](const char* name) {
    const ParamBuilder sp = pb.sub(std::string("state_") + name);
    return StateNodes{sp.make("emotional", {1, d_h}, Init::kNormalSmall),
                      sp.make("cognitive", {1, d_h}, Init::kNormalSmall)};
  };
  self_state_ = states("self");
  other_state_ = states("other");
  joint_state_ = states("joint");
  for (std::size_t l = 0; l < config_.layers; ++l)
    layers_.push_back(GraphAttentionLayer::create(pb.sub("layer" + std::to_string(l)), d_h));
}

const StateNodes& SelfOtherDifferentiation::state_nodes(GraphSide side) const {
  switch (side) {
    case GraphSide::kSelf: return self_state_;
    case GraphSide::kOther: return other_state_;
    case GraphSide::kJoint: return joint_state_;
  }
  return joint_state_;
}

AwarenessGraph SelfOtherDifferentiation::build_graph(GraphSide side, const DialogueSample& sample,
                                                     const ContextStates& context,
                                                     const KnowledgeStore& store) const {
  AwarenessGraph g;
  g.side = side;
  std::vector<std::size_t> marker_rows;
  for (std::size_t m = 0; m < context.marker_indices.size(); ++m) {
    const Role role = context.marker_roles[m];
    const bool mine = side == GraphSide::kJoint || (side == GraphSide::kSelf) == (role == Role::kSelf);
    if (!mine) continue;
    marker_rows.push_back(context.marker_indices[m]);
    g.utterance_ids.push_back(context.utterance_ids[m]);
  }
  const std::size_t k = marker_rows.size();
  g.topology = awareness_topology(k);
  const StateNodes& state = state_nodes(side);
  if (k == 0) {
    g.nodes = concat({state.emotional, state.cognitive}, 0);
    return g;
  }
  std::vector<Tensor> emotional, cognitive;
  for (auto u : g.utterance_ids) {
    auto init = node_init_vectors(store, projection_, sample, u);
    emotional.push_back(std::move(init.emotional));
    cognitive.push_back(std::move(init.cognitive));
  }
  std::vector<Tensor> parts = {gather_rows(context.states, marker_rows)};
  parts.insert(parts.end(), emotional.begin(), emotional.end());
  parts.insert(parts.end(), cognitive.begin(), cognitive.end());
  parts.push_back(state.emotional);
  parts.push_back(state.cognitive);
  g.nodes = concat(parts, 0);
  return g;
}

std::pair<AwarenessGraph, AwarenessGraph> SelfOtherDifferentiation::build_graphs(
    const DialogueSample& sample, const ContextStates& context, const KnowledgeStore& store) const {
  return {build_graph(GraphSide::kSelf, sample, context, store),
          build_graph(GraphSide::kOther, sample, context, store)};
}

AwarenessGraph SelfOtherDifferentiation::propagate(const AwarenessGraph& graph, std::size_t layers,
                                                   std::vector<AttentionTrace>* traces) const {
  AwarenessGraph out = graph;
  const std::size_t n = std::min(layers, layers_.size());
  for (std::size_t l = 0; l < n; ++l) {
    AttentionTrace* trace = traces ? &traces->emplace_back() : nullptr;
    out.nodes = graph_attention_layer(out.nodes, out.topology, layers_[l], config_.heads, trace);
  }
  return out;
}

DifferentiatedStates SelfOtherDifferentiation::differentiate(const AwarenessGraph& self_graph,
                                                             const AwarenessGraph& other_graph) const {
  const AwarenessGraph s = propagate(self_graph);
  const AwarenessGraph o = propagate(other_graph);
  return {s.emotional_state(), s.cognitive_state(), o.emotional_state(), o.cognitive_state()};
}

EmotionHead EmotionHead::create(const ParamBuilder& pb, std::size_t d_h) {
  return {pb.make("w", {d_h, EmotionLabels::kCount}, Init::kXavier)};
}

std::size_t EmotionPerception::predicted() const {
  const auto p = probs.data();
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

EmotionPerception perceive_emotion(const ContextStates& context, const Tensor& other_emotional,
                                   const EmotionHead& head) {
  const auto markers = context.markers_of(Role::kOther);
  if (markers.empty()) throw ContractError("emotion perception needs at least one [OTH] marker");
  EmotionPerception out;
  out.h_e = mean_rows(gather_rows(context.states, markers));
  if (other_emotional.defined()) out.h_e = add(out.h_e, other_emotional);
  out.logits = matmul(out.h_e, head.weight);
  out.probs = softmax(out.logits);
  return out;
}

Tensor emotion_loss(const Tensor& probs, std::size_t label) {
  if (label >= EmotionLabels::kCount) throw ContractError("emotion label outside [0, 32)");
  const std::size_t target[] = {label};
  return cross_entropy(reshape(probs, {1, probs.size()}), target, 1e-12);
}

}  // namespace empsoa
