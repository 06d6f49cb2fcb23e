#pragma once

// Self-other differentiation: one heterogeneous awareness graph per side,
// multi-head graph attention over each graph independently, and emotion
// perception from the other's emotional state.

#include <utility>
#include <vector>

#include "empsoa/corpus.hpp"
#include "empsoa/encoder.hpp"
#include "empsoa/knowledge.hpp"
#include "empsoa/nn.hpp"

namespace empsoa {

struct SodConfig {
  std::size_t layers = 2;
  std::size_t heads = 6;
};

enum class NodeKind : std::uint8_t {
  kUtterance,
  kEmotionalKnowledge,
  kCognitiveKnowledge,
  kEmotionalState,
  kCognitiveState,
};

enum class GraphSide : std::uint8_t { kSelf, kOther, kJoint };

// Node layout for k utterances: u_0..u_{k−1}, e_0..e_{k−1}, c_0..c_{k−1},
// then the emotional and the cognitive state node. Edges are undirected:
//   u_i – u_{i+1}          adjacent utterances            k − 1
//   u_i – e_i, u_i – c_i   utterance to its knowledge     2k
//   emo state – u_i, e_i   emotional state                2k
//   cog state – u_i, c_i   cognitive state                2k
// giving 3k + 2 nodes and 7k − 1 edges (none when k = 0). No self loops.
struct GraphTopology {
  std::size_t utterances = 0;
  std::vector<NodeKind> kinds;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  std::size_t node_count() const { return kinds.size(); }
  std::size_t edge_count() const { return edges.size(); }
  std::size_t emotional_state() const { return 3 * utterances; }
  std::size_t cognitive_state() const { return 3 * utterances + 1; }
  std::vector<std::uint8_t> adjacency() const;  // n×n, symmetric
  std::vector<bool> has_neighbor() const;
};

GraphTopology awareness_topology(std::size_t utterances);

struct AwarenessGraph {
  GraphSide side = GraphSide::kSelf;
  GraphTopology topology;
  std::vector<std::size_t> utterance_ids;  // dialogue utterance behind each u node
  Tensor nodes;                            // [n × d_h]

  Tensor emotional_state() const;  // [1 × d_h]
  Tensor cognitive_state() const;
};

struct GraphAttentionLayer {
  AttentionWeights weights;  // wq, wk, wv; heads concatenate without an output map
  LayerNorm norm;

  static GraphAttentionLayer create(const ParamBuilder& pb, std::size_t d);
};

// One layer: for every node with neighbours,
//   v_i ← LayerNorm(v_i + ‖_h Σ_{j∈N(i)} α^h_ij W^h_v v_j),
//   α^h_ij = softmax over j ∈ N(i) of (W^h_q v_i)ᵀ(W^h_k v_j).
// Nodes without neighbours are passed through unchanged.
Tensor graph_attention_layer(const Tensor& nodes, const GraphTopology& topology,
                             const GraphAttentionLayer& layer, std::size_t heads,
                             AttentionTrace* trace = nullptr);

struct StateNodes {
  Tensor emotional;  // [1 × d_h]
  Tensor cognitive;
};

struct DifferentiatedStates {
  Tensor self_emotional, self_cognitive, other_emotional, other_cognitive;
};

class SelfOtherDifferentiation {
 public:
  SelfOtherDifferentiation(const SodConfig& config, std::size_t d_h, std::size_t d_k, const ParamBuilder& pb);

  // Graph for one side (or both sides merged, for kJoint). Utterance nodes
  // take the encoder state at each utterance's marker token; knowledge nodes
  // come from node_init_vectors; state nodes are the learned state vectors.
  AwarenessGraph build_graph(GraphSide side, const DialogueSample& sample, const ContextStates& context,
                             const KnowledgeStore& store) const;
  std::pair<AwarenessGraph, AwarenessGraph> build_graphs(const DialogueSample& sample,
                                                         const ContextStates& context,
                                                         const KnowledgeStore& store) const;

  // Runs `layers` graph-attention layers (all configured layers by default).
  AwarenessGraph propagate(const AwarenessGraph& graph, std::size_t layers = SIZE_MAX,
                           std::vector<AttentionTrace>* traces = nullptr) const;

  // Self and other graphs are propagated independently.
  DifferentiatedStates differentiate(const AwarenessGraph& self_graph, const AwarenessGraph& other_graph) const;

  const SodConfig& config() const { return config_; }
  const KnowledgeProjection& projection() const { return projection_; }
  const StateNodes& state_nodes(GraphSide side) const;
  const std::vector<GraphAttentionLayer>& layers() const { return layers_; }

 private:
  SodConfig config_;
  std::size_t d_h_;
  KnowledgeProjection projection_;
  StateNodes self_state_, other_state_, joint_state_;
  std::vector<GraphAttentionLayer> layers_;
};

struct EmotionHead {
  Tensor weight;  // [d_h × 32], no bias

  static EmotionHead create(const ParamBuilder& pb, std::size_t d_h);
};

struct EmotionPerception {
  Tensor h_e;     // [1 × d_h]
  Tensor logits;  // [1 × 32]
  Tensor probs;   // [1 × 32]
  std::size_t predicted() const;
};

// h_e = mean of the [OTH] marker states (+ the other's emotional state when
// given); P_emo = softmax(h_e · W^e). ContractError without any [OTH] marker.
EmotionPerception perceive_emotion(const ContextStates& context, const Tensor& other_emotional,
                                   const EmotionHead& head);

// −log max(P_emo(label), 1e−12).
Tensor emotion_loss(const Tensor& probs, std::size_t label);

}  // namespace empsoa
