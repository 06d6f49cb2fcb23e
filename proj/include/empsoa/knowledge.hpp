#pragma once

// Commonsense vectors per (dialogue, utterance, relation), as exported by the
// offline COMET pipeline or synthesized deterministically, plus the learned
// projection that maps them to model width.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "empsoa/corpus.hpp"
#include "empsoa/tensor.hpp"

namespace empsoa {

enum class Relation : std::uint8_t { kXReact, kXIntent, kXNeed, kXWant, kXEffect };

inline constexpr std::array<Relation, 5> kAllRelations = {Relation::kXReact, Relation::kXIntent,
                                                         Relation::kXNeed, Relation::kXWant,
                                                         Relation::kXEffect};
// xReact is the only emotional relation; these four describe the situation.
inline constexpr std::array<Relation, 4> kCognitiveRelations = {Relation::kXIntent, Relation::kXNeed,
                                                               Relation::kXWant, Relation::kXEffect};

std::string_view relation_name(Relation r);
Relation parse_relation(std::string_view name);  // FormatError on anything else
constexpr bool is_emotional(Relation r) { return r == Relation::kXReact; }

struct KnowledgeEntry {
  std::string dialogue_id;
  std::size_t utt_index = 0;
  Relation relation = Relation::kXReact;
  std::vector<double> vector;
  std::optional<std::string> text;
};

// Deterministic stand-in for COMET output: a function of the utterance
// tokens, the relation and the seed only, with values in [−1, 1).
std::vector<double> synthetic_vectors(const std::vector<std::string>& tokens, Relation relation,
                                      std::size_t d_k, std::uint64_t seed);

class KnowledgeStore {
 public:
  explicit KnowledgeStore(std::size_t d_k) : d_k_(d_k) {}

  // FormatError on a width other than d_k, a non-finite value or a repeated key.
  void insert(KnowledgeEntry entry);

  // Lookups for keys the store lacks are answered with synthetic_vectors.
  void enable_synthetic_fallback(std::uint64_t seed) { fallback_seed_ = seed; }
  bool has_fallback() const { return fallback_seed_.has_value(); }

  std::size_t d_k() const { return d_k_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<KnowledgeEntry>& entries() const { return entries_; }

  const KnowledgeEntry* find(std::string_view dialogue_id, std::size_t utt_index, Relation r) const;

  // Raw vector for one utterance of a sample; LookupError when missing and
  // no fallback is enabled.
  std::vector<double> vector_for(const DialogueSample& sample, std::size_t utt_index, Relation r) const;

 private:
  std::size_t d_k_;
  std::vector<KnowledgeEntry> entries_;
  std::map<std::tuple<std::string, std::size_t, Relation>, std::size_t, std::less<>> index_;
  std::optional<std::uint64_t> fallback_seed_;
};

// JSON-lines knowledge file, one entry per line (docs/formats.md).
// d_k is taken from the first entry and enforced for the rest.
KnowledgeStore load_knowledge(const std::filesystem::path& path);
void write_knowledge(const KnowledgeStore& store, const std::filesystem::path& path);

// A store holding synthetic vectors for every utterance and relation of `samples`.
KnowledgeStore synthesize_knowledge(const std::vector<DialogueSample>& samples, std::size_t d_k,
                                    std::uint64_t seed);

// Learned d_k → d_h adapter shared by every knowledge node.
struct KnowledgeProjection {
  Tensor weight;  // [d_k × d_h]
  Tensor bias;    // [d_h]

  Tensor project(const std::vector<double>& raw) const;  // [1 × d_h]
};

struct KnowledgeNodeInit {
  Tensor emotional;  // projection of the xReact vector
  Tensor cognitive;  // projection of the mean of the four cognitive vectors
};

KnowledgeNodeInit node_init_vectors(const KnowledgeStore& store, const KnowledgeProjection& projection,
                                    const DialogueSample& sample, std::size_t utt_index);

}  // namespace empsoa
