#include "empsoa/knowledge.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"

namespace empsoa {

using nlohmann::json;

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::kXReact: return "xReact";
    case Relation::kXIntent: return "xIntent";
    case Relation::kXNeed: return "xNeed";
    case Relation::kXWant: return "xWant";
    case Relation::kXEffect: return "xEffect";
  }
  return "?";
}

Relation parse_relation(std::string_view name) {
  for (Relation r : kAllRelations)
    if (relation_name(r) == name) return r;
  throw FormatError("unknown relation '" + std::string(name) + "'");
}

namespace {

// FNV-1a over the tokens (unit-separated) and the relation name.
std::uint64_t fingerprint(const std::vector<std::string>& tokens, Relation relation) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens) {
    for (unsigned char c : t) mix(c);
    mix(0x1f);
  }
  mix(0x1e);
  for (unsigned char c : relation_name(relation)) mix(c);
  return h;
}

}  // namespace

std::vector<double> synthetic_vectors(const std::vector<std::string>& tokens, Relation relation,
                                      std::size_t d_k, std::uint64_t seed) {
  // mt19937_64's output sequence is fixed by the standard; the conversion to
  // [−1, 1) is done by hand so the values are identical on every platform.
  std::mt19937_64 gen(fingerprint(tokens, relation) ^ (seed * 0x9e3779b97f4a7c15ULL));
  std::vector<double> v(d_k);
  for (auto& x : v) x = static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  return v;
}

void KnowledgeStore::insert(KnowledgeEntry entry) {
  if (entry.vector.size() != d_k_)
    throw FormatError("knowledge vector for '" + entry.dialogue_id + "' has width " +
                      std::to_string(entry.vector.size()) + ", expected d_k=" + std::to_string(d_k_));
  for (double v : entry.vector)
    if (!std::isfinite(v)) throw FormatError("non-finite knowledge value for '" + entry.dialogue_id + "'");
  auto key = std::make_tuple(entry.dialogue_id, entry.utt_index, entry.relation);
  if (index_.count(key))
    throw FormatError("duplicate knowledge key (" + entry.dialogue_id + ", " +
                      std::to_string(entry.utt_index) + ", " + std::string(relation_name(entry.relation)) + ")");
  index_.emplace(std::move(key), entries_.size());
  entries_.push_back(std::move(entry));
}

const KnowledgeEntry* KnowledgeStore::find(std::string_view dialogue_id, std::size_t utt_index,
                                           Relation r) const {
  auto it = index_.find(std::make_tuple(std::string(dialogue_id), utt_index, r));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::vector<double> KnowledgeStore::vector_for(const DialogueSample& sample, std::size_t utt_index,
                                               Relation r) const {
  if (const auto* e = find(sample.id, utt_index, r)) return e->vector;
  if (!fallback_seed_)
    throw LookupError("no knowledge for (" + sample.id + ", " + std::to_string(utt_index) + ", " +
                      std::string(relation_name(r)) + ")");
  if (utt_index >= sample.utterances.size())
    throw LookupError("utterance index " + std::to_string(utt_index) + " outside dialogue " + sample.id);
  return synthetic_vectors(sample.utterances[utt_index].tokens, r, d_k_, *fallback_seed_);
}

KnowledgeStore load_knowledge(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open knowledge file " + path.string());
  std::optional<KnowledgeStore> store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const json j = json::parse(line);
      KnowledgeEntry e;
      e.dialogue_id = j.at("dialogue_id").get<std::string>();
      e.utt_index = j.at("utt_index").get<std::size_t>();
      e.relation = parse_relation(j.at("relation").get<std::string>());
      e.vector = j.at("vector").get<std::vector<double>>();
      if (j.contains("text") && !j.at("text").is_null()) e.text = j.at("text").get<std::string>();
      if (!store) {
        if (e.vector.empty()) throw FormatError("empty knowledge vector");
        store.emplace(e.vector.size());
      }
      store->insert(std::move(e));
    } catch (const json::exception& e) {
      throw FormatError(where + e.what());
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
  }
  if (!store) throw FormatError("knowledge file " + path.string() + " has no entries");
  return std::move(*store);
}

void write_knowledge(const KnowledgeStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write knowledge file " + path.string());
  for (const auto& e : store.entries()) {
    json j;
    j["dialogue_id"] = e.dialogue_id;
    j["utt_index"] = e.utt_index;
    j["relation"] = std::string(relation_name(e.relation));
    j["vector"] = e.vector;
    if (e.text) j["text"] = *e.text;
    os << j.dump() << '\n';
  }
}

KnowledgeStore synthesize_knowledge(const std::vector<DialogueSample>& samples, std::size_t d_k,
                                    std::uint64_t seed) {
  KnowledgeStore store(d_k);
  for (const auto& s : samples)
    for (std::size_t u = 0; u < s.utterances.size(); ++u)
      for (Relation r : kAllRelations)
        store.insert({s.id, u, r, synthetic_vectors(s.utterances[u].tokens, r, d_k, seed), std::nullopt});
  return store;
}

Tensor KnowledgeProjection::project(const std::vector<double>& raw) const {
  return add_bias(matmul(Tensor::row(raw), weight), bias);
}

KnowledgeNodeInit node_init_vectors(const KnowledgeStore& store, const KnowledgeProjection& projection,
                                    const DialogueSample& sample, std::size_t utt_index) {
  KnowledgeNodeInit init;
  init.emotional = projection.project(store.vector_for(sample, utt_index, Relation::kXReact));
  std::vector<double> mean(store.d_k(), 0.0);
  for (Relation r : kCognitiveRelations) {
    const auto v = store.vector_for(sample, utt_index, r);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  for (auto& m : mean) m /= static_cast<double>(kCognitiveRelations.size());
  init.cognitive = projection.project(mean);
  return init;
}

}  // namespace empsoa
