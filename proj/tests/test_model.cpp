#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>

#include "empsoa/errors.hpp"
#include "empsoa/model.hpp"
#include "empsoa/ops.hpp"
#include "empsoa/training.hpp"
#include "support.hpp"

using namespace empsoa;

namespace {

DialogueSample dialogue() {
  DialogueSample s;
  s.id = "m1";
  s.emotion = "grateful";
  s.utterances = {{Role::kOther, {"my", "neighbor", "fixed", "my", "car"}},
                  {Role::kSelf, {"that", "was", "kind"}},
                  {Role::kOther, {"i", "owe", "him", "one"}}};
  s.response = {"that", "is", "nice", "of", "him"};
  return s;
}

ModelConfig tiny(Variant v = Variant::kFull) {
  ModelConfig c;
  c.d_h = 8;
  c.d_k = 4;
  c.heads = c.graph_heads = c.cross_heads = 2;
  c.encoder_layers = c.decoder_layers = 1;
  c.graph_layers = 2;
  c.ffn = 8;
  c.dropout = 0.0;
  c.variant = v;
  return c;
}

struct World {
  DialogueSample sample = dialogue();
  Vocabulary vocab = build_vocabulary({sample});
  KnowledgeStore knowledge = synthesize_knowledge({sample}, 4, 3);
  PreparedSample prepared = prepare_sample(sample, vocab, EmotionLabels::standard(), 128);
};

// Copy of `store` with every vector of the listed utterances shifted.
KnowledgeStore perturbed(const KnowledgeStore& store, const std::vector<std::size_t>& utterances) {
  KnowledgeStore out(store.d_k());
  for (auto e : store.entries()) {
    if (std::find(utterances.begin(), utterances.end(), e.utt_index) != utterances.end())
      for (auto& x : e.vector) x += 0.37;
    out.insert(e);
  }
  return out;
}

void nudge(const ParameterStore& store, const std::string& path, double by = 0.05) {
  Tensor t = store.get(path);
  for (auto& x : t.mutable_data()) x += by;
}

bool same(const Tensor& a, const Tensor& b) { return a.to_vector() == b.to_vector(); }

}  // namespace

TEST_CASE("variant names") {
  for (Variant v : kAllVariants) CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("no_graph"), ConfigError);
}

TEST_CASE("prepared sample layout") {
  World w;
  CHECK(w.prepared.decoder_input.front() == Vocabulary::kBos);
  CHECK(w.prepared.targets.back() == Vocabulary::kEos);
  CHECK(w.prepared.decoder_input.size() == w.prepared.targets.size());
  for (std::size_t i = 1; i < w.prepared.targets.size(); ++i)
    CHECK(w.prepared.decoder_input[i] == w.prepared.targets[i - 1]);
}

TEST_CASE("seeded construction is reproducible") {
  World w;
  EmpSoaModel a(tiny(), w.vocab.size(), 9), b(tiny(), w.vocab.size(), 9), c(tiny(), w.vocab.size(), 10);
  CHECK(a.parameters().size() == b.parameters().size());
  bool differs = false;
  for (const auto& [path, t] : a.parameters().entries()) {
    CHECK(same(t, b.parameters().get(path)));
    differs |= !same(t, c.parameters().get(path));
  }
  CHECK(differs);
  // Every variant owns the same parameter set, so checkpoints are interchangeable.
  for (Variant v : kAllVariants) CHECK(EmpSoaModel(tiny(v), w.vocab.size(), 9).parameters().size() == a.parameters().size());
}

TEST_CASE("differentiation isolation") {
  World w;
  EmpSoaModel m(tiny(), w.vocab.size(), 5);
  empsoa::testing::randomize(m.parameters(), *std::make_unique<std::mt19937_64>(6));
  const auto base = *m.perceive(w.prepared, w.knowledge, {}).states;

  SUBCASE("self knowledge") {
    const auto moved = *m.perceive(w.prepared, perturbed(w.knowledge, {1}), {}).states;
    CHECK(!same(moved.self_emotional, base.self_emotional));
    CHECK(!same(moved.self_cognitive, base.self_cognitive));
    CHECK(same(moved.other_emotional, base.other_emotional));
    CHECK(same(moved.other_cognitive, base.other_cognitive));
  }
  SUBCASE("other knowledge") {
    const auto moved = *m.perceive(w.prepared, perturbed(w.knowledge, {0, 2}), {}).states;
    CHECK(same(moved.self_emotional, base.self_emotional));
    CHECK(same(moved.self_cognitive, base.self_cognitive));
    CHECK(!same(moved.other_emotional, base.other_emotional));
    CHECK(!same(moved.other_cognitive, base.other_cognitive));
  }
  SUBCASE("self state vectors") {
    nudge(m.parameters(), "sod.state_self.emotional");
    nudge(m.parameters(), "sod.state_self.cognitive");
    const auto moved = *m.perceive(w.prepared, w.knowledge, {}).states;
    CHECK(!same(moved.self_emotional, base.self_emotional));
    CHECK(!same(moved.self_cognitive, base.self_cognitive));
    CHECK(same(moved.other_emotional, base.other_emotional));
    CHECK(same(moved.other_cognitive, base.other_cognitive));
  }
  SUBCASE("other state vectors") {
    nudge(m.parameters(), "sod.state_other.emotional");
    nudge(m.parameters(), "sod.state_other.cognitive");
    const auto moved = *m.perceive(w.prepared, w.knowledge, {}).states;
    CHECK(same(moved.self_emotional, base.self_emotional));
    CHECK(same(moved.self_cognitive, base.self_cognitive));
    CHECK(!same(moved.other_emotional, base.other_emotional));
    CHECK(!same(moved.other_cognitive, base.other_cognitive));
  }
}

TEST_CASE("variant wiring under random parameters") {
  World w;
  auto build = [&](Variant v) {
    auto m = std::make_unique<EmpSoaModel>(tiny(v), w.vocab.size(), 5);
    std::mt19937_64 rng(6);
    empsoa::testing::randomize(m->parameters(), rng);
    return m;
  };

  SUBCASE("no_sod ignores knowledge entirely") {
    auto m = build(Variant::kNoSod);
    const auto a = m->forward(w.prepared, w.knowledge, {});
    const auto b = m->forward(w.prepared, perturbed(w.knowledge, {0, 1, 2}), {});
    CHECK(same(a.perception.emotion.logits, b.perception.emotion.logits));
    CHECK(same(a.decoder.logits, b.decoder.logits));
    CHECK(!a.perception.states);
    CHECK(same(a.perception.memory.states, a.perception.context.states));
    CHECK(!a.perception.memory.awareness);
  }
  SUBCASE("emp_oa never reads the self states") {
    auto m = build(Variant::kEmpOa);
    const auto a = m->forward(w.prepared, w.knowledge, {});
    nudge(m->parameters(), "sod.state_self.emotional");
    nudge(m->parameters(), "sod.state_self.cognitive");
    const auto b = m->forward(w.prepared, perturbed(w.knowledge, {1}), {});
    CHECK(same(a.decoder.logits, b.decoder.logits));
    CHECK(same(a.perception.modulated->C_so, b.perception.modulated->C_so));
    CHECK(same(a.perception.pair->S, a.perception.pair->O));
  }
  SUBCASE("emp_sa never feeds the other states to SOM or SOG") {
    auto m = build(Variant::kEmpSa);
    const auto a = m->forward(w.prepared, w.knowledge, {});
    nudge(m->parameters(), "sod.state_other.emotional");
    nudge(m->parameters(), "sod.state_other.cognitive");
    const auto b = m->forward(w.prepared, w.knowledge, {});
    CHECK(same(a.decoder.logits, b.decoder.logits));
    CHECK(!same(a.perception.emotion.logits, b.perception.emotion.logits));  // perception still reads O^e
    CHECK(same(a.perception.pair->S, a.perception.pair->O));
  }
  SUBCASE("full and no_sog share the encoder but not h") {
    auto full = build(Variant::kFull);
    auto no_sog = build(Variant::kNoSog);
    const auto a = full->forward(w.prepared, w.knowledge, {});
    const auto b = no_sog->forward(w.prepared, w.knowledge, {});
    CHECK(same(a.perception.context.states, b.perception.context.states));
    CHECK(same(a.perception.modulated->C_so, b.perception.modulated->C_so));
    CHECK(same(a.decoder.h_t, b.decoder.h_t));
    CHECK(!same(a.decoder.h, b.decoder.h));
    CHECK(same(b.decoder.h, b.decoder.h_t));
  }
  SUBCASE("no_som decodes from the encoder states") {
    auto m = build(Variant::kNoSom);
    const auto a = m->forward(w.prepared, w.knowledge, {});
    CHECK(a.perception.states);
    CHECK(!a.perception.modulated);
    CHECK(same(a.perception.memory.states, a.perception.context.states));
    CHECK(same(a.decoder.h, a.decoder.h_t));
    // SOD still shapes the emotion through O^e.
    const auto b = m->forward(w.prepared, perturbed(w.knowledge, {0, 2}), {});
    CHECK(!same(a.perception.emotion.logits, b.perception.emotion.logits));
    CHECK(same(a.decoder.logits, b.decoder.logits));
  }
  SUBCASE("emp_na merges both sides into one graph") {
    auto m = build(Variant::kEmpNa);
    const auto a = m->forward(w.prepared, w.knowledge, {});
    const auto& s = *a.perception.states;
    CHECK(same(s.self_emotional, s.other_emotional));
    CHECK(same(a.perception.pair->S, a.perception.pair->O));
    // The side-specific state vectors are unused; the joint ones matter.
    nudge(m->parameters(), "sod.state_self.emotional");
    nudge(m->parameters(), "sod.state_other.emotional");
    CHECK(same(m->forward(w.prepared, w.knowledge, {}).decoder.logits, a.decoder.logits));
    nudge(m->parameters(), "sod.state_joint.emotional");
    CHECK(!same(m->forward(w.prepared, w.knowledge, {}).decoder.logits, a.decoder.logits));
  }
}

TEST_CASE("knowledge width must match the model") {
  World w;
  EmpSoaModel m(tiny(), w.vocab.size(), 1);
  CHECK_THROWS_AS(m.forward(w.prepared, synthesize_knowledge({w.sample}, 5, 3), {}), ConfigError);
}

TEST_CASE("end-to-end gradients at d_h=8, |V|=20") {
  DialogueSample s;
  s.id = "g";
  s.emotion = "proud";
  s.utterances = {{Role::kSelf, {"how", "did", "it", "go"}}, {Role::kOther, {"my", "son", "won", "!"}}};
  s.response = {"you", "must", "be", "proud"};
  std::vector<std::string> tokens = reserved_tokens();
  for (const char* t : {"how", "did", "it", "go", "my", "son", "won", "!", "you", "must", "be", "proud", "great", "wow"})
    tokens.emplace_back(t);
  const Vocabulary vocab(tokens);
  REQUIRE(vocab.size() == 20);
  const auto knowledge = synthesize_knowledge({s}, 4, 8);
  const auto prepared = prepare_sample(s, vocab, EmotionLabels::standard(), 128);

  EmpSoaModel m(tiny(), vocab.size(), 12);
  std::mt19937_64 rng(13);
  empsoa::testing::randomize(m.parameters(), rng);
  const auto div = DiversityLoss::frequency_weighted(std::span(&prepared, 1), vocab.size());
  std::vector<std::string> names;
  const auto params = empsoa::testing::all_params(m.parameters(), &names);

  const auto t0 = std::chrono::steady_clock::now();
  const auto report = empsoa::testing::grad_check(
      params, [&] { return sample_losses(m.forward(prepared, knowledge, {}), prepared, div, {}).total; }, 1e-4, 1e-6,
      names);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  INFO(report.worst);
  MESSAGE("checked " << report.checked << " scalars, max rel " << report.max_rel_error << " in " << seconds << " s");
  CHECK(report.max_rel_error < 1e-4);
  CHECK(seconds < 60.0);
}
