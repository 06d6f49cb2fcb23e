#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <random>

#include "empsoa/corpus.hpp"
#include "empsoa/errors.hpp"
#include "support.hpp"

using namespace empsoa;

namespace {

std::filesystem::path fixture(const char* name) {
  return empsoa::testing::source_dir() / "tests" / "fixtures" / name;
}

DialogueSample make_sample(std::vector<std::pair<Role, std::string>> utts, std::string response = "ok") {
  DialogueSample s;
  s.id = "t";
  s.emotion = "sad";
  for (auto& [r, text] : utts) s.utterances.push_back({r, tokenize(text)});
  s.response = tokenize(response);
  return s;
}

}  // namespace

TEST_CASE("emotion labels") {
  const auto& labels = EmotionLabels::standard();
  CHECK(labels.names().size() == 32);
  CHECK(labels.index_of("Lonely") == labels.index_of("lonely"));
  CHECK_THROWS_AS(labels.index_of("not_a_label"), ValidationError);
  const auto from_file = EmotionLabels::load(empsoa::testing::source_dir() / "data" / "emotions.txt");
  CHECK(from_file.names() == labels.names());
}

TEST_CASE("tokenize") {
  CHECK(tokenize("Hi, I feel  so LONELY!") == std::vector<std::string>{"hi", ",", "i", "feel", "so", "lonely", "!"});
  CHECK(tokenize("don't 'quote'") == std::vector<std::string>{"don't", "'", "quote", "'"});
  CHECK(tokenize("   ").empty());
}

TEST_CASE("load_corpus") {
  SUBCASE("three valid dialogues in order") {
    const auto samples = load_corpus(fixture("three_dialogues.jsonl"));
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].id == "d0");
    CHECK(samples[1].utterances.size() == 3);
    CHECK(samples[2].emotion == "afraid");
    CHECK(samples[2].utterances[0].role == Role::kSelf);
  }
  SUBCASE("unknown emotion names the label and the line") {
    try {
      load_corpus(fixture("bad_label.jsonl"));
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("not_a_label") != std::string::npos);
      CHECK(msg.find(":2:") != std::string::npos);
    }
  }
  SUBCASE("malformed line reports its number") {
    try {
      load_corpus(fixture("malformed.jsonl"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("case-study dialogue parses with one other utterance") {
    const auto samples = load_corpus(fixture("lonely.jsonl"));
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].emotion == "lonely");
    REQUIRE(samples[0].utterances.size() == 1);
    CHECK(samples[0].utterances[0].role == Role::kOther);
    const auto& toks = samples[0].utterances[0].tokens;
    const std::vector<std::string> phrase = {"feel", "so", "lonely", "sometimes"};
    CHECK(std::search(toks.begin(), toks.end(), phrase.begin(), phrase.end()) != toks.end());
  }
  SUBCASE("last utterance must be the other's") {
    auto s = make_sample({{Role::kOther, "hi"}, {Role::kSelf, "hello"}});
    CHECK_THROWS_AS(validate(s, EmotionLabels::standard()), ValidationError);
  }
  SUBCASE("serialize round trip") {
    const auto samples = load_corpus(fixture("three_dialogues.jsonl"));
    for (const auto& s : samples) {
      const auto back = parse_sample(serialize_sample(s), EmotionLabels::standard());
      CHECK(back.id == s.id);
      CHECK(back.response == s.response);
      CHECK(back.utterances.size() == s.utterances.size());
    }
  }
}

TEST_CASE("build_vocabulary") {
  SUBCASE("no tokens gives exactly the reserved block") {
    CHECK(build_vocabulary({}, 1).size() == Vocabulary::kReserved);
  }
  SUBCASE("min_freq drops rare tokens to UNK") {
    // "a a b": a occurs twice, b once.
    DialogueSample s;
    s.utterances.push_back({Role::kOther, {"a", "a", "b"}});
    const auto v = build_vocabulary({s}, 2);
    CHECK(v.size() == Vocabulary::kReserved + 1);
    CHECK(v.id("a") == Vocabulary::kReserved);
    CHECK(v.id("b") == Vocabulary::kUnk);
  }
  SUBCASE("ties break lexicographically, counts descending, order-insensitive") {
    auto samples = load_corpus(fixture("three_dialogues.jsonl"));
    const auto v1 = build_vocabulary(samples, 1);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 5; ++t) {
      std::shuffle(samples.begin(), samples.end(), rng);
      CHECK(build_vocabulary(samples, 1) == v1);
    }
    CHECK(v1.token(Vocabulary::kReserved) == ".");  // most frequent token in the fixture
  }
  SUBCASE("save and load") {
    const auto v = build_vocabulary(load_corpus(fixture("three_dialogues.jsonl")), 1);
    const auto dir = empsoa::testing::scratch_dir("vocab");
    v.save(dir / "vocab.txt");
    CHECK(Vocabulary::load(dir / "vocab.txt") == v);
  }
}

TEST_CASE("assemble_encoder_input") {
  SUBCASE("single other utterance") {
    auto s = make_sample({{Role::kOther, "hi"}});
    const auto v = build_vocabulary({s}, 1);
    const auto in = assemble_encoder_input(s, v);
    CHECK(in.token_ids == std::vector<std::size_t>{Vocabulary::kOth, v.id("hi")});
    CHECK(in.role_ids == std::vector<std::size_t>{1, 1});
    CHECK(in.positions == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("other then self: self mask covers exactly the second span") {
    auto s = make_sample({{Role::kOther, "a b"}, {Role::kSelf, "c"}, {Role::kOther, "d"}});
    const auto v = build_vocabulary({s}, 1);
    const auto in = assemble_encoder_input(s, v);
    CHECK(in.token_ids[0] == Vocabulary::kOth);
    CHECK(in.token_ids[3] == Vocabulary::kSlf);
    CHECK(in.self_mask == std::vector<std::uint8_t>{0, 0, 0, 1, 1, 0, 0});
    CHECK(in.other_mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1, 1});
  }
  SUBCASE("alternating four utterances: four increasing markers") {
    auto s = make_sample({{Role::kOther, "a b c"}, {Role::kSelf, "d"}, {Role::kSelf, "e f"}, {Role::kOther, "g"}});
    const auto v = build_vocabulary({s}, 1);
    const auto in = assemble_encoder_input(s, v);
    // [OTH] a b c [SLF] d [SLF] e f [OTH] g
    CHECK(in.marker_indices == std::vector<std::size_t>{0, 4, 6, 9});
    CHECK(std::is_sorted(in.marker_indices.begin(), in.marker_indices.end()));
  }
  SUBCASE("truncation drops whole utterances from the oldest end") {
    auto s = make_sample({{Role::kOther, "a b c d"}, {Role::kSelf, "e f"}, {Role::kOther, "g"}});
    const auto v = build_vocabulary({s}, 1);
    const auto in = assemble_encoder_input(s, v, 6);
    // Full length is 5 + 3 + 2 = 10; only the last two utterances fit.
    CHECK(in.length() == 5);
    CHECK(in.utterance_ids == std::vector<std::size_t>{1, 2});
    CHECK(in.token_ids[0] == Vocabulary::kSlf);
    CHECK_THROWS_AS(assemble_encoder_input(s, v, 1), ContractError);
  }
  SUBCASE("flatten/unflatten round trip and constant roles per span") {
    const auto samples = load_corpus(fixture("three_dialogues.jsonl"));
    const auto v = build_vocabulary(samples, 1);
    for (const auto& s : samples) {
      const auto in = assemble_encoder_input(s, v);
      const auto spans = utterance_spans(in);
      REQUIRE(spans.size() == s.utterances.size());
      for (std::size_t u = 0; u < spans.size(); ++u) {
        const auto [b, e] = spans[u];
        std::vector<std::size_t> body(in.token_ids.begin() + b + 1, in.token_ids.begin() + e);
        CHECK(body == v.encode(s.utterances[u].tokens));
        for (std::size_t p = b; p < e; ++p)
          CHECK(in.role_ids[p] == static_cast<std::size_t>(s.utterances[u].role));
      }
    }
  }
  SUBCASE("padding belongs to neither side") {
    auto s = make_sample({{Role::kOther, "hi"}});
    const auto v = build_vocabulary({s}, 1);
    const auto in = pad_to(assemble_encoder_input(s, v), 5);
    CHECK(in.length() == 5);
    CHECK(in.content_length == 2);
    CHECK(in.other_mask == std::vector<std::uint8_t>{1, 1, 0, 0, 0});
    CHECK(in.self_mask == std::vector<std::uint8_t>{0, 0, 0, 0, 0});
  }
}

TEST_CASE("load_pretrained_embeddings") {
  auto s = make_sample({{Role::kOther, "hi there friend"}});
  const auto v = build_vocabulary({s}, 1);
  SUBCASE("no coverage is a deterministic random table") {
    const auto a = load_pretrained_embeddings({}, v, 4, 17);
    const auto b = load_pretrained_embeddings({}, v, 4, 17);
    CHECK(a.to_vector() == b.to_vector());
    CHECK(a.shape() == Shape{v.size(), 4});
  }
  SUBCASE("covered rows equal the file vector exactly") {
    const auto e = load_pretrained_embeddings(fixture("embeddings_d4.txt"), v, 4, 17);
    const std::size_t hi = v.id("hi");
    CHECK(e.at(hi, 0) == 0.125);
    CHECK(e.at(hi, 1) == -0.5);
    CHECK(e.at(hi, 2) == 1.75);
    CHECK(e.at(hi, 3) == 3.0);
    const auto random = load_pretrained_embeddings({}, v, 4, 17);
    const std::size_t friend_id = v.id("friend");
    CHECK(e.at(friend_id, 0) == random.at(friend_id, 0));
  }
  SUBCASE("width mismatch is a config error") {
    CHECK_THROWS_AS(load_pretrained_embeddings(fixture("embeddings_d4.txt"), v, 300, 17), ConfigError);
  }
}
