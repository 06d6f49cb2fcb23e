#pragma once

// Dialogue ingestion: the line-delimited corpus format, tokenization, the
// vocabulary, and flattening a dialogue into encoder input with one role
// marker per utterance.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "empsoa/tensor.hpp"

namespace empsoa {

enum class Role : std::uint8_t { kSelf = 0, kOther = 1 };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

// The 32 emotion classes. Position in the list is the class index.
class EmotionLabels {
 public:
  static constexpr std::size_t kCount = 32;

  // Built-in order, identical to data/emotions.txt.
  static const EmotionLabels& standard();
  // One label per line, exactly 32 distinct lines.
  static EmotionLabels load(const std::filesystem::path& path);

  explicit EmotionLabels(std::vector<std::string> labels);

  // Case-insensitive. Throws ValidationError naming the label when unknown.
  std::size_t index_of(std::string_view label) const;
  bool contains(std::string_view label) const;
  const std::string& name(std::size_t index) const { return labels_.at(index); }
  const std::vector<std::string>& names() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct Utterance {
  Role role = Role::kOther;
  std::vector<std::string> tokens;
};

struct DialogueSample {
  std::string id;
  std::vector<Utterance> utterances;
  std::string emotion;  // lowercase member of EmotionLabels
  std::vector<std::string> response;
};

// Lowercases, splits on whitespace and splits every punctuation character
// into its own token. Apostrophes between letters stay inside the word
// ("don't" is one token).
std::vector<std::string> tokenize(std::string_view text);

// Throws ValidationError when the sample breaks an invariant: no utterances,
// an empty utterance, a final utterance not spoken by the other, an unknown
// emotion, or an empty response.
void validate(const DialogueSample& sample, const EmotionLabels& labels);

// Reads the JSON-lines corpus described in docs/formats.md. Blank lines are
// skipped. Malformed lines raise ParseError with the 1-based line number.
std::vector<DialogueSample> load_corpus(const std::filesystem::path& path,
                                        const EmotionLabels& labels = EmotionLabels::standard());
DialogueSample parse_sample(std::string_view line, const EmotionLabels& labels);
std::string serialize_sample(const DialogueSample& sample);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kSlf = 4;
  static constexpr std::size_t kOth = 5;
  static constexpr std::size_t kReserved = 6;

  Vocabulary();
  // Tokens in id order; the first six must be the reserved tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> ids_;
};

const std::vector<std::string>& reserved_tokens();

// Counts tokens over utterances and responses. Tokens with count ≥ min_freq
// get ids after the reserved block, ordered by count descending then
// lexicographically.
Vocabulary build_vocabulary(const std::vector<DialogueSample>& samples, std::size_t min_freq = 1);

struct EncoderInput {
  std::vector<std::size_t> token_ids;
  std::vector<std::size_t> role_ids;   // 0 = self, 1 = other
  std::vector<std::size_t> positions;  // 0 .. length−1
  std::vector<std::size_t> marker_indices;  // token position of each kept utterance's marker
  std::vector<std::size_t> utterance_ids;   // original utterance index behind each marker
  std::vector<Role> marker_roles;
  std::vector<std::uint8_t> self_mask;   // 1 on self tokens, markers included
  std::vector<std::uint8_t> other_mask;  // 1 on other tokens, markers included
  std::size_t content_length = 0;        // tokens before any padding

  std::size_t length() const { return token_ids.size(); }
  bool is_pad(std::size_t pos) const { return pos >= content_length; }
};

// Flattens to [marker, tokens...] per utterance. When the flattened length
// exceeds max_len, whole utterances are dropped from the oldest end; a final
// utterance that alone exceeds max_len is a ContractError.
EncoderInput assemble_encoder_input(const DialogueSample& sample, const Vocabulary& vocab,
                                    std::size_t max_len = 128);

// Appends PAD tokens up to `length`; PAD positions belong to neither mask.
EncoderInput pad_to(EncoderInput input, std::size_t length);

// Token spans per marker: [marker_indices[i], end_i).
std::vector<std::pair<std::size_t, std::size_t>> utterance_spans(const EncoderInput& input);

// Target ids for teacher forcing: response tokens followed by EOS.
std::vector<std::size_t> response_targets(const DialogueSample& sample, const Vocabulary& vocab);

// Word-embedding table [|V|×d_h] from a text file of `token v1 ... v_d` lines.
// Rows for tokens in the file are copied verbatim; every other row is drawn
// from N(0, 0.02²) with a generator seeded by `seed`. A vector width other
// than d_h is a ConfigError. An empty path yields the fully random table.
Tensor load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                  std::size_t d_h, std::uint64_t seed);

}  // namespace empsoa
