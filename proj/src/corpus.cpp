#include "empsoa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "empsoa/errors.hpp"

namespace empsoa {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

std::string_view role_name(Role role) { return role == Role::kSelf ? "self" : "other"; }

Role parse_role(std::string_view name) {
  if (name == "self") return Role::kSelf;
  if (name == "other") return Role::kOther;
  throw ValidationError("unknown role '" + std::string(name) + "' (expected self or other)");
}

const EmotionLabels& EmotionLabels::standard() {
  static const EmotionLabels labels({
      "surprised",  "excited",  "annoyed",      "proud",     "angry",        "sad",
      "grateful",   "lonely",   "impressed",    "afraid",    "disgusted",    "confident",
      "terrified",  "hopeful",  "anxious",      "disappointed", "joyful",    "prepared",
      "guilty",     "furious",  "nostalgic",    "jealous",   "anticipating", "embarrassed",
      "content",    "devastated", "sentimental", "caring",   "trusting",     "ashamed",
      "apprehensive", "faithful",
  });
  return labels;
}

EmotionLabels::EmotionLabels(std::vector<std::string> labels) {
  if (labels.size() != kCount)
    throw ValidationError("emotion label list must have " + std::to_string(kCount) + " entries, got " +
                          std::to_string(labels.size()));
  for (auto& l : labels) l = lower(l);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!index_.emplace(labels[i], i).second)
      throw ValidationError("duplicate emotion label '" + labels[i] + "'");
  labels_ = std::move(labels);
}

EmotionLabels EmotionLabels::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open emotion label file " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return EmotionLabels(std::move(labels));
}

std::size_t EmotionLabels::index_of(std::string_view label) const {
  auto it = index_.find(lower(label));
  if (it == index_.end()) throw ValidationError("unknown emotion label '" + std::string(label) + "'");
  return it->second;
}

bool EmotionLabels::contains(std::string_view label) const { return index_.count(lower(label)) != 0; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      const bool inner_apostrophe = c == '\'' && !current.empty() && i + 1 < text.size() &&
                                    std::isalpha(static_cast<unsigned char>(text[i + 1]));
      if (inner_apostrophe) {
        current += static_cast<char>(c);
      } else {
        flush();
        out.emplace_back(1, static_cast<char>(c));
      }
    } else {
      current += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return out;
}

void validate(const DialogueSample& sample, const EmotionLabels& labels) {
  const std::string where = "dialogue '" + sample.id + "': ";
  if (sample.utterances.empty()) throw ValidationError(where + "no utterances");
  for (std::size_t i = 0; i < sample.utterances.size(); ++i)
    if (sample.utterances[i].tokens.empty())
      throw ValidationError(where + "utterance " + std::to_string(i) + " is empty");
  if (sample.utterances.back().role != Role::kOther)
    throw ValidationError(where + "the last context utterance must belong to the other");
  if (!labels.contains(sample.emotion))
    throw ValidationError(where + "unknown emotion label '" + sample.emotion + "'");
  if (sample.response.empty()) throw ValidationError(where + "empty response");
}

DialogueSample parse_sample(std::string_view line, const EmotionLabels& labels) {
  json j = json::parse(line);  // json::parse_error propagates to the caller
  DialogueSample s;
  s.id = j.at("id").get<std::string>();
  s.emotion = lower(j.at("emotion").get<std::string>());
  for (const auto& u : j.at("utterances")) {
    Utterance utt;
    utt.role = parse_role(u.at("role").get<std::string>());
    utt.tokens = tokenize(u.at("text").get<std::string>());
    s.utterances.push_back(std::move(utt));
  }
  s.response = tokenize(j.at("response").get<std::string>());
  validate(s, labels);
  return s;
}

std::string serialize_sample(const DialogueSample& sample) {
  json j;
  j["id"] = sample.id;
  j["emotion"] = sample.emotion;
  j["utterances"] = json::array();
  for (const auto& u : sample.utterances)
    j["utterances"].push_back({{"role", std::string(role_name(u.role))}, {"text", join(u.tokens)}});
  j["response"] = join(sample.response);
  return j.dump();
}

std::vector<DialogueSample> load_corpus(const std::filesystem::path& path, const EmotionLabels& labels) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<DialogueSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      samples.push_back(parse_sample(line, labels));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return samples;
}

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {"<pad>", "<unk>", "<bos>", "<eos>", "[SLF]", "[OTH]"};
  return tokens;
}

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin()))
    throw FormatError("vocabulary must start with the reserved tokens");
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!ids_.emplace(tokens[i], i).second) throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
  tokens_ = std::move(tokens);
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(token) != 0; }

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  for (const auto& t : tokens_) os << t << '\n';
  if (!os) throw std::runtime_error("cannot write vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(const std::vector<DialogueSample>& samples, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    for (const auto& u : s.utterances)
      for (const auto& t : u.tokens) ++counts[t];
    for (const auto& t : s.response) ++counts[t];
  }
  const auto& reserved = reserved_tokens();
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_freq && std::find(reserved.begin(), reserved.end(), tok) == reserved.end())
      kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens = reserved;
  for (auto& [tok, _] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

EncoderInput assemble_encoder_input(const DialogueSample& sample, const Vocabulary& vocab,
                                    std::size_t max_len) {
  const auto& utts = sample.utterances;
  if (utts.empty()) throw ContractError("assemble_encoder_input: dialogue without utterances");
  // Walk back from the newest utterance while the next older one still fits.
  std::size_t first = utts.size();
  std::size_t total = 0;
  while (first > 0) {
    const std::size_t len = utts[first - 1].tokens.size() + 1;
    if (total + len > max_len) break;
    total += len;
    --first;
  }
  if (first == utts.size())
    throw ContractError("dialogue '" + sample.id + "': final utterance needs " +
                        std::to_string(utts.back().tokens.size() + 1) + " positions, max_len is " +
                        std::to_string(max_len));

  EncoderInput in;
  for (std::size_t u = first; u < utts.size(); ++u) {
    const Role role = utts[u].role;
    const std::size_t role_id = static_cast<std::size_t>(role);
    in.marker_indices.push_back(in.token_ids.size());
    in.utterance_ids.push_back(u);
    in.marker_roles.push_back(role);
    auto push = [&](std::size_t id) {
      in.token_ids.push_back(id);
      in.role_ids.push_back(role_id);
      in.self_mask.push_back(role == Role::kSelf);
      in.other_mask.push_back(role == Role::kOther);
    };
    push(role == Role::kSelf ? Vocabulary::kSlf : Vocabulary::kOth);
    for (const auto& t : utts[u].tokens) push(vocab.id(t));
  }
  in.content_length = in.token_ids.size();
  in.positions.resize(in.content_length);
  for (std::size_t i = 0; i < in.positions.size(); ++i) in.positions[i] = i;
  return in;
}

EncoderInput pad_to(EncoderInput input, std::size_t length) {
  while (input.token_ids.size() < length) {
    input.positions.push_back(input.token_ids.size());
    input.token_ids.push_back(Vocabulary::kPad);
    input.role_ids.push_back(0);
    input.self_mask.push_back(0);
    input.other_mask.push_back(0);
  }
  return input;
}

std::vector<std::pair<std::size_t, std::size_t>> utterance_spans(const EncoderInput& input) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < input.marker_indices.size(); ++i) {
    const std::size_t end =
        i + 1 < input.marker_indices.size() ? input.marker_indices[i + 1] : input.content_length;
    spans.emplace_back(input.marker_indices[i], end);
  }
  return spans;
}

std::vector<std::size_t> response_targets(const DialogueSample& sample, const Vocabulary& vocab) {
  auto ids = vocab.encode(sample.response);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

Tensor load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                  std::size_t d_h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  std::vector<double> table(vocab.size() * d_h);
  for (auto& v : table) v = dist(rng);
  if (path.empty()) return Tensor::from({vocab.size(), d_h}, std::move(table));

  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open embedding file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (!ls.eof()) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    if (vec.size() != d_h)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": vector width " +
                        std::to_string(vec.size()) + " does not match d_h=" + std::to_string(d_h));
    if (!vocab.contains(token)) continue;
    std::copy(vec.begin(), vec.end(), table.begin() + static_cast<std::ptrdiff_t>(vocab.id(token) * d_h));
  }
  return Tensor::from({vocab.size(), d_h}, std::move(table));
}

}  // namespace empsoa
