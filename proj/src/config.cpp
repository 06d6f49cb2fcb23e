#include "empsoa/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "empsoa/errors.hpp"

namespace empsoa {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void only_keys(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string("section '") + section + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in section '" + section + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_pair(const json& j, const char* key, double& a, double& b) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError(std::string(key) + " must have two entries");
  a = v[0], b = v[1];
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& source_dir) {
  RunConfig c;
  c.source_dir = source_dir;
  try {
    const json root = json::parse(text);
    only_keys(root, "<root>", {"data", "model", "train", "decode"});
    if (root.contains("data")) {
      const json& d = root["data"];
      only_keys(d, "data", {"root", "train", "valid", "test", "knowledge", "embeddings", "emotions", "min_freq",
                            "knowledge_seed"});
      read(d, "root", c.data.root);
      read(d, "train", c.data.train);
      read(d, "valid", c.data.valid);
      read(d, "test", c.data.test);
      read(d, "knowledge", c.data.knowledge);
      read(d, "embeddings", c.data.embeddings);
      read(d, "emotions", c.data.emotions);
      read(d, "min_freq", c.data.min_freq);
      read(d, "knowledge_seed", c.data.knowledge_seed);
    }
    if (root.contains("model")) {
      const json& m = root["model"];
      only_keys(m, "model", {"d_h", "d_k", "heads", "graph_heads", "cross_heads", "encoder_layers", "decoder_layers",
                             "graph_layers", "ffn", "dropout", "max_len", "variant", "empty_slice"});
      read(m, "d_h", c.model.d_h);
      read(m, "d_k", c.model.d_k);
      read(m, "heads", c.model.heads);
      read(m, "graph_heads", c.model.graph_heads);
      read(m, "cross_heads", c.model.cross_heads);
      read(m, "encoder_layers", c.model.encoder_layers);
      read(m, "decoder_layers", c.model.decoder_layers);
      read(m, "graph_layers", c.model.graph_layers);
      read(m, "ffn", c.model.ffn);
      read(m, "dropout", c.model.dropout);
      read(m, "max_len", c.model.max_len);
      if (m.contains("variant")) c.model.variant = parse_variant(m["variant"].get<std::string>());
      if (m.contains("empty_slice")) c.model.empty_slice = parse_empty_slice(m["empty_slice"].get<std::string>());
    }
    if (root.contains("train")) {
      const json& t = root["train"];
      only_keys(t, "train", {"gamma", "lr0", "warmup", "betas", "adam_eps", "batch", "epochs", "max_steps",
                             "patience", "seed", "diversity"});
      if (t.contains("gamma")) {
        const auto g = t["gamma"].get<std::vector<double>>();
        if (g.size() != 3) throw ConfigError("gamma must have three entries");
        c.train.gamma = {g[0], g[1], g[2]};
      }
      read(t, "lr0", c.train.lr0);
      read(t, "warmup", c.train.warmup);
      read_pair(t, "betas", c.train.beta1, c.train.beta2);
      read(t, "adam_eps", c.train.adam_eps);
      read(t, "batch", c.train.batch);
      read(t, "epochs", c.train.epochs);
      read(t, "max_steps", c.train.max_steps);
      read(t, "patience", c.train.patience);
      read(t, "seed", c.train.seed);
      read(t, "diversity", c.diversity);
    }
    if (root.contains("decode")) {
      const json& d = root["decode"];
      only_keys(d, "decode", {"max_steps", "beam_width"});
      read(d, "max_steps", c.decode.max_steps);
      read(d, "beam_width", c.decode.beam_width);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.model.max_steps = c.decode.max_steps;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse(ss.str(), std::filesystem::absolute(path).parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::dump() const {
  ordered_json j;
  j["data"] = {{"root", data.root},
               {"train", data.train},
               {"valid", data.valid},
               {"test", data.test},
               {"knowledge", data.knowledge},
               {"embeddings", data.embeddings},
               {"emotions", data.emotions},
               {"min_freq", data.min_freq},
               {"knowledge_seed", data.knowledge_seed}};
  j["model"] = {{"d_h", model.d_h},
                {"d_k", model.d_k},
                {"heads", model.heads},
                {"graph_heads", model.graph_heads},
                {"cross_heads", model.cross_heads},
                {"encoder_layers", model.encoder_layers},
                {"decoder_layers", model.decoder_layers},
                {"graph_layers", model.graph_layers},
                {"ffn", model.ffn},
                {"dropout", model.dropout},
                {"max_len", model.max_len},
                {"variant", std::string(variant_name(model.variant))},
                {"empty_slice", std::string(empty_slice_name(model.empty_slice))}};
  j["train"] = {{"gamma", {train.gamma.emo, train.gamma.gen, train.gamma.div}},
                {"lr0", train.lr0},
                {"warmup", train.warmup},
                {"betas", {train.beta1, train.beta2}},
                {"adam_eps", train.adam_eps},
                {"batch", train.batch},
                {"epochs", train.epochs},
                {"max_steps", train.max_steps},
                {"patience", train.patience},
                {"seed", train.seed},
                {"diversity", diversity}};
  j["decode"] = {{"max_steps", decode.max_steps}, {"beam_width", decode.beam_width}};
  return j.dump(2);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (diversity != "off" && diversity != "frequency")
    throw ConfigError("diversity must be 'off' or 'frequency', not '" + diversity + "'");
  if (decode.beam_width == 0) throw ConfigError("beam_width must be positive");
  if (decode.max_steps == 0) throw ConfigError("decode max_steps must be positive");
  if (data.min_freq == 0) throw ConfigError("min_freq must be at least 1");
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  std::filesystem::path base;
  if (const char* env = std::getenv("EMPSOA_DATA_ROOT"); env && *env) base = env;
  else if (!data.root.empty()) base = data.root;
  else base = source_dir;
  if (base.is_relative()) base = source_dir / base;
  return (base / p).lexically_normal();
}

}  // namespace empsoa
