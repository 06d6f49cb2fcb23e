#include "empsoa/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "empsoa/config.hpp"
#include "empsoa/errors.hpp"
#include "empsoa/metrics.hpp"
#include "empsoa/synthetic.hpp"

namespace empsoa {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  // synth
  std::size_t dialogues = 64;
  std::size_t emotions = 8;
};

// Everything a command needs, loaded once from the config.
struct Session {
  RunConfig cfg;
  EmotionLabels labels = EmotionLabels::standard();
  std::vector<DialogueSample> train, valid, test;
};

std::vector<DialogueSample> load_split(const Session& s, const std::string& path) {
  if (path.empty()) return {};
  return load_corpus(s.cfg.resolve(path), s.labels);
}

Session open_session(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  Session s;
  s.cfg = RunConfig::load(o.config);
  if (!o.variant.empty()) s.cfg.model.variant = parse_variant(o.variant);
  if (o.seed) s.cfg.train.seed = *o.seed;
  if (!s.cfg.data.emotions.empty()) s.labels = EmotionLabels::load(s.cfg.resolve(s.cfg.data.emotions));
  s.train = load_split(s, s.cfg.data.train);
  s.valid = load_split(s, s.cfg.data.valid);
  s.test = load_split(s, s.cfg.data.test);
  return s;
}

KnowledgeStore open_knowledge(const Session& s) {
  const auto& c = s.cfg;
  if (c.data.knowledge.empty()) {
    std::vector<DialogueSample> all = s.train;
    all.insert(all.end(), s.valid.begin(), s.valid.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    KnowledgeStore store = synthesize_knowledge(all, c.model.d_k, c.data.knowledge_seed);
    store.enable_synthetic_fallback(c.data.knowledge_seed);
    return store;
  }
  KnowledgeStore store = load_knowledge(c.resolve(c.data.knowledge));
  if (store.d_k() != c.model.d_k)
    throw ConfigError("knowledge file has d_k=" + std::to_string(store.d_k()) + " but model.d_k=" +
                      std::to_string(c.model.d_k));
  return store;
}

std::vector<PreparedSample> prepare(const Session& s, const std::vector<DialogueSample>& samples,
                                    const Vocabulary& vocab) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& d : samples) out.push_back(prepare_sample(d, vocab, s.labels, s.cfg.model.max_len));
  return out;
}

std::unique_ptr<EmpSoaModel> fresh_model(const Session& s, const Vocabulary& vocab) {
  const auto& c = s.cfg;
  if (c.data.embeddings.empty()) return std::make_unique<EmpSoaModel>(c.model, vocab.size(), c.train.seed);
  const Tensor table = load_pretrained_embeddings(c.resolve(c.data.embeddings), vocab, c.model.d_h, c.train.seed);
  return std::make_unique<EmpSoaModel>(c.model, vocab.size(), c.train.seed, &table);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

struct Trained {
  Vocabulary vocab;
  std::unique_ptr<EmpSoaModel> model;
};

// Trains and writes model.ckpt, vocab.txt, train_log.jsonl and config.json into dir.
Trained train_into(const Session& s, const KnowledgeStore& knowledge, const fs::path& dir, std::ostream& err) {
  if (s.train.empty()) throw ConfigError("data.train is empty or unset");
  fs::create_directories(dir);
  Trained t;
  t.vocab = build_vocabulary(s.train, s.cfg.data.min_freq);
  t.model = fresh_model(s, t.vocab);
  const auto train_set = prepare(s, s.train, t.vocab);
  const auto valid_set = prepare(s, s.valid, t.vocab);
  const auto div = DiversityLoss::from_name(s.cfg.diversity, train_set, t.vocab.size());
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  const auto result = train(*t.model, train_set, valid_set, knowledge, s.cfg.train, div, [&](const TrainLogEntry& e) {
    log << e.to_json() << '\n';
    if (e.step % 10 == 0) err << "step " << e.step << " total " << e.total << '\n';
  });
  err << "trained " << result.steps << " steps over " << result.epochs << " epochs";
  if (result.best_epoch) err << ", best validation epoch " << result.best_epoch;
  err << '\n';
  save_checkpoint(t.model->parameters(), dir / "model.ckpt");
  t.vocab.save(dir / "vocab.txt");
  write_text(dir / "config.json", s.cfg.dump() + "\n");
  return t;
}

Trained load_trained(const Session& s, const fs::path& dir) {
  if (dir.empty()) throw ConfigError("--checkpoint is required");
  Trained t;
  t.vocab = Vocabulary::load(dir / "vocab.txt");
  t.model = std::make_unique<EmpSoaModel>(s.cfg.model, t.vocab.size(), s.cfg.train.seed);
  load_checkpoint(t.model->parameters(), dir / "model.ckpt");
  return t;
}

const std::vector<DialogueSample>& split_of(const Session& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (expected train, valid or test)");
}

MetricReport evaluate_into(const Session& s, const Trained& t, const KnowledgeStore& knowledge,
                           const std::vector<DialogueSample>& samples, const fs::path& dir) {
  if (samples.empty()) throw ConfigError("evaluation split is empty");
  fs::create_directories(dir);
  const auto set = prepare(s, samples, t.vocab);
  std::vector<GenerationRecord> records;
  const auto report = evaluate(*t.model, set, knowledge, t.vocab, s.labels, s.cfg.decode, &records);
  write_text(dir / "metrics.json", report.to_json() + "\n");
  std::ostringstream gen;
  for (const auto& r : records) gen << r.to_json() << '\n';
  write_text(dir / "generations.jsonl", gen.str());
  return report;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const Session s = open_session(o);
  const fs::path dir = o.checkpoint.empty() ? fs::path(o.out.empty() ? "run" : o.out) : fs::path(o.checkpoint);
  const auto knowledge = open_knowledge(s);
  train_into(s, knowledge, dir, err);
  out << "checkpoint written to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream&) {
  const Session s = open_session(o);
  const auto knowledge = open_knowledge(s);
  const Trained t = load_trained(s, o.checkpoint);
  const fs::path dir = o.out.empty() ? fs::path(o.checkpoint) : fs::path(o.out);
  const auto report = evaluate_into(s, t, knowledge, split_of(s, o.split), dir);
  out << report.to_json() << '\n';
  return kExitOk;
}

int cmd_generate(const Options& o, std::ostream& out, std::ostream&) {
  const Session s = open_session(o);
  const auto knowledge = open_knowledge(s);
  const Trained t = load_trained(s, o.checkpoint);
  const auto& samples = split_of(s, o.split);
  std::ostringstream lines;
  for (const auto& d : samples) {
    const auto p = prepare_sample(d, t.vocab, s.labels, s.cfg.model.max_len);
    const auto g = t.model->generate(p, knowledge, s.cfg.decode);
    const auto emo = t.model->perceive(p, knowledge, {}).emotion.predicted();
    GenerationRecord r{d.id, {}, d.response, s.labels.name(emo), d.emotion};
    for (auto id : g.tokens) r.generated.push_back(t.vocab.token(id));
    lines << r.to_json() << '\n';
  }
  if (o.out.empty()) out << lines.str();
  else write_text(o.out, lines.str());
  return kExitOk;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

int cmd_ablate(const Options& o, std::ostream& out, std::ostream& err) {
  const Session base = open_session(o);
  const fs::path dir = o.out.empty() ? fs::path("ablation") : fs::path(o.out);
  const auto knowledge = open_knowledge(base);
  std::ostringstream table;
  table << "| Variant | PPL | Acc | Dist-1 | Dist-2 |\n|---|---|---|---|---|\n";
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Variant v : kAllVariants) {
    Session s = base;
    s.cfg.model.variant = v;
    const fs::path vdir = dir / std::string(variant_name(v));
    err << "== " << variant_name(v) << '\n';
    const Trained t = train_into(s, knowledge, vdir, err);
    const auto r = evaluate_into(s, t, knowledge, split_of(s, o.split), vdir);
    table << "| " << variant_name(v) << " | " << fixed(r.ppl, 2) << " | " << fixed(100 * r.accuracy, 2) << " | "
          << fixed(100 * r.dist1, 2) << " | " << fixed(100 * r.dist2, 2) << " |\n";
    rows.push_back({{"variant", std::string(variant_name(v))},
                    {"ppl", r.ppl},
                    {"accuracy", r.accuracy},
                    {"dist1", 100 * r.dist1},
                    {"dist2", 100 * r.dist2}});
  }
  write_text(dir / "ablation.md", table.str());
  write_text(dir / "ablation.json", rows.dump(2) + "\n");
  out << table.str();
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out, std::ostream&) {
  const fs::path dir = o.out.empty() ? fs::path("data/desk") : fs::path(o.out);
  fs::create_directories(dir);
  const std::uint64_t seed = o.seed.value_or(7);
  const std::array<std::pair<const char*, std::size_t>, 3> splits = {
      {{"train", o.dialogues}, {"valid", std::max<std::size_t>(1, o.dialogues / 4)},
       {"test", std::max<std::size_t>(1, o.dialogues / 4)}}};
  std::uint64_t offset = 0;
  for (const auto& [name, n] : splits) {
    std::ostringstream os;
    for (const auto& d : synthetic_corpus({n, o.emotions, seed + offset++, name})) os << serialize_sample(d) << '\n';
    write_text(dir / (std::string(name) + ".jsonl"), os.str());
  }
  out << "wrote " << dir.string() << "/{train,valid,test}.jsonl\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EmpSOA: empathetic response generation with self-other awareness"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration (JSON)")->required();
    sub->add_option("--variant", o.variant, "full|no_sog|no_som|no_sod|emp_na|emp_oa|emp_sa");
    sub->add_option("--seed", seed, "overrides train.seed");
  };
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint directory");
  common(train_cmd);
  train_cmd->add_option("--checkpoint", o.checkpoint, "output checkpoint directory");
  train_cmd->add_option("--out", o.out, "alias for --checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "metrics and generations for a split");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--out", o.out, "output directory (default: the checkpoint directory)");
  eval_cmd->add_option("--split", o.split, "train|valid|test");

  auto* gen_cmd = app.add_subcommand("generate", "decode responses as JSON lines");
  common(gen_cmd);
  gen_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  gen_cmd->add_option("--out", o.out, "output file (default: stdout)");
  gen_cmd->add_option("--split", o.split, "train|valid|test");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate all seven variants");
  common(ablate_cmd);
  ablate_cmd->add_option("--out", o.out, "output directory");
  ablate_cmd->add_option("--split", o.split, "train|valid|test");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic train/valid/test corpus");
  synth_cmd->add_option("--out", o.out, "output directory");
  synth_cmd->add_option("--seed", seed, "corpus seed");
  synth_cmd->add_option("--dialogues", o.dialogues, "training dialogues");
  synth_cmd->add_option("--emotions", o.emotions, "emotion classes (1-8)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed")) o.seed = seed;

  try {
    if (*train_cmd) return cmd_train(o, out, err);
    if (*eval_cmd) return cmd_eval(o, out, err);
    if (*gen_cmd) return cmd_generate(o, out, err);
    if (*ablate_cmd) return cmd_ablate(o, out, err);
    if (*synth_cmd) return cmd_synth(o, out, err);
  } catch (const NonFiniteLossError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNonFinite;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace empsoa
