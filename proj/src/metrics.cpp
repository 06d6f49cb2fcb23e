#include "empsoa/metrics.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"
#include "empsoa/parallel.hpp"

namespace empsoa {

double perplexity(std::span<const double> nll_sums, std::span<const std::size_t> token_counts) {
  if (nll_sums.size() != token_counts.size()) throw ContractError("perplexity: NLL and token counts differ in length");
  double nll = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < nll_sums.size(); ++i) {
    nll += nll_sums[i];
    tokens += token_counts[i];
  }
  if (tokens == 0) throw ContractError("perplexity over zero tokens");
  return std::exp(nll / static_cast<double>(tokens));
}

double distinct_n(const std::vector<std::vector<std::string>>& responses, std::size_t n) {
  if (n == 0) throw ContractError("distinct-n needs n >= 1");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& r : responses)
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      unique.emplace(r.begin() + i, r.begin() + i + n);
      ++total;
    }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

double emotion_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold) {
  if (predicted.size() != gold.size())
    throw ContractError("emotion accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(gold.size()) + " labels");
  if (gold.empty()) throw ContractError("emotion accuracy over an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["ppl"] = ppl;
  j["accuracy"] = accuracy;
  j["dist1"] = dist1 * 100.0;
  j["dist2"] = dist2 * 100.0;
  j["loss_gen"] = loss_gen;
  j["loss_emo"] = loss_emo;
  j["tokens"] = tokens;
  j["samples"] = samples;
  return j.dump(2);
}

std::string GenerationRecord::to_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["generated"] = generated;
  j["reference"] = reference;
  j["predicted_emotion"] = predicted_emotion;
  j["gold_emotion"] = gold_emotion;
  return j.dump();
}

namespace {

struct SampleResult {
  double nll_sum = 0;
  std::size_t tokens = 0;
  double emo_loss = 0;
  std::size_t predicted = 0;
  std::vector<std::size_t> generated;
};

}  // namespace

MetricReport evaluate(const EmpSoaModel& model, std::span<const PreparedSample> samples,
                      const KnowledgeStore& knowledge, const Vocabulary& vocab, const EmotionLabels& labels,
                      const GenerationConfig& generation, std::vector<GenerationRecord>* records) {
  if (samples.empty()) throw ContractError("evaluation over an empty set");
  std::vector<SampleResult> per(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const PreparedSample& s = samples[i];
    const ModelOutput out = model.forward(s, knowledge, {});
    SampleResult& r = per[i];
    r.tokens = s.targets.size();
    r.nll_sum = generation_loss(out.decoder.probs, s.targets).item() * static_cast<double>(r.tokens);
    r.emo_loss = emotion_loss(out.perception.emotion.probs, s.emotion).item();
    r.predicted = out.perception.emotion.predicted();
    r.generated = model.generate(s, knowledge, generation).tokens;
  });

  MetricReport rep;
  rep.samples = samples.size();
  std::vector<double> nll;
  std::vector<std::size_t> tokens, predicted, gold;
  std::vector<std::vector<std::string>> responses;
  if (records) records->clear();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleResult& r = per[i];
    nll.push_back(r.nll_sum);
    tokens.push_back(r.tokens);
    predicted.push_back(r.predicted);
    gold.push_back(samples[i].emotion);
    rep.tokens += r.tokens;
    rep.loss_emo += r.emo_loss;
    std::vector<std::string> words;
    for (auto id : r.generated) words.push_back(vocab.token(id));
    if (records)
      records->push_back({samples[i].sample->id, words, samples[i].sample->response, labels.name(r.predicted),
                          labels.name(samples[i].emotion)});
    responses.push_back(std::move(words));
  }
  rep.loss_emo /= static_cast<double>(samples.size());
  double nll_total = 0;
  for (double x : nll) nll_total += x;
  rep.loss_gen = nll_total / static_cast<double>(rep.tokens);
  rep.ppl = perplexity(nll, tokens);
  rep.accuracy = emotion_accuracy(predicted, gold);
  rep.dist1 = distinct_n(responses, 1);
  rep.dist2 = distinct_n(responses, 2);
  return rep;
}

}  // namespace empsoa
