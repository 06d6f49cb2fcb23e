#pragma once

// Automatic metrics: perplexity, corpus-level Dist-n, emotion accuracy, and
// the evaluation pass that produces them together with generations.

#include <span>
#include <string>
#include <vector>

#include "empsoa/model.hpp"

namespace empsoa {

// exp(Σ nll / Σ tokens) over per-sample NLL sums and token counts.
double perplexity(std::span<const double> nll_sums, std::span<const std::size_t> token_counts);

// Unique n-grams across all responses ÷ total n-grams; 0 without any n-gram.
double distinct_n(const std::vector<std::vector<std::string>>& responses, std::size_t n);

// Fraction of matching entries. ContractError on a length mismatch or empty input.
double emotion_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold);

struct MetricReport {
  double ppl = 0;
  double accuracy = 0;
  double dist1 = 0;  // fractions in [0, 1]
  double dist2 = 0;
  double loss_gen = 0;  // token-mean NLL
  double loss_emo = 0;  // sample-mean
  std::size_t tokens = 0;
  std::size_t samples = 0;

  std::string to_json() const;  // dist values written ×100
};

struct GenerationRecord {
  std::string id;
  std::vector<std::string> generated;
  std::vector<std::string> reference;
  std::string predicted_emotion;
  std::string gold_emotion;

  std::string to_json() const;
};

// Teacher-forced NLL, emotion prediction and decoding for every sample.
// Samples are processed in parallel on frozen parameters; results are reduced
// in sample order so the report does not depend on the thread count.
MetricReport evaluate(const EmpSoaModel& model, std::span<const PreparedSample> samples,
                      const KnowledgeStore& knowledge, const Vocabulary& vocab, const EmotionLabels& labels,
                      const GenerationConfig& generation, std::vector<GenerationRecord>* records = nullptr);

}  // namespace empsoa
