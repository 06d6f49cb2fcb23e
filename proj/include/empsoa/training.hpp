#pragma once

// Multi-task objective, Adam with the warmup/inverse-sqrt schedule, and the
// epoch loop with early stopping on validation loss.

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "empsoa/model.hpp"

namespace empsoa {

struct LossWeights {
  double emo = 1.0;
  double gen = 1.0;
  double div = 1.5;
};

// γ1·L_emo + γ2·L_gen + γ3·L_div; an undefined L_div counts as 0.
Tensor total_loss(const Tensor& emo, const Tensor& gen, const Tensor& div, const LossWeights& gamma);
double total_loss(double emo, double gen, double div, const LossWeights& gamma);

// The diversity term. Off: contributes nothing. Frequency-weighted: token NLL
// with per-id weights ∝ 1 / (count + 1) over training targets, normalized to
// mean 1 across the vocabulary.
class DiversityLoss {
 public:
  enum class Mode { kOff, kFrequencyWeighted };

  static DiversityLoss off() { return DiversityLoss(); }
  static DiversityLoss frequency_weighted(std::span<const PreparedSample> samples, std::size_t vocab_size);
  static DiversityLoss from_name(const std::string& name, std::span<const PreparedSample> samples,
                                 std::size_t vocab_size);  // "off" | "frequency"

  Mode mode() const { return mode_; }
  bool enabled() const { return mode_ != Mode::kOff; }
  const std::vector<double>& weights() const { return weights_; }
  Tensor operator()(const Tensor& probs, std::span<const std::size_t> targets) const;  // undefined when off

 private:
  Mode mode_ = Mode::kOff;
  std::vector<double> weights_;
};

struct HyperParams {
  LossWeights gamma;
  double lr0 = 1e-4;
  std::size_t warmup = 4000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  std::size_t batch = 16;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;  // 0 = no step cap
  std::size_t patience = 5;
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
};

// lr0 · min(step / warmup, sqrt(warmup / step)) for step ≥ 1: linear warmup to
// lr0, then inverse-square-root decay.
double scheduled_lr(const HyperParams& hp, std::size_t step);

class Adam {
 public:
  Adam(ParameterStore& params, double beta1, double beta2, double eps);
  // One update from the accumulated gradients; grads are left untouched.
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  ParameterStore* params_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct LossTerms {
  Tensor emo, gen, div, total;
};

LossTerms sample_losses(const ModelOutput& out, const PreparedSample& sample, const DiversityLoss& div,
                        const LossWeights& gamma);

struct TrainLogEntry {
  std::size_t step = 0;
  double L_emo = 0, L_gen = 0, L_div = 0, total = 0, lr = 0;

  std::string to_json() const;  // one line, fixed key order
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::vector<double> validation_losses;  // one per epoch
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when no validation ran
  bool early_stopped = false;
};

// Mean total loss over a set in inference mode.
double mean_total_loss(const EmpSoaModel& model, std::span<const PreparedSample> samples,
                       const KnowledgeStore& knowledge, const DiversityLoss& div, const LossWeights& gamma);

// Mini-batch training. Each epoch visits the training set in an order drawn
// from mt19937_64(seed); a batch sums per-sample gradients of loss / B. After
// every epoch the validation loss decides early stopping and the best
// parameters are restored at the end. Throws NonFiniteLossError naming the
// first non-finite term.
TrainResult train(EmpSoaModel& model, std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> validation_set, const KnowledgeStore& knowledge,
                  const HyperParams& hp, const DiversityLoss& div,
                  const std::function<void(const TrainLogEntry&)>& on_step = {});

}  // namespace empsoa
