#include "empsoa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"
#include "empsoa/parallel.hpp"

namespace empsoa {

Tensor total_loss(const Tensor& emo, const Tensor& gen, const Tensor& div, const LossWeights& gamma) {
  Tensor t = add(scale(emo, gamma.emo), scale(gen, gamma.gen));
  if (div.defined()) t = add(t, scale(div, gamma.div));
  return t;
}

double total_loss(double emo, double gen, double div, const LossWeights& gamma) {
  return gamma.emo * emo + gamma.gen * gen + gamma.div * div;
}

DiversityLoss DiversityLoss::frequency_weighted(std::span<const PreparedSample> samples, std::size_t vocab_size) {
  DiversityLoss d;
  d.mode_ = Mode::kFrequencyWeighted;
  std::vector<double> count(vocab_size, 0.0);
  for (const auto& s : samples)
    for (auto id : s.targets) count.at(id) += 1.0;
  d.weights_.resize(vocab_size);
  double total = 0;
  for (std::size_t i = 0; i < vocab_size; ++i) total += d.weights_[i] = 1.0 / (count[i] + 1.0);
  const double mean = total / static_cast<double>(vocab_size);
  for (auto& w : d.weights_) w /= mean;
  return d;
}

DiversityLoss DiversityLoss::from_name(const std::string& name, std::span<const PreparedSample> samples,
                                       std::size_t vocab_size) {
  if (name == "off") return off();
  if (name == "frequency") return frequency_weighted(samples, vocab_size);
  throw ConfigError("unknown diversity loss '" + name + "' (expected off or frequency)");
}

Tensor DiversityLoss::operator()(const Tensor& probs, std::span<const std::size_t> targets) const {
  if (!enabled()) return {};
  std::vector<double> w;
  for (auto id : targets) w.push_back(weights_.at(id));
  return cross_entropy(probs, targets, 1e-12, w);
}

void HyperParams::validate() const {
  if (gamma.emo < 0 || gamma.gen < 0 || gamma.div < 0) throw ConfigError("loss weights must be non-negative");
  if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
  if (warmup == 0) throw ConfigError("warmup must be at least 1 step");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("Adam eps must be positive");
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

double scheduled_lr(const HyperParams& hp, std::size_t step) {
  if (step == 0) throw ContractError("schedule steps start at 1");
  const double s = static_cast<double>(step), w = static_cast<double>(hp.warmup);
  return hp.lr0 * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(ParameterStore& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [path, t] : params.entries()) {
    m_[path].assign(t.size(), 0.0);
    v_[path].assign(t.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [path, t] : params_->entries()) {
    if (!t.has_grad()) continue;
    Tensor p = t;
    auto value = p.mutable_data();
    const auto g = p.grad();
    auto& m = m_.at(path);
    auto& v = v_.at(path);
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

LossTerms sample_losses(const ModelOutput& out, const PreparedSample& sample, const DiversityLoss& div,
                        const LossWeights& gamma) {
  LossTerms t;
  t.emo = emotion_loss(out.perception.emotion.probs, sample.emotion);
  t.gen = generation_loss(out.decoder.probs, sample.targets);
  t.div = div(out.decoder.probs, sample.targets);
  t.total = total_loss(t.emo, t.gen, t.div, gamma);
  return t;
}

std::string TrainLogEntry::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["L_emo"] = L_emo;
  j["L_gen"] = L_gen;
  j["L_div"] = L_div;
  j["total"] = total;
  j["lr"] = lr;
  return j.dump();
}

double mean_total_loss(const EmpSoaModel& model, std::span<const PreparedSample> samples,
                       const KnowledgeStore& knowledge, const DiversityLoss& div, const LossWeights& gamma) {
  if (samples.empty()) throw ContractError("mean loss over an empty set");
  std::vector<double> per(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    per[i] = sample_losses(model.forward(samples[i], knowledge, {}), samples[i], div, gamma).total.item();
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

namespace {

using Snapshot = std::map<std::string, std::vector<double>>;

Snapshot snapshot(const ParameterStore& store) {
  Snapshot s;
  for (const auto& [path, t] : store.entries()) s[path] = t.to_vector();
  return s;
}

void restore(ParameterStore& store, const Snapshot& s) {
  for (const auto& [path, t] : store.entries()) {
    Tensor p = t;
    std::ranges::copy(s.at(path), p.mutable_data().begin());
  }
}

void require_finite(double value, const char* term, std::size_t step) {
  if (!std::isfinite(value)) throw NonFiniteLossError(term, static_cast<long>(step));
}

}  // namespace

TrainResult train(EmpSoaModel& model, std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> validation_set, const KnowledgeStore& knowledge,
                  const HyperParams& hp, const DiversityLoss& div,
                  const std::function<void(const TrainLogEntry&)>& on_step) {
  hp.validate();
  TrainResult result;
  if (hp.epochs == 0 || train_set.empty()) return result;

  ParameterStore& params = model.parameters();
  Adam adam(params, hp.beta1, hp.beta2, hp.adam_eps);
  std::mt19937_64 order_rng(hp.seed);
  std::mt19937_64 dropout_rng(hp.seed ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  Snapshot best_params;
  std::size_t since_best = 0;
  bool capped = false;

  for (std::size_t epoch = 1; epoch <= hp.epochs && !capped; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      const std::size_t step = result.steps + 1;
      params.zero_grad();
      TrainLogEntry entry;
      entry.step = step;
      for (std::size_t i = start; i < end; ++i) {
        const PreparedSample& s = train_set[order[i]];
        Tape tape;
        Tape::Scope scope(tape);
        const ModelOutput out = model.forward(s, knowledge, {true, &dropout_rng});
        const LossTerms terms = sample_losses(out, s, div, hp.gamma);
        const double emo = terms.emo.item(), gen = terms.gen.item();
        const double dv = terms.div.defined() ? terms.div.item() : 0.0;
        require_finite(emo, "L_emo", step);
        require_finite(gen, "L_gen", step);
        require_finite(dv, "L_div", step);
        entry.L_emo += emo * inv_b;
        entry.L_gen += gen * inv_b;
        entry.L_div += dv * inv_b;
        tape.backward(scale(terms.total, inv_b));
      }
      entry.total = total_loss(entry.L_emo, entry.L_gen, entry.L_div, hp.gamma);
      entry.lr = scheduled_lr(hp, step);
      adam.step(entry.lr);
      result.steps = step;
      result.log.push_back(entry);
      if (on_step) on_step(entry);
      if (hp.max_steps && result.steps >= hp.max_steps) {
        capped = true;
        break;
      }
    }
    result.epochs = epoch;
    if (validation_set.empty()) continue;
    const double val = mean_total_loss(model, validation_set, knowledge, div, hp.gamma);
    result.validation_losses.push_back(val);
    if (val < best) {
      best = val;
      best_params = snapshot(params);
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (!best_params.empty()) restore(params, best_params);
  params.zero_grad();
  return result;
}

}  // namespace empsoa
