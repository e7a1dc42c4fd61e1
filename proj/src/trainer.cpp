#include "hyperadapters/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "hyperadapters/adam.hpp"

namespace hyperadapters {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("total_steps must be non-negative");
  if (warmup_steps < 0 || warmup_steps > total_steps) throw std::invalid_argument("warmup must lie in [0, total_steps]");
  if (!(peak_lr > 0.0)) throw std::invalid_argument("peak learning rate must be positive");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw std::invalid_argument("label smoothing must be in [0,1)");
  if (temperature < 1.0) throw std::invalid_argument("sampling temperature must be >= 1");
  if (eval_every <= 0) throw std::invalid_argument("eval_every must be positive");
  if (token_budget == 0) throw std::invalid_argument("token budget must be positive");
  if (clip_norm < 0.0) throw std::invalid_argument("clip_norm must be non-negative");
}

double lr_at(int step, double peak, int warmup) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (step == 0) return 0.0;
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (warmup == 0) return peak / std::sqrt(static_cast<double>(step));
  return peak * std::sqrt(static_cast<double>(warmup) / static_cast<double>(step));
}

double smoothed_entropy_floor(double alpha, int vocab) {
  const double V = vocab;
  const double on = 1.0 - alpha + alpha / V, off = alpha / V;
  double h = -on * std::log(on);
  if (off > 0.0) h -= (V - 1.0) * off * std::log(off);
  return h;
}

double validation_loss(const AdaptedModel& system, const Corpus& corpus, std::span<const ParallelPair> pairs,
                       double label_smoothing, std::map<std::string, double>* per_language) {
  if (pairs.empty()) throw std::invalid_argument("validation_loss: empty validation set");
  std::map<LangId, std::vector<Example>> groups;
  for (const auto& p : pairs) {
    const LangId key = p.pair.source == corpus.pivot ? p.pair.target : p.pair.source;
    groups[key].push_back(corpus.to_example(p));
  }
  double total = 0.0;
  for (auto& [lang, examples] : groups) {
    std::stable_sort(examples.begin(), examples.end(), [](const Example& a, const Example& b) { return a.pair < b.pair; });
    const double l = system.score(examples, label_smoothing).loss;
    if (per_language) (*per_language)[corpus.languages[static_cast<std::size_t>(lang)].name] = l;
    total += l;
  }
  return total / static_cast<double>(groups.size());
}

std::vector<double> activation_sd(const ForwardTrace& trace, const Batch& batch) {
  auto sd_of = [&](const Var& site, std::size_t len, const std::vector<std::size_t>& lengths) {
    const auto& v = site.value();
    const std::size_t d = v.shape()[1];
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < batch.size; ++b) {
      for (std::size_t i = 0; i < lengths[b]; ++i) {
        const double* row = v.data().data() + (b * len + i) * d;
        for (std::size_t j = 0; j < d; ++j) {
          sum += row[j];
          sq += row[j] * row[j];
        }
        n += d;
      }
    }
    const double mean = sum / static_cast<double>(n);
    return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
  };
  std::vector<double> out;
  for (const auto& s : trace.encoder_sites) out.push_back(sd_of(s, batch.src_len, batch.src_lengths));
  for (const auto& s : trace.decoder_sites) out.push_back(sd_of(s, batch.tgt_len, batch.tgt_lengths));
  return out;
}

std::vector<double> measure_activation_sd(const AdaptedModel& system, const Batch& batch) {
  if (batch.size == 0) throw std::invalid_argument("measure_activation_sd: empty batch");
  Tape tape(false);
  ForwardTrace trace;
  system.model().loss(tape, batch, system.adapters(), 0.0, ForwardContext{}, &trace);
  return activation_sd(trace, batch);
}

namespace {

std::vector<Tensor> snapshot(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p->value());
  return out;
}

bool finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrainResult train(AdaptedModel& system, const Corpus& corpus, const TrainConfig& config) {
  config.validate();
  if (corpus.vocabulary().size() != system.vocabulary().size() ||
      corpus.n_languages() != system.vocabulary().n_languages || corpus.pivot != system.pivot()) {
    throw std::invalid_argument("train: model and corpus language registries differ");
  }
  TrainResult result;
  const auto params = system.parameters();
  if (config.total_steps == 0) return result;

  BatchSampler sampler(corpus, corpus.train, config.temperature, config.token_budget);
  auto batch_rng = make_rng(config.seed, "train.batches");
  auto dropout_rng = make_rng(config.seed, "train.dropout");
  AdamState adam(params);
  const auto vocab = corpus.vocabulary();

  auto evaluate = [&](int step, TrainingRecord& rec) {
    const double v = validation_loss(system, corpus, corpus.valid, config.label_smoothing);
    rec.val_loss = v;
    if (!std::isfinite(v)) return;
    if (!result.best_val_loss || v < *result.best_val_loss) {
      result.best_val_loss = v;
      result.best_step = step;
      result.best_parameters = snapshot(params);
    }
    result.best_val_history.push_back(*result.best_val_loss);
  };

  for (int step = 1; step <= config.total_steps; ++step) {
    const auto examples = sampler.next(batch_rng);
    const auto batch = make_batch(examples, vocab);
    TrainingRecord rec;
    rec.step = step;
    rec.lr = lr_at(step, config.peak_lr, config.warmup_steps);

    zero_grads(params);
    Tape tape;
    ForwardTrace trace;
    const ForwardContext ctx{true, &dropout_rng};
    auto loss = system.model().loss(tape, batch, system.adapters(), config.label_smoothing, ctx,
                                    config.instrument ? &trace : nullptr);
    rec.loss = loss.value()[0];
    if (config.instrument) rec.act_sd = activation_sd(trace, batch);
    if (!std::isfinite(rec.loss) || !finite(rec.act_sd)) {
      result.diverged_at = step;
      result.records.push_back(std::move(rec));
      break;
    }
    tape.backward(loss);
    if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
    try {
      adam_step(params, adam, rec.lr);
    } catch (const std::domain_error&) {
      result.diverged_at = step;
      result.records.push_back(std::move(rec));
      break;
    }
    if (step % config.eval_every == 0 || step == config.total_steps) evaluate(step, rec);
    result.records.push_back(std::move(rec));
  }
  return result;
}

void restore_best(const AdaptedModel& system, const TrainResult& result) {
  if (result.best_parameters.empty()) return;
  const auto params = system.parameters();
  if (params.size() != result.best_parameters.size()) throw std::invalid_argument("restore_best: parameter list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = result.best_parameters[i];
}

void write_metrics_jsonl(std::ostream& out, const std::vector<TrainingRecord>& records, const SchemeConfig& scheme) {
  const json d_h = scheme.kind == SchemeKind::Hyper ? json(scheme.hyper.hidden) : json(nullptr);
  for (const auto& r : records) {
    json j;
    j["step"] = r.step;
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    j["act_sd"] = r.act_sd;
    j["val_loss"] = r.val_loss ? json(*r.val_loss) : json(nullptr);
    j["scheme"] = scheme_name(scheme.kind);
    j["d_h"] = d_h;
    out << j.dump() << '\n';
  }
}

}  // namespace hyperadapters
