#pragma once

// Supervised training: weighted BCE, Adam, early stopping on validation F1, and the
// seeded multi-run protocol whose results are averaged.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dgsum/autodiff.hpp"
#include "dgsum/dataset.hpp"
#include "dgsum/errors.hpp"
#include "dgsum/metrics.hpp"
#include "dgsum/models.hpp"
#include "dgsum/summarization.hpp"
#include "json.hpp"

namespace dgsum {

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 100;
  int patience = 10;
  std::optional<double> pos_weight;  // default: #negatives / #positives on the train split
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double threshold = 0.5;
  int threads = 1;
  bool keep_parameters = false;  // keep the restored best parameters in each RunResult

  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

inline void check_train_config(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ContractError("TrainConfig: learning_rate must be > 0");
  if (c.max_epochs < 1) throw ContractError("TrainConfig: max_epochs must be >= 1");
  if (c.patience < 0 || c.patience > c.max_epochs) throw ContractError("TrainConfig: patience must lie in [0, max_epochs]");
  if (c.seeds.empty()) throw ContractError("TrainConfig: seeds must be non-empty");
  if (c.pos_weight && *c.pos_weight < 1.0) throw ContractError("TrainConfig: pos_weight must be >= 1");
  if (c.threads < 1) throw ContractError("TrainConfig: threads must be >= 1");
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j{{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
                   {"seeds", c.seeds},                 {"threshold", c.threshold}};
  j["pos_weight"] = c.pos_weight ? nlohmann::json(*c.pos_weight) : nlohmann::json(nullptr);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  try {
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    if (j.contains("pos_weight") && !j.at("pos_weight").is_null()) c.pos_weight = j.at("pos_weight").get<double>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("threshold")) c.threshold = j.at("threshold").get<double>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad train config: ") + e.what());
  }
  return c;
}

/// Weighted BCE on plain vectors: mean_i -[w y log s + (1 - y) log(1 - s)], s clamped at 1e-7.
inline double bce_loss(std::span<const double> scores, std::span<const int> labels, double pos_weight) {
  if (scores.size() != labels.size())
    throw ContractError("bce_loss: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                        " labels");
  ad::Tape tape;
  ad::Matrix s(static_cast<Eigen::Index>(scores.size()), 1);
  for (std::size_t i = 0; i < scores.size(); ++i) s(static_cast<Eigen::Index>(i), 0) = scores[i];
  std::vector<double> y(labels.begin(), labels.end());
  return ad::bce(tape.constant(s), y, pos_weight).item();
}

// ---------------------------------------------------------------------------

struct StrategyScores {
  RougeScores threshold;
  RougeScores rank_by_length;
  RougeScores rank_by_logits;
};

struct EvalMetrics {
  PRF classification;
  StrategyScores rouge;
  double loss = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  int best_epoch = 0;  // 1-based
  int epochs_trained = 0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_f1;
  EvalMetrics test;
  bool failed = false;
  std::string failure;
  std::optional<ParameterSet> parameters;
};

struct Aggregate {
  int runs = 0;
  int failed = 0;
  double f1_mean = 0.0;
  double f1_std = 0.0;
  double precision_mean = 0.0;
  double recall_mean = 0.0;
  StrategyScores rouge_mean;
};

struct TrainOutput {
  ModelConfig model;
  TrainConfig train;
  double pos_weight = 1.0;
  std::vector<RunResult> runs;
  Aggregate aggregate;
};

/// One meeting ready for the model: features, operators and labels.
struct PreparedMeeting {
  const Meeting* meeting = nullptr;
  ad::Matrix features;
  GraphOperators ops;
  std::vector<double> labels;
};

inline std::vector<PreparedMeeting> prepare_meetings(const Dataset& d, const std::vector<std::string>& ids,
                                                     ModelKind kind) {
  std::vector<PreparedMeeting> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    PreparedMeeting p;
    p.meeting = &d.meeting(id);
    auto eit = d.embeddings.find(id);
    if (eit == d.embeddings.end()) throw ValidationError("no embeddings for '" + id + "'");
    p.features = to_matrix(eit->second);
    if (uses_graph(kind)) {
      auto git = d.graphs.find(id);
      if (git == d.graphs.end()) throw ValidationError("no graph for '" + id + "'");
      p.ops = build_operators(git->second, kind);
    }
    p.labels.assign(p.meeting->gold_labels.begin(), p.meeting->gold_labels.end());
    out.push_back(std::move(p));
  }
  return out;
}

inline double default_pos_weight(const Dataset& d) {
  long pos = 0, neg = 0;
  for (const auto& id : d.split.train) {
    const auto& m = d.meeting(id);
    pos += m.positives();
    neg += static_cast<long>(m.size()) - m.positives();
  }
  if (pos == 0) return 1.0;
  return std::max(1.0, static_cast<double>(neg) / static_cast<double>(pos));
}

// ---------------------------------------------------------------------------
// Adam

class Adam {
 public:
  Adam(const ParameterSet& ps, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : ps) {
      m_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
    }
    touched_.assign(ps.size(), false);
  }

  /// One step. `grads[i]` may be empty for parameters no gradient reached; a parameter
  /// that has never received a gradient has zero moments and is left untouched.
  void step(ParameterSet& ps, const std::vector<ad::Matrix>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const bool has = grads[i].size() != 0;
      if (!has && !touched_[i]) continue;
      touched_[i] = true;
      if (has) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      } else {
        m_[i] *= beta1_;
        v_[i] *= beta2_;
      }
      ps[i].value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<ad::Matrix> m_, v_;
  std::vector<bool> touched_;
};

// ---------------------------------------------------------------------------

inline std::vector<double> predict_meeting(const ModelConfig& mc, const ParameterSet& ps, const PreparedMeeting& p) {
  return predict(mc, ps, p.features, uses_graph(mc.kind) ? &p.ops : nullptr);
}

inline std::vector<int> threshold_labels(std::span<const double> scores, double tau) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= tau ? 1 : 0;
  return out;
}

/// Micro P/R/F1 at the threshold, mean per-meeting BCE, and mean ROUGE per strategy
/// (system summary vs full gold extract).
inline EvalMetrics evaluate_meetings(const ModelConfig& mc, const ParameterSet& ps,
                                     const std::vector<PreparedMeeting>& data, double threshold, double pos_weight,
                                     bool with_rouge) {
  EvalMetrics out;
  ConfusionCounts counts;
  double loss = 0.0;
  auto add = [](RougeScores& acc, const RougeScores& r) {
    acc.rouge1 += r.rouge1;
    acc.rouge2 += r.rouge2;
    acc.rougeL += r.rougeL;
  };
  for (const auto& p : data) {
    const auto scores = predict_meeting(mc, ps, p);
    counts.add(threshold_labels(scores, threshold), p.meeting->gold_labels);
    loss += bce_loss(scores, p.meeting->gold_labels, pos_weight);
    if (with_rouge) {
      const auto ref = gold_summary_text(*p.meeting);
      add(out.rouge.threshold, rouge_all(summarize(Strategy::Threshold, scores, *p.meeting, threshold).text, ref));
      add(out.rouge.rank_by_length,
          rouge_all(summarize(Strategy::RankByLength, scores, *p.meeting, threshold).text, ref));
      add(out.rouge.rank_by_logits,
          rouge_all(summarize(Strategy::RankByLogits, scores, *p.meeting, threshold).text, ref));
    }
  }
  out.classification = counts.prf();
  if (!data.empty()) {
    const double n = static_cast<double>(data.size());
    out.loss = loss / n;
    for (auto* r : {&out.rouge.threshold, &out.rouge.rank_by_length, &out.rouge.rank_by_logits}) {
      r->rouge1 /= n;
      r->rouge2 /= n;
      r->rougeL /= n;
    }
  }
  return out;
}

/// One gradient step on one whole meeting graph; returns the loss.
inline double train_step(const ModelConfig& mc, ParameterSet& ps, Adam& opt, const PreparedMeeting& p,
                         double pos_weight) {
  ad::Tape tape;
  auto bound = bind_parameters(tape, ps, true);
  auto scores = model_forward(mc, bound, tape.constant(p.features), uses_graph(mc.kind) ? &p.ops : nullptr);
  auto loss = ad::bce(scores, p.labels, pos_weight);
  tape.backward(loss);
  std::vector<ad::Matrix> grads;
  grads.reserve(ps.size());
  for (const auto& t : bound.tensors) grads.push_back(tape.has_grad(t.id()) ? t.grad() : ad::Matrix());
  opt.step(ps, grads);
  return loss.item();
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct PreparedSplits {
  std::vector<PreparedMeeting> train, validation, test;
};

inline PreparedSplits prepare_splits(const Dataset& d, ModelKind kind) {
  if (d.split.train.empty()) throw ContractError("train: empty training split");
  if (d.split.validation.empty()) throw ContractError("train: empty validation split");
  if (d.split.test.empty()) throw ContractError("train: empty test split");
  return {prepare_meetings(d, d.split.train, kind), prepare_meetings(d, d.split.validation, kind),
          prepare_meetings(d, d.split.test, kind)};
}

/// A single seeded run: init, shuffled per-meeting Adam steps, early stopping on
/// validation F1 (strict improvement), restore best, evaluate on test.
inline RunResult train_run(const ModelConfig& mc, const TrainConfig& tc, const PreparedSplits& data,
                           double pos_weight, std::uint64_t seed) {
  RunResult run;
  run.seed = seed;
  try {
    auto params = init_parameters(mc, derive_seed(seed, 0));
    Adam opt(params, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps);
    std::mt19937_64 shuffle_rng(derive_seed(seed, 1));
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    ParameterSet best = params;
    double best_f1 = -1.0;
    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double loss = 0.0;
      for (auto i : order) loss += train_step(mc, params, opt, data.train[i], pos_weight);
      run.train_loss.push_back(loss / static_cast<double>(order.size()));
      const auto val = evaluate_meetings(mc, params, data.validation, tc.threshold, pos_weight, false);
      run.val_loss.push_back(val.loss);
      run.val_f1.push_back(val.classification.f1);
      run.epochs_trained = epoch;
      if (val.classification.f1 > best_f1) {
        best_f1 = val.classification.f1;
        best = params;
        run.best_epoch = epoch;
      }
      if (epoch - run.best_epoch >= tc.patience) break;
    }
    run.test = evaluate_meetings(mc, best, data.test, tc.threshold, pos_weight, true);
    if (tc.keep_parameters) run.parameters = std::move(best);
  } catch (const DataError& e) {
    run.failed = true;
    run.failure = e.what();
  }
  return run;
}

inline Aggregate aggregate_runs(const std::vector<RunResult>& runs) {
  Aggregate a;
  std::vector<const RunResult*> ok;
  for (const auto& r : runs) {
    if (r.failed)
      ++a.failed;
    else
      ok.push_back(&r);
  }
  a.runs = static_cast<int>(ok.size());
  if (ok.empty()) return a;
  const double n = static_cast<double>(ok.size());
  for (const auto* r : ok) {
    a.f1_mean += r->test.classification.f1 / n;
    a.precision_mean += r->test.classification.precision / n;
    a.recall_mean += r->test.classification.recall / n;
    auto acc = [n](RougeScores& dst, const RougeScores& s) {
      dst.rouge1 += s.rouge1 / n;
      dst.rouge2 += s.rouge2 / n;
      dst.rougeL += s.rougeL / n;
    };
    acc(a.rouge_mean.threshold, r->test.rouge.threshold);
    acc(a.rouge_mean.rank_by_length, r->test.rouge.rank_by_length);
    acc(a.rouge_mean.rank_by_logits, r->test.rouge.rank_by_logits);
  }
  if (ok.size() > 1) {
    double ss = 0.0;
    for (const auto* r : ok) ss += (r->test.classification.f1 - a.f1_mean) * (r->test.classification.f1 - a.f1_mean);
    a.f1_std = std::sqrt(ss / (n - 1.0));
  }
  return a;
}

/// Fills input_dim from the corpus when the config leaves it at 0.
inline ModelConfig with_input_dim(ModelConfig c, const Dataset& d) {
  if (c.input_dim == 0) c.input_dim = static_cast<int>(embedding_dim(d));
  return c;
}

/// Full protocol over every configured seed. Refuses to start on a failing corpus.
inline TrainOutput train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Dataset& data) {
  check_config(model_cfg);
  check_train_config(train_cfg);
  const auto report = validate_dataset(data);
  if (!report.ok()) throw ValidationError("corpus failed validation:\n" + report.to_string());
  if (static_cast<std::size_t>(model_cfg.input_dim) != embedding_dim(data))
    throw ContractError("model input_dim " + std::to_string(model_cfg.input_dim) + " != embedding dim " +
                        std::to_string(embedding_dim(data)));
  const auto prepared = prepare_splits(data, model_cfg.kind);
  TrainOutput out;
  out.model = model_cfg;
  out.train = train_cfg;
  out.pos_weight = train_cfg.pos_weight.value_or(default_pos_weight(data));
  if (train_cfg.threads > 1) {
    std::vector<std::future<RunResult>> jobs;
    for (auto seed : train_cfg.seeds)
      jobs.push_back(std::async(std::launch::async, [&, seed] {
        return train_run(model_cfg, train_cfg, prepared, out.pos_weight, seed);
      }));
    for (auto& j : jobs) out.runs.push_back(j.get());
  } else {
    for (auto seed : train_cfg.seeds) out.runs.push_back(train_run(model_cfg, train_cfg, prepared, out.pos_weight, seed));
  }
  for (const auto& r : out.runs)
    if (r.failed) std::cerr << "warning: run with seed " << r.seed << " diverged and is excluded: " << r.failure << '\n';
  out.aggregate = aggregate_runs(out.runs);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json strategy_scores_to_json(const StrategyScores& s) {
  return {{"threshold", rouge_to_json(s.threshold)},
          {"rank_by_length", rouge_to_json(s.rank_by_length)},
          {"rank_by_logits", rouge_to_json(s.rank_by_logits)}};
}

inline nlohmann::json eval_to_json(const EvalMetrics& m) {
  return {{"classification", prf_to_json(m.classification)}, {"rouge", strategy_scores_to_json(m.rouge)}, {"loss", m.loss}};
}

inline nlohmann::json run_to_json(const RunResult& r) {
  nlohmann::json j{{"seed", r.seed},
                   {"best_epoch", r.best_epoch},
                   {"epochs_trained", r.epochs_trained},
                   {"train_loss", r.train_loss},
                   {"val_loss", r.val_loss},
                   {"val_f1", r.val_f1},
                   {"failed", r.failed}};
  if (r.failed)
    j["failure"] = r.failure;
  else
    j["test"] = eval_to_json(r.test);
  return j;
}

inline nlohmann::json aggregate_to_json(const Aggregate& a) {
  return {{"runs", a.runs},
          {"failed", a.failed},
          {"f1_mean", a.f1_mean},
          {"f1_std", a.f1_std},
          {"precision_mean", a.precision_mean},
          {"recall_mean", a.recall_mean},
          {"rouge_mean", strategy_scores_to_json(a.rouge_mean)}};
}

inline nlohmann::json train_output_to_json(const TrainOutput& o) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : o.runs) runs.push_back(run_to_json(r));
  return {{"model", config_to_json(o.model)},
          {"train", train_config_to_json(o.train)},
          {"pos_weight", o.pos_weight},
          {"runs", runs},
          {"aggregate", aggregate_to_json(o.aggregate)}};
}

}  // namespace dgsum
