// dgsum command-line front end: train, evaluate, summarize, ablate, stats, synth.
//
// Exit codes: 0 success, 2 invalid input (corpus validation, malformed files, bad
// arguments), 1 any other runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dgsum/dgsum.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataFlags {
  std::string data;  // shorthand: <data>/corpus, <data>/graphs, <data>/embeddings, <data>/split.json
  std::string corpus, graphs, embeddings, split;

  void add_to(CLI::App& app) {
    app.add_option("--data", data, "Directory laid out as written by `synth`");
    app.add_option("--corpus", corpus, "Directory of meeting .jsonl files");
    app.add_option("--graphs", graphs, "Directory of graph .json files");
    app.add_option("--embeddings", embeddings, "Directory of <meeting_id>.demb files");
    app.add_option("--split", split, "Split JSON file");
  }

  dgsum::Dataset load() const {
    auto pick = [&](const std::string& explicit_path, const char* flag, const char* child) -> fs::path {
      if (!explicit_path.empty()) return explicit_path;
      if (data.empty()) throw dgsum::ArgumentError(std::string("missing --") + flag + " (or --data)");
      return fs::path(data) / child;
    };
    return dgsum::load_dataset(pick(corpus, "corpus", "corpus"), pick(graphs, "graphs", "graphs"),
                               pick(embeddings, "embeddings", "embeddings"), pick(split, "split", "split.json"));
  }
};

struct RunConfig {
  dgsum::ModelConfig model;
  dgsum::TrainConfig train;
  json ablation = json::object();
  json synthetic = json::object();
};

RunConfig load_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  const auto j = dgsum::read_json_file(path);
  if (j.contains("model")) c.model = dgsum::config_from_json(j.at("model"));
  if (j.contains("train")) c.train = dgsum::train_config_from_json(j.at("train"));
  if (j.contains("ablation")) c.ablation = j.at("ablation");
  if (j.contains("synthetic")) c.synthetic = j.at("synthetic");
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dgsum::Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void emit(const std::string& out_file, const json& j) {
  if (out_file.empty())
    std::cout << j.dump(2) << '\n';
  else
    write_json(out_file, j);
}

void require_valid(const dgsum::Dataset& d) {
  const auto report = dgsum::validate_dataset(d);
  if (!report.ok()) throw dgsum::ValidationError("corpus failed validation:\n" + report.to_string());
}

const std::vector<std::string>& split_part(const dgsum::Dataset& d, const std::string& part) {
  if (part == "train") return d.split.train;
  if (part == "validation") return d.split.validation;
  if (part == "test") return d.split.test;
  throw dgsum::ArgumentError("unknown split part '" + part + "'");
}

// ---------------------------------------------------------------------------

int cmd_train(const DataFlags& df, const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, std::optional<int> threads) {
  auto cfg = load_config(config_path);
  if (seed) cfg.train.seeds = {*seed};
  if (threads) cfg.train.threads = *threads;
  cfg.train.keep_parameters = true;
  const auto data = df.load();
  require_valid(data);
  const auto model = dgsum::with_input_dim(cfg.model, data);
  const auto result = dgsum::train(model, cfg.train, data);
  const fs::path out = out_dir.empty() ? fs::path("run") : fs::path(out_dir);
  fs::create_directories(out);
  for (const auto& r : result.runs)
    if (r.parameters) dgsum::save_checkpoint(out / ("seed_" + std::to_string(r.seed)), model, *r.parameters, r.seed);
  write_json(out / "config.json", {{"model", dgsum::config_to_json(model)}, {"train", dgsum::train_config_to_json(cfg.train)}});
  write_json(out / "metrics.json", dgsum::train_output_to_json(result));
  const auto& a = result.aggregate;
  std::cerr << dgsum::model_kind_name(model.kind) << ": test F1 " << a.f1_mean << " +/- " << a.f1_std << " over "
            << a.runs << " run(s)\n";
  return 0;
}

int cmd_evaluate(const DataFlags& df, const std::string& checkpoint, const std::string& part, double threshold,
                 const std::string& out_file) {
  const auto ck = dgsum::load_checkpoint(checkpoint);
  const auto data = df.load();
  require_valid(data);
  const auto prepared = dgsum::prepare_meetings(data, split_part(data, part), ck.config.kind);
  const auto m = dgsum::evaluate_meetings(ck.config, ck.params, prepared, threshold, 1.0, true);
  json j = dgsum::eval_to_json(m);
  j["split"] = part;
  j["model"] = dgsum::config_to_json(ck.config);
  j["seed"] = ck.seed;
  emit(out_file, j);
  return 0;
}

int cmd_summarize(const DataFlags& df, const std::string& checkpoint, const std::string& strategy_name,
                  double threshold, std::vector<std::string> ids, const std::string& part, const std::string& out_dir) {
  const auto ck = dgsum::load_checkpoint(checkpoint);
  const auto strategy = dgsum::parse_strategy(strategy_name);
  const auto data = df.load();
  require_valid(data);
  if (ids.empty()) ids = split_part(data, part);
  const auto prepared = dgsum::prepare_meetings(data, ids, ck.config.kind);
  json all = json::array();
  for (const auto& p : prepared) {
    const auto scores = dgsum::predict_meeting(ck.config, ck.params, p);
    const auto s = dgsum::summarize(strategy, scores, *p.meeting, threshold);
    auto j = dgsum::summary_to_json(s);
    if (!out_dir.empty()) write_json(fs::path(out_dir) / (p.meeting->meeting_id + ".json"), j);
    all.push_back(std::move(j));
  }
  if (out_dir.empty()) std::cout << all.dump(2) << '\n';
  return 0;
}

int cmd_ablate(const DataFlags& df, const std::string& config_path, const std::string& kind_name,
               const std::string& out_dir, std::optional<std::uint64_t> seed, const std::vector<double>& rates) {
  auto cfg = load_config(config_path);
  if (seed) cfg.train.seeds = {*seed};
  dgsum::AblationPlan plan;
  plan.kind = dgsum::parse_ablation_kind(kind_name);
  try {
    if (cfg.ablation.contains("rates")) plan.rates = cfg.ablation.at("rates").get<std::vector<double>>();
    if (cfg.ablation.contains("sets")) {
      plan.sets.clear();
      for (const auto& s : cfg.ablation.at("sets")) {
        dgsum::NamedRelationSet ns;
        ns.name = s.at("name").get<std::string>();
        for (const auto& r : s.at("relations")) ns.relations.insert(dgsum::parse_relation(r.get<std::string>()));
        plan.sets.push_back(std::move(ns));
      }
    }
  } catch (const json::exception& e) {
    throw dgsum::ParseError(std::string("bad ablation config: ") + e.what());
  }
  if (!rates.empty()) plan.rates = rates;
  const auto data = df.load();
  dgsum::ExperimentRunner runner(data, cfg.model, cfg.train);
  const auto report = runner.run(plan);
  const fs::path out = out_dir.empty() ? fs::path("ablation") : fs::path(out_dir);
  write_json(out / "ablation.json", dgsum::ablation_to_json(report));
  write_text(out / "ablation.csv", dgsum::ablation_to_csv(report));
  std::cerr << dgsum::ablation_to_csv(report);
  return 0;
}

int cmd_stats(const DataFlags& df, const std::vector<std::string>& graph_dirs, const std::string& out_dir) {
  json out = json::object();
  std::vector<fs::path> dirs(graph_dirs.begin(), graph_dirs.end());
  if (dirs.empty() && !df.graphs.empty()) dirs.emplace_back(df.graphs);
  if (dirs.empty() && !df.data.empty()) dirs.push_back(fs::path(df.data) / "graphs");
  if (dirs.empty()) throw dgsum::ArgumentError("stats: give --graphs, --compare or --data");
  const auto rows = dgsum::parser_comparison(dirs);
  json parsers = json::array();
  for (const auto& r : rows) parsers.push_back(dgsum::parser_stats_to_json(r));
  out["parsers"] = parsers;

  const bool have_corpus = !df.corpus.empty() || !df.data.empty();
  std::optional<std::vector<dgsum::CentralityBucket>> centrality;
  if (have_corpus) {
    const fs::path corpus = df.corpus.empty() ? fs::path(df.data) / "corpus" : fs::path(df.corpus);
    const auto meetings = dgsum::load_meetings(corpus, nullptr);
    centrality = dgsum::centrality_report(dgsum::load_graphs(dirs.front()), meetings);
    out["centrality"] = dgsum::centrality_to_json(*centrality);
  }
  if (out_dir.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    write_json(fs::path(out_dir) / "stats.json", out);
    write_text(fs::path(out_dir) / "parser_comparison.csv", dgsum::parser_comparison_to_csv(rows));
    if (centrality) write_text(fs::path(out_dir) / "centrality.csv", dgsum::centrality_to_csv(*centrality));
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
              const std::string& rule) {
  auto cfg = load_config(config_path);
  auto spec = dgsum::synthetic_spec_from_json(cfg.synthetic);
  if (seed) spec.seed = *seed;
  if (!rule.empty()) spec.rule = dgsum::parse_planting_rule(rule);
  const auto corpus = dgsum::generate_synthetic(spec);
  if (!dgsum::verify_planted_labels(corpus)) throw dgsum::Error("synthetic labels disagree with the planting rule");
  dgsum::save_synthetic(corpus, out_dir.empty() ? fs::path("synthetic") : fs::path(out_dir));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  dgsum::tune_allocator();
  CLI::App app{"Discourse-graph extractive meeting summarization"};
  app.require_subcommand(1);

  DataFlags df;
  std::string config, out;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "Train a model over the configured seeds");
  df.add_to(*train);
  std::optional<int> threads;
  train->add_option("--config", config, "JSON file with \"model\" and \"train\" sections");
  train->add_option("--out", out, "Run directory");
  train->add_option("--seed", seed, "Train a single seed instead of the configured list");
  train->add_option("--threads", threads, "Parallel seed runs");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a split");
  df.add_to(*evaluate);
  std::string checkpoint, part = "test";
  double threshold = 0.5;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  evaluate->add_option("--part", part, "train, validation or test");
  evaluate->add_option("--threshold", threshold, "Decision threshold");
  evaluate->add_option("--out", out, "Output JSON file (stdout if omitted)");

  auto* summarize = app.add_subcommand("summarize", "Emit budgeted summaries from a checkpoint");
  df.add_to(*summarize);
  std::string strategy = "rank_by_logits";
  std::vector<std::string> ids;
  summarize->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  summarize->add_option("--strategy", strategy, "threshold, rank_by_length or rank_by_logits");
  summarize->add_option("--threshold", threshold, "Decision threshold");
  summarize->add_option("--meeting", ids, "Meeting id (repeatable); defaults to the chosen split part");
  summarize->add_option("--part", part, "train, validation or test");
  summarize->add_option("--out", out, "Output directory (stdout if omitted)");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation sweep");
  df.add_to(*ablate);
  std::string kind;
  std::vector<double> rates;
  ablate->add_option("--kind", kind,
                     "single-relation, relation-set, hidden-relations, hidden-edges, randomized-relations, "
                     "no-relations")
      ->required();
  ablate->add_option("--config", config, "JSON file with \"model\", \"train\" and \"ablation\" sections");
  ablate->add_option("--rates", rates, "Rate grid for the hidden-* sweeps");
  ablate->add_option("--out", out, "Report directory");
  ablate->add_option("--seed", seed, "Run a single seed");

  auto* stats = app.add_subcommand("stats", "Graph statistics, parser comparison and centrality");
  df.add_to(*stats);
  std::vector<std::string> compare;
  stats->add_option("--compare", compare, "Graph directories to compare (repeatable)");
  stats->add_option("--out", out, "Report directory (stdout if omitted)");

  auto* synth = app.add_subcommand("synth", "Generate a planted-signal synthetic corpus");
  std::string rule;
  synth->add_option("--config", config, "JSON file with a \"synthetic\" section");
  synth->add_option("--rule", rule, "relation-dependent, embedding-only or structure-only");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(df, config, out, seed, threads);
    if (*evaluate) return cmd_evaluate(df, checkpoint, part, threshold, out);
    if (*summarize) return cmd_summarize(df, checkpoint, strategy, threshold, ids, part, out);
    if (*ablate) return cmd_ablate(df, config, kind, out, seed, rates);
    if (*stats) return cmd_stats(df, compare, out);
    if (*synth) return cmd_synth(config, out, seed, rule);
  } catch (const dgsum::ValidationError& e) {
    std::cerr << "validation failed: " << e.what() << '\n';
    return 2;
  } catch (const dgsum::ParseError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const dgsum::AlignmentError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const dgsum::ArgumentError& e) {
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
