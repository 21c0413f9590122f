#pragma once

// Ablation sweeps, centrality analysis and parser comparison.
//
// Every sweep cell trains the full seeded protocol on a transformed copy of the graphs.
// For seed s the transformation seed is derive_seed(s, kTransformStream) and meeting k
// uses derive_seed(transformation seed, k), so a cell is reproducible from
// (seed, transformation seed, config). Rate sweeps share the transformation seed across
// rates, which makes the hidden sets nested as the rate grows.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dgsum/dataset.hpp"
#include "dgsum/errors.hpp"
#include "dgsum/graph.hpp"
#include "dgsum/training.hpp"
#include "json.hpp"

namespace dgsum {

enum class AblationKind { SingleRelation, RelationSet, HiddenRelations, HiddenEdges, RandomizedRelations, NoRelations };

inline constexpr std::array<std::string_view, 6> kAblationKindNames{
    "single-relation", "relation-set", "hidden-relations", "hidden-edges", "randomized-relations", "no-relations"};

inline std::string_view ablation_kind_name(AblationKind k) { return kAblationKindNames[static_cast<std::size_t>(k)]; }

inline AblationKind parse_ablation_kind(std::string_view s) {
  for (std::size_t i = 0; i < kAblationKindNames.size(); ++i)
    if (kAblationKindNames[i] == s) return static_cast<AblationKind>(i);
  throw ArgumentError("unknown ablation kind '" + std::string(s) + "'");
}

struct NamedRelationSet {
  std::string name;
  RelationSet relations;
};

/// The four heuristic relation groups studied jointly.
inline std::vector<NamedRelationSet> default_relation_sets() {
  using R = RelationType;
  return {{"Acknowledgement+Continuation+Elaboration", {R::Acknowledgement, R::Continuation, R::Elaboration}},
          {"Continuation+Elaboration+Result", {R::Continuation, R::Elaboration, R::Result}},
          {"QuestionAnswerPair+Result+Acknowledgement", {R::QuestionAnswerPair, R::Result, R::Acknowledgement}},
          {"QuestionAnswerPair+Explanation+Elaboration+Result",
           {R::QuestionAnswerPair, R::Explanation, R::Elaboration, R::Result}}};
}

inline std::vector<double> default_rate_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

struct AblationPlan {
  AblationKind kind = AblationKind::SingleRelation;
  std::vector<NamedRelationSet> sets = default_relation_sets();  // RelationSet
  std::vector<double> rates = default_rate_grid();               // HiddenRelations / HiddenEdges
};

inline void check_plan(const AblationPlan& p) {
  for (double r : p.rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ContractError("ablation plan: rate " + std::to_string(r) + " outside [0, 1]");
  for (const auto& s : p.sets)
    for (auto r : s.relations)
      if (relation_index(r) >= kNumSdrtRelations)
        throw ContractError("ablation plan: set '" + s.name + "' contains a non-SDRT relation");
}

struct CellResult {
  std::string name;
  nlohmann::json parameters;  // what was applied (relation, set, rate, ...)
  std::vector<RunResult> runs;
  std::vector<std::uint64_t> transform_seeds;  // aligned with runs
  Aggregate aggregate;
  std::string error;  // non-empty when the cell could not run
};

struct AblationReport {
  std::string kind;
  ModelConfig model;
  TrainConfig train;
  std::vector<CellResult> cells;

  const CellResult& cell(const std::string& name) const {
    for (const auto& c : cells)
      if (c.name == name) return c;
    throw ContractError("no cell named '" + name + "'");
  }
};

inline constexpr std::uint64_t kTransformStream = 1000;

using GraphTransform = std::function<DiscourseGraph(const DiscourseGraph&, std::uint64_t seed)>;

/// Runs sweep cells against one base dataset. Identical (graphs, config, seed) inputs
/// are trained once: training is deterministic, so repeated cells reuse the result.
class ExperimentRunner {
 public:
  ExperimentRunner(Dataset base, ModelConfig model, TrainConfig train)
      : base_(std::move(base)), model_(std::move(model)), train_(std::move(train)) {
    check_train_config(train_);
    const auto report = validate_dataset(base_);
    if (!report.ok()) throw ValidationError("corpus failed validation:\n" + report.to_string());
    model_ = with_input_dim(model_, base_);
    check_config(model_);
    if (static_cast<std::size_t>(model_.input_dim) != embedding_dim(base_))
      throw ContractError("model input_dim does not match the corpus embedding dim");
    pos_weight_ = train_.pos_weight.value_or(default_pos_weight(base_));
  }

  const Dataset& base() const { return base_; }
  const ModelConfig& model() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  std::size_t trained_runs() const { return trained_; }

  CellResult run_cell(std::string name, nlohmann::json parameters, const GraphTransform& transform) {
    CellResult cell;
    cell.name = std::move(name);
    cell.parameters = std::move(parameters);
    try {
      for (auto seed : train_.seeds) {
        const auto tseed = derive_seed(seed, kTransformStream);
        Dataset d = base_;
        std::uint64_t k = 0;
        for (auto& [id, g] : d.graphs) g = transform(g, derive_seed(tseed, k++));
        const auto key = fingerprint(d, seed);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
          const auto prepared = prepare_splits(d, model_.kind);
          auto run = train_run(model_, train_, prepared, pos_weight_, seed);
          run.parameters.reset();
          ++trained_;
          it = cache_.emplace(key, std::move(run)).first;
        }
        cell.runs.push_back(it->second);
        cell.transform_seeds.push_back(tseed);
      }
    } catch (const Error& e) {
      cell.error = e.what();
    }
    for (const auto& r : cell.runs)
      if (r.failed) std::cerr << "warning: cell " << cell.name << " seed " << r.seed << " diverged: " << r.failure << '\n';
    cell.aggregate = aggregate_runs(cell.runs);
    return cell;
  }

  CellResult run_unablated() {
    return run_cell("Unablated", {{"transform", "none"}}, [](const DiscourseGraph& g, std::uint64_t) { return g; });
  }

  CellResult run_masked(std::string name, const RelationSet& keep) {
    nlohmann::json rels = nlohmann::json::array();
    for (auto r : keep) rels.push_back(std::string(relation_name(r)));
    return run_cell(std::move(name), {{"transform", "mask_relations"}, {"keep", rels}},
                    [keep](const DiscourseGraph& g, std::uint64_t) { return mask_relations(g, keep); });
  }

  CellResult run_randomized() {
    return run_cell("Randomized", {{"transform", "randomize_relations"}},
                    [](const DiscourseGraph& g, std::uint64_t s) { return randomize_relations(g, s); });
  }

  /// One cell per SDRT relation (only that label kept), then "None" (no labels) and
  /// "Randomized" (labels resampled uniformly).
  AblationReport single_relation() {
    auto rep = report("single-relation");
    for (auto r : sdrt_relations()) rep.cells.push_back(run_masked(std::string(relation_name(r)), {r}));
    rep.cells.push_back(run_masked("None", {}));
    rep.cells.push_back(run_randomized());
    return rep;
  }

  AblationReport relation_sets(const std::vector<NamedRelationSet>& sets) {
    auto rep = report("relation-set");
    for (const auto& s : sets) rep.cells.push_back(run_masked(s.name, s.relations));
    return rep;
  }

  AblationReport rate_sweep(AblationKind kind, const std::vector<double>& grid) {
    if (kind != AblationKind::HiddenEdges && kind != AblationKind::HiddenRelations)
      throw ArgumentError("rate_sweep: kind must be hidden-edges or hidden-relations");
    for (double r : grid)
      if (!(r >= 0.0 && r <= 1.0)) throw ArgumentError("rate_sweep: rate outside [0, 1]");
    auto rep = report(std::string(ablation_kind_name(kind)));
    for (double rate : grid) {
      std::ostringstream name;
      name << rate;
      if (kind == AblationKind::HiddenEdges)
        rep.cells.push_back(run_cell(name.str(), {{"transform", "hide_edges"}, {"rate", rate}},
                                     [rate](const DiscourseGraph& g, std::uint64_t s) { return hide_edges(g, rate, s); }));
      else
        rep.cells.push_back(run_cell(name.str(), {{"transform", "hide_relation_labels"}, {"rate", rate}},
                                     [rate](const DiscourseGraph& g, std::uint64_t s) {
                                       return hide_relation_labels(g, rate, s);
                                     }));
    }
    return rep;
  }

  AblationReport run(const AblationPlan& plan) {
    check_plan(plan);
    switch (plan.kind) {
      case AblationKind::SingleRelation:
        return single_relation();
      case AblationKind::RelationSet:
        return relation_sets(plan.sets);
      case AblationKind::HiddenRelations:
      case AblationKind::HiddenEdges:
        return rate_sweep(plan.kind, plan.rates);
      case AblationKind::RandomizedRelations: {
        auto rep = report("randomized-relations");
        rep.cells.push_back(run_unablated());
        rep.cells.push_back(run_randomized());
        return rep;
      }
      case AblationKind::NoRelations: {
        auto rep = report("no-relations");
        rep.cells.push_back(run_unablated());
        rep.cells.push_back(run_masked("None", {}));
        return rep;
      }
    }
    throw ContractError("unreachable ablation kind");
  }

 private:
  AblationReport report(std::string kind) const {
    AblationReport r;
    r.kind = std::move(kind);
    r.model = model_;
    r.train = train_;
    return r;
  }

  std::uint64_t fingerprint(const Dataset& d, std::uint64_t seed) const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ULL;
      }
    };
    mix(seed);
    for (const auto& [id, g] : d.graphs) {
      mix(static_cast<std::uint64_t>(g.n_nodes));
      mix(g.edges.size());
      for (const auto& e : g.edges) {
        mix(static_cast<std::uint64_t>(e.src));
        mix(static_cast<std::uint64_t>(e.dst));
        mix(relation_index(e.relation));
      }
    }
    return h;
  }

  Dataset base_;
  ModelConfig model_;
  TrainConfig train_;
  double pos_weight_ = 1.0;
  std::map<std::uint64_t, RunResult> cache_;
  std::size_t trained_ = 0;
};

inline nlohmann::json cell_to_json(const CellResult& c) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.runs.size(); ++i) {
    auto j = run_to_json(c.runs[i]);
    j["transform_seed"] = c.transform_seeds[i];
    runs.push_back(std::move(j));
  }
  nlohmann::json out{{"name", c.name}, {"parameters", c.parameters}, {"runs", runs},
                     {"aggregate", aggregate_to_json(c.aggregate)}};
  if (!c.error.empty()) out["error"] = c.error;
  return out;
}

inline nlohmann::json ablation_to_json(const AblationReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  return {{"kind", r.kind}, {"model", config_to_json(r.model)}, {"train", train_config_to_json(r.train)},
          {"cells", cells}};
}

/// Plot-ready rows: cell,f1_mean,f1_std,precision_mean,recall_mean,runs,failed.
inline std::string ablation_to_csv(const AblationReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << "cell,f1_mean,f1_std,precision_mean,recall_mean,runs,failed\n";
  for (const auto& c : r.cells)
    out << c.name << ',' << c.aggregate.f1_mean << ',' << c.aggregate.f1_std << ',' << c.aggregate.precision_mean << ','
        << c.aggregate.recall_mean << ',' << c.aggregate.runs << ',' << c.aggregate.failed << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Centrality

inline constexpr std::size_t kCentralityBuckets = 6;  // degrees 0,1,2,3,4,5+

struct CentralityBucket {
  std::string label;
  long in_summary = 0;
  long out_summary = 0;

  long total() const { return in_summary + out_summary; }
  double in_share() const { return total() ? static_cast<double>(in_summary) / static_cast<double>(total()) : 0.0; }
};

/// Nodes bucketed by undirected degree with the share inside / outside the gold summary.
inline std::vector<CentralityBucket> centrality_report(const std::map<std::string, DiscourseGraph>& graphs,
                                                       const std::map<std::string, Meeting>& meetings) {
  std::vector<CentralityBucket> buckets(kCentralityBuckets);
  for (std::size_t b = 0; b < kCentralityBuckets; ++b)
    buckets[b].label = b + 1 == kCentralityBuckets ? std::to_string(b) + "+" : std::to_string(b);
  for (const auto& [id, g] : graphs) {
    auto mit = meetings.find(id);
    if (mit == meetings.end()) throw ContractError("centrality: no meeting for graph '" + id + "'");
    const auto& labels = mit->second.gold_labels;
    if (labels.size() != static_cast<std::size_t>(g.n_nodes))
      throw AlignmentError("centrality: node count mismatch for '" + id + "'");
    const auto deg = degree_centrality(g);
    for (std::size_t v = 0; v < deg.size(); ++v) {
      auto& b = buckets[std::min<std::size_t>(static_cast<std::size_t>(deg[v]), kCentralityBuckets - 1)];
      (labels[v] ? b.in_summary : b.out_summary)++;
    }
  }
  return buckets;
}

inline std::string centrality_to_csv(const std::vector<CentralityBucket>& buckets) {
  std::ostringstream out;
  out.precision(10);
  out << "degree,nodes,in_summary,out_summary,in_percent,out_percent\n";
  for (const auto& b : buckets)
    out << b.label << ',' << b.total() << ',' << b.in_summary << ',' << b.out_summary << ',' << 100.0 * b.in_share()
        << ',' << (b.total() ? 100.0 - 100.0 * b.in_share() : 0.0) << '\n';
  return out.str();
}

inline nlohmann::json centrality_to_json(const std::vector<CentralityBucket>& buckets) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& b : buckets)
    out.push_back({{"degree", b.label}, {"in_summary", b.in_summary}, {"out_summary", b.out_summary},
                   {"in_share", b.in_share()}});
  return out;
}

// ---------------------------------------------------------------------------
// Parser comparison

struct ParserStats {
  std::string name;
  std::size_t graphs = 0;
  double mean_edges = 0.0;
  double mean_density = 0.0;     // over graphs with >= 2 nodes
  double mean_clustering = 0.0;  // over graphs with >= 2 nodes
  std::array<double, kNumRelations> relation_frequency{};  // share of all edges
  std::optional<Aggregate> downstream;
};

inline ParserStats parser_stats(std::string name, const std::map<std::string, DiscourseGraph>& graphs) {
  ParserStats s;
  s.name = std::move(name);
  s.graphs = graphs.size();
  std::size_t with_stats = 0;
  std::size_t total_edges = 0;
  std::array<std::size_t, kNumRelations> hist{};
  for (const auto& [_, g] : graphs) {
    check_graph(g, false);
    s.mean_edges += static_cast<double>(g.edges.size());
    total_edges += g.edges.size();
    const auto h = relation_histogram(g);
    for (std::size_t r = 0; r < kNumRelations; ++r) hist[r] += h[r];
    if (g.n_nodes < 2) continue;
    const auto st = graph_stats(g);
    s.mean_density += st.density;
    s.mean_clustering += st.avg_clustering;
    ++with_stats;
  }
  if (s.graphs) s.mean_edges /= static_cast<double>(s.graphs);
  if (with_stats) {
    s.mean_density /= static_cast<double>(with_stats);
    s.mean_clustering /= static_cast<double>(with_stats);
  }
  if (total_edges)
    for (std::size_t r = 0; r < kNumRelations; ++r)
      s.relation_frequency[r] = static_cast<double>(hist[r]) / static_cast<double>(total_edges);
  return s;
}

/// One row per graph directory, named after the directory.
inline std::vector<ParserStats> parser_comparison(const std::vector<std::filesystem::path>& dirs) {
  std::vector<ParserStats> rows;
  for (const auto& dir : dirs) {
    auto name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    rows.push_back(parser_stats(name, load_graphs(dir)));
  }
  return rows;
}

inline nlohmann::json parser_stats_to_json(const ParserStats& s) {
  nlohmann::json freq = nlohmann::json::object();
  for (std::size_t r = 0; r < kNumRelations; ++r)
    freq[std::string(relation_name(relation_from_index(r)))] = s.relation_frequency[r];
  nlohmann::json j{{"name", s.name},
                   {"graphs", s.graphs},
                   {"mean_edges", s.mean_edges},
                   {"mean_density", s.mean_density},
                   {"mean_clustering", s.mean_clustering},
                   {"relation_frequency", freq}};
  if (s.downstream) j["downstream"] = aggregate_to_json(*s.downstream);
  return j;
}

inline std::string parser_comparison_to_csv(const std::vector<ParserStats>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "parser,graphs,mean_edges,mean_density,mean_clustering,f1_mean\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.graphs << ',' << r.mean_edges << ',' << r.mean_density << ',' << r.mean_clustering << ',';
    if (r.downstream) out << r.downstream->f1_mean;
    out << '\n';
  }
  return out.str();
}

}  // namespace dgsum
