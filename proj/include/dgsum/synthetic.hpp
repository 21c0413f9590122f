#pragma once

// Planted-signal corpora: Gaussian-mixture embeddings, discourse-like graphs, and labels
// that follow a known rule, so a perfect classifier exists by construction.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dgsum/corpus.hpp"
#include "dgsum/dataset.hpp"
#include "dgsum/errors.hpp"
#include "dgsum/graph.hpp"
#include "json.hpp"

namespace dgsum {

enum class PlantingRule { RelationDependent, EmbeddingOnly, StructureOnly };

inline constexpr std::array<std::string_view, 3> kPlantingRuleNames{"relation-dependent", "embedding-only",
                                                                    "structure-only"};

inline std::string_view planting_rule_name(PlantingRule r) { return kPlantingRuleNames[static_cast<std::size_t>(r)]; }

inline PlantingRule parse_planting_rule(std::string_view s) {
  for (std::size_t i = 0; i < kPlantingRuleNames.size(); ++i)
    if (kPlantingRuleNames[i] == s) return static_cast<PlantingRule>(i);
  throw ArgumentError("unknown planting rule '" + std::string(s) + "'");
}

inline std::map<RelationType, double> default_relation_distribution() {
  return {{RelationType::Acknowledgement, 0.20}, {RelationType::Continuation, 0.20},
          {RelationType::Elaboration, 0.15},     {RelationType::QuestionAnswerPair, 0.15},
          {RelationType::Result, 0.20},          {RelationType::Comment, 0.10}};
}

struct SyntheticSpec {
  int n_train = 60;
  int n_validation = 20;
  int n_test = 20;
  int min_nodes = 50;
  int max_nodes = 150;
  int embedding_dim = 16;
  std::map<RelationType, double> relation_distribution = default_relation_distribution();
  PlantingRule rule = PlantingRule::RelationDependent;
  RelationType planted_relation = RelationType::Result;
  int degree_threshold = 4;        // structure-only: positive iff degree >= threshold
  int attach_window = 6;           // a node attaches to one of the previous `attach_window` nodes
  double extra_edge_prob = 0.3;    // chance of a second incoming edge
  double detached_prob = 0.05;     // chance a node gets no parent edge
  double margin = 6.0;             // distance between mixture means along the separating direction
  double noise_std = 0.5;
  double offset = 1.0;             // shared mean component of both mixtures
  int min_words = 3;
  int max_words = 20;
  int vocabulary = 400;
  std::uint64_t seed = 0;

  int n_meetings() const { return n_train + n_validation + n_test; }
};

inline void check_synthetic_spec(const SyntheticSpec& s) {
  if (s.n_train < 1 || s.n_validation < 1 || s.n_test < 1) throw ContractError("synthetic: split sizes must be positive");
  if (s.min_nodes < 2 || s.max_nodes < s.min_nodes) throw ContractError("synthetic: bad node range");
  if (s.embedding_dim < 1) throw ContractError("synthetic: embedding_dim must be positive");
  if (s.relation_distribution.empty()) throw ContractError("synthetic: empty relation distribution");
  double total = 0.0;
  for (const auto& [r, p] : s.relation_distribution) {
    if (p < 0.0) throw ContractError("synthetic: negative relation probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("synthetic: relation distribution must sum to 1");
  if (s.attach_window < 1 || s.degree_threshold < 0 || s.min_words < 1 || s.max_words < s.min_words ||
      s.vocabulary < 1 || s.noise_std < 0.0)
    throw ContractError("synthetic: invalid generator parameters");
}

inline nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s) {
  nlohmann::json dist = nlohmann::json::object();
  for (const auto& [r, p] : s.relation_distribution) dist[std::string(relation_name(r))] = p;
  return {{"n_train", s.n_train},         {"n_validation", s.n_validation},
          {"n_test", s.n_test},           {"min_nodes", s.min_nodes},
          {"max_nodes", s.max_nodes},     {"embedding_dim", s.embedding_dim},
          {"relation_distribution", dist}, {"rule", std::string(planting_rule_name(s.rule))},
          {"planted_relation", std::string(relation_name(s.planted_relation))},
          {"degree_threshold", s.degree_threshold}, {"attach_window", s.attach_window},
          {"extra_edge_prob", s.extra_edge_prob},   {"detached_prob", s.detached_prob},
          {"margin", s.margin},           {"noise_std", s.noise_std},
          {"offset", s.offset},           {"min_words", s.min_words},
          {"max_words", s.max_words},     {"vocabulary", s.vocabulary},
          {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec s = {}) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_train", s.n_train);
    get("n_validation", s.n_validation);
    get("n_test", s.n_test);
    get("min_nodes", s.min_nodes);
    get("max_nodes", s.max_nodes);
    get("embedding_dim", s.embedding_dim);
    get("degree_threshold", s.degree_threshold);
    get("attach_window", s.attach_window);
    get("extra_edge_prob", s.extra_edge_prob);
    get("detached_prob", s.detached_prob);
    get("margin", s.margin);
    get("noise_std", s.noise_std);
    get("offset", s.offset);
    get("min_words", s.min_words);
    get("max_words", s.max_words);
    get("vocabulary", s.vocabulary);
    get("seed", s.seed);
    if (j.contains("rule")) s.rule = parse_planting_rule(j.at("rule").get<std::string>());
    if (j.contains("planted_relation")) s.planted_relation = parse_relation(j.at("planted_relation").get<std::string>());
    if (j.contains("relation_distribution")) {
      s.relation_distribution.clear();
      for (const auto& [name, p] : j.at("relation_distribution").items())
        s.relation_distribution[parse_relation(name)] = p.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad synthetic spec: ") + e.what());
  }
  return s;
}

struct SyntheticCorpus {
  Dataset data;
  /// Per meeting: 1 where the node's embedding was drawn from mixture A.
  std::map<std::string, std::vector<int>> mixture_a;
  SyntheticSpec spec;
};

/// Recomputes a label vector from the planting rule; the generator and the checker share
/// only this definition, not any generator state.
inline std::vector<int> planted_labels(const SyntheticSpec& spec, const DiscourseGraph& g, const std::vector<int>& mixture_a) {
  const auto n = static_cast<std::size_t>(g.n_nodes);
  std::vector<int> labels(n, 0);
  switch (spec.rule) {
    case PlantingRule::EmbeddingOnly:
      for (std::size_t v = 0; v < n; ++v) labels[v] = mixture_a[v];
      break;
    case PlantingRule::RelationDependent: {
      std::vector<int> has_incoming(n, 0);
      for (const auto& e : g.edges)
        if (e.relation == spec.planted_relation) has_incoming[static_cast<std::size_t>(e.dst)] = 1;
      for (std::size_t v = 0; v < n; ++v) labels[v] = mixture_a[v] && has_incoming[v];
      break;
    }
    case PlantingRule::StructureOnly: {
      const auto deg = degree_centrality(g);
      for (std::size_t v = 0; v < n; ++v) labels[v] = deg[v] >= spec.degree_threshold;
      break;
    }
  }
  return labels;
}

/// Brute-force check that every stored label equals the rule applied to the stored data.
inline bool verify_planted_labels(const SyntheticCorpus& c) {
  for (const auto& [id, m] : c.data.meetings) {
    const auto& g = c.data.graphs.at(id);
    const auto& a = c.mixture_a.at(id);
    if (planted_labels(c.spec, g, a) != m.gold_labels) return false;
  }
  return true;
}

inline std::string synthetic_meeting_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn%04d", i);
  return buf;
}

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  check_synthetic_spec(spec);
  SyntheticCorpus out;
  out.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Separating direction shared by the whole corpus.
  std::vector<double> direction(static_cast<std::size_t>(spec.embedding_dim));
  double norm = 0.0;
  for (auto& x : direction) {
    x = gauss(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : direction) x /= norm;

  std::vector<RelationType> rel_values;
  std::vector<double> rel_weights;
  for (const auto& [r, p] : spec.relation_distribution) {
    rel_values.push_back(r);
    rel_weights.push_back(p);
  }
  std::discrete_distribution<std::size_t> pick_relation(rel_weights.begin(), rel_weights.end());
  std::uniform_int_distribution<int> pick_nodes(spec.min_nodes, spec.max_nodes);
  std::uniform_int_distribution<int> pick_words(spec.min_words, spec.max_words);
  std::uniform_int_distribution<int> pick_vocab(0, spec.vocabulary - 1);
  static constexpr std::array<const char*, 4> kSpeakers{"A", "B", "C", "D"};
  std::uniform_int_distribution<std::size_t> pick_speaker(0, kSpeakers.size() - 1);

  for (int mi = 0; mi < spec.n_meetings(); ++mi) {
    const auto id = synthetic_meeting_id(mi);
    const int n = pick_nodes(rng);

    DiscourseGraph g;
    g.meeting_id = id;
    g.n_nodes = n;
    for (int v = 1; v < n; ++v) {
      if (unit(rng) < spec.detached_prob) continue;
      const int lo = std::max(0, v - spec.attach_window);
      std::uniform_int_distribution<int> pick_parent(lo, v - 1);
      const int p = pick_parent(rng);
      g.edges.push_back({p, v, rel_values[pick_relation(rng)]});
      if (v >= 2 && unit(rng) < spec.extra_edge_prob) {
        std::uniform_int_distribution<int> pick_other(0, v - 1);
        int q = pick_other(rng);
        if (q != p) g.edges.push_back({q, v, rel_values[pick_relation(rng)]});
      }
    }

    std::vector<int> mixture(static_cast<std::size_t>(n));
    EmbeddingMatrix emb;
    emb.n_rows = static_cast<std::size_t>(n);
    emb.dim = static_cast<std::size_t>(spec.embedding_dim);
    emb.values.resize(emb.n_rows * emb.dim);
    for (std::size_t v = 0; v < emb.n_rows; ++v) {
      mixture[v] = unit(rng) < 0.5 ? 1 : 0;
      const double side = mixture[v] ? 0.5 * spec.margin : -0.5 * spec.margin;
      for (std::size_t k = 0; k < emb.dim; ++k)
        emb.at(v, k) = static_cast<float>(spec.offset + side * direction[k] + spec.noise_std * gauss(rng));
    }

    Meeting m;
    m.meeting_id = id;
    for (int v = 0; v < n; ++v) {
      Edu e;
      e.index = v;
      e.speaker = kSpeakers[pick_speaker(rng)];
      const int words = pick_words(rng);
      for (int w = 0; w < words; ++w) {
        if (w) e.text += ' ';
        e.text += "w" + std::to_string(pick_vocab(rng));
      }
      e.word_count = words;
      m.edus.push_back(std::move(e));
    }
    m.gold_labels = planted_labels(spec, g, mixture);

    out.data.meetings.emplace(id, std::move(m));
    out.data.graphs.emplace(id, std::move(g));
    out.data.embeddings.emplace(id, std::move(emb));
    out.mixture_a.emplace(id, std::move(mixture));
    if (mi < spec.n_train)
      out.data.split.train.push_back(id);
    else if (mi < spec.n_train + spec.n_validation)
      out.data.split.validation.push_back(id);
    else
      out.data.split.test.push_back(id);
  }

  std::vector<const Meeting*> train;
  for (const auto& id : out.data.split.train) train.push_back(&out.data.meetings.at(id));
  const int budget = average_summary_budget(train);
  for (auto& [_, m] : out.data.meetings) m.budget_words = budget;
  return out;
}

/// Writes corpus/, graphs/, embeddings/, split.json and synthetic.json (spec + mixture
/// assignments) under `dir`.
inline void save_synthetic(const SyntheticCorpus& c, const std::filesystem::path& dir) {
  save_dataset(c.data, dir / "corpus", dir / "graphs", dir / "embeddings", dir / "split.json");
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [id, a] : c.mixture_a) mix[id] = a;
  std::ofstream out(dir / "synthetic.json", std::ios::binary);
  out << nlohmann::json{{"spec", synthetic_spec_to_json(c.spec)}, {"mixture_a", mix}}.dump(2) << '\n';
}

}  // namespace dgsum
