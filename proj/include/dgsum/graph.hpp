#pragma once

// Discourse graphs: relation inventory, labelled directed edges over EDU indices,
// the structural transformations used by the ablations, and graph statistics.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "dgsum/errors.hpp"
#include "json.hpp"

namespace dgsum {

enum class RelationType : std::uint8_t {
  Comment,
  ClarificationQuestion,
  Elaboration,
  Acknowledgement,
  Continuation,
  Explanation,
  Conditional,
  QuestionAnswerPair,
  Alternation,
  QuestionElaboration,
  Result,
  Background,
  Narration,
  Correction,
  Parallel,
  Contrast,
  Unknown,  // engine-internal: label suppressed by an ablation
  Other,    // parser could not name the relation
};

inline constexpr std::size_t kNumSdrtRelations = 16;
inline constexpr std::size_t kNumRelations = 18;

inline constexpr std::array<std::string_view, kNumRelations> kRelationNames{
    "Comment",     "ClarificationQuestion", "Elaboration", "Acknowledgement",     "Continuation",
    "Explanation", "Conditional",           "QuestionAnswerPair", "Alternation", "QuestionElaboration",
    "Result",      "Background",            "Narration",   "Correction",          "Parallel",
    "Contrast",    "Unknown",               "Other"};

constexpr std::size_t relation_index(RelationType r) noexcept { return static_cast<std::size_t>(r); }

constexpr RelationType relation_from_index(std::size_t i) noexcept { return static_cast<RelationType>(i); }

constexpr std::string_view relation_name(RelationType r) noexcept { return kRelationNames[relation_index(r)]; }

/// The 16 SDRT relations, in declaration order.
inline std::vector<RelationType> sdrt_relations() {
  std::vector<RelationType> out;
  for (std::size_t i = 0; i < kNumSdrtRelations; ++i) out.push_back(relation_from_index(i));
  return out;
}

namespace detail {
inline std::string fold_relation_name(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '_' && c != '-' && c != ' ' && c != '/') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace detail

/// Case-insensitive; '_', '-', ' ' and '/' separators are ignored ("question_answer_pair").
/// Unrecognized names are an error, never silently Other.
inline RelationType parse_relation(std::string_view name) {
  const auto folded = detail::fold_relation_name(name);
  for (std::size_t i = 0; i < kNumRelations; ++i)
    if (detail::fold_relation_name(kRelationNames[i]) == folded) return relation_from_index(i);
  throw ParseError("unknown relation label '" + std::string(name) + "'");
}

struct Edge {
  int src = 0;
  int dst = 0;
  RelationType relation = RelationType::Unknown;

  auto operator<=>(const Edge&) const = default;
};

struct DiscourseGraph {
  std::string meeting_id;
  int n_nodes = 0;
  std::vector<Edge> edges;

  bool operator==(const DiscourseGraph&) const = default;
};

/// Range and self-loop checks; `reject_duplicates` additionally forbids repeated
/// (src, dst, relation) triples, which is the load-time policy.
inline void check_graph(const DiscourseGraph& g, bool reject_duplicates = true) {
  if (g.n_nodes < 0) throw ContractError("graph: negative node count");
  std::set<Edge> seen;
  for (const auto& e : g.edges) {
    if (e.src < 0 || e.dst < 0 || e.src >= g.n_nodes || e.dst >= g.n_nodes)
      throw ContractError("graph '" + g.meeting_id + "': edge " + std::to_string(e.src) + "->" +
                          std::to_string(e.dst) + " out of range for " + std::to_string(g.n_nodes) + " nodes");
    if (e.src == e.dst) throw ContractError("graph '" + g.meeting_id + "': self-loop on node " + std::to_string(e.src));
    if (reject_duplicates && !seen.insert(e).second)
      throw ContractError("graph '" + g.meeting_id + "': duplicate edge " + std::to_string(e.src) + "->" +
                          std::to_string(e.dst) + " " + std::string(relation_name(e.relation)));
  }
}

/// Parses without range validation so that validate_corpus can report issues.
inline DiscourseGraph graph_from_json_unchecked(const nlohmann::json& j) {
  DiscourseGraph g;
  try {
    g.meeting_id = j.at("meeting_id").get<std::string>();
    g.n_nodes = j.at("n_nodes").get<int>();
    for (const auto& item : j.at("edges")) {
      if (!item.is_array() || item.size() != 3) throw ParseError("edge must be [src, dst, \"Relation\"]");
      g.edges.push_back({item[0].get<int>(), item[1].get<int>(), parse_relation(item[2].get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad graph JSON: ") + e.what());
  }
  return g;
}

inline DiscourseGraph graph_from_json(const nlohmann::json& j) {
  auto g = graph_from_json_unchecked(j);
  check_graph(g);
  return g;
}

inline nlohmann::json graph_to_json(const DiscourseGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges) edges.push_back({e.src, e.dst, std::string(relation_name(e.relation))});
  return {{"meeting_id", g.meeting_id}, {"n_nodes", g.n_nodes}, {"edges", std::move(edges)}};
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline DiscourseGraph load_graph(const std::filesystem::path& path) { return graph_from_json(read_json_file(path)); }

inline void save_graph(const std::filesystem::path& path, const DiscourseGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << graph_to_json(g).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Transformations. All preserve n_nodes and return new graphs.

using RelationSet = std::set<RelationType>;

inline RelationSet all_sdrt_relations() {
  const auto v = sdrt_relations();
  return {v.begin(), v.end()};
}

/// Labels outside `keep` become Unknown; edges and endpoints are untouched.
inline DiscourseGraph mask_relations(const DiscourseGraph& g, const RelationSet& keep) {
  DiscourseGraph out = g;
  for (auto& e : out.edges)
    if (!keep.contains(e.relation)) e.relation = RelationType::Unknown;
  return out;
}

/// Every label resampled uniformly from the 16 SDRT relations.
inline DiscourseGraph randomize_relations(const DiscourseGraph& g, std::uint64_t seed) {
  DiscourseGraph out = g;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, kNumSdrtRelations - 1);
  for (auto& e : out.edges) e.relation = relation_from_index(pick(rng));
  return out;
}

namespace detail {

inline std::size_t hidden_count(double rate, std::size_t n_edges) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ArgumentError("rate must lie in [0, 1]");
  // Small epsilon so that e.g. 0.3 * 10 floors to 3 despite binary rounding.
  return std::min(n_edges, static_cast<std::size_t>(std::floor(rate * static_cast<double>(n_edges) + 1e-9)));
}

/// Indices of `k` edges drawn uniformly without replacement, in ascending order.
inline std::vector<std::size_t> sample_edges(std::size_t n_edges, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n_edges);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_edges - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Removes floor(rate * |E|) edges chosen uniformly without replacement.
inline DiscourseGraph hide_edges(const DiscourseGraph& g, double rate, std::uint64_t seed) {
  const auto k = detail::hidden_count(rate, g.edges.size());
  const auto hidden = detail::sample_edges(g.edges.size(), k, seed);
  DiscourseGraph out = g;
  out.edges.clear();
  std::size_t h = 0;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (h < hidden.size() && hidden[h] == i) {
      ++h;
      continue;
    }
    out.edges.push_back(g.edges[i]);
  }
  return out;
}

/// Relabels floor(rate * |E|) randomly chosen edges as Unknown.
inline DiscourseGraph hide_relation_labels(const DiscourseGraph& g, double rate, std::uint64_t seed) {
  const auto k = detail::hidden_count(rate, g.edges.size());
  DiscourseGraph out = g;
  for (auto i : detail::sample_edges(g.edges.size(), k, seed)) out.edges[i].relation = RelationType::Unknown;
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

/// Undirected degree: number of incident edges (in + out) per node.
inline std::vector<int> degree_centrality(const DiscourseGraph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.n_nodes), 0);
  for (const auto& e : g.edges) {
    ++deg[static_cast<std::size_t>(e.src)];
    ++deg[static_cast<std::size_t>(e.dst)];
  }
  return deg;
}

/// Neighbour sets of the undirected simplification (no self-loops, no parallel edges).
inline std::vector<std::vector<int>> undirected_neighbors(const DiscourseGraph& g) {
  std::vector<std::set<int>> sets(static_cast<std::size_t>(g.n_nodes));
  for (const auto& e : g.edges) {
    if (e.src == e.dst) continue;
    sets[static_cast<std::size_t>(e.src)].insert(e.dst);
    sets[static_cast<std::size_t>(e.dst)].insert(e.src);
  }
  std::vector<std::vector<int>> out;
  out.reserve(sets.size());
  for (auto& s : sets) out.emplace_back(s.begin(), s.end());
  return out;
}

/// Local clustering coefficient per node on the undirected simplification; degree < 2 gives 0.
inline std::vector<double> local_clustering(const DiscourseGraph& g) {
  const auto nbrs = undirected_neighbors(g);
  std::vector<double> cc(nbrs.size(), 0.0);
  for (std::size_t v = 0; v < nbrs.size(); ++v) {
    const auto& nv = nbrs[v];
    const auto k = nv.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < k; ++a) {
      const auto& na = nbrs[static_cast<std::size_t>(nv[a])];
      for (std::size_t b = a + 1; b < k; ++b)
        if (std::binary_search(na.begin(), na.end(), nv[b])) ++links;
    }
    cc[v] = 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return cc;
}

struct GraphStats {
  std::size_t edge_count = 0;
  double density = 0.0;
  double avg_clustering = 0.0;

  bool operator==(const GraphStats&) const = default;
};

/// density = |E| / (n (n - 1)); avg_clustering = mean local clustering over all nodes.
inline GraphStats graph_stats(const DiscourseGraph& g) {
  if (g.n_nodes < 2) throw ArgumentError("graph_stats: density undefined for fewer than 2 nodes");
  GraphStats s;
  s.edge_count = g.edges.size();
  const double n = g.n_nodes;
  s.density = static_cast<double>(g.edges.size()) / (n * (n - 1.0));
  const auto cc = local_clustering(g);
  s.avg_clustering = std::accumulate(cc.begin(), cc.end(), 0.0) / n;
  return s;
}

inline std::array<std::size_t, kNumRelations> relation_histogram(const DiscourseGraph& g) {
  std::array<std::size_t, kNumRelations> h{};
  for (const auto& e : g.edges) ++h[relation_index(e.relation)];
  return h;
}

}  // namespace dgsum
