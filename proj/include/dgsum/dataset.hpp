#pragma once

// A corpus on disk: meeting files, graph files, embedding files and a split, loaded
// together and cross-validated.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dgsum/corpus.hpp"
#include "dgsum/errors.hpp"
#include "dgsum/graph.hpp"

namespace dgsum {

struct Dataset {
  std::map<std::string, Meeting> meetings;
  std::map<std::string, DiscourseGraph> graphs;
  std::map<std::string, EmbeddingMatrix> embeddings;
  CorpusSplit split;

  const Meeting& meeting(const std::string& id) const {
    auto it = meetings.find(id);
    if (it == meetings.end()) throw ContractError("unknown meeting '" + id + "'");
    return it->second;
  }
};

enum class IssueKind { MissingMeeting, MissingGraph, MissingEmbedding, NodeCountMismatch, EdgeOutOfRange, SelfLoop,
                       DuplicateEdge, DimensionMismatch, BadMeeting };

inline std::string_view issue_kind_name(IssueKind k) {
  static constexpr std::array<std::string_view, 9> names{
      "missing_meeting", "missing_graph",  "missing_embedding", "node_count_mismatch", "edge_out_of_range",
      "self_loop",       "duplicate_edge", "dimension_mismatch", "bad_meeting"};
  return names[static_cast<std::size_t>(k)];
}

struct ValidationIssue {
  std::string meeting_id;
  IssueKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const noexcept { return issues.empty(); }

  bool has_issue(const std::string& meeting_id) const {
    for (const auto& i : issues)
      if (i.meeting_id == meeting_id) return true;
    return false;
  }

  std::string to_string() const {
    std::string out;
    for (const auto& i : issues)
      out += i.meeting_id + ": " + std::string(issue_kind_name(i.kind)) + ": " + i.detail + "\n";
    return out;
  }
};

/// Per-meeting agreement of node counts across transcript, graph and embeddings, plus
/// edge validity and a corpus-wide embedding dimension. Report-only; never throws.
inline ValidationReport validate_corpus(const std::map<std::string, Meeting>& meetings,
                                        const std::map<std::string, DiscourseGraph>& graphs,
                                        const std::map<std::string, EmbeddingMatrix>& embeddings) {
  ValidationReport rep;
  auto issue = [&](const std::string& id, IssueKind k, std::string d) { rep.issues.push_back({id, k, std::move(d)}); };
  std::optional<std::size_t> dim;
  std::set<std::string> ids;
  for (const auto& [id, _] : meetings) ids.insert(id);
  for (const auto& [id, _] : graphs) ids.insert(id);
  for (const auto& [id, _] : embeddings) ids.insert(id);
  for (const auto& id : ids) {
    const auto mit = meetings.find(id);
    const auto git = graphs.find(id);
    const auto eit = embeddings.find(id);
    if (mit == meetings.end()) {
      issue(id, IssueKind::MissingMeeting, "no meeting file");
      continue;
    }
    const auto& m = mit->second;
    const auto n = m.size();
    try {
      check_meeting(m);
    } catch (const Error& e) {
      issue(id, IssueKind::BadMeeting, e.what());
    }
    if (git == graphs.end()) {
      issue(id, IssueKind::MissingGraph, "no graph file");
    } else {
      const auto& g = git->second;
      if (g.n_nodes != static_cast<int>(n))
        issue(id, IssueKind::NodeCountMismatch,
              "graph has " + std::to_string(g.n_nodes) + " nodes, meeting has " + std::to_string(n) + " EDUs");
      std::set<Edge> seen;
      for (const auto& e : g.edges) {
        const int limit = static_cast<int>(n);
        if (e.src < 0 || e.dst < 0 || e.src >= limit || e.dst >= limit || e.src >= g.n_nodes || e.dst >= g.n_nodes)
          issue(id, IssueKind::EdgeOutOfRange,
                "edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) + " references a node outside 0.." +
                    std::to_string(static_cast<int>(n) - 1));
        else if (e.src == e.dst)
          issue(id, IssueKind::SelfLoop, "self-loop on node " + std::to_string(e.src));
        if (!seen.insert(e).second)
          issue(id, IssueKind::DuplicateEdge, "duplicate edge " + std::to_string(e.src) + "->" + std::to_string(e.dst));
      }
    }
    if (eit == embeddings.end()) {
      issue(id, IssueKind::MissingEmbedding, "no embedding file");
    } else {
      const auto& emb = eit->second;
      if (emb.n_rows != n)
        issue(id, IssueKind::NodeCountMismatch,
              "embedding has " + std::to_string(emb.n_rows) + " rows, meeting has " + std::to_string(n) + " EDUs");
      if (!dim) dim = emb.dim;
      if (emb.dim != *dim)
        issue(id, IssueKind::DimensionMismatch,
              "embedding dim " + std::to_string(emb.dim) + " differs from corpus dim " + std::to_string(*dim));
    }
  }
  return rep;
}

inline ValidationReport validate_dataset(const Dataset& d) {
  auto rep = validate_corpus(d.meetings, d.graphs, d.embeddings);
  for (const auto* part : {&d.split.train, &d.split.validation, &d.split.test})
    for (const auto& id : *part)
      if (!d.meetings.contains(id)) rep.issues.push_back({id, IssueKind::MissingMeeting, "split references unknown meeting"});
  return rep;
}

inline std::size_t embedding_dim(const Dataset& d) {
  if (d.embeddings.empty()) throw ContractError("dataset has no embeddings");
  return d.embeddings.begin()->second.dim;
}

namespace detail {
inline std::vector<std::filesystem::path> files_with_extension(const std::filesystem::path& dir, std::string_view ext) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace detail

/// Meetings without a header budget get the rounded mean gold extract length of the
/// training meetings (all meetings when the split has no training part).
inline std::map<std::string, Meeting> load_meetings(const std::filesystem::path& dir, const CorpusSplit* split) {
  std::map<std::string, MeetingRecord> records;
  for (const auto& p : detail::files_with_extension(dir, ".jsonl")) {
    auto rec = read_meeting_file(p);
    const auto id = rec.meeting.meeting_id;
    if (!records.emplace(id, std::move(rec)).second) throw ParseError("duplicate meeting id '" + id + "'");
  }
  std::vector<const Meeting*> basis;
  if (split && !split->train.empty()) {
    for (const auto& id : split->train)
      if (auto it = records.find(id); it != records.end()) basis.push_back(&it->second.meeting);
  } else {
    for (const auto& [_, r] : records) basis.push_back(&r.meeting);
  }
  std::optional<int> budget;
  if (!basis.empty()) budget = average_summary_budget(basis);
  std::map<std::string, Meeting> out;
  for (auto& [id, rec] : records) {
    if (!rec.has_budget) rec.meeting.budget_words = budget.value_or(1);
    out.emplace(id, std::move(rec.meeting));
  }
  return out;
}

inline std::map<std::string, DiscourseGraph> load_graphs(const std::filesystem::path& dir) {
  std::map<std::string, DiscourseGraph> out;
  for (const auto& p : detail::files_with_extension(dir, ".json")) {
    auto g = graph_from_json_unchecked(read_json_file(p));
    const auto id = g.meeting_id;
    if (!out.emplace(id, std::move(g)).second) throw ParseError("duplicate graph for meeting '" + id + "'");
  }
  return out;
}

/// Embedding files are named <meeting_id>.demb.
inline std::map<std::string, EmbeddingMatrix> load_embedding_dir(const std::filesystem::path& dir) {
  std::map<std::string, EmbeddingMatrix> out;
  for (const auto& p : detail::files_with_extension(dir, ".demb")) {
    std::ifstream in(p, std::ios::binary);
    try {
      out.emplace(p.stem().string(), read_embeddings(in));
    } catch (const DataError& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  return out;
}

inline Dataset load_dataset(const std::filesystem::path& corpus_dir, const std::filesystem::path& graphs_dir,
                            const std::filesystem::path& embeddings_dir, const std::filesystem::path& split_path) {
  Dataset d;
  d.split = load_split(split_path);
  d.meetings = load_meetings(corpus_dir, &d.split);
  d.graphs = load_graphs(graphs_dir);
  d.embeddings = load_embedding_dir(embeddings_dir);
  return d;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& corpus_dir,
                         const std::filesystem::path& graphs_dir, const std::filesystem::path& embeddings_dir,
                         const std::filesystem::path& split_path) {
  for (const auto& dir : {corpus_dir, graphs_dir, embeddings_dir}) std::filesystem::create_directories(dir);
  for (const auto& [id, m] : d.meetings) save_meeting(corpus_dir / (id + ".jsonl"), m);
  for (const auto& [id, g] : d.graphs) save_graph(graphs_dir / (id + ".json"), g);
  for (const auto& [id, e] : d.embeddings) save_embeddings(embeddings_dir / (id + ".demb"), e);
  if (split_path.has_parent_path()) std::filesystem::create_directories(split_path.parent_path());
  std::ofstream out(split_path, std::ios::binary);
  out << split_to_json(d.split).dump(2) << '\n';
}

}  // namespace dgsum
