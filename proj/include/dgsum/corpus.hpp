#pragma once

// Transcript, label and embedding data model plus validated ingestion.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dgsum/demb.hpp"
#include "dgsum/errors.hpp"
#include "json.hpp"

namespace dgsum {

/// Whitespace tokenization; disfluency markers and punctuation attached to words count as-is.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

inline int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

struct Edu {
  int index = 0;
  std::string speaker;
  std::string text;
  int word_count = 0;

  bool operator==(const Edu&) const = default;
};

struct Meeting {
  std::string meeting_id;
  std::vector<Edu> edus;
  std::vector<int> gold_labels;
  int budget_words = 1;

  std::size_t size() const noexcept { return edus.size(); }

  int positives() const {
    return static_cast<int>(std::count(gold_labels.begin(), gold_labels.end(), 1));
  }

  /// Word count of the gold extract (all EDUs labelled 1).
  int gold_word_count() const {
    int total = 0;
    for (std::size_t i = 0; i < edus.size(); ++i)
      if (gold_labels[i] == 1) total += edus[i].word_count;
    return total;
  }

  int total_words() const {
    int total = 0;
    for (const auto& e : edus) total += e.word_count;
    return total;
  }

  bool operator==(const Meeting&) const = default;
};

/// Checks every Meeting invariant; throws AlignmentError / ContractError.
inline void check_meeting(const Meeting& m) {
  if (m.gold_labels.size() != m.edus.size())
    throw AlignmentError("meeting '" + m.meeting_id + "': " + std::to_string(m.gold_labels.size()) +
                         " labels for " + std::to_string(m.edus.size()) + " EDUs");
  for (std::size_t i = 0; i < m.edus.size(); ++i) {
    const auto& e = m.edus[i];
    if (e.index != static_cast<int>(i))
      throw ContractError("meeting '" + m.meeting_id + "': EDU indices must be 0..N-1 without gaps (found " +
                          std::to_string(e.index) + " at position " + std::to_string(i) + ")");
    if (e.word_count <= 0 || e.word_count != count_words(e.text))
      throw ContractError("meeting '" + m.meeting_id + "': EDU " + std::to_string(i) + " has empty text");
    if (m.gold_labels[i] != 0 && m.gold_labels[i] != 1)
      throw ContractError("meeting '" + m.meeting_id + "': labels must be 0 or 1");
  }
  if (m.budget_words <= 0) throw ContractError("meeting '" + m.meeting_id + "': budget_words must be > 0");
}

/// A parsed meeting file; `has_budget` records whether the header carried budget_words.
struct MeetingRecord {
  Meeting meeting;
  bool has_budget = false;
};

/// Parses the JSON-lines meeting format. EDU lines may appear in any order; they are
/// sorted by index and must cover 0..N-1 exactly. Blank lines are ignored.
///
/// The header may also carry a "labels" array (gold extract supplied apart from the
/// EDU records); it then overrides per-line labels and must have one entry per EDU.
inline MeetingRecord parse_meeting(std::istream& in, std::string fallback_id) {
  using nlohmann::json;
  MeetingRecord rec;
  rec.meeting.meeting_id = std::move(fallback_id);
  std::vector<std::pair<Edu, int>> rows;
  std::set<int> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  std::optional<std::vector<int>> header_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    if (!obj.contains("index")) {
      if (!header_allowed || !obj.contains("meeting_id"))
        throw ParseError("record without \"index\" is not a valid header", line_no);
      try {
        rec.meeting.meeting_id = obj.at("meeting_id").get<std::string>();
        if (obj.contains("budget_words")) {
          rec.meeting.budget_words = obj.at("budget_words").get<int>();
          if (rec.meeting.budget_words <= 0) throw ParseError("budget_words must be positive", line_no);
          rec.has_budget = true;
        }
        if (obj.contains("labels")) header_labels = obj.at("labels").get<std::vector<int>>();
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), line_no);
      }
      header_allowed = false;
      continue;
    }
    header_allowed = false;
    Edu edu;
    int label = 0;
    try {
      edu.index = obj.at("index").get<int>();
      edu.speaker = obj.at("speaker").get<std::string>();
      edu.text = obj.at("text").get<std::string>();
      label = header_labels ? 0 : obj.at("label").get<int>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad EDU record: ") + e.what(), line_no);
    }
    if (edu.index < 0) throw ParseError("negative EDU index", line_no);
    if (label != 0 && label != 1) throw ParseError("label must be 0 or 1", line_no);
    edu.word_count = count_words(edu.text);
    if (edu.word_count == 0) throw ParseError("EDU text is empty", line_no);
    if (!seen.insert(edu.index).second)
      throw ParseError("duplicate EDU index " + std::to_string(edu.index), line_no);
    rows.emplace_back(std::move(edu), label);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first.index < b.first.index; });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first.index != static_cast<int>(i))
      throw ParseError("EDU indices have a gap: missing index " + std::to_string(i));
    rec.meeting.edus.push_back(std::move(rows[i].first));
    rec.meeting.gold_labels.push_back(rows[i].second);
  }
  if (header_labels) {
    if (header_labels->size() != rec.meeting.edus.size())
      throw AlignmentError("meeting '" + rec.meeting.meeting_id + "': " + std::to_string(header_labels->size()) +
                           " labels for " + std::to_string(rec.meeting.edus.size()) + " EDUs");
    for (int v : *header_labels)
      if (v != 0 && v != 1) throw ParseError("header labels must be 0 or 1");
    rec.meeting.gold_labels = std::move(*header_labels);
  }
  return rec;
}

inline MeetingRecord read_meeting_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open meeting file " + path.string());
  return parse_meeting(in, path.stem().string());
}

/// Loads one meeting. Without a header budget, `fallback_budget` is used; failing that,
/// the meeting's own gold extract length (at least 1).
inline Meeting load_meeting(const std::filesystem::path& path, std::optional<int> fallback_budget = {}) {
  auto rec = read_meeting_file(path);
  if (!rec.has_budget)
    rec.meeting.budget_words = fallback_budget.value_or(std::max(1, rec.meeting.gold_word_count()));
  check_meeting(rec.meeting);
  return std::move(rec.meeting);
}

inline void write_meeting(std::ostream& out, const Meeting& m) {
  using nlohmann::json;
  out << json{{"meeting_id", m.meeting_id}, {"budget_words", m.budget_words}}.dump() << '\n';
  for (std::size_t i = 0; i < m.edus.size(); ++i) {
    const auto& e = m.edus[i];
    json row;
    row["index"] = e.index;
    row["speaker"] = e.speaker;
    row["text"] = e.text;
    row["label"] = m.gold_labels[i];
    out << row.dump() << '\n';
  }
}

inline void save_meeting(const std::filesystem::path& path, const Meeting& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_meeting(out, m);
}

/// Mean gold extract word count over `meetings`, rounded to the nearest integer (at least 1).
inline int average_summary_budget(const std::vector<const Meeting*>& meetings) {
  if (meetings.empty()) throw ContractError("average_summary_budget: no meetings");
  double total = 0.0;
  for (const auto* m : meetings) total += m->gold_word_count();
  return std::max(1, static_cast<int>(std::lround(total / static_cast<double>(meetings.size()))));
}

inline int average_summary_budget(const std::vector<int>& gold_word_counts) {
  if (gold_word_counts.empty()) throw ContractError("average_summary_budget: no meetings");
  double total = 0.0;
  for (int c : gold_word_counts) total += c;
  return std::max(1, static_cast<int>(std::lround(total / static_cast<double>(gold_word_counts.size()))));
}

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingMatrix {
  std::size_t n_rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major

  float at(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
  float& at(std::size_t r, std::size_t c) { return values[r * dim + c]; }

  bool operator==(const EmbeddingMatrix&) const = default;
};

inline EmbeddingMatrix read_embeddings(std::istream& in) {
  const auto h = demb::read_header(in);
  EmbeddingMatrix m;
  m.n_rows = h.n_rows;
  m.dim = h.dim;
  m.values = demb::read_values(in, std::size_t{h.n_rows} * h.dim);
  for (std::size_t r = 0; r < m.n_rows; ++r)
    for (std::size_t c = 0; c < m.dim; ++c)
      if (!std::isfinite(m.at(r, c)))
        throw DataError("non-finite embedding value at (" + std::to_string(r) + "," + std::to_string(c) + ")");
  return m;
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path, std::size_t expected_rows) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embedding file " + path.string());
  auto m = read_embeddings(in);
  if (m.n_rows != expected_rows)
    throw AlignmentError(path.string() + ": embedding has " + std::to_string(m.n_rows) + " rows, expected " +
                         std::to_string(expected_rows));
  return m;
}

inline void write_embeddings(std::ostream& out, const EmbeddingMatrix& m) {
  demb::write_record(out, static_cast<std::uint32_t>(m.n_rows), static_cast<std::uint32_t>(m.dim), m.values);
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_embeddings(out, m);
}

// ---------------------------------------------------------------------------
// Splits

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  bool operator==(const CorpusSplit&) const = default;
};

inline void check_split_disjoint(const CorpusSplit& s) {
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& id : *part)
      if (!seen.insert(id).second) throw ContractError("split: meeting '" + id + "' appears more than once");
}

inline CorpusSplit parse_split(const nlohmann::json& j) {
  CorpusSplit s;
  try {
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad split file: ") + e.what());
  }
  check_split_disjoint(s);
  return s;
}

inline CorpusSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid split JSON: ") + e.what());
  }
  return parse_split(j);
}

inline nlohmann::json split_to_json(const CorpusSplit& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

}  // namespace dgsum
