#pragma once

// Classification metrics, ROUGE-1/2/L F1, and Copeland aggregation of pairwise preferences.

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dgsum/errors.hpp"
#include "json.hpp"

namespace dgsum {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Micro-averaging accumulator for binary node labels.
struct ConfusionCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  long long tn = 0;

  void add(std::span<const int> predicted, std::span<const int> gold) {
    if (predicted.size() != gold.size())
      throw ContractError("prf1: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(gold.size()) + " labels");
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool p = predicted[i] != 0, g = gold[i] != 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
      tn += !p && !g;
    }
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }

  /// Precision (recall) is 0 when nothing is predicted (gold) positive.
  PRF prf() const {
    PRF out;
    out.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = harmonic_f1(out.precision, out.recall);
    return out;
  }
};

inline PRF prf1(std::span<const int> predicted, std::span<const int> gold) {
  ConfusionCounts c;
  c.add(predicted, gold);
  return c.prf();
}

// ---------------------------------------------------------------------------
// ROUGE

/// Lowercased tokens separated by runs of non-alphanumeric ASCII. Bytes >= 0x80 are kept
/// inside tokens so UTF-8 words survive intact. No stemming, no stopword removal.
inline std::vector<std::string> rouge_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u >= 0x80 || std::isalnum(u)) {
      cur += static_cast<char>(u < 0x80 ? std::tolower(u) : u);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// ROUGE-N F1 over token sequences with clipped n-gram counts; 0 when either side has no n-grams.
inline double rouge_n_tokens(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int n) {
  if (n < 1) throw ArgumentError("rouge_n: n must be >= 1");
  const auto un = static_cast<std::size_t>(n);
  if (cand.size() < un || ref.size() < un) return 0.0;
  std::map<std::vector<std::string>, long> ref_counts;
  for (std::size_t i = 0; i + un <= ref.size(); ++i)
    ++ref_counts[std::vector<std::string>(ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i + un))];
  std::map<std::vector<std::string>, long> cand_counts;
  for (std::size_t i = 0; i + un <= cand.size(); ++i)
    ++cand_counts[std::vector<std::string>(cand.begin() + static_cast<long>(i), cand.begin() + static_cast<long>(i + un))];
  long overlap = 0;
  for (const auto& [gram, c] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) overlap += std::min(c, it->second);
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(cand.size() - un + 1);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size() - un + 1);
  return harmonic_f1(p, r);
}

inline double rouge_n(std::string_view candidate, std::string_view reference, int n) {
  if (n != 1 && n != 2) throw ArgumentError("rouge_n: n must be 1 or 2");
  return rouge_n_tokens(rouge_tokenize(candidate), rouge_tokenize(reference), n);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Summary-level token LCS: P = LCS/|cand|, R = LCS/|ref|.
inline double rouge_l_tokens(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  return harmonic_f1(lcs / static_cast<double>(cand.size()), lcs / static_cast<double>(ref.size()));
}

inline double rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l_tokens(rouge_tokenize(candidate), rouge_tokenize(reference));
}

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

inline RougeScores rouge_all(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_tokenize(candidate);
  const auto r = rouge_tokenize(reference);
  return {rouge_n_tokens(c, r, 1), rouge_n_tokens(c, r, 2), rouge_l_tokens(c, r)};
}

// ---------------------------------------------------------------------------
// Copeland

struct PreferenceMatrix {
  std::vector<std::string> methods;
  std::vector<std::vector<long long>> wins;  // wins[a][b]: times a was preferred over b
};

inline void check_preferences(const PreferenceMatrix& m) {
  const auto n = m.methods.size();
  if (m.wins.size() != n) throw ContractError("preference matrix: row count differs from method count");
  for (std::size_t a = 0; a < n; ++a) {
    if (m.wins[a].size() != n) throw ContractError("preference matrix is not square");
    if (m.wins[a][a] != 0) throw ContractError("preference matrix: non-zero diagonal for " + m.methods[a]);
    for (auto c : m.wins[a])
      if (c < 0) throw ContractError("preference matrix: negative count");
  }
}

/// score(a) = sum_b wins[a][b] - sum_b wins[b][a] on aggregate counts.
inline std::vector<long long> copeland(const PreferenceMatrix& m) {
  check_preferences(m);
  const auto n = m.methods.size();
  std::vector<long long> score(n, 0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      score[a] += m.wins[a][b];
      score[b] -= m.wins[a][b];
    }
  return score;
}

/// CSV: header "method,<m1>,<m2>,..." then one row per method in the same order.
inline PreferenceMatrix parse_preference_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  std::string line;
  std::size_t line_no = 0;
  PreferenceMatrix m;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (m.methods.empty()) {
      if (cells.size() < 2) throw ParseError("preference CSV header needs at least one method", line_no);
      m.methods.assign(cells.begin() + 1, cells.end());
      continue;
    }
    if (cells.size() != m.methods.size() + 1) throw ParseError("preference CSV row has wrong width", line_no);
    if (m.wins.size() >= m.methods.size()) throw ParseError("preference CSV has more rows than methods", line_no);
    if (cells[0] != m.methods[m.wins.size()])
      throw ParseError("preference CSV row '" + cells[0] + "' out of header order", line_no);
    std::vector<long long> row;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      try {
        std::size_t used = 0;
        row.push_back(std::stoll(cells[k], &used));
        if (used != cells[k].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError("preference CSV: bad count '" + cells[k] + "'", line_no);
      }
    }
    m.wins.push_back(std::move(row));
  }
  if (m.wins.size() != m.methods.size()) throw ContractError("preference matrix is not square");
  check_preferences(m);
  return m;
}

inline nlohmann::json prf_to_json(const PRF& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline nlohmann::json rouge_to_json(const RougeScores& r) {
  return {{"rouge1", r.rouge1}, {"rouge2", r.rouge2}, {"rougeL", r.rougeL}};
}

}  // namespace dgsum
