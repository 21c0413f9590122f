#pragma once

// Turning per-node scores into budgeted extractive summaries.

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgsum/corpus.hpp"
#include "dgsum/errors.hpp"
#include "json.hpp"

namespace dgsum {

enum class Strategy { Threshold, RankByLength, RankByLogits };

inline constexpr std::array<std::string_view, 3> kStrategyNames{"threshold", "rank_by_length", "rank_by_logits"};

inline std::string_view strategy_name(Strategy s) { return kStrategyNames[static_cast<std::size_t>(s)]; }

inline Strategy parse_strategy(std::string_view name) {
  for (std::size_t i = 0; i < kStrategyNames.size(); ++i)
    if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
  throw ArgumentError("unknown strategy '" + std::string(name) + "'");
}

struct Selection {
  std::string meeting_id;
  std::vector<int> chosen;  // strictly increasing EDU indices
  Strategy strategy = Strategy::Threshold;
  std::vector<double> scores;
};

struct Summary {
  std::string meeting_id;
  Strategy strategy = Strategy::Threshold;
  std::vector<int> chosen;
  std::string text;
  int word_count = 0;
};

inline Selection select_threshold(std::span<const double> scores, double tau = 0.5, std::string meeting_id = {}) {
  Selection sel;
  sel.meeting_id = std::move(meeting_id);
  sel.scores.assign(scores.begin(), scores.end());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= tau) sel.chosen.push_back(static_cast<int>(i));
  return sel;
}

namespace detail {

inline void check_scores(std::span<const double> scores, const Meeting& m) {
  if (scores.size() != m.size())
    throw ContractError("summarization: " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(m.size()) + " EDUs in '" + m.meeting_id + "'");
}

/// Greedy skip-on-overflow fill in the given candidate order, returned in transcript order.
inline std::vector<int> greedy_fill(const std::vector<int>& order, const Meeting& m) {
  std::vector<int> taken;
  long used = 0;
  for (int i : order) {
    const int wc = m.edus[static_cast<std::size_t>(i)].word_count;
    if (used + wc > m.budget_words) continue;
    used += wc;
    taken.push_back(i);
  }
  std::sort(taken.begin(), taken.end());
  return taken;
}

}  // namespace detail

/// Chosen EDUs concatenated in transcript order, cut to the longest word prefix within
/// budget_words; the last EDU may be truncated at a word boundary.
inline Summary budgetize_prefix(const Selection& sel, const Meeting& m) {
  Summary s;
  s.meeting_id = m.meeting_id;
  s.strategy = sel.strategy;
  for (std::size_t k = 0; k < sel.chosen.size(); ++k) {
    const int i = sel.chosen[k];
    if (i < 0 || static_cast<std::size_t>(i) >= m.size()) throw ContractError("selection index out of range");
    if (k > 0 && i <= sel.chosen[k - 1]) throw ContractError("selection must be strictly increasing");
  }
  std::string text;
  int words = 0;
  for (int i : sel.chosen) {
    if (words >= m.budget_words) break;
    s.chosen.push_back(i);
    for (auto& w : split_words(m.edus[static_cast<std::size_t>(i)].text)) {
      if (words >= m.budget_words) break;
      if (!text.empty()) text += ' ';
      text += w;
      ++words;
    }
  }
  s.text = std::move(text);
  s.word_count = words;
  return s;
}

/// Among threshold-selected EDUs, longest first (ties: lower index), skipping any that overflow.
inline Selection rank_by_length(std::span<const double> scores, const Meeting& m, double tau = 0.5) {
  detail::check_scores(scores, m);
  auto sel = select_threshold(scores, tau, m.meeting_id);
  auto order = sel.chosen;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return m.edus[static_cast<std::size_t>(a)].word_count > m.edus[static_cast<std::size_t>(b)].word_count;
  });
  sel.chosen = detail::greedy_fill(order, m);
  sel.strategy = Strategy::RankByLength;
  return sel;
}

/// Among threshold-selected EDUs, highest score first (ties: lower index), skipping any that overflow.
inline Selection rank_by_logits(std::span<const double> scores, const Meeting& m, double tau = 0.5) {
  detail::check_scores(scores, m);
  auto sel = select_threshold(scores, tau, m.meeting_id);
  auto order = sel.chosen;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  sel.chosen = detail::greedy_fill(order, m);
  sel.strategy = Strategy::RankByLogits;
  return sel;
}

/// Strategy dispatch; every result passes through budgetize_prefix.
inline Summary summarize(Strategy strategy, std::span<const double> scores, const Meeting& m, double tau = 0.5) {
  detail::check_scores(scores, m);
  switch (strategy) {
    case Strategy::Threshold:
      return budgetize_prefix(select_threshold(scores, tau, m.meeting_id), m);
    case Strategy::RankByLength:
      return budgetize_prefix(rank_by_length(scores, m, tau), m);
    case Strategy::RankByLogits:
      return budgetize_prefix(rank_by_logits(scores, m, tau), m);
  }
  throw ContractError("unreachable strategy");
}

/// The first `budget` words of the transcript.
inline std::string lead_n(const Meeting& m, int budget) {
  std::string text;
  int words = 0;
  for (const auto& e : m.edus) {
    for (auto& w : split_words(e.text)) {
      if (words >= budget) return text;
      if (!text.empty()) text += ' ';
      text += w;
      ++words;
    }
  }
  return text;
}

inline std::string lead_n(const Meeting& m) { return lead_n(m, m.budget_words); }

/// Reference text: every gold-labelled EDU in transcript order, unbudgeted.
inline std::string gold_summary_text(const Meeting& m) {
  std::string text;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.gold_labels[i] != 1) continue;
    if (!text.empty()) text += ' ';
    text += m.edus[i].text;
  }
  return text;
}

inline nlohmann::json summary_to_json(const Summary& s) {
  return {{"meeting_id", s.meeting_id},
          {"strategy", std::string(strategy_name(s.strategy))},
          {"chosen_indices", s.chosen},
          {"text", s.text},
          {"word_count", s.word_count}};
}

}  // namespace dgsum
