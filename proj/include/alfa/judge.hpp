#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alfa/synthesis.hpp"

namespace alfa::judge {

struct Candidate {
  std::string id;
  std::string text;
};

// Future-turn information shown to the judge as supplementary context.
struct AuxInfo {
  std::optional<std::string> final_diagnosis;
  std::optional<std::string> conclusion;
};

struct JudgeOptions {
  std::string endpoint;
  double temperature = 0.0;
  int max_tokens = 1024;
  // Presentation orders for three candidates; entry i lists the candidate
  // index shown at label A, B, C. Two candidates are always judged in both
  // orders.
  std::vector<std::vector<std::size_t>> triple_orders = {{0, 1, 2}, {1, 2, 0}};
  // Win-rate evaluation may compare identical texts; filtering never does.
  bool allow_identical = false;
};

// JSON key and rubric heading of a judged dimension ("overall" for coarse).
std::string dimension_name(Attribute a);
inline constexpr std::string_view kOverall = "overall";
std::string dimension_block(const std::string& dimension);

// "A > B > C" -> {'A','B','C'}. Anything other than a strict chain over
// exactly the `expected` labels (ties with '=' or ',', repeats, omissions)
// throws ParseError.
std::vector<char> parse_ranking(std::string_view ranking, std::string_view expected_labels);

// Extracts the verdict for `dimension` from a judge reply.
JudgeVerdict parse_judge_response(std::string_view text, const std::string& dimension,
                                  const std::vector<std::string>& presented);

// Judges 2 or 3 candidates in every configured presentation order and
// returns one verdict per order. A reply that does not parse is retried once
// with a format reminder; the second failure throws ParseError.
std::vector<JudgeVerdict> compare_candidates(const std::string& context,
                                             const std::vector<Candidate>& candidates,
                                             const std::string& dimension, const AuxInfo& aux,
                                             llm::Gateway& gateway, const JudgeOptions& opts);

// Keeps the pair iff every verdict on its dimension ranks the chosen member
// above the rejected one. Sets pair.kept.
bool verify_direction(synthesis::PreferencePair& pair, const std::vector<JudgeVerdict>& verdicts);

enum class JudgeMode { triple, pairwise };

struct FilterOptions {
  JudgeOptions judge;
  JudgeMode mode = JudgeMode::triple;
  std::size_t workers = 8;
};

struct FilterFailure {
  std::string question_id;
  std::string attribute;
  std::string error;
};

struct FilterSummary {
  std::size_t judge_calls = 0;
  std::vector<FilterFailure> failures;
};

// Attaches verdicts and sets kept on every pair. In triple mode the enhanced,
// original and corrupted questions of a (question, attribute) group are
// ranked together and the three pair outcomes read off the ranking; groups
// missing a member fall back to pairwise judging. Pairs whose judging failed
// keep `kept` unset and are listed in the summary.
FilterSummary judge_pairset(std::vector<synthesis::PreferencePair>& pairs,
                            const std::map<std::string, AuxInfo>& aux_by_question,
                            llm::Gateway& gateway, const FilterOptions& opts);

struct RetentionCell {
  std::size_t total = 0;
  std::size_t kept = 0;
  double kept_fraction() const { return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total); }
};

struct RetentionReport {
  std::map<Attribute, std::map<synthesis::PairType, RetentionCell>> cells;
  std::size_t total = 0;
  std::size_t kept = 0;

  double kept_fraction() const { return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total); }
  // Per pair type, pooled over attributes.
  RetentionCell pooled(synthesis::PairType t) const;
  // Kept pairs of one attribute.
  std::size_t kept_for(Attribute a) const;

  // Percentages with one decimal, one row per attribute plus an "All" row.
  std::string to_table() const;
  json to_json() const;
};

// Throws ValidationError naming the count when any pair has kept unset.
RetentionReport retention_report(const std::vector<synthesis::PreferencePair>& pairs);

// Expected kept pairs for `questions` source questions given per-pair-type
// retention percentages (each question contributes one pair of each type).
double predicted_kept(std::size_t questions, double ec_percent, double eo_percent, double oc_percent);

// "86.1%"-style rendering.
std::string format_percent(double fraction);

}  // namespace alfa::judge
