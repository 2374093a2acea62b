#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alfa/judge.hpp"
#include "alfa/llm.hpp"

namespace alfa::stats {

// Items x raters table of category labels; a missing rating is nullopt.
struct RatingsMatrix {
  std::vector<std::string> items;
  std::vector<std::string> raters;
  std::vector<std::string> categories;
  std::vector<std::vector<std::optional<std::string>>> cells;

  RatingsMatrix() = default;
  RatingsMatrix(std::vector<std::string> items, std::vector<std::string> raters, std::vector<std::string> categories);

  void set(std::size_t item, std::size_t rater, std::optional<std::string> label);
  // Throws ValidationError on shape mismatch or a label outside categories.
  void validate() const;
  std::size_t category_index(const std::string& label) const;
  // counts[i][k]: ratings of item i in category k.
  std::vector<std::vector<std::size_t>> category_counts() const;

  // CSV with header "item,<rater>,..."; an empty cell is a missing rating.
  // Categories default to the sorted set of labels present.
  static RatingsMatrix from_csv(std::string_view text,
                                std::optional<std::vector<std::string>> categories = std::nullopt);
  std::string to_csv() const;
  static RatingsMatrix load(const std::filesystem::path& path,
                            std::optional<std::vector<std::string>> categories = std::nullopt);
  void save(const std::filesystem::path& path) const;
};

struct AC1Result {
  double ac1 = 0.0;
  double pa = 0.0;
  double pe = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  std::size_t items_used = 0;

  json to_json() const;
};

// Gwet's AC1 over items with at least two ratings; variance from the per-item
// linearisation, 95% normal interval and two-sided p-value.
AC1Result gwet_ac1(const RatingsMatrix& m);

struct KappaResult {
  double kappa = 0.0;
  double p_bar = 0.0;
  double pe_bar = 0.0;
};

// Fleiss' kappa; every item needs the same number (>= 2) of ratings.
KappaResult fleiss_kappa(const RatingsMatrix& m);

struct ErrorReduction {
  double percent = 0.0;
  // Baseline accuracy was already 100, so there was no error to reduce.
  bool undefined_baseline = false;
};

ErrorReduction error_reduction(double acc_base, double acc_new);

// ------------------------------------------------------------ win-rate

struct WinContext {
  std::string id;
  std::string context;
  judge::AuxInfo aux;
};

// Where the questions compared in a win-rate come from: an endpoint asked
// with the training prompt, or fixed texts keyed by context id.
struct QuestionSource {
  std::string name;
  std::optional<std::string> endpoint;
  std::map<std::string, std::string> texts;
  double temperature = 0.0;
  int max_tokens = 256;

  static QuestionSource from_endpoint(std::string endpoint);
  static QuestionSource from_texts(std::string name, std::map<std::string, std::string> texts);

  std::string question_for(const WinContext& c, llm::Gateway& gateway) const;
};

struct WinItem {
  std::string context_id;
  std::string candidate_text;
  std::string baseline_text;
  double credit = 0.0;  // 1, 0.5 or 0
  std::vector<JudgeVerdict> verdicts;
};

struct WinRateResult {
  double wins = 0.0;
  std::size_t comparisons = 0;
  double rate = 0.0;
  std::vector<WinItem> items;
  std::vector<std::pair<std::string, std::string>> failures;

  json to_json() const;
};

// Both questions are judged in both presentation orders; the candidate earns
// 1 when preferred in both, 0.5 on a split and 0 otherwise.
WinRateResult winrate(const std::vector<WinContext>& contexts, const QuestionSource& candidate,
                      const QuestionSource& baseline, llm::Gateway& gateway, const judge::JudgeOptions& judge,
                      const std::string& dimension = std::string(judge::kOverall), std::size_t workers = 8);

// ------------------------------------------------------------ rankings

// rankings[item][rater] lists candidate ids best first.
using RankingSet = std::vector<std::vector<std::vector<std::string>>>;

struct MajorityVoteResult {
  std::vector<std::string> candidates;  // sorted
  // matrix[i][j]: percent of items where candidates[i] beats candidates[j].
  std::vector<std::vector<double>> matrix;
  std::map<std::string, double> winrate_vs_baseline;

  double cell(const std::string& a, const std::string& b) const;
  json to_json() const;
};

MajorityVoteResult majority_vote_rankings(const RankingSet& rankings, const std::string& baseline);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

double mean(const std::vector<double>& xs);

// Percentile bootstrap; warns below 100 resamples.
Interval bootstrap_ci(const std::vector<double>& samples, std::size_t n_resamples, std::uint64_t seed,
                      double level = 0.95,
                      const std::function<double(const std::vector<double>&)>& statistic = mean);

// ------------------------------------------------------------ reports

struct WinRateRow {
  std::string label;
  double rate = 0.0;
  std::size_t comparisons = 0;
};
std::string winrate_table(const std::vector<WinRateRow>& rows);

struct AC1Row {
  std::string label;
  AC1Result result;
};
std::string ac1_table(const std::vector<AC1Row>& rows);
std::string format_p_value(double p);

}  // namespace alfa::stats
