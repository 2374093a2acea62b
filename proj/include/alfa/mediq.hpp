#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "alfa/corpus.hpp"
#include "alfa/llm.hpp"

namespace alfa::mediq {

inline constexpr std::array<char, 4> kLabels = {'A', 'B', 'C', 'D'};

struct ScenarioMCQ {
  std::string scenario_id;
  std::string initial_info;
  std::string hidden_record;
  std::string inquiry;
  std::array<std::string, 4> options;
  char correct = 'A';
  std::uint64_t shuffle_seed = 0;

  // Four non-empty, pairwise distinct options; correct in A-D.
  void validate() const;
  const std::string& option(char label) const;
  // "A: ...\nB: ...\nC: ...\nD: ..."
  std::string options_block() const;

  // Scenario file keys: question, optionA..optionD, correct_answer, plus
  // scenario_id, initial_info, hidden_record, shuffle_seed.
  json to_json() const;
  static ScenarioMCQ from_json(const json& j);
};

// Maps "B", "[B]", "Option B", "(b)" to 'B'; nullopt for anything else.
std::optional<char> normalize_label(std::string_view raw);

struct McqBuildOptions {
  std::string endpoint;
  double temperature = 1.0;
  int max_tokens = 1024;
  // Combined with the thread id into the per-scenario shuffle seed.
  std::uint64_t seed = 0;
};

// Three calls: initial information, inquiry + conclusion, then the option
// generation prompt. The generated options are shuffled with a recorded
// seed. Requires a parsed conclusion.
ScenarioMCQ build_mcq_task(const corpus::ThreadRecord& thread, const corpus::ParsedThread& parsed,
                           llm::Gateway& gateway, const McqBuildOptions& opts);

// Permutes options with `seed`, moving the correct label along.
void shuffle_options(ScenarioMCQ& s, std::uint64_t seed);

struct QA {
  std::string question;
  std::string answer;
};

struct EpisodeState {
  std::string scenario_id;
  std::vector<QA> qa_history;
  int turn = 0;
};

std::string render_history(const std::vector<QA>& history);

struct EpisodeParams {
  int max_turns = 15;
  double temperature = 0.6;
  int threshold = 4;
  int max_tokens = 512;
  std::string patient_endpoint;
};

struct ExpertEndpoints {
  std::string question_endpoint;
  std::string decision_endpoint;
  std::string abstention_endpoint;
};

// Answers strictly from the hidden record; a reply that signals missing
// information (or is empty) becomes prompts::kCannotAnswer.
std::string patient_answer(const ScenarioMCQ& scenario, const std::string& question,
                           llm::Gateway& gateway, const EpisodeParams& params);

enum class Action { ask, answer };

struct AbstainDecision {
  Action action = Action::ask;
  int confidence = 1;
  std::string rationale;
  // False when the confidence could not be read even after a reprompt.
  bool parsed = true;
};

// Scale abstention: rationale plus a 1-5 confidence; answers iff confidence
// >= threshold. Callers force an answer at max_turns without asking.
AbstainDecision abstain_decision(const ScenarioMCQ& scenario, const EpisodeState& state,
                                 llm::Gateway& gateway, const std::string& endpoint,
                                 const EpisodeParams& params);

struct EpisodeResult {
  std::string scenario_id;
  char chosen = '?';
  bool correct = false;
  int turns_used = 0;
  std::vector<int> abstention_trace;
  json transcript = json::array();
  // Decision output was not a valid label after a reprompt.
  bool flagged = false;

  json to_json() const;
  static EpisodeResult from_json(const json& j);
};

EpisodeResult run_episode(const ScenarioMCQ& scenario, const ExpertEndpoints& expert,
                          const EpisodeParams& params, llm::Gateway& gateway);

struct BenchmarkResult {
  double accuracy = 0.0;  // percent of completed episodes
  std::size_t correct = 0;
  std::size_t completed = 0;
  std::size_t excluded = 0;
  std::vector<EpisodeResult> results;  // scenario order
  std::vector<std::pair<std::string, std::string>> failures;

  json summary() const;
};

// Episodes run in parallel. With `out_dir`, each finished episode is written
// to out_dir/episodes/<scenario_id>.json and reused on the next run, and the
// summary goes to out_dir/summary.json.
BenchmarkResult run_benchmark(const std::vector<ScenarioMCQ>& scenarios, const ExpertEndpoints& expert,
                              const EpisodeParams& params, llm::Gateway& gateway,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                              std::size_t workers = 8);

std::vector<ScenarioMCQ> read_scenarios(const std::filesystem::path& path);
void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioMCQ>& scenarios);

}  // namespace alfa::mediq
