#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alfa/llm.hpp"
#include "alfa/util.hpp"

namespace alfa::corpus {

enum class AuthorRole { patient, responder };

struct Turn {
  AuthorRole author_role = AuthorRole::patient;
  bool author_expert_verified = false;
  std::string text;
};

struct ThreadRecord {
  std::string thread_id;
  std::string post_id;
  std::string title;
  std::string post_body;
  std::vector<Turn> turns;
  std::optional<std::string> created_at;

  json to_json() const;
  // Throws ValidationError when required fields are missing or empty.
  static ThreadRecord from_json(const json& j);
};

struct QuestionRecord {
  std::string question_id;
  std::string thread_id;
  std::string post_id;
  std::string context;
  std::string question_text;
  bool author_expert_verified = false;
  // Index of the turn the question was asked in; context covers turns [0, turn).
  std::size_t turn_index = 0;

  json to_json() const;
  static QuestionRecord from_json(const json& j);
};

struct ParsedThread {
  std::string thread_id;
  std::vector<QuestionRecord> atomic_questions;
  std::optional<std::string> conclusion;
  bool positive_feedback = false;
  std::optional<std::string> final_diagnosis;

  json to_json() const;
  static ParsedThread from_json(const json& j);
};

// Proxy quality stratum. index() enumerates the 8 groups in a fixed order
// (expert, conclusion, feedback read as bits).
struct QualityGroup {
  bool expert_author = false;
  bool has_conclusion = false;
  bool has_positive_feedback = false;

  int index() const {
    return (expert_author ? 4 : 0) + (has_conclusion ? 2 : 0) + (has_positive_feedback ? 1 : 0);
  }
  static QualityGroup from_index(int i) { return {(i & 4) != 0, (i & 2) != 0, (i & 1) != 0}; }
  std::string label() const;
  friend bool operator==(const QualityGroup&, const QualityGroup&) = default;
};

inline constexpr int kNumQualityGroups = 8;

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  json to_json() const;
  static SplitAssignment from_json(const json& j);
};

struct IngestOptions {
  // Keep only threads whose first responder turn has a sentence ending in '?'.
  bool require_followup_question = true;
};

struct IngestResult {
  std::vector<ThreadRecord> threads;
  std::size_t records_read = 0;
  std::size_t skipped_no_question = 0;
  std::size_t unique_posts = 0;
};

// Line-delimited thread records. Malformed lines throw ParseError naming the
// line; a repeated thread_id throws ValidationError naming the id and both
// line numbers.
IngestResult ingest_threads(std::string_view text, const IngestOptions& opts = {});
IngestResult ingest_threads_file(const std::filesystem::path& path, const IngestOptions& opts = {});

bool has_followup_question(const ThreadRecord& t);

// Title, post body and the role-tagged turns strictly before `turn_index`,
// newline-joined.
std::string build_context(const ThreadRecord& t, std::size_t turn_index);

// Whole thread with numbered turns, as shown to the decomposition prompt.
std::string render_thread(const ThreadRecord& t);

struct DecomposeOptions {
  std::string endpoint;
  double temperature = 0.0;
  int max_tokens = 2048;
};

// One LLM call per thread. Questions are anchored to the responder turn the
// model attributes them to; unparseable output throws ParseError carrying the
// raw response.
ParsedThread decompose_thread(const ThreadRecord& thread, llm::Gateway& gateway,
                              const DecomposeOptions& opts);

QualityGroup assign_quality_group(const QuestionRecord& q, const ParsedThread& parent);

struct GroupedQuestion {
  QuestionRecord question;
  QualityGroup group;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

// Even draw across quality groups with no post shared between splits and the
// test split restricted to conclusion-bearing groups. Splits are drawn in the
// order test, dev, train. Per split, each eligible group gets an equal share
// (remainder handed out in group order); when a group runs short the deficit
// goes round-robin, one question at a time, to the remaining groups in group
// order. Deterministic in `seed`, independent of input order.
SplitAssignment stratified_split(const std::vector<GroupedQuestion>& questions, SplitSizes sizes,
                                 std::uint64_t seed);

// Per-group counts of the questions of each split.
std::map<std::string, std::array<std::size_t, kNumQualityGroups>> split_group_counts(
    const SplitAssignment& split, const std::vector<GroupedQuestion>& questions);

}  // namespace alfa::corpus
