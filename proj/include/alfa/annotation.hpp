#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "alfa/mediq.hpp"
#include "alfa/stats.hpp"
#include "alfa/util.hpp"

namespace httplib {
class Server;
}

namespace alfa::annotation {

struct CandidateInput {
  std::string system_id;
  std::string text;
};

struct RankingSample {
  std::string sample_id;
  std::string context;
  std::vector<CandidateInput> candidates;
};

struct LabeledCandidate {
  std::string label;
  std::string text;
};

struct RankingTask {
  std::string task_id;
  std::string context;
  std::vector<LabeledCandidate> candidates;  // shuffled, labelled A, B, ...
  std::map<std::string, std::string> source_map;  // label -> system id
  std::uint64_t shuffle_seed = 0;

  std::vector<std::string> labels() const;
  // Full record for the store, source_map included.
  json to_json() const;
  static RankingTask from_json(const json& j);
  // What annotators see: no source_map, no system ids.
  json annotator_payload() const;
};

// Shuffles the candidates with a seed derived from `seed` and the sample id.
// Throws ValidationError on empty or duplicate candidate texts.
RankingTask make_ranking_task(const RankingSample& sample, std::uint64_t seed);

struct RankingSubmission {
  std::string task_id;
  std::string annotator_id;
  std::vector<std::string> permutation;  // labels, best first
  std::string submitted_at;

  json to_json() const;
  static RankingSubmission from_json(const json& j);
};

// Throws ValidationError naming the problem (tie, missing or unknown label).
void validate_permutation(const std::vector<std::string>& permutation, const std::vector<std::string>& labels);

struct ScreeningRecord {
  std::string annotator_id;
  std::vector<std::string> answers;
  int score = 0;
  int threshold = 0;
  bool passed = false;

  json to_json() const;
  static ScreeningRecord from_json(const json& j);
};

// passed = score >= threshold. Throws when answers and key differ in length.
ScreeningRecord screening_gate(const std::string& annotator_id, const std::vector<std::string>& answers,
                               const std::vector<std::string>& key, int threshold = 3);

inline constexpr std::string_view kNoneOfTheAbove = "none_of_the_above";

struct McqTask {
  std::string task_id;
  mediq::ScenarioMCQ scenario;

  json to_json() const;
  static McqTask from_json(const json& j);
  // Question and options only; the generated answer stays hidden.
  json annotator_payload() const;
};

struct McqValidation {
  std::string task_id;
  std::string annotator_id;
  bool plausible = true;
  std::string selected;  // "A".."D" or kNoneOfTheAbove
  std::string alternative;
  std::string submitted_at;

  json to_json() const;
  static McqValidation from_json(const json& j);
};

struct Receipt {
  std::string task_id;
  std::string annotator_id;
  std::string submitted_at;
  bool replaced = false;

  json to_json() const;
};

struct RankingBundle {
  struct Item {
    std::string task_id;
    std::vector<std::string> candidates;  // system ids
    std::map<std::string, std::vector<std::string>> rankings;  // annotator -> system ids, best first
  };
  std::vector<Item> items;

  std::size_t submissions() const;
  // Items with at least one ranking, raters in annotator order.
  stats::RankingSet ranking_set() const;
  json to_json() const;
  static RankingBundle from_json(const json& j);
};

struct McqAgreement {
  double accuracy = 0.0;  // percent of items whose majority pick is the generated answer
  std::size_t items = 0;
  std::size_t agreeing = 0;
  std::size_t no_majority = 0;
};

struct StoreOptions {
  std::filesystem::path dir;
  std::size_t annotator_cap = 3;
  std::vector<std::string> screening_key;
  int screening_threshold = 3;
};

// Line-delimited store under `dir`: ranking_tasks, mcq_tasks, assignments,
// screening, submissions, mcq_validations and audit (.jsonl each). State is
// rebuilt from the files on construction; every write is one appended line.
class AnnotationStore {
 public:
  explicit AnnotationStore(StoreOptions opts);

  const StoreOptions& options() const { return opts_; }

  RankingTask create_ranking_task(const RankingSample& sample, std::uint64_t seed);
  McqTask add_mcq_task(const mediq::ScenarioMCQ& scenario);

  ScreeningRecord screen(const std::string& annotator_id, const std::vector<std::string>& answers);
  bool screened(const std::string& annotator_id) const;

  // Ranking tasks assigned to the annotator. Claims up to `max_new` more
  // tasks (round-robin over the task list, respecting the annotator cap).
  std::vector<std::string> list_tasks(const std::string& annotator_id,
                                      std::size_t max_new = static_cast<std::size_t>(-1));
  std::optional<RankingTask> ranking_task(const std::string& task_id) const;
  std::optional<McqTask> mcq_task(const std::string& task_id) const;
  std::vector<std::string> ranking_task_ids() const;
  std::vector<std::string> mcq_task_ids() const;
  std::size_t assignees(const std::string& task_id) const;

  Receipt submit_ranking(const std::string& task_id, const std::string& annotator_id,
                         const std::vector<std::string>& permutation);
  Receipt submit_mcq_validation(const McqValidation& v);

  std::vector<RankingSubmission> ranking_submissions() const;
  std::vector<json> audit_log() const;

  RankingBundle export_rankings() const;
  // Items x annotators, cells are the selected option; categories A-D plus
  // none_of_the_above.
  stats::RatingsMatrix export_mcq_matrix() const;
  McqAgreement mcq_majority_accuracy() const;

 private:
  void require_screened(const std::string& annotator_id) const;
  // Caller holds mu_.
  bool claim_locked(const std::string& task_id, const std::string& annotator_id);
  void append(const std::string& file, const json& row);

  StoreOptions opts_;
  mutable std::mutex mu_;
  std::vector<RankingTask> tasks_;
  std::map<std::string, std::size_t> task_index_;
  std::vector<McqTask> mcq_tasks_;
  std::map<std::string, std::size_t> mcq_index_;
  std::map<std::string, std::vector<std::string>> assigned_;  // task -> annotators in claim order
  std::size_t cursor_ = 0;
  std::map<std::string, ScreeningRecord> screening_;
  std::map<std::pair<std::string, std::string>, RankingSubmission> submissions_;
  std::map<std::pair<std::string, std::string>, McqValidation> validations_;
};

// HTTP front end. Every request carries "Authorization: Bearer <token>";
// tokens map to annotator ids.
//   GET  /api/tasks                      list-tasks
//   GET  /api/tasks/<id>                 get-task
//   POST /api/tasks/<id>/ranking         submit-ranking {"permutation": [...]}
//   GET  /api/mcq, /api/mcq/<id>         MCQ validation tasks
//   POST /api/mcq/<id>/validation        {"plausible", "selected", "alternative"}
//   POST /api/screening                  {"answers": [...]}
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, std::map<std::string, std::string> tokens);
  ~AnnotationServer();

  int bind_to_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();

 private:
  AnnotationStore& store_;
  std::map<std::string, std::string> tokens_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace alfa::annotation
