#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alfa/attribute.hpp"
#include "alfa/corpus.hpp"
#include "alfa/llm.hpp"

namespace alfa {

// Ranking of the presented candidates returned by one judge call. `presented`
// holds the candidate ids in presentation order (label A first); `ranking`
// lists labels best first.
struct JudgeVerdict {
  std::string dimension;
  std::vector<std::string> presented;
  std::vector<char> ranking;
  std::string reasoning;
  std::string judge_endpoint;

  // "ABC"-style label string of the presentation, e.g. "BCA" for a rotation.
  std::string presentation_order() const;
  // Position (0 = best) of a candidate id, or nullopt if it was not shown.
  std::optional<std::size_t> rank_of(const std::string& candidate_id) const;
  std::vector<std::string> ranked_ids() const;

  json to_json() const;
  static JudgeVerdict from_json(const json& j);
};

}  // namespace alfa

namespace alfa::synthesis {

enum class PairType { EO, EC, OC };

std::string_view to_string(PairType t);
PairType pair_type_from_string(std::string_view s);
inline constexpr std::array<PairType, 3> kPairTypes = {PairType::EO, PairType::EC, PairType::OC};

// Member roles of a pair, used as candidate ids when judging.
inline constexpr std::string_view kEnhanced = "enhanced";
inline constexpr std::string_view kOriginal = "original";
inline constexpr std::string_view kCorrupted = "corrupted";

// Chosen and rejected role of a pair type.
std::pair<std::string_view, std::string_view> member_roles(PairType t);

struct VariantQuestion {
  std::string variant_id;
  std::string source_question_id;
  Attribute attribute = Attribute::clarity;
  Direction direction = Direction::enhanced;
  std::string text;
  std::string generator_endpoint;

  json to_json() const;
  static VariantQuestion from_json(const json& j);
};

struct PreferencePair {
  std::string pair_id;
  std::string context;
  std::string chosen;
  std::string rejected;
  Attribute attribute = Attribute::clarity;
  PairType pair_type = PairType::EO;
  std::string question_id;
  std::vector<JudgeVerdict> verdicts;
  std::optional<bool> kept;

  json to_json() const;
  static PreferencePair from_json(const json& j);
};

struct PerturbOptions {
  std::string endpoint;
  double temperature = 1.0;
  int max_tokens = 512;
  bool allow_coarse = true;
};

// Strips whitespace and one layer of surrounding quotes from a generation.
std::string clean_generation(std::string_view raw);

// Rewrites q along one attribute and direction. An empty or unchanged
// rewrite is regenerated once with a different request seed; a second
// degenerate result throws ValidationError("degenerate variant ...").
VariantQuestion perturb(const corpus::QuestionRecord& q, Attribute attr, Direction dir,
                        llm::Gateway& gateway, const PerturbOptions& opts);

// The perturbation prompt for (q, attr, dir).
std::string perturbation_prompt(const corpus::QuestionRecord& q, Attribute attr, Direction dir);

// EO (e over q), EC (e over c), OC (q over c), in that order.
std::array<PreferencePair, 3> build_pairs(const corpus::QuestionRecord& q,
                                          const VariantQuestion& enhanced,
                                          const VariantQuestion& corrupted);

struct SynthesisFailure {
  std::string question_id;
  Attribute attribute;
  Direction direction;
  std::string error;
};

struct PairSet {
  std::vector<PreferencePair> pairs;
  std::vector<VariantQuestion> variants;
  std::vector<SynthesisFailure> failures;

  // Counts per attribute x pair type.
  std::map<std::string, std::map<std::string, std::size_t>> cell_counts() const;
  json manifest() const;
};

struct SynthesisOptions {
  PerturbOptions perturb;
  std::size_t workers = 8;
  // When set, the counts manifest is (re)written here after the run.
  std::optional<std::filesystem::path> manifest_path;
};

// For every (question, attribute): one enhanced and one corrupted variant and
// the three pairs. Generation runs in parallel; assembly is ordered by
// question then attribute. Failed generations are collected, not thrown.
PairSet synthesize_corpus(const std::vector<corpus::QuestionRecord>& split,
                          const std::vector<Attribute>& attrs, llm::Gateway& gateway,
                          const SynthesisOptions& opts);

void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

}  // namespace alfa::synthesis
