#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "alfa/synthesis.hpp"

namespace alfa::fusion {

enum class FusionStrategy { data_mixing, reward_fusion, policy_fusion };

std::string_view to_string(FusionStrategy s);
FusionStrategy fusion_strategy_from_string(std::string_view s);

struct SelectionSpec {
  std::set<Attribute> attributes;
  std::set<synthesis::PairType> pair_types;
  bool filtered_only = true;

  // Throws ValidationError on an empty attribute or pair-type set.
  void validate() const;
  bool selects(const synthesis::PreferencePair& p) const;
  std::string describe() const;

  // attributes: see parse_attribute_set(); pair types: "EO,EC,OC" or "all".
  static SelectionSpec parse(std::string_view attributes, std::string_view pair_types, bool filtered_only);
};

enum class DatasetLayout {
  // {"prompt", "chosen", "rejected", ...}
  prompt_chosen_rejected,
  // {"chosen": [user, assistant], "rejected": [user, assistant], ...} chat turns
  pairwise,
};

DatasetLayout dataset_layout_from_string(std::string_view s);

struct ExportResult {
  std::size_t records = 0;
  std::map<std::string, std::map<std::string, std::size_t>> counts;  // attribute -> pair type -> n
  std::string contents;  // the JSONL bytes written
};

// Training prompt for a conversation context.
std::string training_prompt(const std::string& context);

// Selected pairs as JSONL sorted by pair_id. With filtered_only every pair
// must have been judged; only kept pairs are written.
ExportResult export_preference_dataset(const std::vector<synthesis::PreferencePair>& pairs,
                                       const SelectionSpec& spec, DatasetLayout layout,
                                       const std::optional<std::filesystem::path>& out = std::nullopt);

// ---------------------------------------------------------------- tensors

enum class DType { F64, F32, F16, BF16, I64, I32, I16, I8, U8, BOOL };

std::string_view to_string(DType d);
DType dtype_from_string(std::string_view s);
std::size_t element_size(DType d);

struct TensorEntry {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> data;  // little-endian

  std::size_t element_count() const;
  double get(std::size_t i) const;
  void set(std::size_t i, double v);
};

// Named tensors plus string metadata, serialized as an 8-byte little-endian
// header length, a JSON header of {name: {dtype, shape, data_offsets}} with
// "__metadata__", then the raw tensor bytes.
struct TensorArchive {
  std::map<std::string, TensorEntry> entries;
  std::map<std::string, std::string> metadata;

  // Checks buffer lengths against dtype and shape.
  void validate() const;

  std::vector<std::uint8_t> serialize() const;
  static TensorArchive deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

  // SHA-256 of the serialized bytes.
  std::string digest() const;

  static TensorEntry make_f32(std::vector<std::int64_t> shape, const std::vector<float>& values);
  static TensorEntry make_f64(std::vector<std::int64_t> shape, const std::vector<double>& values);
};

// Element-wise weighted mean over archives with identical names, dtypes and
// shapes. Weights default to equal and are normalized; accumulation is in
// double precision; results are rounded back to the storage dtype. Metadata
// records the source digests and normalized weights.
TensorArchive average_tensor_archives(const std::vector<TensorArchive>& archives,
                                      const std::optional<std::vector<double>>& weights = std::nullopt,
                                      std::size_t workers = 4);

// ---------------------------------------------------------------- trainer

enum class TrainerStage { sft, dpo, rm, ppo };

std::string_view to_string(TrainerStage s);
TrainerStage trainer_stage_from_string(std::string_view s);

// Hyperparameter defaults of a stage with overrides applied last. Override
// values are JSON literals when they parse as such, strings otherwise.
// Unknown keys throw ValidationError.
json trainer_config(TrainerStage stage, const std::map<std::string, std::string>& overrides = {});

void emit_trainer_config(const std::filesystem::path& path, TrainerStage stage,
                         const std::map<std::string, std::string>& overrides = {});

}  // namespace alfa::fusion
