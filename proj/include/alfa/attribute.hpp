#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace alfa {

// Question-quality dimension that perturbation and judging are directed at.
enum class Attribute {
  clarity,
  focus,
  answerability,
  medical_accuracy,
  diagnostic_relevance,
  avoid_ddx_bias,
  coarse,
};

enum class AttributeGroup { general, clinical, coarse };

inline constexpr std::array<Attribute, 6> kFineAttributes = {
    Attribute::clarity,          Attribute::focus,
    Attribute::answerability,    Attribute::medical_accuracy,
    Attribute::diagnostic_relevance, Attribute::avoid_ddx_bias,
};

AttributeGroup group_of(Attribute a);
std::string_view to_string(Attribute a);
std::string_view to_string(AttributeGroup g);
std::optional<Attribute> attribute_from_string(std::string_view s);

// Accepts attribute names, group names ("general", "clinical", "coarse"),
// "all" (the six fine-grained attributes) and comma-separated mixtures.
// Result is sorted and deduplicated. Throws ValidationError on unknown names.
std::vector<Attribute> parse_attribute_set(std::string_view spec);

enum class Direction { enhanced, corrupted };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

// Prompt material for one attribute: what the property means, the five-point
// scale anchors (worst first), optional tips, and the phrase describing the
// requested change for each direction.
struct AttributeRubric {
  std::string name;
  std::string definition;
  std::array<std::string, 5> scale;
  std::string tips;
  std::string enhance_phrase;
  std::string corrupt_phrase;
};

const AttributeRubric& rubric(Attribute a);

}  // namespace alfa
