#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "alfa/attribute.hpp"

namespace alfa::prompts {

using Vars = std::map<std::string, std::string>;

// Substitutes every {name} placeholder of the registered template. Unknown
// templates and unbound placeholders throw ValidationError naming the
// offender; extra variables are ignored. Values are inserted verbatim and
// never rescanned.
std::string render_prompt(std::string_view template_id, const Vars& vars);

// Placeholder names of a template in first-appearance order.
std::vector<std::string> placeholders(std::string_view template_id);
const std::string& template_text(std::string_view template_id);
std::vector<std::string> template_ids();

// Definition, scale anchors and tips of an attribute as a prompt block.
std::string attribute_block(Attribute a);

// Instruction appended to a conversation context to request one follow-up
// question. Shared by dataset export, win-rate generation and the simulator.
inline constexpr std::string_view kAskInstruction =
    "You are the clinician in the conversation above. Ask the patient exactly one follow-up "
    "question that best helps you understand and diagnose their condition. Return the "
    "question only.";

// Fixed patient fallback when the record lacks the requested information.
inline constexpr std::string_view kCannotAnswer = "The patient cannot answer this question.";

}  // namespace alfa::prompts
