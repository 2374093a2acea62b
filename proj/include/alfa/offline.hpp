#pragma once

#include <memory>
#include <string>

#include "alfa/llm.hpp"

namespace alfa::offline {

// Deterministic stand-in for a real model that recognises every prompt the
// toolkit sends and answers it from the prompt text alone, so whole pipeline
// runs work without network access. Options (all optional):
//   "style":  "plain" | "polished"  how ask_question prompts are answered
//   "noise":  0..1   chance that two neighbouring ranks swap in a judge answer
//   "confidence_step": int  abstention confidence gained per informative answer
std::shared_ptr<llm::Backend> make_pipeline_backend(const json& options);

// Text transforms used by the backend's perturbation answers and judged by
// its ranking answers: enhanced > original > corrupted.
std::string enhance_text(const std::string& question);
std::string corrupt_text(const std::string& question);
int quality_score(const std::string& text);

}  // namespace alfa::offline
