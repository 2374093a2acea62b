#include "alfa/attribute.hpp"

#include <algorithm>

#include "alfa/error.hpp"
#include "alfa/util.hpp"

namespace alfa {

AttributeGroup group_of(Attribute a) {
  switch (a) {
    case Attribute::clarity:
    case Attribute::focus:
    case Attribute::answerability:
      return AttributeGroup::general;
    case Attribute::medical_accuracy:
    case Attribute::diagnostic_relevance:
    case Attribute::avoid_ddx_bias:
      return AttributeGroup::clinical;
    case Attribute::coarse:
      return AttributeGroup::coarse;
  }
  return AttributeGroup::coarse;
}

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::clarity: return "clarity";
    case Attribute::focus: return "focus";
    case Attribute::answerability: return "answerability";
    case Attribute::medical_accuracy: return "medical_accuracy";
    case Attribute::diagnostic_relevance: return "diagnostic_relevance";
    case Attribute::avoid_ddx_bias: return "avoid_ddx_bias";
    case Attribute::coarse: return "coarse";
  }
  return "coarse";
}

std::string_view to_string(AttributeGroup g) {
  switch (g) {
    case AttributeGroup::general: return "general";
    case AttributeGroup::clinical: return "clinical";
    case AttributeGroup::coarse: return "coarse";
  }
  return "coarse";
}

std::optional<Attribute> attribute_from_string(std::string_view s) {
  for (auto a : {Attribute::clarity, Attribute::focus, Attribute::answerability,
                 Attribute::medical_accuracy, Attribute::diagnostic_relevance,
                 Attribute::avoid_ddx_bias, Attribute::coarse}) {
    if (to_string(a) == s) return a;
  }
  // Short names used in tables and on the command line.
  if (s == "accuracy") return Attribute::medical_accuracy;
  if (s == "relevance") return Attribute::diagnostic_relevance;
  if (s == "ddx_bias" || s == "ddx") return Attribute::avoid_ddx_bias;
  if (s == "answerable") return Attribute::answerability;
  return std::nullopt;
}

std::vector<Attribute> parse_attribute_set(std::string_view spec) {
  std::vector<Attribute> out;
  for (const auto& raw : split(spec, ',')) {
    std::string name = to_lower(trim(raw));
    if (name.empty()) continue;
    if (name == "all") {
      out.insert(out.end(), kFineAttributes.begin(), kFineAttributes.end());
    } else if (name == "general" || name == "clinical") {
      auto g = name == "general" ? AttributeGroup::general : AttributeGroup::clinical;
      for (auto a : kFineAttributes) {
        if (group_of(a) == g) out.push_back(a);
      }
    } else if (auto a = attribute_from_string(name)) {
      out.push_back(*a);
    } else {
      throw ValidationError("unknown attribute or group: " + name);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw ValidationError("empty attribute set");
  return out;
}

std::string_view to_string(Direction d) {
  return d == Direction::enhanced ? "enhanced" : "corrupted";
}

Direction direction_from_string(std::string_view s) {
  if (s == "enhanced") return Direction::enhanced;
  if (s == "corrupted") return Direction::corrupted;
  throw ValidationError("unknown direction: " + std::string(s));
}

namespace {

// Clarity carries the rubric the original perturbation prompt was written
// with; the remaining rubrics follow the same five-anchor shape.
const AttributeRubric kClarity{
    "Clarity",
    "The ease with which a reader can understand the intent and meaning of the question. A clear "
    "question avoids ambiguity and vagueness, providing enough detail to prevent misunderstanding, "
    "while avoiding excessive complexity or overloading with jargon.",
    {"Very ambiguous: The question is highly ambiguous, vague, or disorganized, making it very "
     "difficult to understand what the asker is seeking. The question may lead to multiple "
     "interpretations and confusion.",
     "Somewhat ambiguous: The question is somewhat ambiguous or vague and may include overly "
     "complex phrasing. It requires significant effort to interpret.",
     "In-between: The question is mostly understandable but could benefit from rewording or "
     "simplification to remove partial ambiguity or excessive jargon.",
     "Somewhat clear: The question is generally clear, with minimal ambiguity, and can be "
     "understood by a layperson. There is little chance of misunderstanding.",
     "Very clear: The question is entirely unambiguous, easy to understand, and structured in a "
     "logical, concise manner. No jargon or unnecessary complexity."},
    "Additional Tips for Clear Questions\n"
    "Use specific time frames: Instead of \"lately,\" try \"in the past week\" or \"since your last "
    "visit.\"\n"
    "Break down complex questions: If a question could be answered in multiple ways, consider "
    "asking two separate questions.\n"
    "Avoid medical jargon: Use plain language that patients without a medical background can "
    "understand.",
    "more clear/less ambiguous",
    "less clear/more ambiguous"};

const AttributeRubric kFocus{
    "Focus",
    "How directly the question targets one specific, relevant gap in the information needed. A "
    "focused question asks about a single well-defined issue and invites a specific, informative "
    "answer rather than a broad or rambling one.",
    {"Very unfocused: The question is broad, wandering, or bundles many unrelated topics, so the "
     "answer is unlikely to fill any specific information gap.",
     "Somewhat unfocused: The question touches the relevant issue but is diluted by unrelated "
     "aspects or is too general to yield a specific answer.",
     "In-between: The question addresses an identifiable gap but could be narrowed to obtain a "
     "more informative answer.",
     "Somewhat focused: The question targets a specific gap with little extraneous content.",
     "Very focused: The question pinpoints exactly one information gap and invites a precise, "
     "informative answer."},
    "",
    "more focused/more specific",
    "less focused/more general"};

const AttributeRubric kAnswerability{
    "Answerability",
    "Whether the patient can realistically answer the question from their own knowledge and "
    "experience. An answerable question asks about symptoms, history, and experiences rather "
    "than expecting the patient to supply diagnoses or specialist medical knowledge.",
    {"Very hard to answer: The question requires clinical expertise, test interpretation, or "
     "information the patient cannot reasonably have.",
     "Somewhat hard to answer: The question partly depends on medical knowledge or information the "
     "patient is unlikely to know.",
     "In-between: The patient could answer parts of the question but would struggle with others.",
     "Somewhat answerable: The patient can answer the question from their own experience with "
     "little difficulty.",
     "Very answerable: The question asks only about things the patient directly knows or "
     "experiences and can be answered easily and accurately."},
    "",
    "more answerable for the patient",
    "less answerable for the patient"};

const AttributeRubric kAccuracy{
    "Medical Accuracy",
    "Whether the content, premises, and terminology of the question agree with established "
    "medical textbook knowledge and clinical guidelines.",
    {"Very inaccurate: The question rests on false medical premises or misuses medical concepts "
     "in ways that could mislead the patient.",
     "Somewhat inaccurate: The question contains notable medical inaccuracies or outdated "
     "assumptions.",
     "In-between: The question is mostly consistent with medical knowledge but contains minor "
     "imprecisions.",
     "Somewhat accurate: The question is consistent with medical knowledge with only trivial "
     "imprecision.",
     "Very accurate: The question is fully consistent with established medical knowledge and "
     "guidelines."},
    "",
    "more medically accurate",
    "less medically accurate"};

const AttributeRubric kRelevance{
    "Diagnostic Relevance",
    "How well the question probes for symptoms, risk factors, or contextual details that are "
    "essential to refining the differential diagnosis for this patient.",
    {"Irrelevant: The answer would not change the differential diagnosis at all.",
     "Somewhat irrelevant: The question concerns details of marginal diagnostic value.",
     "In-between: The question has some diagnostic value but misses more important details.",
     "Somewhat relevant: The answer would meaningfully help narrow the differential diagnosis.",
     "Very relevant: The question targets exactly the information most needed to discriminate "
     "between the leading diagnoses."},
    "",
    "more diagnostically relevant",
    "less diagnostically relevant"};

const AttributeRubric kDdxBias{
    "Avoiding DDX Bias",
    "Whether the wording of the question is neutral and avoids suggestive or leading phrasing "
    "that could anchor the conversation on one diagnosis, induce premature closure, or otherwise "
    "bias the differential diagnosis.",
    {"Strongly biased: The question is leading or presumes a diagnosis, strongly steering the "
     "patient and the differential.",
     "Somewhat biased: The question contains suggestive wording that favors particular "
     "diagnoses.",
     "In-between: The question is mostly neutral with slight suggestive framing.",
     "Somewhat unbiased: The question is neutral with negligible leading content.",
     "Unbiased: The question is fully neutral and keeps the differential diagnosis open."},
    "",
    "less biased/more neutral with respect to the differential diagnosis",
    "more biased/more leading with respect to the differential diagnosis"};

const AttributeRubric kCoarse{
    "Overall Quality",
    "How good the question is overall as a clinician's follow-up question to this patient, "
    "taking every aspect of question quality into account.",
    {"Very poor: The question is a very bad follow-up question.",
     "Poor: The question is a weak follow-up question.",
     "Average: The question is an acceptable follow-up question.",
     "Good: The question is a good follow-up question.",
     "Very good: The question is an excellent follow-up question."},
    "",
    "better overall",
    "worse overall"};

}  // namespace

const AttributeRubric& rubric(Attribute a) {
  switch (a) {
    case Attribute::clarity: return kClarity;
    case Attribute::focus: return kFocus;
    case Attribute::answerability: return kAnswerability;
    case Attribute::medical_accuracy: return kAccuracy;
    case Attribute::diagnostic_relevance: return kRelevance;
    case Attribute::avoid_ddx_bias: return kDdxBias;
    case Attribute::coarse: return kCoarse;
  }
  return kCoarse;
}

}  // namespace alfa
