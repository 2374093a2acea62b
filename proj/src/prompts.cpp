#include "alfa/prompts.hpp"

#include <algorithm>
#include <regex>

#include "alfa/error.hpp"

namespace alfa::prompts {
namespace {

const std::map<std::string, std::string, std::less<>>& registry() {
  static const std::map<std::string, std::string, std::less<>> templates = {
      {"perturb",
       "You are a medical assistant and your task is to rewrite medical questions posted to an "
       "online health forum to vary some of their properties. The goal is to generate these "
       "diverse counterfactual questions to study the properties of clinical questions. You will "
       "be given a patient's post, and the original clinician response, and you should rewrite "
       "the clinician response according to the instructions below.\n\n\n"
       "***PATIENT POST***\n{title}\n{post}\n\n"
       "***CLINICIAN RESPONSE***\n{question}\n\n"
       "***INSTRUCTION***\n"
       "Rewrite the clinician response so that it is {direction_phrase} for the patient, while "
       "keeping everything else constant. The definition of this property and what it means for "
       "this property at varying scales are given below:\n\n"
       "{attribute_block}\n\n"
       "Please make the rewritten question more realistic -- something that clinicians would ask "
       "in an actual patient interaction.\n\n"
       "Return the rewritten question ONLY and do not include any other text.\n\n"
       "***REWRITTEN RESPONSE***\n"},

      {"judge_system",
       "Please act as an impartial judge and evaluate the quality of the responses provided by "
       "{candidate_count} medically trained AI assistants in a medical interaction. Carefully read "
       "the questions being asked by these expert systems as a response to the medical "
       "interaction and rank them in the provided dimensions. Begin your evaluation by comparing "
       "the {candidate_count} responses and provide a short explanation. Avoid any position biases "
       "and ensure that the order in which the responses were presented does not influence your "
       "decision. Do not allow the length of the responses to influence your evaluation. Ignore "
       "possible spelling or grammar mistakes and focus only on the content of the text. Be as "
       "objective as possible. The only ranking choice is \">\" (greater than). For each "
       "dimension listed, provide your answer in the following example JSON format:\n"
       "{\n"
       "\"dimension_name\": {\n"
       "    \"ranking\": \"{ranking_example}\",\n"
       "    \"reasoning\": \"Provide a clear and concise explanation for your ranking decision "
       "here.\"\n"
       "  }\n"
       "}\n"},

      {"judge_user",
       "Please carefully review the previous interaction below, which includes patient post, "
       "title, and subsequent responses if any.\n"
       "***PREVIOUS MEDICAL INTERACTION***\n{prev_context}\n"
       "***MEDICAL AI QUESTIONS TO PATIENT***\n"
       "- **Question A:** {question_a}\n"
       "- **Question B:** {question_b}\n"
       "- **Question C:** {question_c}\n"
       "***EVALUATION DIMENSIONS***\n{dimensions}\n"
       "***SUPPLEMENTARY INFORMATION***\n"
       "To help you evaluate the questions, please refer to the provided additional information "
       "regarding the final conclusion of this patient's case below:\n"
       "Final diagnosis: {final_diagnosis}\n"
       "Conclusion: {conclusion}\n"},

      {"judge_user_pair",
       "Please carefully review the previous interaction below, which includes patient post, "
       "title, and subsequent responses if any.\n"
       "***PREVIOUS MEDICAL INTERACTION***\n{prev_context}\n"
       "***MEDICAL AI QUESTIONS TO PATIENT***\n"
       "- **Question A:** {question_a}\n"
       "- **Question B:** {question_b}\n"
       "***EVALUATION DIMENSIONS***\n{dimensions}\n"
       "***SUPPLEMENTARY INFORMATION***\n"
       "To help you evaluate the questions, please refer to the provided additional information "
       "regarding the final conclusion of this patient's case below:\n"
       "Final diagnosis: {final_diagnosis}\n"
       "Conclusion: {conclusion}\n"},

      {"judge_reminder",
       "Your previous answer could not be parsed. Respond ONLY with a JSON object whose key is "
       "\"{dimension}\" and whose value has a \"ranking\" string such as \"{ranking_example}\" "
       "covering every question label exactly once, using only \">\" (no ties), and a "
       "\"reasoning\" string."},

      {"decompose_system",
       "You are annotating clinical conversations from an online health forum. You will be given "
       "a thread consisting of a patient's post followed by numbered turns. Decompose the "
       "conversation and answer in JSON only."},

      {"decompose_user",
       "***THREAD***\n{thread}\n\n"
       "***TASK***\n"
       "1. For every responder turn, list the atomic follow-up questions it asks the patient, one "
       "self-contained question per entry, in the order they appear.\n"
       "2. Extract the conclusion the responders reached about the patient's case, if any.\n"
       "3. Extract the final diagnosis, if one was stated.\n"
       "4. Decide whether the patient gave positive feedback (for example thanking the "
       "responder).\n\n"
       "Respond with JSON of the form:\n"
       "{\"turns\": [{\"turn\": <turn number>, \"questions\": [\"...\"]}], \"conclusion\": "
       "<string or null>, \"final_diagnosis\": <string or null>, \"positive_feedback\": "
       "<true or false>}\n"},

      {"mcq_initial_info",
       "Below is the full record of a patient's conversation with clinicians on a health "
       "forum.\n\n***PATIENT RECORD***\n{record}\n\n"
       "Extract the initial information the patient presents, usually the chief complaint with "
       "age and sex when available, in one or two sentences written in the third person. Return "
       "the initial information ONLY.\n"},

      {"mcq_inquiry",
       "Below is the full record of a patient's conversation with clinicians on a health "
       "forum.\n\n***PATIENT RECORD***\n{record}\n\n"
       "Extract (1) the health question the patient is asking in their post, and (2) the "
       "conclusion the responders reached, if any. Respond with JSON of the form "
       "{\"inquiry\": \"...\", \"conclusion\": \"...\"}.\n"},

      {"mcq_system",
       "You are a experienced expert working in the field of medicine education. Based on your "
       "understanding of basic and clinical science, medical knowledge, and mechanisms underlying "
       "health, disease, patient care, and modes of therapy, you are given a patient case and you "
       "are tasked to parse the patient's inquiry into a multiple choice question. The generated "
       "multiple choice should consist of a question and 4 options, which could be answered by "
       "the given patient conversation. Base your response on the current and standard practices "
       "referenced in medical guidelines. The created question should be answerable only with "
       "the patient information, rather than testing some hardcore scientific foundational "
       "knowledge recall. The questions should be faithful to the original patient's inqiury in "
       "their post. The correct answer should be correct, and the distractors should be "
       "plausible. The correct answer should be evenly distributed among the available options "
       "to enhance the quality and reliability of the questions. The output should be in json "
       "format.\n"},

      {"mcq_user",
       "***PATIENT RECORD***\n{record}\n\n"
       "***PATIENT INQUIRY***\n{inquiry}\n\n"
       "***PARSED AUXILIARY INFORMATION***\nFinal diagnosis: {final_diagnosis}\n"
       "Conclusion: {conclusion}\n\n"
       "You could use some parsed auxiliary information such as the final diagnosis and "
       "conclusion. The conclusion is the correct answer; write three plausible but wrong "
       "alternatives. Make sure that the multiple choice question you generate is not too easy "
       "but also not impossible to answer. Based on this patient record, faithfully generate a "
       "multiple choice questions according to the patient inquiry and store them in the "
       "following json format:\n\n"
       "{\n"
       "    \"question\": [generated question 1],\n"
       "    \"optionA\": [option A],\n"
       "    \"optionB\": [option B],\n"
       "    \"optionC\": [option C],\n"
       "    \"optionD\": [option D],\n"
       "    \"correct_answer\": [A or B or C or D]\n"
       "}\n\n"
       "After you generate the question, do a round of revision. In your revision, you should:\n"
       "1. Identify any medical inaccuracies in your first response, corrsect them if any "
       "exists.\n"
       "2. Make sure the question is what the patient is asking for or concerned about in their "
       "post.\n"
       "3. The correct answer is indeed correct, if none of the options are correct or more than "
       "one options are correct, revise the options to improve the question.\n"
       "4. Ensure that the correct answer is in a random position among the available options "
       "(shuffle if necessary) to enhance the quality and reliability of the questions.\n"
       "5. Guarantee that the json output is parsable.\n\n"
       "Respond with the final revised question in the json format and NOTHING ELSE.\n"},

      {"json_reminder",
       "Your previous answer was not valid. Respond again with the requested JSON object and "
       "nothing else."},

      {"patient_system",
       "You are a patient answering a clinician's questions. Answer truthfully and only with "
       "information contained in your record below; never invent facts. If the record does not "
       "contain the information needed to answer, reply with exactly: \"The patient cannot "
       "answer this question.\"\n\n***PATIENT RECORD***\n{record}\n"},

      {"patient_user", "{question}"},

      {"expert_system",
       "You are an experienced doctor trying to make a diagnosis for a patient. You are given "
       "some initial information about the patient, the conversation you have had with them so "
       "far, and a multiple choice question you eventually need to answer.\n"},

      {"abstain_user",
       "***INITIAL INFORMATION***\n{initial_info}\n\n"
       "***CONVERSATION SO FAR***\n{history}\n\n"
       "***QUESTION TO ANSWER***\n{inquiry}\n{options}\n\n"
       "How confident are you that you already have enough information to answer the question "
       "correctly, on a scale from 1 (very unconfident, need more information) to 5 (very "
       "confident)? First give a brief rationale, then the score. Respond with JSON of the form "
       "{\"rationale\": \"...\", \"confidence\": <1-5>}.\n"},

      {"expert_question_user",
       "***INITIAL INFORMATION***\n{initial_info}\n\n"
       "***CONVERSATION SO FAR***\n{history}\n\n"
       "***QUESTION TO ANSWER***\n{inquiry}\n\n"
       "Ask the patient exactly one follow-up question that best helps you answer. Return the "
       "question only.\n"},

      {"decision_user",
       "***INITIAL INFORMATION***\n{initial_info}\n\n"
       "***CONVERSATION SO FAR***\n{history}\n\n"
       "***QUESTION TO ANSWER***\n{inquiry}\n{options}\n\n"
       "Choose the single best option. Respond with JSON of the form {\"answer\": \"<A, B, C or "
       "D>\"}.\n"},

      {"ask_question", "{context}\n\n{instruction}"},
  };
  return templates;
}

const std::regex& placeholder_re() {
  static const std::regex re(R"(\{([a-z_][a-z0-9_]*)\})");
  return re;
}

}  // namespace

const std::string& template_text(std::string_view template_id) {
  const auto& reg = registry();
  auto it = reg.find(template_id);
  if (it == reg.end()) throw ValidationError("unknown prompt template: " + std::string(template_id));
  return it->second;
}

std::vector<std::string> template_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, _] : registry()) ids.push_back(id);
  return ids;
}

std::vector<std::string> placeholders(std::string_view template_id) {
  const std::string& text = template_text(template_id);
  std::vector<std::string> names;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), placeholder_re());
       it != std::sregex_iterator(); ++it) {
    std::string name = (*it)[1];
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  return names;
}

std::string render_prompt(std::string_view template_id, const Vars& vars) {
  const std::string& text = template_text(template_id);
  std::string out;
  out.reserve(text.size() * 2);
  auto last = text.cbegin();
  for (auto it = std::sregex_iterator(text.begin(), text.end(), placeholder_re());
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    std::string name = m[1];
    auto v = vars.find(name);
    if (v == vars.end()) {
      throw ValidationError("prompt template " + std::string(template_id) +
                            ": missing variable " + name);
    }
    out.append(last, m[0].first);
    out += v->second;
    last = m[0].second;
  }
  out.append(last, text.cend());
  return out;
}

std::string attribute_block(Attribute a) {
  const auto& r = rubric(a);
  std::string out = "Definition: " + r.definition + "\n";
  for (const auto& anchor : r.scale) out += anchor + "\n";
  if (!r.tips.empty()) out += "\n" + r.tips + "\n";
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace alfa::prompts
