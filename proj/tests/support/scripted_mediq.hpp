#pragma once
// Scripted simulator backends shared by the simulator tests and the
// acceptance run.

#include <array>
#include <atomic>
#include <memory>

#include "alfa/llm.hpp"
#include "alfa/mediq.hpp"
#include "alfa/prompts.hpp"
#include "alfa/util.hpp"

namespace oracle {

using namespace alfa::mediq;
using alfa::json;
using alfa::split;
using alfa::to_lower;
using alfa::trim;
namespace llm = alfa::llm;
namespace prompts = alfa::prompts;

// A scenario whose record states the answer in one sentence that only a
// question mentioning `keyword` retrieves.
inline ScenarioMCQ scenario(const std::string& id, const std::string& keyword, const std::string& finding,
                     std::array<std::string, 4> options, char correct) {
  ScenarioMCQ s;
  s.scenario_id = id;
  s.initial_info = "A 40-year-old reports a changing mole.";
  s.hidden_record = "Title: mole\nPost: My mole changed colour. The " + keyword + " showed " + finding +
                    ". I also have mild itching.";
  s.inquiry = "What is the most likely diagnosis?";
  s.options = std::move(options);
  s.correct = correct;
  return s;
}

inline std::string section(const std::string& text, const std::string& head) {
  auto s = text.find(head);
  if (s == std::string::npos) return "";
  s += head.size();
  auto e = text.find("\n\n***", s);
  return text.substr(s, e == std::string::npos ? std::string::npos : e - s);
}

struct Scripted {
  int confident_after = 1;  // informative answers needed before confidence 5
  int confidence_floor = 1;
  bool decide = true;
  std::atomic<int> patient_calls{0};
};

// Faithful patient, keyword-asking expert, option-matching decision module.
inline std::shared_ptr<llm::MockBackend> scripted_backend(std::shared_ptr<Scripted> cfg, const std::string& keyword) {
  auto m = std::make_shared<llm::MockBackend>();
  m->on("You are a patient answering", [cfg](const llm::CompletionRequest& r) {
    ++cfg->patient_calls;
    std::string record = r.messages.front().content;
    std::string q = to_lower(r.last_user_message());
    for (auto& sentence : split(section(record, "***PATIENT RECORD***\n"), '.')) {
      for (auto& word : split(q, ' ')) {
        std::string w = trim(word);
        while (!w.empty() && !std::isalpha(static_cast<unsigned char>(w.back()))) w.pop_back();
        if (w.size() > 3 && to_lower(sentence).find(w) != std::string::npos) return trim(sentence) + ".";
      }
    }
    return std::string("I don't know; the patient cannot answer this question.");
  });
  m->on("How confident are you", [cfg](const llm::CompletionRequest& r) {
    auto history = section(r.last_user_message(), "***CONVERSATION SO FAR***\n");
    int informative = 0;
    std::size_t pos = 0;
    while ((pos = history.find("Patient: ", pos)) != std::string::npos) {
      if (history.compare(pos + 9, prompts::kCannotAnswer.size(), prompts::kCannotAnswer) != 0) ++informative;
      ++pos;
    }
    int c = informative >= cfg->confident_after ? 5 : cfg->confidence_floor;
    return json{{"rationale", "have " + std::to_string(informative)}, {"confidence", c}}.dump();
  });
  m->on("Ask the patient exactly one follow-up question", [keyword](const llm::CompletionRequest&) {
    return "What did the " + keyword + " show?";
  });
  m->on("Choose the single best option", [cfg](const llm::CompletionRequest& r) {
    if (!cfg->decide) return std::string("hmm");
    const auto& p = r.last_user_message();
    auto history = to_lower(section(p, "***CONVERSATION SO FAR***\n"));
    auto options = section(p, "***QUESTION TO ANSWER***\n");
    for (auto& line : split(options, '\n')) {
      if (line.size() > 3 && line[1] == ':' && history.find(to_lower(line.substr(3))) != std::string::npos) {
        return json{{"answer", std::string(1, line[0])}}.dump();
      }
    }
    return json{{"answer", "A"}}.dump();
  });
  return m;
}

inline void add(llm::Gateway& g, const std::string& id, std::shared_ptr<llm::Backend> b) {
  llm::EndpointConfig c;
  c.id = id;
  c.kind = "mock";
  g.add_endpoint(c, std::move(b));
}

inline const ExpertEndpoints kExpert{"expert", "expert", "expert"};

inline EpisodeParams params() {
  EpisodeParams p;
  p.patient_endpoint = "expert";
  return p;
}


inline std::vector<ScenarioMCQ> four_scenarios() {
  // The last one never surfaces its finding, so the decision defaults to A
  // while the answer is C.
  return {scenario("s1", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B'),
          scenario("s2", "scan", "a kidney stone", {"a kidney stone", "appendicitis", "gastritis", "a hernia"}, 'A'),
          scenario("s3", "culture", "strep throat", {"a cold", "influenza", "tonsil cancer", "strep throat"}, 'D'),
          scenario("s4", "xray", "a fracture", {"a sprain", "gout", "a fracture", "arthritis"}, 'C')};
}

}  // namespace oracle
