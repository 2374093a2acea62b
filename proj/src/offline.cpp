#include "alfa/offline.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "alfa/attribute.hpp"
#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa::offline {
namespace {

constexpr std::string_view kEnhancePrefix = "To help narrow this down, ";
constexpr std::string_view kCorruptPrefix = "Maybe ";
constexpr std::string_view kCorruptSuffix = " or something else?";

std::string lower_first(std::string s) {
  if (s.size() > 1 && std::isupper(static_cast<unsigned char>(s[0])) &&
      !std::isupper(static_cast<unsigned char>(s[1]))) {
    s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  }
  return s;
}

// Text between `start` marker and the next `end` marker (or end of input).
std::string section(const std::string& text, std::string_view start, std::string_view end) {
  auto a = text.find(start);
  if (a == std::string::npos) return {};
  a += start.size();
  auto b = end.empty() ? std::string::npos : text.find(end, a);
  return trim(text.substr(a, b == std::string::npos ? std::string::npos : b - a));
}

std::vector<std::string> sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur.push_back(c);
    if (c == '.' || c == '?' || c == '!' || c == '\n') {
      auto t = trim(cur);
      if (t.size() > 1) out.push_back(t);
      cur.clear();
    }
  }
  auto t = trim(cur);
  if (t.size() > 1) out.push_back(t);
  return out;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "the",  "is",   "are",  "was",  "were", "do",    "does", "did",  "you",
      "your", "i",    "my",   "me",   "have", "has",  "had",  "any",   "and",  "or",   "of",
      "to",   "in",   "on",   "for",  "with", "it",   "this", "that",  "be",   "been", "can",
      "could", "would", "how", "what", "when", "where", "why", "which", "who", "there", "at",
      "as",   "by",   "about", "from", "if",  "not",  "no",   "yes",   "so",   "but",  "am",
      "tell", "more", "help", "narrow", "down", "maybe", "something", "else", "patient"};
  return words;
}

std::set<std::string> content_words(const std::string& text) {
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() > 2 && !stopwords().count(cur)) out.insert(cur);
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& w : a) n += b.count(w);
  return n;
}

double unit_hash(const std::string& s) {
  return static_cast<double>(std::stoull(sha256_hex(s).substr(0, 13), nullptr, 16)) / static_cast<double>(1ULL << 52);
}

struct RecordView {
  std::string title;
  std::string post;
  std::vector<std::pair<bool, std::string>> turns;  // (is_doctor, text)
};

// Parses the numbered rendering produced by corpus::render_thread.
RecordView parse_record(const std::string& record) {
  RecordView v;
  static const std::regex turn_re(R"(^Turn (\d+) \((Patient|Doctor)\): (.*)$)");
  for (const auto& line : split(record, '\n')) {
    std::smatch m;
    if (line.rfind("Title: ", 0) == 0) {
      v.title = line.substr(7);
    } else if (line.rfind("Post: ", 0) == 0) {
      v.post = line.substr(6);
    } else if (std::regex_match(line, m, turn_re)) {
      v.turns.emplace_back(m[2] == "Doctor", m[3]);
    } else if (!v.turns.empty()) {
      v.turns.back().second += "\n" + line;
    } else if (!v.post.empty()) {
      v.post += "\n" + line;
    }
  }
  return v;
}

std::optional<std::string> record_conclusion(const RecordView& r) {
  for (auto it = r.turns.rbegin(); it != r.turns.rend(); ++it) {
    if (!it->first) continue;
    std::vector<std::string> statements;
    for (const auto& s : sentences(it->second)) {
      if (s.back() != '?') statements.push_back(s);
    }
    if (statements.empty()) return std::nullopt;
    return statements.back();
  }
  return std::nullopt;
}

std::optional<std::string> record_diagnosis(const RecordView& r) {
  static const std::regex re(R"((?:diagnosis|diagnosed with|likely|consistent with)\s+(?:is\s+|of\s+)?([^.?!]+))",
                             std::regex::icase);
  for (auto it = r.turns.rbegin(); it != r.turns.rend(); ++it) {
    if (!it->first) continue;
    std::smatch m;
    if (std::regex_search(it->second, m, re)) return trim(m[1].str());
  }
  return std::nullopt;
}

std::string record_inquiry(const RecordView& r) {
  for (const auto& s : sentences(r.post)) {
    if (s.back() == '?') return s;
  }
  return "What is the most likely explanation for my symptoms?";
}

// ------------------------------------------------------------ answers

std::string answer_perturb(const std::string& user) {
  std::string question = section(user, "***CLINICIAN RESPONSE***\n", "\n\n***INSTRUCTION***");
  static const std::regex dir_re(R"(Rewrite the clinician response so that it is (.*) for the patient, while)");
  std::smatch m;
  std::string phrase;
  if (std::regex_search(user, m, dir_re)) phrase = m[1];
  bool corrupt = false;
  for (Attribute a : {Attribute::clarity, Attribute::focus, Attribute::answerability, Attribute::medical_accuracy,
                      Attribute::diagnostic_relevance, Attribute::avoid_ddx_bias, Attribute::coarse}) {
    if (rubric(a).corrupt_phrase == phrase) corrupt = true;
  }
  return corrupt ? corrupt_text(question) : enhance_text(question);
}

std::string answer_judge(const std::string& user, double noise) {
  static const std::regex q_re(R"(- \*\*Question ([A-Z]):\*\* ([^\n]*))");
  std::vector<std::pair<char, std::string>> cands;
  for (auto it = std::sregex_iterator(user.begin(), user.end(), q_re); it != std::sregex_iterator(); ++it) {
    cands.emplace_back((*it)[1].str()[0], (*it)[2].str());
  }
  std::string dims = section(user, "***EVALUATION DIMENSIONS***\n", "\n***SUPPLEMENTARY");
  std::string context = section(user, "***PREVIOUS MEDICAL INTERACTION***\n", "\n***MEDICAL AI QUESTIONS");
  json out = json::object();
  for (const auto& line : split(dims, '\n')) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string dim = trim(line.substr(0, colon));
    auto ranked = cands;
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      int sa = quality_score(a.second), sb = quality_score(b.second);
      if (sa != sb) return sa > sb;
      if (a.second != b.second) return a.second < b.second;
      return a.first < b.first;
    });
    // Noise swaps neighbouring ranks, keyed on content so that every
    // presentation order receives the same ranking.
    if (noise > 0.0) {
      for (std::size_t i = 0; i + 1 < ranked.size(); ++i) {
        auto lo = std::min(ranked[i].second, ranked[i + 1].second);
        auto hi = std::max(ranked[i].second, ranked[i + 1].second);
        if (unit_hash(dim + "\x1f" + context + "\x1f" + lo + "\x1f" + hi) < noise) {
          std::swap(ranked[i], ranked[i + 1]);
          ++i;
        }
      }
    }
    std::string ranking;
    for (const auto& c : ranked) ranking += (ranking.empty() ? "" : " > ") + std::string(1, c.first);
    out[dim] = {{"ranking", ranking}, {"reasoning", "Ranked by directness and precision of the question."}};
  }
  return out.dump();
}

std::string answer_decompose(const std::string& user) {
  RecordView r = parse_record(section(user, "***THREAD***\n", "\n\n***TASK***"));
  json turns = json::array();
  bool feedback = false;
  for (std::size_t i = 0; i < r.turns.size(); ++i) {
    const auto& [doctor, text] = r.turns[i];
    if (!doctor) {
      if (to_lower(text).find("thank") != std::string::npos) feedback = true;
      continue;
    }
    json qs = json::array();
    for (const auto& s : sentences(text)) {
      if (s.back() == '?') qs.push_back(s);
    }
    if (!qs.empty()) turns.push_back({{"turn", i + 1}, {"questions", qs}});
  }
  auto conclusion = record_conclusion(r);
  auto dx = record_diagnosis(r);
  return json{{"turns", turns},
              {"conclusion", conclusion ? json(*conclusion) : json(nullptr)},
              {"final_diagnosis", dx ? json(*dx) : json(nullptr)},
              {"positive_feedback", feedback}}
      .dump();
}

std::string answer_initial_info(const std::string& user) {
  RecordView r = parse_record(section(user, "***PATIENT RECORD***\n", "\n\nExtract"));
  auto s = sentences(r.post);
  std::string first = s.empty() ? r.title : s.front();
  return "The patient reports: " + first;
}

std::string answer_inquiry(const std::string& user) {
  RecordView r = parse_record(section(user, "***PATIENT RECORD***\n", "\n\nExtract"));
  auto c = record_conclusion(r);
  return json{{"inquiry", record_inquiry(r)}, {"conclusion", c ? *c : std::string("No conclusion was reached.")}}.dump();
}

std::string answer_mcq(const std::string& user) {
  std::string inquiry = section(user, "***PATIENT INQUIRY***\n", "\n\n***PARSED");
  std::string conclusion = section(user, "Conclusion: ", "\n");
  std::vector<std::string> distractors = {"It is most likely a harmless viral illness that needs no follow-up.",
                                          "It is a side effect of a recently started medication.",
                                          "It is caused by a musculoskeletal strain.",
                                          "It requires immediate surgery."};
  std::array<std::string, 4> opts;
  opts[0] = conclusion;
  std::size_t k = 1;
  for (const auto& d : distractors) {
    if (k == 4) break;
    if (to_lower(d) != to_lower(conclusion)) opts[k++] = d;
  }
  return json{{"question", inquiry},  {"optionA", opts[0]}, {"optionB", opts[1]},
              {"optionC", opts[2]},   {"optionD", opts[3]}, {"correct_answer", "A"}}
      .dump();
}

std::string answer_patient(const std::string& system, const std::string& question) {
  RecordView r = parse_record(section(system, "***PATIENT RECORD***\n", ""));
  auto q = content_words(question);
  std::string best;
  std::size_t best_score = 0;
  auto consider = [&](const std::string& text) {
    for (const auto& s : sentences(text)) {
      if (s.back() == '?') continue;
      auto sc = overlap(q, content_words(s));
      if (sc > best_score) {
        best_score = sc;
        best = s;
      }
    }
  };
  consider(r.post);
  for (const auto& [doctor, text] : r.turns) {
    if (!doctor) consider(text);
  }
  if (best_score == 0) return std::string(prompts::kCannotAnswer);
  return best;
}

int informative_answers(const std::string& history) {
  int n = 0;
  for (const auto& line : split(history, '\n')) {
    if (line.rfind("Patient: ", 0) == 0 && line.find("cannot answer") == std::string::npos) ++n;
  }
  return n;
}

std::string answer_abstain(const std::string& user, int step) {
  std::string history = section(user, "***CONVERSATION SO FAR***\n", "\n\n***QUESTION TO ANSWER***");
  int conf = std::min(5, 2 + step * informative_answers(history));
  return json{{"rationale", "Confidence grows with each informative answer."}, {"confidence", conf}}.dump();
}

const std::vector<std::string>& stock_questions() {
  static const std::vector<std::string> qs = {
      "How long have you had these symptoms?",
      "Do you have any other symptoms such as fever or pain?",
      "Have you taken any medication for this?",
      "Do you have any past medical history or chronic conditions?",
      "Has anything made the symptoms better or worse?",
      "Have you had any tests or examinations done?",
  };
  return qs;
}

std::string answer_expert_question(const std::string& user) {
  std::string history = section(user, "***CONVERSATION SO FAR***\n", "\n\n***QUESTION TO ANSWER***");
  std::size_t asked = 0;
  for (const auto& line : split(history, '\n')) asked += line.rfind("Doctor: ", 0) == 0;
  return stock_questions()[asked % stock_questions().size()];
}

std::string answer_decision(const std::string& user) {
  std::string info = section(user, "***INITIAL INFORMATION***\n", "\n\n***CONVERSATION SO FAR***");
  std::string history = section(user, "***CONVERSATION SO FAR***\n", "\n\n***QUESTION TO ANSWER***");
  auto known = content_words(info + "\n" + history);
  static const std::regex opt_re(R"(^([A-D]): (.*)$)");
  char best = 'A';
  std::size_t best_score = 0;
  for (const auto& line : split(section(user, "***QUESTION TO ANSWER***\n", "\n\nChoose"), '\n')) {
    std::smatch m;
    if (!std::regex_match(line, m, opt_re)) continue;
    auto sc = overlap(content_words(m[2]), known);
    if (sc > best_score) {
      best_score = sc;
      best = m[1].str()[0];
    }
  }
  return json{{"answer", std::string(1, best)}}.dump();
}

std::string answer_ask(const std::string& user, const std::string& style) {
  const auto& qs = stock_questions();
  std::string q = qs[static_cast<std::size_t>(unit_hash(user) * static_cast<double>(qs.size())) % qs.size()];
  return style == "polished" ? enhance_text(q) : q;
}

class PipelineBackend : public llm::Backend {
 public:
  explicit PipelineBackend(const json& options)
      : style_(options.value("style", "plain")),
        noise_(options.value("noise", 0.0)),
        step_(options.value("confidence_step", 1)) {
    if (style_ != "plain" && style_ != "polished") throw ConfigError("pipeline mock: unknown style " + style_);
    if (noise_ < 0.0 || noise_ > 1.0) throw ConfigError("pipeline mock: noise must be in [0, 1]");
  }

  llm::CompletionResponse send(const llm::CompletionRequest& req) override {
    llm::CompletionResponse resp;
    resp.text = answer(req);
    resp.finish_reason = llm::FinishReason::stop;
    return resp;
  }

 private:
  std::string answer(const llm::CompletionRequest& req) const {
    std::string system;
    for (const auto& m : req.messages) {
      if (m.role == llm::Role::system) system = m.content;
    }
    // The prompt that defines the task is the first user turn; later turns are reminders.
    std::string user;
    for (const auto& m : req.messages) {
      if (m.role == llm::Role::user) {
        user = m.content;
        break;
      }
    }
    auto has = [](const std::string& s, std::string_view marker) { return s.find(marker) != std::string::npos; };
    if (has(user, "***REWRITTEN RESPONSE***")) return answer_perturb(user);
    if (has(user, "***MEDICAL AI QUESTIONS TO PATIENT***")) return answer_judge(user, noise_);
    if (has(user, "***THREAD***")) return answer_decompose(user);
    if (has(user, "Extract the initial information")) return answer_initial_info(user);
    if (has(user, "\"inquiry\"") && has(user, "***PATIENT RECORD***")) return answer_inquiry(user);
    if (has(user, "\"correct_answer\"")) return answer_mcq(user);
    if (has(system, "You are a patient answering")) return answer_patient(system, user);
    if (has(user, "\"confidence\"")) return answer_abstain(user, step_);
    if (has(user, "***INITIAL INFORMATION***") && has(user, "Ask the patient exactly one follow-up question")) {
      return answer_expert_question(user);
    }
    if (has(user, "\"answer\"") && has(user, "***QUESTION TO ANSWER***")) return answer_decision(user);
    return answer_ask(user, style_);
  }

  std::string style_;
  double noise_;
  int step_;
};

}  // namespace

std::string enhance_text(const std::string& question) {
  std::string q = trim(question);
  if (q.rfind(kEnhancePrefix, 0) == 0) return q;
  if (q.rfind(kCorruptPrefix, 0) == 0) q = q.substr(kCorruptPrefix.size());
  return std::string(kEnhancePrefix) + lower_first(q);
}

std::string corrupt_text(const std::string& question) {
  std::string q = trim(question);
  while (!q.empty() && (q.back() == '?' || q.back() == '.')) q.pop_back();
  return std::string(kCorruptPrefix) + lower_first(q) + std::string(kCorruptSuffix);
}

int quality_score(const std::string& text) {
  if (text.rfind(kEnhancePrefix, 0) == 0) return 1;
  if (text.rfind(kCorruptPrefix, 0) == 0) return -1;
  return 0;
}

std::shared_ptr<llm::Backend> make_pipeline_backend(const json& options) {
  return std::make_shared<PipelineBackend>(options);
}

}  // namespace alfa::offline
