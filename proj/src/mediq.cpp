#include "alfa/mediq.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa::mediq {

void ScenarioMCQ::validate() const {
  if (scenario_id.empty()) throw ValidationError("scenario without id");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < options.size(); ++i) {
    std::string norm = to_lower(trim(options[i]));
    if (norm.empty()) throw ValidationError("scenario " + scenario_id + ": option " + kLabels[i] + " is empty");
    if (!seen.insert(norm).second) throw ValidationError("scenario " + scenario_id + ": duplicate options");
  }
  if (correct < 'A' || correct > 'D') {
    throw ValidationError("scenario " + scenario_id + ": correct answer must be one of A-D");
  }
}

const std::string& ScenarioMCQ::option(char label) const {
  if (label < 'A' || label > 'D') throw ValidationError(std::string("invalid option label ") + label);
  return options[static_cast<std::size_t>(label - 'A')];
}

std::string ScenarioMCQ::options_block() const {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    out += std::string(1, kLabels[i]) + ": " + options[i];
    if (i + 1 < options.size()) out += '\n';
  }
  return out;
}

json ScenarioMCQ::to_json() const {
  return {{"scenario_id", scenario_id},
          {"initial_info", initial_info},
          {"hidden_record", hidden_record},
          {"question", inquiry},
          {"optionA", options[0]},
          {"optionB", options[1]},
          {"optionC", options[2]},
          {"optionD", options[3]},
          {"correct_answer", std::string(1, correct)},
          {"shuffle_seed", shuffle_seed}};
}

ScenarioMCQ ScenarioMCQ::from_json(const json& j) {
  ScenarioMCQ s;
  s.scenario_id = j.at("scenario_id");
  s.initial_info = j.value("initial_info", "");
  s.hidden_record = j.value("hidden_record", "");
  s.inquiry = j.at("question");
  s.options = {j.at("optionA").get<std::string>(), j.at("optionB").get<std::string>(),
               j.at("optionC").get<std::string>(), j.at("optionD").get<std::string>()};
  auto label = normalize_label(j.at("correct_answer").get<std::string>());
  if (!label) throw ValidationError("scenario " + s.scenario_id + ": correct_answer must be one of A-D");
  s.correct = *label;
  s.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
  s.validate();
  return s;
}

std::optional<char> normalize_label(std::string_view raw) {
  std::string s = trim(raw);
  while (!s.empty() && (s.front() == '[' || s.front() == '(' || s.front() == '"')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ']' || s.back() == ')' || s.back() == '"' || s.back() == '.')) s.pop_back();
  s = trim(s);
  std::string lower = to_lower(s);
  if (lower.rfind("option ", 0) == 0) s = trim(s.substr(7));
  if (s.size() != 1) return std::nullopt;
  char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (c < 'A' || c > 'D') return std::nullopt;
  return c;
}

namespace {

// JSON object from the reply, with one reprompt on failure.
json complete_json(llm::Gateway& gateway, const std::string& endpoint, llm::CompletionRequest req) {
  auto resp = gateway.cached_complete(endpoint, req);
  try {
    return extract_json_object(resp.text);
  } catch (const ParseError&) {
    req.messages.push_back({llm::Role::assistant, resp.text});
    req.messages.push_back({llm::Role::user, prompts::render_prompt("json_reminder", {})});
    auto retry = gateway.cached_complete(endpoint, req);
    try {
      return extract_json_object(retry.text);
    } catch (const ParseError&) {
      throw ParseError("reply is not valid JSON after a reprompt", retry.text);
    }
  }
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (j[key].is_string()) return trim(j[key].get<std::string>());
  if (j[key].is_array() && !j[key].empty() && j[key][0].is_string()) return trim(j[key][0].get<std::string>());
  return trim(j[key].dump());
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& id) {
  std::string digest = sha256_hex(std::to_string(seed) + ":" + id);
  return std::stoull(digest.substr(0, 15), nullptr, 16);
}

}  // namespace

void shuffle_options(ScenarioMCQ& s, std::uint64_t seed) {
  std::vector<std::size_t> perm = {0, 1, 2, 3};
  deterministic_shuffle(perm, seed);
  std::array<std::string, 4> shuffled;
  char correct = s.correct;
  for (std::size_t pos = 0; pos < 4; ++pos) {
    shuffled[pos] = s.options[perm[pos]];
    if (perm[pos] == static_cast<std::size_t>(s.correct - 'A')) correct = kLabels[pos];
  }
  s.options = std::move(shuffled);
  s.correct = correct;
  s.shuffle_seed = seed;
}

ScenarioMCQ build_mcq_task(const corpus::ThreadRecord& thread, const corpus::ParsedThread& parsed,
                           llm::Gateway& gateway, const McqBuildOptions& opts) {
  if (parsed.thread_id != thread.thread_id) throw ValidationError("parsed thread does not match record");
  if (!parsed.conclusion) {
    throw ValidationError("thread " + thread.thread_id + " has no conclusion; cannot build an MCQ task");
  }
  ScenarioMCQ s;
  s.scenario_id = thread.thread_id;
  s.hidden_record = corpus::render_thread(thread);

  auto info = gateway.cached_complete(
      opts.endpoint, llm::make_request("", prompts::render_prompt("mcq_initial_info", {{"record", s.hidden_record}}),
                                       opts.temperature, opts.max_tokens));
  s.initial_info = trim(info.text);
  if (s.initial_info.empty()) throw ValidationError("empty initial information for " + s.scenario_id);

  json inquiry = complete_json(
      gateway, opts.endpoint,
      llm::make_request("", prompts::render_prompt("mcq_inquiry", {{"record", s.hidden_record}}), opts.temperature,
                        opts.max_tokens));
  std::string inquiry_text = string_field(inquiry, "inquiry");
  std::string conclusion = string_field(inquiry, "conclusion");
  if (inquiry_text.empty()) throw ValidationError("no inquiry extracted for " + s.scenario_id);
  if (conclusion.empty()) conclusion = *parsed.conclusion;

  json mcq = complete_json(
      gateway, opts.endpoint,
      llm::make_request(prompts::render_prompt("mcq_system", {}),
                        prompts::render_prompt("mcq_user", {{"record", s.hidden_record},
                                                            {"inquiry", inquiry_text},
                                                            {"conclusion", conclusion},
                                                            {"final_diagnosis", parsed.final_diagnosis.value_or("N/A")}}),
                        opts.temperature, opts.max_tokens));
  s.inquiry = string_field(mcq, "question");
  if (s.inquiry.empty()) s.inquiry = inquiry_text;
  s.options = {string_field(mcq, "optionA"), string_field(mcq, "optionB"), string_field(mcq, "optionC"),
               string_field(mcq, "optionD")};
  auto label = normalize_label(string_field(mcq, "correct_answer"));
  if (!label) {
    throw ValidationError("scenario " + s.scenario_id + ": generated correct_answer '" +
                          string_field(mcq, "correct_answer") + "' is not one of A-D");
  }
  s.correct = *label;
  s.validate();
  shuffle_options(s, mix_seed(opts.seed, s.scenario_id));
  return s;
}

std::string render_history(const std::vector<QA>& history) {
  if (history.empty()) return "(no questions asked yet)";
  std::string out;
  for (const auto& qa : history) {
    out += "Doctor: " + qa.question + "\nPatient: " + qa.answer + "\n";
  }
  out.pop_back();
  return out;
}

std::string patient_answer(const ScenarioMCQ& scenario, const std::string& question, llm::Gateway& gateway,
                           const EpisodeParams& params) {
  if (trim(question).empty()) throw ValidationError("patient was asked an empty question");
  auto req = llm::make_request(prompts::render_prompt("patient_system", {{"record", scenario.hidden_record}}),
                               prompts::render_prompt("patient_user", {{"question", question}}),
                               params.temperature, params.max_tokens);
  std::string text = trim(gateway.cached_complete(params.patient_endpoint, req).text);
  if (text.empty() || to_lower(text).find("cannot answer") != std::string::npos) {
    return std::string(prompts::kCannotAnswer);
  }
  return text;
}

namespace {

std::optional<std::pair<int, std::string>> parse_confidence(const std::string& text) {
  try {
    json j = extract_json_object(text);
    if (j.contains("confidence")) {
      int c = 0;
      if (j["confidence"].is_number_integer()) {
        c = j["confidence"].get<int>();
      } else if (j["confidence"].is_string()) {
        c = std::stoi(j["confidence"].get<std::string>());
      }
      if (c >= 1 && c <= 5) return std::make_pair(c, j.value("rationale", std::string()));
    }
  } catch (const std::exception&) {
  }
  static const std::regex re(R"((?:confidence|score)[^0-9]{0,20}([1-5])\b)", std::regex::icase);
  std::smatch m;
  if (std::regex_search(text, m, re)) return std::make_pair(std::stoi(m[1]), text);
  return std::nullopt;
}

}  // namespace

AbstainDecision abstain_decision(const ScenarioMCQ& scenario, const EpisodeState& state, llm::Gateway& gateway,
                                 const std::string& endpoint, const EpisodeParams& params) {
  if (state.turn >= params.max_turns) {
    return {Action::answer, 1, "maximum interaction length reached", true};
  }
  auto req = llm::make_request(prompts::render_prompt("expert_system", {}),
                               prompts::render_prompt("abstain_user", {{"initial_info", scenario.initial_info},
                                                                       {"history", render_history(state.qa_history)},
                                                                       {"inquiry", scenario.inquiry},
                                                                       {"options", scenario.options_block()}}),
                               params.temperature, params.max_tokens);
  auto resp = gateway.cached_complete(endpoint, req);
  auto parsed = parse_confidence(resp.text);
  if (!parsed) {
    req.messages.push_back({llm::Role::assistant, resp.text});
    req.messages.push_back({llm::Role::user, prompts::render_prompt("json_reminder", {})});
    parsed = parse_confidence(gateway.cached_complete(endpoint, req).text);
  }
  AbstainDecision d;
  if (!parsed) {
    d.parsed = false;
    d.confidence = 1;
    d.rationale = resp.text;
  } else {
    d.confidence = parsed->first;
    d.rationale = parsed->second;
  }
  d.action = d.confidence >= params.threshold ? Action::answer : Action::ask;
  return d;
}

namespace {

std::optional<char> parse_decision(const std::string& text) {
  try {
    json j = extract_json_object(text);
    for (const char* key : {"answer", "choice", "option"}) {
      if (j.contains(key) && j[key].is_string()) {
        if (auto l = normalize_label(j[key].get<std::string>())) return l;
      }
    }
  } catch (const std::exception&) {
  }
  return normalize_label(text);
}

}  // namespace

EpisodeResult run_episode(const ScenarioMCQ& scenario, const ExpertEndpoints& expert, const EpisodeParams& params,
                          llm::Gateway& gateway) {
  scenario.validate();
  EpisodeState state;
  state.scenario_id = scenario.scenario_id;
  EpisodeResult result;
  result.scenario_id = scenario.scenario_id;

  while (true) {
    if (state.turn >= params.max_turns) {
      result.transcript.push_back({{"event", "forced_answer"}, {"turn", state.turn}});
      break;
    }
    auto decision = abstain_decision(scenario, state, gateway, expert.abstention_endpoint, params);
    result.abstention_trace.push_back(decision.confidence);
    result.transcript.push_back({{"event", "abstain"},
                                 {"turn", state.turn},
                                 {"confidence", decision.confidence},
                                 {"rationale", decision.rationale},
                                 {"parsed", decision.parsed},
                                 {"action", decision.action == Action::ask ? "ask" : "answer"}});
    if (decision.action == Action::answer) break;

    auto qreq = llm::make_request(prompts::render_prompt("expert_system", {}),
                                  prompts::render_prompt("expert_question_user",
                                                         {{"initial_info", scenario.initial_info},
                                                          {"history", render_history(state.qa_history)},
                                                          {"inquiry", scenario.inquiry}}),
                                  params.temperature, params.max_tokens);
    std::string question = trim(gateway.cached_complete(expert.question_endpoint, qreq).text);
    std::string answer = question.empty() ? std::string(prompts::kCannotAnswer)
                                          : patient_answer(scenario, question, gateway, params);
    state.qa_history.push_back({question, answer});
    state.turn = static_cast<int>(state.qa_history.size());
    result.transcript.push_back({{"event", "ask"}, {"turn", state.turn}, {"question", question}, {"answer", answer}});
  }

  auto dreq = llm::make_request(prompts::render_prompt("expert_system", {}),
                                prompts::render_prompt("decision_user", {{"initial_info", scenario.initial_info},
                                                                         {"history", render_history(state.qa_history)},
                                                                         {"inquiry", scenario.inquiry},
                                                                         {"options", scenario.options_block()}}),
                                params.temperature, params.max_tokens);
  auto dresp = gateway.cached_complete(expert.decision_endpoint, dreq);
  auto label = parse_decision(dresp.text);
  std::string raw = dresp.text;
  if (!label) {
    dreq.messages.push_back({llm::Role::assistant, dresp.text});
    dreq.messages.push_back({llm::Role::user, prompts::render_prompt("json_reminder", {})});
    raw = gateway.cached_complete(expert.decision_endpoint, dreq).text;
    label = parse_decision(raw);
  }
  result.turns_used = state.turn;
  if (label) {
    result.chosen = *label;
    result.correct = *label == scenario.correct;
  } else {
    result.flagged = true;
    result.correct = false;
  }
  result.transcript.push_back({{"event", "decision"},
                               {"raw", raw},
                               {"chosen", std::string(1, result.chosen)},
                               {"correct", result.correct}});
  return result;
}

json EpisodeResult::to_json() const {
  return {{"scenario_id", scenario_id},
          {"chosen", std::string(1, chosen)},
          {"correct", correct},
          {"turns_used", turns_used},
          {"abstention_trace", abstention_trace},
          {"transcript", transcript},
          {"flagged", flagged}};
}

EpisodeResult EpisodeResult::from_json(const json& j) {
  EpisodeResult r;
  r.scenario_id = j.at("scenario_id");
  auto chosen = j.at("chosen").get<std::string>();
  r.chosen = chosen.empty() ? '?' : chosen[0];
  r.correct = j.at("correct");
  r.turns_used = j.at("turns_used");
  r.abstention_trace = j.at("abstention_trace").get<std::vector<int>>();
  r.transcript = j.value("transcript", json::array());
  r.flagged = j.value("flagged", false);
  return r;
}

json BenchmarkResult::summary() const {
  json fails = json::array();
  for (const auto& [id, err] : failures) fails.push_back({{"scenario_id", id}, {"error", err}});
  json per = json::array();
  for (const auto& r : results) {
    per.push_back({{"scenario_id", r.scenario_id},
                   {"chosen", std::string(1, r.chosen)},
                   {"correct", r.correct},
                   {"turns_used", r.turns_used},
                   {"flagged", r.flagged}});
  }
  return {{"accuracy", accuracy},
          {"correct", correct},
          {"completed", completed},
          {"excluded", excluded},
          {"failures", fails},
          {"results", per}};
}

namespace {

std::string safe_name(const std::string& id) {
  std::string out;
  for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
  return out + "-" + sha256_hex(id).substr(0, 8);
}

}  // namespace

BenchmarkResult run_benchmark(const std::vector<ScenarioMCQ>& scenarios, const ExpertEndpoints& expert,
                              const EpisodeParams& params, llm::Gateway& gateway,
                              const std::optional<std::filesystem::path>& out_dir, std::size_t workers) {
  if (scenarios.empty()) throw ValidationError("benchmark needs at least one scenario");
  std::vector<std::optional<EpisodeResult>> results(scenarios.size());
  std::vector<std::string> errors(scenarios.size());
  parallel_for(scenarios.size(), workers, [&](std::size_t i) {
    const auto& s = scenarios[i];
    std::optional<std::filesystem::path> file;
    if (out_dir) {
      file = *out_dir / "episodes" / (safe_name(s.scenario_id) + ".json");
      std::error_code ec;
      if (std::filesystem::exists(*file, ec)) {
        try {
          results[i] = EpisodeResult::from_json(json::parse(read_file(*file)));
          if (results[i]->scenario_id == s.scenario_id) return;
        } catch (const std::exception&) {
        }
        results[i].reset();
      }
    }
    try {
      results[i] = run_episode(s, expert, params, gateway);
      if (file) write_file_atomic(*file, results[i]->to_json().dump(2));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  BenchmarkResult out;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (!results[i]) {
      out.failures.emplace_back(scenarios[i].scenario_id, errors[i]);
      ++out.excluded;
      continue;
    }
    ++out.completed;
    if (results[i]->correct) ++out.correct;
    out.results.push_back(std::move(*results[i]));
  }
  out.accuracy = out.completed == 0 ? 0.0 : 100.0 * static_cast<double>(out.correct) / static_cast<double>(out.completed);
  if (out_dir) write_file_atomic(*out_dir / "summary.json", out.summary().dump(2));
  return out;
}

std::vector<ScenarioMCQ> read_scenarios(const std::filesystem::path& path) {
  std::vector<ScenarioMCQ> out;
  for (const auto& j : read_jsonl(path)) out.push_back(ScenarioMCQ::from_json(j));
  return out;
}

void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioMCQ>& scenarios) {
  std::vector<json> rows;
  for (const auto& s : scenarios) rows.push_back(s.to_json());
  write_file_atomic(path, to_jsonl(rows));
}

}  // namespace alfa::mediq
