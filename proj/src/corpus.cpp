#include "alfa/corpus.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa::corpus {

namespace {

std::string role_name(AuthorRole r) { return r == AuthorRole::patient ? "patient" : "responder"; }

AuthorRole role_from(const std::string& s) {
  if (s == "patient") return AuthorRole::patient;
  if (s == "responder") return AuthorRole::responder;
  throw ValidationError("unknown author_role: " + s);
}

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ValidationError(std::string("missing or non-string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

std::optional<std::string> optional_text(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  std::string s = trim(j[key].get<std::string>());
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

json ThreadRecord::to_json() const {
  json turns_j = json::array();
  for (const auto& t : turns) {
    turns_j.push_back({{"author_role", role_name(t.author_role)},
                       {"author_expert_verified", t.author_expert_verified},
                       {"text", t.text}});
  }
  json j = {{"thread_id", thread_id},
            {"post_id", post_id},
            {"title", title},
            {"post_body", post_body},
            {"turns", turns_j}};
  if (created_at) j["created_at"] = *created_at;
  return j;
}

ThreadRecord ThreadRecord::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  ThreadRecord t;
  t.thread_id = required_string(j, "thread_id");
  t.post_id = required_string(j, "post_id");
  t.title = required_string(j, "title");
  // Older exports call the body "body".
  t.post_body = j.contains("post_body") ? required_string(j, "post_body") : required_string(j, "body");
  if (t.thread_id.empty()) throw ValidationError("empty thread_id");
  if (t.post_id.empty()) throw ValidationError("empty post_id");
  if (trim(t.post_body).empty()) throw ValidationError("empty post_body in thread " + t.thread_id);
  // Titles are a single line in rendered contexts.
  std::replace(t.title.begin(), t.title.end(), '\n', ' ');
  if (!j.contains("turns") || !j["turns"].is_array() || j["turns"].empty()) {
    throw ValidationError("thread " + t.thread_id + " has no turns");
  }
  for (const auto& tj : j["turns"]) {
    Turn turn;
    turn.author_role = role_from(required_string(tj, "author_role"));
    turn.author_expert_verified = tj.value("author_expert_verified", false);
    turn.text = required_string(tj, "text");
    t.turns.push_back(std::move(turn));
  }
  if (j.contains("created_at") && j["created_at"].is_string()) t.created_at = j["created_at"];
  return t;
}

json QuestionRecord::to_json() const {
  return {{"question_id", question_id},
          {"thread_id", thread_id},
          {"post_id", post_id},
          {"context", context},
          {"question_text", question_text},
          {"author_expert_verified", author_expert_verified},
          {"turn_index", turn_index}};
}

QuestionRecord QuestionRecord::from_json(const json& j) {
  QuestionRecord q;
  q.question_id = j.at("question_id");
  q.thread_id = j.at("thread_id");
  q.post_id = j.at("post_id");
  q.context = j.at("context");
  q.question_text = j.at("question_text");
  q.author_expert_verified = j.value("author_expert_verified", false);
  q.turn_index = j.value("turn_index", std::size_t{0});
  if (trim(q.question_text).empty()) throw ValidationError("empty question_text in " + q.question_id);
  return q;
}

json ParsedThread::to_json() const {
  json qs = json::array();
  for (const auto& q : atomic_questions) qs.push_back(q.to_json());
  return {{"thread_id", thread_id},
          {"atomic_questions", qs},
          {"conclusion", conclusion ? json(*conclusion) : json(nullptr)},
          {"positive_feedback", positive_feedback},
          {"final_diagnosis", final_diagnosis ? json(*final_diagnosis) : json(nullptr)}};
}

ParsedThread ParsedThread::from_json(const json& j) {
  ParsedThread p;
  p.thread_id = j.at("thread_id");
  for (const auto& q : j.at("atomic_questions")) p.atomic_questions.push_back(QuestionRecord::from_json(q));
  p.conclusion = optional_text(j, "conclusion");
  p.positive_feedback = j.value("positive_feedback", false);
  p.final_diagnosis = optional_text(j, "final_diagnosis");
  return p;
}

std::string QualityGroup::label() const {
  std::string s;
  s += expert_author ? "expert" : "nonexpert";
  s += has_conclusion ? "+conclusion" : "-conclusion";
  s += has_positive_feedback ? "+feedback" : "-feedback";
  return s;
}

json SplitAssignment::to_json() const {
  return {{"seed", seed}, {"train", train}, {"dev", dev}, {"test", test}};
}

SplitAssignment SplitAssignment::from_json(const json& j) {
  SplitAssignment s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train = j.at("train").get<std::vector<std::string>>();
  s.dev = j.at("dev").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

bool has_followup_question(const ThreadRecord& t) {
  for (const auto& turn : t.turns) {
    if (turn.author_role != AuthorRole::responder) continue;
    // First responder comment only.
    const auto& s = turn.text;
    for (std::size_t i = 1; i < s.size() + 1; ++i) {
      if (s[i - 1] == '?' && (i == s.size() || std::isspace(static_cast<unsigned char>(s[i])) ||
                              s[i] == '"' || s[i] == ')' || s[i] == '\'')) {
        return true;
      }
    }
    return false;
  }
  return false;
}

IngestResult ingest_threads(std::string_view text, const IngestOptions& opts) {
  IngestResult result;
  std::unordered_map<std::string, std::size_t> seen;  // thread_id -> line
  std::set<std::string> posts;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    ThreadRecord rec;
    try {
      json j = json::parse(line);
      rec = ThreadRecord::from_json(j);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line);
    } catch (const ValidationError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line);
    }
    ++result.records_read;
    auto [it, inserted] = seen.emplace(rec.thread_id, line_no);
    if (!inserted) {
      throw ValidationError("duplicate thread_id '" + rec.thread_id + "' at lines " +
                            std::to_string(it->second) + " and " + std::to_string(line_no));
    }
    if (opts.require_followup_question && !has_followup_question(rec)) {
      ++result.skipped_no_question;
      continue;
    }
    posts.insert(rec.post_id);
    result.threads.push_back(std::move(rec));
  }
  result.unique_posts = posts.size();
  return result;
}

IngestResult ingest_threads_file(const std::filesystem::path& path, const IngestOptions& opts) {
  return ingest_threads(read_file(path), opts);
}

std::string build_context(const ThreadRecord& t, std::size_t turn_index) {
  std::string ctx = t.title + "\n" + t.post_body;
  for (std::size_t i = 0; i < turn_index && i < t.turns.size(); ++i) {
    ctx += '\n';
    ctx += t.turns[i].author_role == AuthorRole::patient ? "Patient: " : "Doctor: ";
    ctx += t.turns[i].text;
  }
  return ctx;
}

std::string render_thread(const ThreadRecord& t) {
  std::string out = "Title: " + t.title + "\nPost: " + t.post_body + "\n";
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    out += "Turn " + std::to_string(i + 1) + " (" +
           (t.turns[i].author_role == AuthorRole::patient ? "Patient" : "Doctor") + "): " +
           t.turns[i].text + "\n";
  }
  return out;
}

ParsedThread decompose_thread(const ThreadRecord& thread, llm::Gateway& gateway,
                              const DecomposeOptions& opts) {
  bool any_question = std::any_of(thread.turns.begin(), thread.turns.end(), [](const Turn& t) {
    return t.author_role == AuthorRole::responder && t.text.find('?') != std::string::npos;
  });
  if (!any_question) {
    throw ValidationError("thread " + thread.thread_id + " has no responder turn with a question");
  }
  auto req = llm::make_request(prompts::render_prompt("decompose_system", {}),
                               prompts::render_prompt("decompose_user", {{"thread", render_thread(thread)}}),
                               opts.temperature, opts.max_tokens);
  auto resp = gateway.cached_complete(opts.endpoint, req);

  json parsed;
  try {
    parsed = extract_json_object(resp.text);
  } catch (const ParseError&) {
    throw ParseError("decomposition of thread " + thread.thread_id + " is not JSON", resp.text);
  }
  ParsedThread out;
  out.thread_id = thread.thread_id;
  try {
    out.conclusion = optional_text(parsed, "conclusion");
    out.final_diagnosis = optional_text(parsed, "final_diagnosis");
    out.positive_feedback = parsed.value("positive_feedback", false);
    std::set<std::size_t> used_turns;
    for (const auto& tj : parsed.value("turns", json::array())) {
      auto turn_no = tj.at("turn").get<std::size_t>();
      if (turn_no < 1 || turn_no > thread.turns.size()) {
        throw ParseError("decomposition names turn " + std::to_string(turn_no) +
                             " outside the thread", resp.text);
      }
      std::size_t idx = turn_no - 1;
      const Turn& turn = thread.turns[idx];
      if (turn.author_role != AuthorRole::responder) continue;
      if (!used_turns.insert(idx).second) {
        throw ParseError("decomposition lists turn " + std::to_string(turn_no) + " twice", resp.text);
      }
      std::size_t k = 0;
      for (const auto& qj : tj.at("questions")) {
        std::string text = trim(qj.get<std::string>());
        if (text.empty()) continue;
        QuestionRecord q;
        q.question_id = thread.thread_id + "-t" + std::to_string(turn_no) + "-q" + std::to_string(++k);
        q.thread_id = thread.thread_id;
        q.post_id = thread.post_id;
        q.context = build_context(thread, idx);
        q.question_text = std::move(text);
        q.author_expert_verified = turn.author_expert_verified;
        q.turn_index = idx;
        out.atomic_questions.push_back(std::move(q));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("decomposition has unexpected shape: ") + e.what(), resp.text);
  }
  std::stable_sort(out.atomic_questions.begin(), out.atomic_questions.end(),
                   [](const QuestionRecord& a, const QuestionRecord& b) { return a.turn_index < b.turn_index; });
  return out;
}

QualityGroup assign_quality_group(const QuestionRecord& q, const ParsedThread& parent) {
  if (q.thread_id != parent.thread_id) {
    throw ValidationError("question " + q.question_id + " belongs to thread " + q.thread_id +
                          ", not " + parent.thread_id);
  }
  return {q.author_expert_verified, parent.conclusion.has_value(), parent.positive_feedback};
}

SplitAssignment stratified_split(const std::vector<GroupedQuestion>& questions, SplitSizes sizes,
                                 std::uint64_t seed) {
  std::vector<const GroupedQuestion*> sorted;
  sorted.reserve(questions.size());
  for (const auto& q : questions) sorted.push_back(&q);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return a->question.question_id < b->question.question_id;
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->question.question_id == sorted[i - 1]->question.question_id) {
      throw ValidationError("duplicate question_id " + sorted[i]->question.question_id);
    }
  }

  std::array<std::vector<const GroupedQuestion*>, kNumQualityGroups> pools;
  for (auto* q : sorted) pools[q->group.index()].push_back(q);
  for (int g = 0; g < kNumQualityGroups; ++g) {
    deterministic_shuffle(pools[g], seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(g) + 1);
  }

  enum SplitId { kTest = 0, kDev = 1, kTrain = 2 };
  const std::array<std::size_t, 3> wanted = {sizes.test, sizes.dev, sizes.train};
  const std::array<const char*, 3> names = {"test", "dev", "train"};
  std::unordered_map<std::string, int> post_owner;
  std::vector<char> used(sorted.size(), 0);
  std::unordered_map<const GroupedQuestion*, std::size_t> index_of;
  for (std::size_t i = 0; i < sorted.size(); ++i) index_of[sorted[i]] = i;

  std::array<std::vector<std::string>, 3> picked;
  for (int s : {kTest, kDev, kTrain}) {
    auto usable = [&](const GroupedQuestion* q) {
      if (used[index_of[q]]) return false;
      auto it = post_owner.find(q->question.post_id);
      return it == post_owner.end() || it->second == s;
    };
    std::array<std::size_t, kNumQualityGroups> available{};
    for (int g = 0; g < kNumQualityGroups; ++g) {
      if (s == kTest && !QualityGroup::from_index(g).has_conclusion) continue;
      available[g] = static_cast<std::size_t>(std::count_if(pools[g].begin(), pools[g].end(), usable));
    }
    // Round-robin one question at a time in group order: equal shares first,
    // then remainder and shortfall both flow to the next groups with stock.
    std::array<std::size_t, kNumQualityGroups> quota{};
    std::size_t remaining = wanted[s];
    while (remaining > 0) {
      bool progressed = false;
      for (int g = 0; g < kNumQualityGroups && remaining > 0; ++g) {
        if (quota[g] < available[g]) {
          ++quota[g];
          --remaining;
          progressed = true;
        }
      }
      if (!progressed) {
        std::string detail;
        for (int g = 0; g < kNumQualityGroups; ++g) {
          detail += "\n  " + QualityGroup::from_index(g).label() + ": " + std::to_string(available[g]);
        }
        throw ValidationError(std::string("infeasible split: ") + names[s] + " needs " +
                              std::to_string(wanted[s]) + " questions; available per group:" + detail);
      }
    }
    for (int g = 0; g < kNumQualityGroups; ++g) {
      std::size_t taken = 0;
      for (auto* q : pools[g]) {
        if (taken == quota[g]) break;
        if (!usable(q)) continue;
        used[index_of[q]] = 1;
        post_owner[q->question.post_id] = s;
        picked[s].push_back(q->question.question_id);
        ++taken;
      }
    }
  }

  SplitAssignment out;
  out.seed = seed;
  out.test = std::move(picked[kTest]);
  out.dev = std::move(picked[kDev]);
  out.train = std::move(picked[kTrain]);
  for (auto* v : {&out.train, &out.dev, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

std::map<std::string, std::array<std::size_t, kNumQualityGroups>> split_group_counts(
    const SplitAssignment& split, const std::vector<GroupedQuestion>& questions) {
  std::unordered_map<std::string, int> group_of;
  for (const auto& q : questions) group_of[q.question.question_id] = q.group.index();
  std::map<std::string, std::array<std::size_t, kNumQualityGroups>> out;
  auto count = [&](const std::string& name, const std::vector<std::string>& ids) {
    auto& c = out[name];
    c.fill(0);
    for (const auto& id : ids) {
      auto it = group_of.find(id);
      if (it != group_of.end()) ++c[it->second];
    }
  };
  count("train", split.train);
  count("dev", split.dev);
  count("test", split.test);
  return out;
}

}  // namespace alfa::corpus
