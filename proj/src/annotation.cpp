#include "alfa/annotation.hpp"

#include <algorithm>
#include <fstream>

#include <httplib.h>

#include "alfa/error.hpp"

namespace alfa::annotation {

namespace {

std::uint64_t task_seed(std::uint64_t seed, const std::string& id) {
  return std::stoull(sha256_hex(std::to_string(seed) + ":" + id).substr(0, 15), nullptr, 16);
}

std::string label_for(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

std::vector<json> read_if_exists(const std::filesystem::path& p) {
  std::error_code ec;
  if (!std::filesystem::exists(p, ec)) return {};
  return read_jsonl(p);
}

}  // namespace

std::vector<std::string> RankingTask::labels() const {
  std::vector<std::string> out;
  for (const auto& c : candidates) out.push_back(c.label);
  return out;
}

json RankingTask::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back({{"label", c.label}, {"text", c.text}});
  return {{"task_id", task_id},
          {"context", context},
          {"candidates", cands},
          {"source_map", source_map},
          {"shuffle_seed", shuffle_seed}};
}

RankingTask RankingTask::from_json(const json& j) {
  RankingTask t;
  t.task_id = j.at("task_id");
  t.context = j.at("context");
  for (const auto& c : j.at("candidates")) t.candidates.push_back({c.at("label"), c.at("text")});
  t.source_map = j.at("source_map").get<std::map<std::string, std::string>>();
  t.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
  return t;
}

json RankingTask::annotator_payload() const {
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back({{"label", c.label}, {"text", c.text}});
  return {{"task_id", task_id}, {"context", context}, {"candidates", cands}};
}

RankingTask make_ranking_task(const RankingSample& sample, std::uint64_t seed) {
  if (sample.sample_id.empty()) throw ValidationError("ranking sample without id");
  if (sample.candidates.size() < 2) throw ValidationError("ranking task " + sample.sample_id + " needs two candidates");
  if (sample.candidates.size() > 26) throw ValidationError("ranking task " + sample.sample_id + " has too many candidates");
  std::set<std::string> texts, ids;
  for (const auto& c : sample.candidates) {
    if (trim(c.text).empty()) throw ValidationError("ranking task " + sample.sample_id + ": empty candidate text");
    if (!texts.insert(trim(c.text)).second) {
      throw ValidationError("ranking task " + sample.sample_id + ": duplicate candidate text '" + c.text + "'");
    }
    if (!ids.insert(c.system_id).second) {
      throw ValidationError("ranking task " + sample.sample_id + ": duplicate system id " + c.system_id);
    }
  }
  RankingTask t;
  t.task_id = sample.sample_id;
  t.context = sample.context;
  t.shuffle_seed = task_seed(seed, sample.sample_id);
  auto order = sample.candidates;
  deterministic_shuffle(order, t.shuffle_seed);
  for (std::size_t i = 0; i < order.size(); ++i) {
    t.candidates.push_back({label_for(i), order[i].text});
    t.source_map[label_for(i)] = order[i].system_id;
  }
  return t;
}

json RankingSubmission::to_json() const {
  return {{"task_id", task_id}, {"annotator_id", annotator_id}, {"permutation", permutation},
          {"submitted_at", submitted_at}};
}

RankingSubmission RankingSubmission::from_json(const json& j) {
  return {j.at("task_id"), j.at("annotator_id"), j.at("permutation").get<std::vector<std::string>>(),
          j.value("submitted_at", "")};
}

void validate_permutation(const std::vector<std::string>& permutation, const std::vector<std::string>& labels) {
  std::set<std::string> valid(labels.begin(), labels.end());
  std::set<std::string> seen;
  for (const auto& l : permutation) {
    if (!valid.count(l)) throw ValidationError("unknown label '" + l + "' in ranking");
    if (!seen.insert(l).second) throw ValidationError("tie: label " + l + " appears more than once");
  }
  if (seen.size() != valid.size()) {
    std::vector<std::string> missing;
    for (const auto& l : labels) {
      if (!seen.count(l)) missing.push_back(l);
    }
    throw ValidationError("partial order: ranking omits " + join(missing, ", "));
  }
}

json ScreeningRecord::to_json() const {
  return {{"annotator_id", annotator_id}, {"answers", answers}, {"score", score}, {"threshold", threshold},
          {"passed", passed}};
}

ScreeningRecord ScreeningRecord::from_json(const json& j) {
  return {j.at("annotator_id"), j.at("answers").get<std::vector<std::string>>(), j.at("score"),
          j.value("threshold", 0), j.at("passed")};
}

ScreeningRecord screening_gate(const std::string& annotator_id, const std::vector<std::string>& answers,
                               const std::vector<std::string>& key, int threshold) {
  if (key.empty()) throw ValidationError("screening key is empty");
  if (answers.size() != key.size()) {
    throw ValidationError("screening expects " + std::to_string(key.size()) + " answers, got " +
                          std::to_string(answers.size()));
  }
  ScreeningRecord r{annotator_id, answers, 0, threshold, false};
  for (std::size_t i = 0; i < key.size(); ++i) {
    r.score += to_lower(trim(answers[i])) == to_lower(trim(key[i]));
  }
  r.passed = r.score >= threshold;
  return r;
}

json McqTask::to_json() const { return {{"task_id", task_id}, {"scenario", scenario.to_json()}}; }

McqTask McqTask::from_json(const json& j) {
  return {j.at("task_id"), mediq::ScenarioMCQ::from_json(j.at("scenario"))};
}

json McqTask::annotator_payload() const {
  json opts = json::object();
  for (std::size_t i = 0; i < 4; ++i) opts[std::string(1, mediq::kLabels[i])] = scenario.options[i];
  return {{"task_id", task_id},
          {"record", scenario.hidden_record},
          {"initial_info", scenario.initial_info},
          {"question", scenario.inquiry},
          {"options", opts},
          {"allowed", json::array({"A", "B", "C", "D", kNoneOfTheAbove})}};
}

json McqValidation::to_json() const {
  return {{"task_id", task_id},   {"annotator_id", annotator_id}, {"plausible", plausible},
          {"selected", selected}, {"alternative", alternative},   {"submitted_at", submitted_at}};
}

McqValidation McqValidation::from_json(const json& j) {
  return {j.at("task_id"), j.at("annotator_id"), j.value("plausible", true), j.at("selected"),
          j.value("alternative", ""), j.value("submitted_at", "")};
}

json Receipt::to_json() const {
  return {{"task_id", task_id}, {"annotator_id", annotator_id}, {"submitted_at", submitted_at}, {"replaced", replaced}};
}

std::size_t RankingBundle::submissions() const {
  std::size_t n = 0;
  for (const auto& it : items) n += it.rankings.size();
  return n;
}

stats::RankingSet RankingBundle::ranking_set() const {
  stats::RankingSet out;
  for (const auto& it : items) {
    if (it.rankings.empty()) continue;
    std::vector<std::vector<std::string>> per_rater;
    for (const auto& [_, r] : it.rankings) per_rater.push_back(r);
    out.push_back(std::move(per_rater));
  }
  return out;
}

json RankingBundle::to_json() const {
  json arr = json::array();
  for (const auto& it : items) {
    arr.push_back({{"task_id", it.task_id}, {"candidates", it.candidates}, {"rankings", it.rankings}});
  }
  return {{"items", arr}};
}

RankingBundle RankingBundle::from_json(const json& j) {
  RankingBundle b;
  for (const auto& it : j.at("items")) {
    b.items.push_back({it.at("task_id"), it.at("candidates").get<std::vector<std::string>>(),
                       it.at("rankings").get<std::map<std::string, std::vector<std::string>>>()});
  }
  return b;
}

// ------------------------------------------------------------ store

AnnotationStore::AnnotationStore(StoreOptions opts) : opts_(std::move(opts)) {
  if (opts_.annotator_cap == 0) throw ConfigError("annotator cap must be positive");
  std::filesystem::create_directories(opts_.dir);
  for (const auto& j : read_if_exists(opts_.dir / "ranking_tasks.jsonl")) {
    auto t = RankingTask::from_json(j);
    task_index_[t.task_id] = tasks_.size();
    tasks_.push_back(std::move(t));
  }
  for (const auto& j : read_if_exists(opts_.dir / "mcq_tasks.jsonl")) {
    auto t = McqTask::from_json(j);
    mcq_index_[t.task_id] = mcq_tasks_.size();
    mcq_tasks_.push_back(std::move(t));
  }
  for (const auto& j : read_if_exists(opts_.dir / "assignments.jsonl")) {
    assigned_[j.at("task_id")].push_back(j.at("annotator_id"));
    cursor_ = j.value("cursor", cursor_);
  }
  for (const auto& j : read_if_exists(opts_.dir / "screening.jsonl")) {
    auto r = ScreeningRecord::from_json(j);
    screening_[r.annotator_id] = r;
  }
  for (const auto& j : read_if_exists(opts_.dir / "submissions.jsonl")) {
    auto s = RankingSubmission::from_json(j);
    submissions_[{s.task_id, s.annotator_id}] = s;
  }
  for (const auto& j : read_if_exists(opts_.dir / "mcq_validations.jsonl")) {
    auto v = McqValidation::from_json(j);
    validations_[{v.task_id, v.annotator_id}] = v;
  }
}

void AnnotationStore::append(const std::string& file, const json& row) {
  std::string line = row.dump() + "\n";
  std::ofstream out(opts_.dir / file, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot open " + (opts_.dir / file).string() + " for append");
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw Error("write to " + (opts_.dir / file).string() + " failed");
}

RankingTask AnnotationStore::create_ranking_task(const RankingSample& sample, std::uint64_t seed) {
  auto t = make_ranking_task(sample, seed);
  std::lock_guard lock(mu_);
  if (task_index_.count(t.task_id)) throw ValidationError("ranking task " + t.task_id + " already exists");
  append("ranking_tasks.jsonl", t.to_json());
  task_index_[t.task_id] = tasks_.size();
  tasks_.push_back(t);
  return t;
}

McqTask AnnotationStore::add_mcq_task(const mediq::ScenarioMCQ& scenario) {
  scenario.validate();
  McqTask t{scenario.scenario_id, scenario};
  std::lock_guard lock(mu_);
  if (mcq_index_.count(t.task_id)) throw ValidationError("MCQ task " + t.task_id + " already exists");
  append("mcq_tasks.jsonl", t.to_json());
  mcq_index_[t.task_id] = mcq_tasks_.size();
  mcq_tasks_.push_back(t);
  return t;
}

ScreeningRecord AnnotationStore::screen(const std::string& annotator_id, const std::vector<std::string>& answers) {
  if (annotator_id.empty()) throw ValidationError("annotator id is empty");
  auto r = screening_gate(annotator_id, answers, opts_.screening_key, opts_.screening_threshold);
  std::lock_guard lock(mu_);
  append("screening.jsonl", r.to_json());
  screening_[annotator_id] = r;
  return r;
}

bool AnnotationStore::screened(const std::string& annotator_id) const {
  std::lock_guard lock(mu_);
  auto it = screening_.find(annotator_id);
  return it != screening_.end() && it->second.passed;
}

void AnnotationStore::require_screened(const std::string& annotator_id) const {
  auto it = screening_.find(annotator_id);
  if (it == screening_.end()) throw PermissionError("annotator " + annotator_id + " has not taken the screening test");
  if (!it->second.passed) throw PermissionError("annotator " + annotator_id + " did not pass the screening test");
}

bool AnnotationStore::claim_locked(const std::string& task_id, const std::string& annotator_id) {
  auto& who = assigned_[task_id];
  if (std::find(who.begin(), who.end(), annotator_id) != who.end()) return true;
  if (who.size() >= opts_.annotator_cap) return false;
  who.push_back(annotator_id);
  append("assignments.jsonl", {{"task_id", task_id}, {"annotator_id", annotator_id}, {"cursor", cursor_}});
  return true;
}

std::vector<std::string> AnnotationStore::list_tasks(const std::string& annotator_id, std::size_t max_new) {
  std::lock_guard lock(mu_);
  require_screened(annotator_id);
  std::size_t claimed = 0;
  const std::size_t n = tasks_.size();
  const std::size_t start = cursor_;
  for (std::size_t step = 0; step < n && claimed < max_new; ++step) {
    std::size_t idx = (start + step) % n;
    const auto& id = tasks_[idx].task_id;
    auto& who = assigned_[id];
    if (std::find(who.begin(), who.end(), annotator_id) != who.end() || who.size() >= opts_.annotator_cap) continue;
    cursor_ = (idx + 1) % n;
    claim_locked(id, annotator_id);
    ++claimed;
  }
  std::vector<std::string> out;
  for (const auto& t : tasks_) {
    auto it = assigned_.find(t.task_id);
    if (it != assigned_.end() && std::find(it->second.begin(), it->second.end(), annotator_id) != it->second.end()) {
      out.push_back(t.task_id);
    }
  }
  return out;
}

std::optional<RankingTask> AnnotationStore::ranking_task(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = task_index_.find(task_id);
  if (it == task_index_.end()) return std::nullopt;
  return tasks_[it->second];
}

std::optional<McqTask> AnnotationStore::mcq_task(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = mcq_index_.find(task_id);
  if (it == mcq_index_.end()) return std::nullopt;
  return mcq_tasks_[it->second];
}

std::vector<std::string> AnnotationStore::ranking_task_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& t : tasks_) out.push_back(t.task_id);
  return out;
}

std::vector<std::string> AnnotationStore::mcq_task_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& t : mcq_tasks_) out.push_back(t.task_id);
  return out;
}

std::size_t AnnotationStore::assignees(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = assigned_.find(task_id);
  return it == assigned_.end() ? 0 : it->second.size();
}

Receipt AnnotationStore::submit_ranking(const std::string& task_id, const std::string& annotator_id,
                                        const std::vector<std::string>& permutation) {
  std::lock_guard lock(mu_);
  require_screened(annotator_id);
  auto it = task_index_.find(task_id);
  if (it == task_index_.end()) throw NotFoundError("unknown ranking task " + task_id);
  validate_permutation(permutation, tasks_[it->second].labels());
  if (!claim_locked(task_id, annotator_id)) {
    throw PermissionError("task " + task_id + " already has " + std::to_string(opts_.annotator_cap) + " annotators");
  }
  RankingSubmission s{task_id, annotator_id, permutation, utc_timestamp()};
  auto key = std::make_pair(task_id, annotator_id);
  auto prev = submissions_.find(key);
  bool replaced = prev != submissions_.end();
  if (replaced) {
    append("audit.jsonl", {{"event", "ranking_replaced"},
                           {"task_id", task_id},
                           {"annotator_id", annotator_id},
                           {"previous", prev->second.to_json()},
                           {"at", s.submitted_at}});
  }
  append("submissions.jsonl", s.to_json());
  submissions_[key] = s;
  return {task_id, annotator_id, s.submitted_at, replaced};
}

Receipt AnnotationStore::submit_mcq_validation(const McqValidation& v_in) {
  McqValidation v = v_in;
  std::lock_guard lock(mu_);
  require_screened(v.annotator_id);
  if (!mcq_index_.count(v.task_id)) throw NotFoundError("unknown MCQ task " + v.task_id);
  std::string sel = trim(v.selected);
  if (auto l = mediq::normalize_label(sel)) {
    v.selected = std::string(1, *l);
  } else if (to_lower(sel) == kNoneOfTheAbove || to_lower(sel) == "none of the above") {
    v.selected = std::string(kNoneOfTheAbove);
  } else {
    throw ValidationError("selected option must be A-D or none_of_the_above, got '" + v.selected + "'");
  }
  if (v.selected == kNoneOfTheAbove && trim(v.alternative).empty()) {
    log_warning("MCQ validation of " + v.task_id + " by " + v.annotator_id + " selects none of the above without an alternative");
  }
  v.submitted_at = utc_timestamp();
  auto key = std::make_pair(v.task_id, v.annotator_id);
  auto prev = validations_.find(key);
  bool replaced = prev != validations_.end();
  if (replaced) {
    append("audit.jsonl", {{"event", "mcq_validation_replaced"},
                           {"task_id", v.task_id},
                           {"annotator_id", v.annotator_id},
                           {"previous", prev->second.to_json()},
                           {"at", v.submitted_at}});
  }
  append("mcq_validations.jsonl", v.to_json());
  validations_[key] = v;
  return {v.task_id, v.annotator_id, v.submitted_at, replaced};
}

std::vector<RankingSubmission> AnnotationStore::ranking_submissions() const {
  std::lock_guard lock(mu_);
  std::vector<RankingSubmission> out;
  for (const auto& [_, s] : submissions_) out.push_back(s);
  return out;
}

std::vector<json> AnnotationStore::audit_log() const {
  std::lock_guard lock(mu_);
  return read_if_exists(opts_.dir / "audit.jsonl");
}

RankingBundle AnnotationStore::export_rankings() const {
  std::lock_guard lock(mu_);
  if (submissions_.empty()) throw ValidationError("no ranking submissions to export");
  RankingBundle b;
  for (const auto& t : tasks_) {
    RankingBundle::Item item;
    item.task_id = t.task_id;
    for (const auto& c : t.candidates) item.candidates.push_back(t.source_map.at(c.label));
    std::sort(item.candidates.begin(), item.candidates.end());
    for (auto it = submissions_.lower_bound({t.task_id, ""}); it != submissions_.end() && it->first.first == t.task_id;
         ++it) {
      std::vector<std::string> ids;
      for (const auto& l : it->second.permutation) ids.push_back(t.source_map.at(l));
      item.rankings[it->first.second] = std::move(ids);
    }
    b.items.push_back(std::move(item));
  }
  return b;
}

stats::RatingsMatrix AnnotationStore::export_mcq_matrix() const {
  std::lock_guard lock(mu_);
  if (validations_.empty()) throw ValidationError("no MCQ validations to export");
  std::set<std::string> annotators;
  for (const auto& [key, _] : validations_) annotators.insert(key.second);
  std::vector<std::string> items;
  for (const auto& t : mcq_tasks_) items.push_back(t.task_id);
  stats::RatingsMatrix m(items, {annotators.begin(), annotators.end()},
                         {"A", "B", "C", "D", std::string(kNoneOfTheAbove)});
  std::vector<std::string> raters = m.raters;
  for (const auto& [key, v] : validations_) {
    auto r = static_cast<std::size_t>(std::find(raters.begin(), raters.end(), key.second) - raters.begin());
    m.set(mcq_index_.at(key.first), r, v.selected);
  }
  return m;
}

McqAgreement AnnotationStore::mcq_majority_accuracy() const {
  auto m = export_mcq_matrix();
  McqAgreement out;
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    std::map<std::string, std::size_t> votes;
    std::size_t total = 0;
    for (const auto& c : m.cells[i]) {
      if (c) {
        ++votes[*c];
        ++total;
      }
    }
    if (total == 0) continue;
    ++out.items;
    std::optional<std::string> majority;
    for (const auto& [label, n] : votes) {
      if (2 * n > total) majority = label;
    }
    if (!majority) {
      ++out.no_majority;
      continue;
    }
    auto task = mcq_task(m.items[i]);
    if (*majority == std::string(1, task->scenario.correct)) ++out.agreeing;
  }
  out.accuracy = out.items == 0 ? 0.0 : 100.0 * static_cast<double>(out.agreeing) / static_cast<double>(out.items);
  return out;
}

// ------------------------------------------------------------ HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, status, {{"error", msg}});
}

// "A > B > C" strings are accepted as well as label arrays.
std::vector<std::string> permutation_from(const json& j) {
  if (j.is_array()) return j.get<std::vector<std::string>>();
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s.find('=') != std::string::npos || s.find(',') != std::string::npos) {
      throw ValidationError("tie: rankings may only use '>'");
    }
    std::vector<std::string> out;
    for (const auto& part : split(s, '>')) out.push_back(trim(part));
    return out;
  }
  throw ValidationError("permutation must be a list of labels");
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, std::map<std::string, std::string> tokens)
    : store_(store), tokens_(std::move(tokens)), server_(std::make_unique<httplib::Server>()) {
  using Handler = std::function<void(const std::string&, const httplib::Request&, httplib::Response&)>;
  auto guarded = [this](Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      auto auth = req.get_header_value("Authorization");
      const std::string prefix = "Bearer ";
      auto tok = auth.rfind(prefix, 0) == 0 ? auth.substr(prefix.size()) : std::string();
      auto it = tokens_.find(tok);
      if (tok.empty() || it == tokens_.end()) return send_error(res, 401, "missing or unknown bearer token");
      try {
        h(it->second, req, res);
      } catch (const PermissionError& e) {
        send_error(res, 403, e.what());
      } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
      } catch (const ValidationError& e) {
        send_error(res, 422, e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("bad request body: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };

  server_->Get("/api/tasks", guarded([this](const std::string& who, const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& id : store_.list_tasks(who)) out.push_back(store_.ranking_task(id)->annotator_payload());
    send_json(res, 200, {{"annotator_id", who}, {"tasks", out}});
  }));
  server_->Get(R"(/api/tasks/([^/]+))",
               guarded([this](const std::string& who, const httplib::Request& req, httplib::Response& res) {
                 if (!store_.screened(who)) throw PermissionError("annotator " + who + " has not passed screening");
                 auto t = store_.ranking_task(req.matches[1]);
                 if (!t) throw NotFoundError("unknown ranking task " + req.matches[1].str());
                 send_json(res, 200, t->annotator_payload());
               }));
  server_->Post(R"(/api/tasks/([^/]+)/ranking)",
                guarded([this](const std::string& who, const httplib::Request& req, httplib::Response& res) {
                  auto body = json::parse(req.body);
                  auto r = store_.submit_ranking(req.matches[1], who, permutation_from(body.at("permutation")));
                  send_json(res, 200, r.to_json());
                }));
  server_->Get("/api/mcq", guarded([this](const std::string& who, const httplib::Request&, httplib::Response& res) {
    if (!store_.screened(who)) throw PermissionError("annotator " + who + " has not passed screening");
    json out = json::array();
    for (const auto& id : store_.mcq_task_ids()) out.push_back(store_.mcq_task(id)->annotator_payload());
    send_json(res, 200, {{"tasks", out}});
  }));
  server_->Get(R"(/api/mcq/([^/]+))",
               guarded([this](const std::string& who, const httplib::Request& req, httplib::Response& res) {
                 if (!store_.screened(who)) throw PermissionError("annotator " + who + " has not passed screening");
                 auto t = store_.mcq_task(req.matches[1]);
                 if (!t) throw NotFoundError("unknown MCQ task " + req.matches[1].str());
                 send_json(res, 200, t->annotator_payload());
               }));
  server_->Post(R"(/api/mcq/([^/]+)/validation)",
                guarded([this](const std::string& who, const httplib::Request& req, httplib::Response& res) {
                  auto body = json::parse(req.body);
                  McqValidation v;
                  v.task_id = req.matches[1];
                  v.annotator_id = who;
                  v.plausible = body.value("plausible", true);
                  v.selected = body.at("selected").get<std::string>();
                  v.alternative = body.value("alternative", "");
                  send_json(res, 200, store_.submit_mcq_validation(v).to_json());
                }));
  server_->Post("/api/screening",
                guarded([this](const std::string& who, const httplib::Request& req, httplib::Response& res) {
                  auto body = json::parse(req.body);
                  auto r = store_.screen(who, body.at("answers").get<std::vector<std::string>>());
                  json out = r.to_json();
                  out.erase("answers");
                  send_json(res, 200, out);
                }));
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool AnnotationServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

bool AnnotationServer::listen_after_bind() { return server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_) server_->stop();
}

}  // namespace alfa::annotation
