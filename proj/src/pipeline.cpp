#include "alfa/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <set>
#include <thread>

#include "alfa/annotation.hpp"
#include "alfa/corpus.hpp"
#include "alfa/error.hpp"
#include "alfa/fusion.hpp"
#include "alfa/judge.hpp"
#include "alfa/mediq.hpp"
#include "alfa/stats.hpp"
#include "alfa/synthesis.hpp"

namespace fs = std::filesystem;

namespace alfa::pipeline {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::parse: return "parse";
    case Stage::sample: return "sample";
    case Stage::synthesize: return "synthesize";
    case Stage::judge_filter: return "judge_filter";
    case Stage::export_: return "export";
    case Stage::fuse_weights: return "fuse_weights";
    case Stage::simulate: return "simulate";
    case Stage::winrate: return "winrate";
    case Stage::stats: return "stats";
    case Stage::annotate_serve: return "annotate_serve";
    case Stage::report: return "report";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  std::string k(s);
  for (auto& c : k) c = c == '-' ? '_' : c;
  for (Stage st : kStages) {
    if (to_string(st) == k) return st;
  }
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

// ------------------------------------------------------------ config

RunConfig RunConfig::parse(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  try {
    c.run_id = j.at("run_id").get<std::string>();
    if (c.run_id.empty()) throw ConfigError("run_id is empty");
    c.run_dir = c.resolve(j.value("run_dir", "runs/" + c.run_id));
    c.cache_dir = j.contains("cache_dir") ? c.resolve(j["cache_dir"].get<std::string>()) : c.run_dir / "cache";
    c.seed = j.value("seed", std::uint64_t{0});
    c.workers = j.value("workers", std::size_t{4});
    if (c.workers == 0) throw ConfigError("workers must be positive");
    std::set<std::string> ids;
    for (const auto& e : j.value("endpoints", json::array())) {
      auto ep = llm::EndpointConfig::from_json(e);
      if (!ids.insert(ep.id).second) throw ConfigError("endpoint '" + ep.id + "' is declared twice");
      c.endpoints.push_back(std::move(ep));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> top = {"run_id", "run_dir", "cache_dir", "seed", "workers", "endpoints"};
    if (top.count(key)) continue;
    try {
      stage_from_string(key);
    } catch (const ConfigError&) {
      throw ConfigError("run config: unknown section '" + key + "'");
    }
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse run config " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse(j, fs::absolute(path).parent_path());
}

json RunConfig::section(Stage s) const {
  auto key = std::string(to_string(s));
  if (raw.contains(key)) {
    if (!raw[key].is_object()) throw ConfigError("section '" + key + "' must be an object");
    return raw[key];
  }
  return json::object();
}

fs::path RunConfig::resolve(const std::string& p) const {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

std::string RunConfig::digest() const { return sha256_hex(raw.dump()); }

std::unique_ptr<llm::Gateway> RunConfig::make_gateway() const {
  auto gw = std::make_unique<llm::Gateway>(cache_dir);
  for (const auto& e : endpoints) gw->add_endpoint(e);
  return gw;
}

// ------------------------------------------------------------ manifest

json FileDigest::to_json() const { return {{"path", name}, {"sha256", sha256}}; }
FileDigest FileDigest::from_json(const json& j) { return {j.at("path"), j.at("sha256")}; }

json RunManifest::to_json() const {
  json in = json::array(), out = json::array();
  for (const auto& f : inputs) in.push_back(f.to_json());
  for (const auto& f : outputs) out.push_back(f.to_json());
  json j = {{"run_id", run_id},
            {"stage", std::string(to_string(stage))},
            {"status", status},
            {"inputs", in},
            {"outputs", out},
            {"endpoints", endpoints},
            {"config_digest", config_digest},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"details", details}};
  if (!error.empty()) j["error"] = error;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id");
  m.stage = stage_from_string(j.at("stage").get<std::string>());
  m.status = j.at("status");
  for (const auto& f : j.at("inputs")) m.inputs.push_back(FileDigest::from_json(f));
  for (const auto& f : j.at("outputs")) m.outputs.push_back(FileDigest::from_json(f));
  m.endpoints = j.value("endpoints", json::array());
  m.config_digest = j.value("config_digest", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.details = j.value("details", json::object());
  m.error = j.value("error", "");
  return m;
}

fs::path RunManifest::path_for(const fs::path& run_dir, Stage s) {
  return run_dir / "manifests" / (std::string(to_string(s)) + ".json");
}

std::optional<RunManifest> RunManifest::load(const fs::path& run_dir, Stage s) {
  auto p = path_for(run_dir, s);
  std::error_code ec;
  if (!fs::exists(p, ec)) return std::nullopt;
  try {
    return from_json(json::parse(read_file(p)));
  } catch (const json::exception& e) {
    throw ConfigError("corrupt manifest " + p.string() + ": " + e.what());
  }
}

void RunManifest::save(const fs::path& run_dir) const {
  write_file_atomic(path_for(run_dir, stage), to_json().dump(2) + "\n");
}

namespace {

// Upstream artifact `name` written by stage `producer`, checked against the
// digest recorded in that stage's manifest.
FileDigest verified_artifact(const fs::path& run_dir, Stage producer, const std::string& name) {
  auto m = RunManifest::load(run_dir, producer);
  if (!m) {
    throw ConfigError("stage " + std::string(to_string(producer)) + " has not run in " + run_dir.string() +
                      "; run it before this stage");
  }
  if (m->status != "success") {
    throw ConfigError("stage " + std::string(to_string(producer)) + " did not finish successfully (status " +
                      m->status + "); rerun it first");
  }
  auto it = std::find_if(m->outputs.begin(), m->outputs.end(), [&](const FileDigest& f) { return f.name == name; });
  if (it == m->outputs.end()) {
    throw ConfigError("stage " + std::string(to_string(producer)) + " recorded no output named " + name);
  }
  fs::path p = run_dir / name;
  std::error_code ec;
  if (!fs::exists(p, ec)) {
    throw ConfigError("artifact " + p.string() + " recorded by stage " + std::string(to_string(producer)) +
                      " is missing");
  }
  auto actual = sha256_file(p);
  if (actual != it->sha256) {
    throw ConfigError("digest mismatch for " + p.string() + ": stage " + std::string(to_string(producer)) +
                      " recorded " + it->sha256 + " but the file now hashes to " + actual +
                      "; it was modified after it was written, rerun " + std::string(to_string(producer)));
  }
  return *it;
}

std::string req_string(const json& sec, const char* key, Stage s) {
  if (!sec.contains(key) || !sec[key].is_string() || sec[key].get<std::string>().empty()) {
    throw ConfigError("section '" + std::string(to_string(s)) + "' needs a non-empty string '" + key + "'");
  }
  return sec[key].get<std::string>();
}

template <typename T>
T opt(const json& sec, const char* key, T def, Stage s) {
  if (!sec.contains(key)) return def;
  try {
    return sec[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError("section '" + std::string(to_string(s)) + "': bad value for '" + key + "'");
  }
}

class StageRun {
 public:
  StageRun(const RunConfig& cfg, RunManifest& m, std::ostream& log) : cfg_(cfg), m_(m), log_(log) {}

  const RunConfig& cfg() const { return cfg_; }
  RunManifest& manifest() { return m_; }
  std::ostream& log() { return log_; }
  json section() const { return cfg_.section(m_.stage); }

  fs::path path(const std::string& name) const { return cfg_.run_dir / name; }

  fs::path input(Stage producer, const std::string& name) {
    auto d = verified_artifact(cfg_.run_dir, producer, name);
    add_input(d);
    return cfg_.run_dir / name;
  }

  bool has_input(Stage producer, const std::string& name) const {
    auto m = RunManifest::load(cfg_.run_dir, producer);
    return m && m->status == "success" &&
           std::any_of(m->outputs.begin(), m->outputs.end(), [&](const FileDigest& f) { return f.name == name; });
  }

  fs::path external(const std::string& p) {
    fs::path path = cfg_.resolve(p);
    std::error_code ec;
    if (!fs::exists(path, ec)) throw ConfigError("input file " + path.string() + " does not exist");
    add_input({path.string(), sha256_file(path)});
    return path;
  }

  void output(const std::string& name) { outputs_.push_back(name); }
  const std::vector<std::string>& outputs() const { return outputs_; }

  llm::Gateway& gateway() {
    if (!gw_) gw_ = cfg_.make_gateway();
    return *gw_;
  }

  std::string endpoint(const std::string& id) {
    auto it = std::find_if(cfg_.endpoints.begin(), cfg_.endpoints.end(),
                           [&](const llm::EndpointConfig& e) { return e.id == id; });
    if (it == cfg_.endpoints.end()) throw ConfigError("endpoint '" + id + "' is not declared in the run config");
    bool seen = false;
    for (const auto& e : m_.endpoints) seen = seen || e.value("id", "") == id;
    if (!seen) m_.endpoints.push_back(it->to_json());
    return id;
  }

 private:
  void add_input(const FileDigest& d) {
    for (const auto& f : m_.inputs) {
      if (f.name == d.name) return;
    }
    m_.inputs.push_back(d);
  }

  const RunConfig& cfg_;
  RunManifest& m_;
  std::ostream& log_;
  std::vector<std::string> outputs_;
  std::unique_ptr<llm::Gateway> gw_;
};

void write_rows(const fs::path& p, const std::vector<json>& rows) { write_file_atomic(p, to_jsonl(rows)); }

std::vector<std::string> split_ids(const corpus::SplitAssignment& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "dev") return s.dev;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (expected train, dev or test)");
}

std::map<std::string, corpus::QuestionRecord> read_questions(const fs::path& p) {
  std::map<std::string, corpus::QuestionRecord> out;
  for (const auto& row : read_jsonl(p)) {
    auto q = corpus::QuestionRecord::from_json(row);
    out.emplace(q.question_id, std::move(q));
  }
  return out;
}

std::vector<corpus::QuestionRecord> questions_in_split(StageRun& run, const std::string& split_name) {
  auto questions = read_questions(run.input(Stage::parse, "questions.jsonl"));
  auto split = corpus::SplitAssignment::from_json(json::parse(read_file(run.input(Stage::sample, "split.json"))));
  std::vector<corpus::QuestionRecord> out;
  for (const auto& id : split_ids(split, split_name)) {
    auto it = questions.find(id);
    if (it == questions.end()) throw ConfigError("split names question " + id + " that the parse stage did not produce");
    out.push_back(it->second);
  }
  return out;
}

std::map<std::string, corpus::ParsedThread> read_parsed(const fs::path& p) {
  std::map<std::string, corpus::ParsedThread> out;
  for (const auto& row : read_jsonl(p)) {
    auto t = corpus::ParsedThread::from_json(row);
    out.emplace(t.thread_id, std::move(t));
  }
  return out;
}

judge::AuxInfo aux_for(const std::map<std::string, corpus::ParsedThread>& parsed, const std::string& thread_id) {
  auto it = parsed.find(thread_id);
  if (it == parsed.end()) return {};
  return {it->second.final_diagnosis, it->second.conclusion};
}

// ------------------------------------------------------------ stages

void stage_ingest(StageRun& run) {
  auto sec = run.section();
  auto in = run.external(req_string(sec, "input", Stage::ingest));
  corpus::IngestOptions o;
  o.require_followup_question = opt(sec, "require_followup_question", true, Stage::ingest);
  auto r = corpus::ingest_threads_file(in, o);
  std::vector<json> rows;
  for (const auto& t : r.threads) rows.push_back(t.to_json());
  write_rows(run.path("threads.jsonl"), rows);
  run.output("threads.jsonl");
  run.manifest().details = {{"records_read", r.records_read},
                            {"kept", r.threads.size()},
                            {"skipped_no_question", r.skipped_no_question},
                            {"unique_posts", r.unique_posts}};
  run.log() << "ingest: kept " << r.threads.size() << " of " << r.records_read << " threads\n";
}

void stage_parse(StageRun& run) {
  auto sec = run.section();
  std::vector<corpus::ThreadRecord> threads;
  for (const auto& row : read_jsonl(run.input(Stage::ingest, "threads.jsonl"))) {
    threads.push_back(corpus::ThreadRecord::from_json(row));
  }
  corpus::DecomposeOptions o;
  o.endpoint = run.endpoint(req_string(sec, "endpoint", Stage::parse));
  o.temperature = opt(sec, "temperature", 0.0, Stage::parse);
  auto& gw = run.gateway();
  std::vector<std::optional<corpus::ParsedThread>> parsed(threads.size());
  std::vector<std::string> errors(threads.size());
  parallel_for(threads.size(), run.cfg().workers, [&](std::size_t i) {
    try {
      parsed[i] = corpus::decompose_thread(threads[i], gw, o);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<json> parsed_rows, question_rows;
  json failures = json::array();
  for (std::size_t i = 0; i < threads.size(); ++i) {
    if (!parsed[i]) {
      failures.push_back({{"thread_id", threads[i].thread_id}, {"error", errors[i]}});
      continue;
    }
    parsed_rows.push_back(parsed[i]->to_json());
    for (const auto& q : parsed[i]->atomic_questions) {
      json row = q.to_json();
      row["quality_group"] = corpus::assign_quality_group(q, *parsed[i]).index();
      question_rows.push_back(std::move(row));
    }
  }
  if (parsed_rows.empty()) throw Error("no thread could be decomposed");
  write_rows(run.path("parsed.jsonl"), parsed_rows);
  write_rows(run.path("questions.jsonl"), question_rows);
  run.output("parsed.jsonl");
  run.output("questions.jsonl");
  run.manifest().details = {{"threads", threads.size()},
                            {"parsed", parsed_rows.size()},
                            {"questions", question_rows.size()},
                            {"failures", failures}};
  run.log() << "parse: " << question_rows.size() << " questions from " << parsed_rows.size() << " threads ("
            << failures.size() << " failed)\n";
}

void stage_sample(StageRun& run) {
  auto sec = run.section();
  std::vector<corpus::GroupedQuestion> qs;
  for (const auto& row : read_jsonl(run.input(Stage::parse, "questions.jsonl"))) {
    qs.push_back({corpus::QuestionRecord::from_json(row), corpus::QualityGroup::from_index(row.at("quality_group"))});
  }
  corpus::SplitSizes sizes;
  sizes.train = opt(sec, "train", std::size_t{0}, Stage::sample);
  sizes.dev = opt(sec, "dev", std::size_t{0}, Stage::sample);
  sizes.test = opt(sec, "test", std::size_t{0}, Stage::sample);
  auto split = corpus::stratified_split(qs, sizes, run.cfg().seed);
  write_file_atomic(run.path("split.json"), split.to_json().dump(2) + "\n");
  run.output("split.json");
  json groups = json::object();
  for (const auto& [name, counts] : corpus::split_group_counts(split, qs)) groups[name] = counts;
  run.manifest().details = {{"train", split.train.size()},
                            {"dev", split.dev.size()},
                            {"test", split.test.size()},
                            {"group_counts", groups}};
  run.log() << "sample: train " << split.train.size() << ", dev " << split.dev.size() << ", test "
            << split.test.size() << "\n";
}

void stage_synthesize(StageRun& run) {
  auto sec = run.section();
  auto questions = questions_in_split(run, opt<std::string>(sec, "split", "train", Stage::synthesize));
  auto attrs = parse_attribute_set(opt<std::string>(sec, "attributes", "all", Stage::synthesize));
  synthesis::SynthesisOptions o;
  o.perturb.endpoint = run.endpoint(req_string(sec, "endpoint", Stage::synthesize));
  o.perturb.temperature = opt(sec, "temperature", 1.0, Stage::synthesize);
  o.workers = run.cfg().workers;
  auto ps = synthesis::synthesize_corpus(questions, attrs, run.gateway(), o);
  synthesis::write_pairs(run.path("pairs.jsonl"), ps.pairs);
  std::vector<json> variants;
  for (const auto& v : ps.variants) variants.push_back(v.to_json());
  write_rows(run.path("variants.jsonl"), variants);
  run.output("pairs.jsonl");
  run.output("variants.jsonl");
  run.manifest().details = ps.manifest();
  run.log() << "synthesize: " << ps.pairs.size() << " pairs from " << questions.size() << " questions x "
            << attrs.size() << " attributes (" << ps.failures.size() << " failed generations)\n";
}

std::map<std::string, judge::AuxInfo> aux_by_question(StageRun& run) {
  auto questions = read_questions(run.input(Stage::parse, "questions.jsonl"));
  auto parsed = read_parsed(run.input(Stage::parse, "parsed.jsonl"));
  std::map<std::string, judge::AuxInfo> out;
  for (const auto& [id, q] : questions) out[id] = aux_for(parsed, q.thread_id);
  return out;
}

void stage_judge_filter(StageRun& run) {
  auto sec = run.section();
  auto pairs = synthesis::read_pairs(run.input(Stage::synthesize, "pairs.jsonl"));
  auto aux = aux_by_question(run);
  judge::FilterOptions fo;
  fo.judge.endpoint = run.endpoint(req_string(sec, "endpoint", Stage::judge_filter));
  fo.judge.temperature = opt(sec, "temperature", 0.0, Stage::judge_filter);
  auto mode = opt<std::string>(sec, "mode", "triple", Stage::judge_filter);
  if (mode == "triple") {
    fo.mode = judge::JudgeMode::triple;
  } else if (mode == "pairwise") {
    fo.mode = judge::JudgeMode::pairwise;
  } else {
    throw ConfigError("judge_filter: mode must be triple or pairwise");
  }
  fo.workers = run.cfg().workers;
  auto summary = judge::judge_pairset(pairs, aux, run.gateway(), fo);
  synthesis::write_pairs(run.path("judged_pairs.jsonl"), pairs);
  std::vector<synthesis::PreferencePair> judged;
  for (const auto& p : pairs) {
    if (p.kept) judged.push_back(p);
  }
  if (judged.empty()) throw Error("no pair could be judged");
  auto report = judge::retention_report(judged);
  write_file_atomic(run.path("retention.json"), report.to_json().dump(2) + "\n");
  write_file_atomic(run.path("retention.txt"), report.to_table());
  run.output("judged_pairs.jsonl");
  run.output("retention.json");
  run.output("retention.txt");
  json failures = json::array();
  for (const auto& f : summary.failures) {
    failures.push_back({{"question_id", f.question_id}, {"attribute", f.attribute}, {"error", f.error}});
  }
  run.manifest().details = {{"pairs", pairs.size()},
                            {"judged", judged.size()},
                            {"excluded_unjudged", pairs.size() - judged.size()},
                            {"kept", report.kept},
                            {"judge_calls", summary.judge_calls},
                            {"failures", failures}};
  run.log() << "judge_filter: kept " << report.kept << " of " << judged.size() << " judged pairs ("
            << judge::format_percent(report.kept_fraction()) << ")\n";
}

void stage_export(StageRun& run) {
  auto sec = run.section();
  bool filtered = opt(sec, "filtered_only", true, Stage::export_);
  auto spec = fusion::SelectionSpec::parse(opt<std::string>(sec, "attributes", "all", Stage::export_),
                                           opt<std::string>(sec, "pair_types", "all", Stage::export_), filtered);
  std::vector<synthesis::PreferencePair> pairs;
  std::size_t unjudged = 0;
  if (filtered) {
    for (auto& p : synthesis::read_pairs(run.input(Stage::judge_filter, "judged_pairs.jsonl"))) {
      if (p.kept) {
        pairs.push_back(std::move(p));
      } else {
        ++unjudged;
      }
    }
  } else {
    pairs = synthesis::read_pairs(run.input(Stage::synthesize, "pairs.jsonl"));
  }
  auto layout = fusion::dataset_layout_from_string(opt<std::string>(sec, "layout", "prompt_chosen_rejected", Stage::export_));
  auto strategy = fusion::fusion_strategy_from_string(opt<std::string>(sec, "strategy", "data_mixing", Stage::export_));

  // Data mixing pools everything into one dataset; the fusion strategies
  // train one model per attribute and merge afterwards.
  std::vector<std::pair<std::string, fusion::SelectionSpec>> datasets;
  if (strategy == fusion::FusionStrategy::data_mixing) {
    datasets.emplace_back("dataset.jsonl", spec);
  } else {
    for (Attribute a : spec.attributes) {
      auto s = spec;
      s.attributes = {a};
      datasets.emplace_back("dataset_" + std::string(alfa::to_string(a)) + ".jsonl", s);
    }
  }
  json files = json::object();
  std::size_t total = 0;
  for (const auto& [name, s] : datasets) {
    auto r = fusion::export_preference_dataset(pairs, s, layout, run.path(name));
    run.output(name);
    files[name] = {{"records", r.records}, {"counts", r.counts}};
    total += r.records;
  }
  json trainer = opt(sec, "trainer", json::object(), Stage::export_);
  for (const auto& st : trainer.value("stages", json::array())) {
    auto stage = fusion::trainer_stage_from_string(st.get<std::string>());
    std::map<std::string, std::string> overrides;
    if (trainer.contains("overrides") && trainer["overrides"].contains(st.get<std::string>())) {
      for (const auto& [k, v] : trainer["overrides"][st.get<std::string>()].items()) {
        overrides[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    for (const auto& [name, _] : datasets) {
      auto o = overrides;
      if (!o.count("dataset_path")) o["dataset_path"] = name;
      std::string suffix = datasets.size() == 1 ? "" : "_" + name.substr(8, name.size() - 14);
      std::string cfg_name = "trainer_" + std::string(fusion::to_string(stage)) + suffix + ".json";
      fusion::emit_trainer_config(run.path(cfg_name), stage, o);
      run.output(cfg_name);
    }
  }
  run.manifest().details = {{"selection", spec.describe()},
                            {"strategy", std::string(fusion::to_string(strategy))},
                            {"records", total},
                            {"excluded_unjudged", unjudged},
                            {"datasets", files}};
  run.log() << "export: " << total << " records (" << spec.describe() << ")\n";
}

void stage_fuse_weights(StageRun& run) {
  auto sec = run.section();
  auto inputs = opt(sec, "inputs", json::array(), Stage::fuse_weights);
  if (inputs.size() < 1) throw ConfigError("fuse_weights needs at least one input archive");
  std::vector<fusion::TensorArchive> archives;
  for (const auto& p : inputs) archives.push_back(fusion::TensorArchive::load(run.external(p.get<std::string>())));
  std::optional<std::vector<double>> weights;
  if (sec.contains("weights")) weights = sec["weights"].get<std::vector<double>>();
  auto fused = fusion::average_tensor_archives(archives, weights, run.cfg().workers);
  std::string name = opt<std::string>(sec, "output", "fused.safetensors", Stage::fuse_weights);
  fused.save(run.path(name));
  run.output(name);
  run.manifest().details = {{"sources", archives.size()}, {"tensors", fused.entries.size()}, {"digest", fused.digest()}};
  run.log() << "fuse_weights: averaged " << archives.size() << " archives into " << name << "\n";
}

mediq::ExpertEndpoints expert_endpoints(StageRun& run, const json& sec, Stage s) {
  std::string fallback = opt<std::string>(sec, "expert_endpoint", "", s);
  auto pick = [&](const char* key) {
    std::string id = opt<std::string>(sec, key, fallback, s);
    if (id.empty()) throw ConfigError("simulate needs '" + std::string(key) + "' or 'expert_endpoint'");
    return run.endpoint(id);
  };
  return {pick("question_endpoint"), pick("decision_endpoint"), pick("abstention_endpoint")};
}

void stage_simulate(StageRun& run) {
  auto sec = run.section();
  auto& gw = run.gateway();
  std::vector<mediq::ScenarioMCQ> scenarios;
  json build_failures = json::array();
  if (sec.contains("scenarios")) {
    scenarios = mediq::read_scenarios(run.external(req_string(sec, "scenarios", Stage::simulate)));
  } else {
    auto questions = questions_in_split(run, opt<std::string>(sec, "split", "test", Stage::simulate));
    auto parsed = read_parsed(run.input(Stage::parse, "parsed.jsonl"));
    std::map<std::string, corpus::ThreadRecord> threads;
    for (const auto& row : read_jsonl(run.input(Stage::ingest, "threads.jsonl"))) {
      auto t = corpus::ThreadRecord::from_json(row);
      threads.emplace(t.thread_id, std::move(t));
    }
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& q : questions) {
      auto p = parsed.find(q.thread_id);
      if (p != parsed.end() && p->second.conclusion && seen.insert(q.thread_id).second) ids.push_back(q.thread_id);
    }
    mediq::McqBuildOptions bo;
    bo.endpoint = run.endpoint(req_string(sec, "build_endpoint", Stage::simulate));
    bo.seed = run.cfg().seed;
    std::vector<std::optional<mediq::ScenarioMCQ>> built(ids.size());
    std::vector<std::string> errors(ids.size());
    parallel_for(ids.size(), run.cfg().workers, [&](std::size_t i) {
      try {
        built[i] = mediq::build_mcq_task(threads.at(ids[i]), parsed.at(ids[i]), gw, bo);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (built[i]) {
        scenarios.push_back(std::move(*built[i]));
      } else {
        build_failures.push_back({{"thread_id", ids[i]}, {"error", errors[i]}});
      }
    }
    if (scenarios.empty()) throw Error("no MCQ scenario could be built");
    mediq::write_scenarios(run.path("scenarios.jsonl"), scenarios);
    run.output("scenarios.jsonl");
  }
  mediq::EpisodeParams params;
  params.max_turns = opt(sec, "max_turns", 15, Stage::simulate);
  params.threshold = opt(sec, "threshold", 4, Stage::simulate);
  params.temperature = opt(sec, "temperature", 0.6, Stage::simulate);
  params.patient_endpoint = run.endpoint(req_string(sec, "patient_endpoint", Stage::simulate));
  auto expert = expert_endpoints(run, sec, Stage::simulate);

  // Persisted episodes are only reused under identical settings.
  fs::path out = run.path("benchmark");
  json settings = {{"max_turns", params.max_turns},
                   {"threshold", params.threshold},
                   {"temperature", params.temperature},
                   {"patient", params.patient_endpoint},
                   {"question", expert.question_endpoint},
                   {"decision", expert.decision_endpoint},
                   {"abstention", expert.abstention_endpoint},
                   {"scenarios", sha256_hex(to_jsonl([&] {
                      std::vector<json> rows;
                      for (const auto& s : scenarios) rows.push_back(s.to_json());
                      return rows;
                    }()))}};
  fs::path settings_file = out / "settings.json";
  std::error_code ec;
  if (fs::exists(settings_file, ec) && json::parse(read_file(settings_file)) != settings) fs::remove_all(out);
  write_file_atomic(settings_file, settings.dump(2) + "\n");

  auto res = mediq::run_benchmark(scenarios, expert, params, gw, out, run.cfg().workers);
  run.output("benchmark/summary.json");
  std::size_t asks = 0;
  for (const auto& r : res.results) asks += static_cast<std::size_t>(r.turns_used);
  run.manifest().details = {{"scenarios", scenarios.size()},
                            {"accuracy", res.accuracy},
                            {"completed", res.completed},
                            {"excluded", res.excluded},
                            {"mean_questions",
                             res.completed ? static_cast<double>(asks) / static_cast<double>(res.completed) : 0.0},
                            {"build_failures", build_failures}};
  run.log() << "simulate: accuracy " << res.accuracy << "% over " << res.completed << " episodes\n";
}

stats::QuestionSource question_source(StageRun& run, const json& spec, const char* role) {
  if (spec.is_string()) return stats::QuestionSource::from_endpoint(run.endpoint(spec.get<std::string>()));
  if (spec.is_object() && spec.contains("endpoint")) {
    auto s = stats::QuestionSource::from_endpoint(run.endpoint(spec["endpoint"].get<std::string>()));
    s.temperature = spec.value("temperature", 0.0);
    return s;
  }
  if (spec.is_object() && spec.contains("texts")) {
    std::map<std::string, std::string> texts;
    for (const auto& row : read_jsonl(run.external(spec["texts"].get<std::string>()))) {
      texts[row.at("context_id")] = row.at("text");
    }
    return stats::QuestionSource::from_texts(spec.value("name", std::string(role)), std::move(texts));
  }
  throw ConfigError("winrate: '" + std::string(role) + "' must be an endpoint id or {\"texts\": <file>}");
}

std::vector<stats::WinContext> winrate_contexts(StageRun& run, const json& sec) {
  auto questions = questions_in_split(run, opt<std::string>(sec, "split", "test", Stage::winrate));
  auto parsed = read_parsed(run.input(Stage::parse, "parsed.jsonl"));
  std::vector<stats::WinContext> out;
  std::set<std::string> seen;
  for (const auto& q : questions) {
    std::string id = q.thread_id + ":t" + std::to_string(q.turn_index);
    if (!seen.insert(id).second) continue;
    out.push_back({id, q.context, aux_for(parsed, q.thread_id)});
  }
  auto cap = opt(sec, "max_contexts", std::size_t{0}, Stage::winrate);
  if (cap > 0 && out.size() > cap) out.resize(cap);
  return out;
}

void stage_winrate(StageRun& run) {
  auto sec = run.section();
  auto contexts = winrate_contexts(run, sec);
  if (!sec.contains("candidate") || !sec.contains("baseline")) throw ConfigError("winrate needs 'candidate' and 'baseline'");
  auto cand = question_source(run, sec["candidate"], "candidate");
  auto base = question_source(run, sec["baseline"], "baseline");
  judge::JudgeOptions jo;
  jo.endpoint = run.endpoint(req_string(sec, "judge_endpoint", Stage::winrate));
  auto dim = opt<std::string>(sec, "dimension", std::string(judge::kOverall), Stage::winrate);
  auto res = stats::winrate(contexts, cand, base, run.gateway(), jo, dim, run.cfg().workers);
  json j = res.to_json();
  j["candidate"] = cand.name;
  j["baseline"] = base.name;
  j["dimension"] = dim;
  write_file_atomic(run.path("winrate.json"), j.dump(2) + "\n");
  run.output("winrate.json");
  run.manifest().details = {{"rate", res.rate},
                            {"comparisons", res.comparisons},
                            {"failures", res.failures.size()},
                            {"candidate", cand.name},
                            {"baseline", base.name}};
  run.log() << "winrate: " << cand.name << " vs " << base.name << " = " << res.rate << " over " << res.comparisons
            << " contexts\n";
}

void stage_stats(StageRun& run) {
  auto sec = run.section();
  json out = {{"agreement", json::array()}, {"error_reduction", json::array()}};
  std::vector<stats::AC1Row> rows;
  std::string text;
  for (const auto& r : opt(sec, "ratings", json::array(), Stage::stats)) {
    std::string label = r.value("label", r.value("path", std::string("ratings")));
    std::optional<std::vector<std::string>> cats;
    if (r.contains("categories")) cats = r["categories"].get<std::vector<std::string>>();
    auto m = stats::RatingsMatrix::load(run.external(r.at("path").get<std::string>()), cats);
    auto ac1 = stats::gwet_ac1(m);
    json entry = {{"label", label}, {"items", m.items.size()}, {"raters", m.raters.size()}, {"ac1", ac1.to_json()}};
    try {
      auto k = stats::fleiss_kappa(m);
      entry["fleiss_kappa"] = k.kappa;
    } catch (const ValidationError& e) {
      entry["fleiss_kappa"] = nullptr;
      entry["fleiss_note"] = e.what();
    }
    out["agreement"].push_back(entry);
    rows.push_back({label, ac1});
  }
  if (!rows.empty()) text += stats::ac1_table(rows);
  for (const auto& e : out["agreement"]) {
    if (!e["fleiss_kappa"].is_null()) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "Fleiss' kappa (%s): %.3f\n", e["label"].get<std::string>().c_str(),
                    e["fleiss_kappa"].get<double>());
      text += buf;
    }
  }
  for (const auto& r : opt(sec, "error_reduction", json::array(), Stage::stats)) {
    auto er = stats::error_reduction(r.at("base").get<double>(), r.at("new").get<double>());
    out["error_reduction"].push_back({{"label", r.value("label", "")},
                                      {"base", r["base"]},
                                      {"new", r["new"]},
                                      {"percent", er.percent},
                                      {"undefined_baseline", er.undefined_baseline}});
    char buf[160];
    std::snprintf(buf, sizeof buf, "Error reduction (%s): %.2f%%\n", r.value("label", "").c_str(), er.percent);
    text += buf;
  }
  if (sec.contains("bootstrap_resamples")) {
    auto wr = json::parse(read_file(run.input(Stage::winrate, "winrate.json")));
    std::vector<double> credits;
    for (const auto& it : wr["items"]) credits.push_back(100.0 * it["credit"].get<double>());
    auto ci = stats::bootstrap_ci(credits, sec["bootstrap_resamples"].get<std::size_t>(), run.cfg().seed);
    out["winrate_ci"] = {{"low", ci.low}, {"high", ci.high}, {"rate", wr["rate"]}};
    char buf[160];
    std::snprintf(buf, sizeof buf, "Win-rate %.2f (95%% bootstrap CI %.2f-%.2f)\n", wr["rate"].get<double>(), ci.low,
                  ci.high);
    text += buf;
  }
  if (out["agreement"].empty() && out["error_reduction"].empty() && !out.contains("winrate_ci")) {
    throw ConfigError("stats: nothing to compute (give ratings, error_reduction or bootstrap_resamples)");
  }
  write_file_atomic(run.path("stats.json"), out.dump(2) + "\n");
  write_file_atomic(run.path("stats.txt"), text);
  run.output("stats.json");
  run.output("stats.txt");
  run.manifest().details = out;
  run.log() << text;
}

volatile std::sig_atomic_t g_stop = 0;
extern "C" void on_stop_signal(int) { g_stop = 1; }

std::map<std::string, std::string> parse_tokens(const json& sec) {
  std::map<std::string, std::string> tokens;
  if (sec.contains("tokens")) tokens = sec["tokens"].get<std::map<std::string, std::string>>();
  if (sec.contains("tokens_env")) {
    auto name = sec["tokens_env"].get<std::string>();
    const char* v = std::getenv(name.c_str());
    if (!v) throw ConfigError("environment variable " + name + " with annotator tokens is not set");
    for (const auto& pair : split(v, ',')) {
      auto eq = pair.find('=');
      if (eq == std::string::npos) throw ConfigError(name + ": expected token=annotator pairs");
      tokens[trim(pair.substr(0, eq))] = trim(pair.substr(eq + 1));
    }
  }
  if (tokens.empty()) throw ConfigError("annotate_serve needs annotator tokens");
  return tokens;
}

void stage_annotate_serve(StageRun& run) {
  auto sec = run.section();
  annotation::StoreOptions so;
  so.dir = run.path(opt<std::string>(sec, "store", "annotation", Stage::annotate_serve));
  so.annotator_cap = opt(sec, "annotator_cap", std::size_t{3}, Stage::annotate_serve);
  so.screening_key = opt(sec, "screening_key", std::vector<std::string>{}, Stage::annotate_serve);
  so.screening_threshold = opt(sec, "screening_threshold", 3, Stage::annotate_serve);
  if (so.screening_key.empty()) throw ConfigError("annotate_serve needs a screening_key");
  auto tokens = parse_tokens(sec);
  annotation::AnnotationStore store(so);
  std::size_t created = 0;
  if (sec.contains("ranking_samples")) {
    auto existing = store.ranking_task_ids();
    std::set<std::string> have(existing.begin(), existing.end());
    for (const auto& row : read_jsonl(run.external(sec["ranking_samples"].get<std::string>()))) {
      annotation::RankingSample s;
      s.sample_id = row.at("sample_id");
      s.context = row.at("context");
      for (const auto& c : row.at("candidates")) s.candidates.push_back({c.at("system_id"), c.at("text")});
      if (have.count(s.sample_id)) continue;
      store.create_ranking_task(s, run.cfg().seed);
      ++created;
    }
  }
  if (opt(sec, "mcq_from_simulate", false, Stage::annotate_serve)) {
    auto existing = store.mcq_task_ids();
    std::set<std::string> have(existing.begin(), existing.end());
    for (const auto& s : mediq::read_scenarios(run.input(Stage::simulate, "scenarios.jsonl"))) {
      if (!have.count(s.scenario_id)) store.add_mcq_task(s);
    }
  }
  annotation::AnnotationServer server(store, tokens);
  auto host = opt<std::string>(sec, "host", "127.0.0.1", Stage::annotate_serve);
  int port = opt(sec, "port", 0, Stage::annotate_serve);
  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  run.log() << "annotate_serve: listening on http://" << host << ":" << port << " (" << created
            << " new ranking tasks)\n"
            << std::flush;
  g_stop = 0;
  auto prev_int = std::signal(SIGINT, on_stop_signal);
  auto prev_term = std::signal(SIGTERM, on_stop_signal);
  std::thread t([&] { server.listen_after_bind(); });
  double limit = opt(sec, "serve_seconds", 0.0, Stage::annotate_serve);
  auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    if (limit > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= limit) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  t.join();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);

  json details = {{"ranking_tasks", store.ranking_task_ids().size()},
                  {"mcq_tasks", store.mcq_task_ids().size()},
                  {"port", port}};
  auto rel = fs::relative(so.dir, run.cfg().run_dir).string();
  if (!store.ranking_submissions().empty()) {
    auto bundle = store.export_rankings();
    write_file_atomic(so.dir / "rankings_export.json", bundle.to_json().dump(2) + "\n");
    run.output(rel + "/rankings_export.json");
    details["ranking_submissions"] = bundle.submissions();
  }
  try {
    auto m = store.export_mcq_matrix();
    m.save(so.dir / "mcq_matrix.csv");
    run.output(rel + "/mcq_matrix.csv");
    auto acc = store.mcq_majority_accuracy();
    details["mcq_majority_accuracy"] = acc.accuracy;
  } catch (const ValidationError&) {
  }
  run.manifest().details = details;
}

void stage_report(StageRun& run) {
  auto sec = run.section();
  std::vector<fs::path> dirs = {run.cfg().run_dir};
  for (const auto& r : opt(sec, "runs", json::array(), Stage::report)) dirs.push_back(run.cfg().resolve(r.get<std::string>()));
  auto rep = build_report(dirs);
  write_file_atomic(run.path("report.json"), rep.data.dump(2) + "\n");
  write_file_atomic(run.path("report.txt"), rep.text);
  run.output("report.json");
  run.output("report.txt");
  run.log() << rep.text;
}

void dispatch(StageRun& run) {
  switch (run.manifest().stage) {
    case Stage::ingest: return stage_ingest(run);
    case Stage::parse: return stage_parse(run);
    case Stage::sample: return stage_sample(run);
    case Stage::synthesize: return stage_synthesize(run);
    case Stage::judge_filter: return stage_judge_filter(run);
    case Stage::export_: return stage_export(run);
    case Stage::fuse_weights: return stage_fuse_weights(run);
    case Stage::simulate: return stage_simulate(run);
    case Stage::winrate: return stage_winrate(run);
    case Stage::stats: return stage_stats(run);
    case Stage::annotate_serve: return stage_annotate_serve(run);
    case Stage::report: return stage_report(run);
  }
}

class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir) {
    fs::create_directories(run_dir);
    auto p = (run_dir / ".lock").string();
    fd_ = ::open(p.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw ConfigError("cannot open lock file " + p);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw ConfigError("run directory " + run_dir.string() + " is in use by another stage process");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

std::size_t count_rows(const fs::path& p) {
  std::error_code ec;
  if (!fs::exists(p, ec)) return 0;
  return read_jsonl(p).size();
}

}  // namespace

// ------------------------------------------------------------ planning

json plan_stage(const RunConfig& cfg, Stage stage) {
  json plan = {{"stage", std::string(to_string(stage))}, {"llm_calls", 0}};
  auto sec = cfg.section(stage);
  auto have = [&](Stage producer, const std::string& name) {
    auto m = RunManifest::load(cfg.run_dir, producer);
    return m && m->status == "success" && fs::exists(cfg.run_dir / name);
  };
  auto unknown = [&](Stage producer) {
    plan["llm_calls"] = nullptr;
    plan["note"] = "upstream stage " + std::string(to_string(producer)) + " has not run; count unknown";
  };
  auto split_size = [&](const std::string& name) -> std::optional<std::size_t> {
    if (!have(Stage::sample, "split.json")) return std::nullopt;
    auto s = corpus::SplitAssignment::from_json(json::parse(read_file(cfg.run_dir / "split.json")));
    return split_ids(s, name).size();
  };
  switch (stage) {
    case Stage::parse:
      if (!have(Stage::ingest, "threads.jsonl")) {
        unknown(Stage::ingest);
      } else {
        plan["llm_calls"] = count_rows(cfg.run_dir / "threads.jsonl");
        plan["note"] = "one decomposition call per thread";
      }
      break;
    case Stage::synthesize: {
      auto n = split_size(sec.value("split", "train"));
      if (!n) {
        unknown(Stage::sample);
      } else {
        auto attrs = parse_attribute_set(sec.value("attributes", "all"));
        plan["llm_calls"] = *n * attrs.size() * 2;
        plan["note"] = "questions x attributes x 2 directions, plus one retry per degenerate rewrite";
      }
      break;
    }
    case Stage::judge_filter:
      if (!have(Stage::synthesize, "pairs.jsonl")) {
        unknown(Stage::synthesize);
      } else {
        auto pairs = synthesis::read_pairs(cfg.run_dir / "pairs.jsonl");
        if (sec.value("mode", "triple") == "pairwise") {
          plan["llm_calls"] = pairs.size() * 2;
          plan["note"] = "two presentation orders per pair";
        } else {
          std::set<std::pair<std::string, Attribute>> groups;
          for (const auto& p : pairs) groups.insert({p.question_id, p.attribute});
          plan["llm_calls"] = groups.size() * judge::JudgeOptions{}.triple_orders.size();
          plan["note"] = "one ranking per presentation order per (question, attribute), plus reprompts";
        }
      }
      break;
    case Stage::simulate: {
      std::size_t scenarios = 0, build = 0;
      if (sec.contains("scenarios")) {
        scenarios = count_rows(cfg.resolve(sec["scenarios"].get<std::string>()));
      } else if (!have(Stage::parse, "parsed.jsonl") || !have(Stage::sample, "split.json")) {
        unknown(Stage::sample);
        break;
      } else {
        auto questions = read_questions(cfg.run_dir / "questions.jsonl");
        auto parsed = read_parsed(cfg.run_dir / "parsed.jsonl");
        auto s = corpus::SplitAssignment::from_json(json::parse(read_file(cfg.run_dir / "split.json")));
        std::set<std::string> threads;
        for (const auto& id : split_ids(s, sec.value("split", "test"))) {
          auto q = questions.find(id);
          if (q == questions.end()) continue;
          auto p = parsed.find(q->second.thread_id);
          if (p != parsed.end() && p->second.conclusion) threads.insert(q->second.thread_id);
        }
        scenarios = threads.size();
        build = 3 * scenarios;
      }
      int max_turns = sec.value("max_turns", 15);
      plan["llm_calls"] = build + 2 * scenarios;
      plan["llm_calls_max"] = build + scenarios * static_cast<std::size_t>(3 * max_turns + 1);
      plan["note"] = "3 calls to build each scenario; each episode needs 2 to " + std::to_string(3 * max_turns + 1);
      break;
    }
    case Stage::winrate: {
      if (!have(Stage::parse, "questions.jsonl") || !have(Stage::sample, "split.json")) {
        unknown(Stage::sample);
        break;
      }
      auto questions = read_questions(cfg.run_dir / "questions.jsonl");
      auto s = corpus::SplitAssignment::from_json(json::parse(read_file(cfg.run_dir / "split.json")));
      std::set<std::string> contexts;
      for (const auto& id : split_ids(s, sec.value("split", "test"))) {
        auto q = questions.find(id);
        if (q != questions.end()) contexts.insert(q->second.thread_id + ":t" + std::to_string(q->second.turn_index));
      }
      std::size_t n = contexts.size();
      auto cap = sec.value("max_contexts", std::size_t{0});
      if (cap > 0) n = std::min(n, cap);
      plan["llm_calls"] = 4 * n;
      plan["note"] = "per context: two generations and two judge orders";
      break;
    }
    default:
      plan["note"] = "no LLM calls";
      break;
  }
  return plan;
}

// ------------------------------------------------------------ run

int run_stage(const RunConfig& cfg, Stage stage, const StageOptions& opts) {
  std::ostream& log = opts.log ? *opts.log : std::cerr;
  if (opts.dry_run) {
    try {
      auto plan = plan_stage(cfg, stage);
      log << plan.dump(2) << "\n";
      return kSuccess;
    } catch (const ConfigError& e) {
      log << "config error: " << e.what() << "\n";
      return kConfigError;
    } catch (const std::exception& e) {
      log << "error: " << e.what() << "\n";
      return kStageFailure;
    }
  }
  std::optional<RunLock> lock;
  try {
    lock.emplace(cfg.run_dir);
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  RunManifest m;
  m.run_id = cfg.run_id;
  m.stage = stage;
  m.status = "running";
  m.config_digest = cfg.digest();
  m.started_at = utc_timestamp();
  StageRun run(cfg, m, log);
  int code = kSuccess;
  try {
    m.save(cfg.run_dir);
    dispatch(run);
    for (const auto& name : run.outputs()) m.outputs.push_back({name, sha256_file(cfg.run_dir / name)});
    m.status = "success";
  } catch (const ConfigError& e) {
    m.status = "failed";
    m.error = e.what();
    code = kConfigError;
    log << "config error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    m.status = "failed";
    m.error = e.what();
    code = kStageFailure;
    log << "stage " << to_string(stage) << " failed: " << e.what() << "\n";
  }
  if (m.status == "failed") m.outputs.clear();
  m.finished_at = utc_timestamp();
  try {
    m.save(cfg.run_dir);
  } catch (const std::exception& e) {
    log << "cannot write manifest: " << e.what() << "\n";
    return kStageFailure;
  }
  return code;
}

// ------------------------------------------------------------ report

namespace {

std::string cell_or_dash(const json& v) {
  if (v.is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

Report build_report(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw ValidationError("report needs at least one run");
  Report rep;
  rep.data = {{"runs", json::array()}};
  std::string retention_text, agreement_text;
  for (const auto& dir : run_dirs) {
    std::optional<std::string> run_id;
    for (Stage s : kStages) {
      if (s == Stage::report) continue;
      if (auto m = RunManifest::load(dir, s)) run_id = m->run_id;
    }
    if (!run_id) throw ConfigError("no stage manifests found in " + dir.string());
    json row = {{"run_id", *run_id}, {"dir", dir.string()}, {"winrate", nullptr}, {"mediq_accuracy", nullptr}};
    auto ok = [&](Stage s) {
      auto m = RunManifest::load(dir, s);
      return m && m->status == "success";
    };
    if (ok(Stage::winrate)) {
      verified_artifact(dir, Stage::winrate, "winrate.json");
      row["winrate"] = json::parse(read_file(dir / "winrate.json"))["rate"];
    }
    if (ok(Stage::simulate)) {
      verified_artifact(dir, Stage::simulate, "benchmark/summary.json");
      row["mediq_accuracy"] = json::parse(read_file(dir / "benchmark/summary.json"))["accuracy"];
    }
    if (ok(Stage::judge_filter)) {
      verified_artifact(dir, Stage::judge_filter, "retention.json");
      row["retention"] = json::parse(read_file(dir / "retention.json"));
      retention_text += "Retention after filtering (" + *run_id + ")\n" + read_file(dir / "retention.txt") + "\n";
    }
    if (ok(Stage::stats)) {
      verified_artifact(dir, Stage::stats, "stats.json");
      row["stats"] = json::parse(read_file(dir / "stats.json"));
      agreement_text += "Statistics (" + *run_id + ")\n" + read_file(dir / "stats.txt") + "\n";
    }
    rep.data["runs"].push_back(row);
  }
  std::size_t w = 5;
  for (const auto& r : rep.data["runs"]) w = std::max(w, r["run_id"].get<std::string>().size());
  std::string table = pad("Model", w) + "  Win-rate  MediQ-AD\n";
  for (const auto& r : rep.data["runs"]) {
    table += pad(r["run_id"], w) + "  " + pad(cell_or_dash(r["winrate"]), 8) + "  " + cell_or_dash(r["mediq_accuracy"]) +
             "\n";
  }
  rep.text = table + "\n" + retention_text + agreement_text;
  return rep;
}

}  // namespace alfa::pipeline
