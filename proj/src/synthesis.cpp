#include "alfa/synthesis.hpp"

#include <algorithm>

#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

std::string JudgeVerdict::presentation_order() const {
  // Presentation described relative to the sorted candidate ids.
  std::vector<std::string> sorted = presented;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& id : presented) {
    auto pos = std::find(sorted.begin(), sorted.end(), id) - sorted.begin();
    out.push_back(static_cast<char>('A' + pos));
  }
  return out;
}

std::optional<std::size_t> JudgeVerdict::rank_of(const std::string& candidate_id) const {
  auto it = std::find(presented.begin(), presented.end(), candidate_id);
  if (it == presented.end()) return std::nullopt;
  char label = static_cast<char>('A' + (it - presented.begin()));
  auto r = std::find(ranking.begin(), ranking.end(), label);
  if (r == ranking.end()) return std::nullopt;
  return static_cast<std::size_t>(r - ranking.begin());
}

std::vector<std::string> JudgeVerdict::ranked_ids() const {
  std::vector<std::string> out;
  for (char label : ranking) out.push_back(presented.at(static_cast<std::size_t>(label - 'A')));
  return out;
}

json JudgeVerdict::to_json() const {
  std::string ranking_str;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (i) ranking_str += " > ";
    ranking_str.push_back(ranking[i]);
  }
  return {{"dimension", dimension},
          {"presented", presented},
          {"ranking", ranking_str},
          {"reasoning", reasoning},
          {"judge_endpoint", judge_endpoint}};
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  JudgeVerdict v;
  v.dimension = j.at("dimension");
  v.presented = j.at("presented").get<std::vector<std::string>>();
  for (const auto& part : split(j.at("ranking").get<std::string>(), '>')) {
    auto t = trim(part);
    if (t.size() != 1) throw ParseError("bad stored ranking", j.dump());
    v.ranking.push_back(t[0]);
  }
  v.reasoning = j.value("reasoning", "");
  v.judge_endpoint = j.value("judge_endpoint", "");
  return v;
}

}  // namespace alfa

namespace alfa::synthesis {

std::string_view to_string(PairType t) {
  switch (t) {
    case PairType::EO: return "EO";
    case PairType::EC: return "EC";
    case PairType::OC: return "OC";
  }
  return "EO";
}

PairType pair_type_from_string(std::string_view s) {
  std::string u;
  for (char c : s) {
    if (c != '-' && c != '_') u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (u == "EO") return PairType::EO;
  if (u == "EC" || u == "CE") return PairType::EC;
  if (u == "OC") return PairType::OC;
  throw ValidationError("unknown pair type: " + std::string(s));
}

std::pair<std::string_view, std::string_view> member_roles(PairType t) {
  switch (t) {
    case PairType::EO: return {kEnhanced, kOriginal};
    case PairType::EC: return {kEnhanced, kCorrupted};
    case PairType::OC: return {kOriginal, kCorrupted};
  }
  return {kEnhanced, kOriginal};
}

json VariantQuestion::to_json() const {
  return {{"variant_id", variant_id},
          {"source_question_id", source_question_id},
          {"attribute", std::string(alfa::to_string(attribute))},
          {"direction", std::string(alfa::to_string(direction))},
          {"text", text},
          {"generator_endpoint", generator_endpoint}};
}

VariantQuestion VariantQuestion::from_json(const json& j) {
  VariantQuestion v;
  v.variant_id = j.at("variant_id");
  v.source_question_id = j.at("source_question_id");
  auto a = attribute_from_string(j.at("attribute").get<std::string>());
  if (!a) throw ValidationError("unknown attribute in variant " + v.variant_id);
  v.attribute = *a;
  v.direction = direction_from_string(j.at("direction").get<std::string>());
  v.text = j.at("text");
  v.generator_endpoint = j.value("generator_endpoint", "");
  return v;
}

json PreferencePair::to_json() const {
  json vs = json::array();
  for (const auto& v : verdicts) vs.push_back(v.to_json());
  return {{"pair_id", pair_id},
          {"context", context},
          {"chosen", chosen},
          {"rejected", rejected},
          {"attribute", std::string(alfa::to_string(attribute))},
          {"pair_type", std::string(to_string(pair_type))},
          {"question_id", question_id},
          {"verdicts", vs},
          {"kept", kept ? json(*kept) : json(nullptr)}};
}

PreferencePair PreferencePair::from_json(const json& j) {
  PreferencePair p;
  p.pair_id = j.at("pair_id");
  p.context = j.at("context");
  p.chosen = j.at("chosen");
  p.rejected = j.at("rejected");
  auto a = attribute_from_string(j.at("attribute").get<std::string>());
  if (!a) throw ValidationError("unknown attribute in pair " + p.pair_id);
  p.attribute = *a;
  p.pair_type = pair_type_from_string(j.at("pair_type").get<std::string>());
  p.question_id = j.at("question_id");
  for (const auto& v : j.value("verdicts", json::array())) p.verdicts.push_back(JudgeVerdict::from_json(v));
  if (j.contains("kept") && !j["kept"].is_null()) p.kept = j["kept"].get<bool>();
  return p;
}

std::string clean_generation(std::string_view raw) {
  std::string s = trim(raw);
  auto strip_pair = [&](std::string_view open, std::string_view close) {
    if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
      s = trim(std::string_view(s).substr(open.size(), s.size() - open.size() - close.size()));
      return true;
    }
    return false;
  };
  strip_pair("\"", "\"") || strip_pair("'", "'") || strip_pair("“", "”") ||
      strip_pair("`", "`");
  return s;
}

std::string perturbation_prompt(const corpus::QuestionRecord& q, Attribute attr, Direction dir) {
  const auto& r = rubric(attr);
  auto nl = q.context.find('\n');
  std::string title = nl == std::string::npos ? q.context : q.context.substr(0, nl);
  std::string post = nl == std::string::npos ? std::string() : q.context.substr(nl + 1);
  return prompts::render_prompt(
      "perturb", {{"title", title},
                  {"post", post},
                  {"question", q.question_text},
                  {"direction_phrase", dir == Direction::enhanced ? r.enhance_phrase : r.corrupt_phrase},
                  {"attribute_block", prompts::attribute_block(attr)}});
}

VariantQuestion perturb(const corpus::QuestionRecord& q, Attribute attr, Direction dir,
                        llm::Gateway& gateway, const PerturbOptions& opts) {
  if (attr == Attribute::coarse && !opts.allow_coarse) {
    throw ValidationError("coarse perturbation is disabled");
  }
  auto req = llm::make_request("", perturbation_prompt(q, attr, dir), opts.temperature, opts.max_tokens);
  VariantQuestion v;
  v.source_question_id = q.question_id;
  v.attribute = attr;
  v.direction = dir;
  v.variant_id = q.question_id + ":" + std::string(alfa::to_string(attr)) + ":" +
                 std::string(alfa::to_string(dir));
  v.generator_endpoint = opts.endpoint;
  const std::string source = trim(q.question_text);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt > 0) req.seed = attempt;
    auto text = clean_generation(gateway.cached_complete(opts.endpoint, req).text);
    if (!text.empty() && text != source) {
      v.text = std::move(text);
      return v;
    }
  }
  throw ValidationError("degenerate variant for " + v.variant_id +
                        ": generation empty or identical to the source question");
}

std::array<PreferencePair, 3> build_pairs(const corpus::QuestionRecord& q,
                                          const VariantQuestion& enhanced,
                                          const VariantQuestion& corrupted) {
  if (enhanced.attribute != corrupted.attribute) {
    throw ValidationError("attribute mismatch between variants of " + q.question_id);
  }
  if (enhanced.direction != Direction::enhanced || corrupted.direction != Direction::corrupted) {
    throw ValidationError("variant directions do not match enhanced/corrupted roles");
  }
  if (enhanced.source_question_id != q.question_id || corrupted.source_question_id != q.question_id) {
    throw ValidationError("variants do not derive from question " + q.question_id);
  }
  auto make = [&](PairType type, const std::string& chosen, const std::string& rejected) {
    if (chosen == rejected) {
      throw ValidationError("pair " + std::string(to_string(type)) + " of " + q.question_id +
                            " has identical members");
    }
    PreferencePair p;
    p.pair_id = q.question_id + ":" + std::string(alfa::to_string(enhanced.attribute)) + ":" +
                std::string(to_string(type));
    p.context = q.context;
    p.chosen = chosen;
    p.rejected = rejected;
    p.attribute = enhanced.attribute;
    p.pair_type = type;
    p.question_id = q.question_id;
    return p;
  };
  return {make(PairType::EO, enhanced.text, q.question_text),
          make(PairType::EC, enhanced.text, corrupted.text),
          make(PairType::OC, q.question_text, corrupted.text)};
}

std::map<std::string, std::map<std::string, std::size_t>> PairSet::cell_counts() const {
  std::map<std::string, std::map<std::string, std::size_t>> out;
  for (const auto& p : pairs) ++out[std::string(alfa::to_string(p.attribute))][std::string(to_string(p.pair_type))];
  return out;
}

json PairSet::manifest() const {
  json failures_j = json::array();
  for (const auto& f : failures) {
    failures_j.push_back({{"question_id", f.question_id},
                          {"attribute", std::string(alfa::to_string(f.attribute))},
                          {"direction", std::string(alfa::to_string(f.direction))},
                          {"error", f.error}});
  }
  return {{"pairs", pairs.size()},
          {"variants", variants.size()},
          {"counts", cell_counts()},
          {"failures", failures_j}};
}

PairSet synthesize_corpus(const std::vector<corpus::QuestionRecord>& split,
                          const std::vector<Attribute>& attrs, llm::Gateway& gateway,
                          const SynthesisOptions& opts) {
  if (split.empty()) throw ValidationError("synthesis needs at least one question");
  if (attrs.empty()) throw ValidationError("synthesis needs at least one attribute");

  struct Job {
    std::size_t q;
    Attribute attr;
    Direction dir;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < split.size(); ++i) {
    for (auto a : attrs) {
      jobs.push_back({i, a, Direction::enhanced});
      jobs.push_back({i, a, Direction::corrupted});
    }
  }
  std::vector<std::optional<VariantQuestion>> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), opts.workers, [&](std::size_t k) {
    const Job& job = jobs[k];
    try {
      results[k] = perturb(split[job.q], job.attr, job.dir, gateway, opts.perturb);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });

  PairSet out;
  for (std::size_t k = 0; k < jobs.size(); k += 2) {
    const Job& job = jobs[k];
    bool ok = true;
    for (std::size_t d = 0; d < 2; ++d) {
      if (results[k + d]) {
        out.variants.push_back(*results[k + d]);
      } else {
        ok = false;
        out.failures.push_back({split[job.q].question_id, job.attr, jobs[k + d].dir, errors[k + d]});
      }
    }
    if (!ok) continue;
    try {
      for (auto& p : build_pairs(split[job.q], *results[k], *results[k + 1])) out.pairs.push_back(std::move(p));
    } catch (const ValidationError& e) {
      out.failures.push_back({split[job.q].question_id, job.attr, Direction::enhanced, e.what()});
    }
  }
  if (opts.manifest_path) write_file_atomic(*opts.manifest_path, out.manifest().dump(2));
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  std::vector<json> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(p.to_json());
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for (const auto& j : read_jsonl(path)) out.push_back(PreferencePair::from_json(j));
  return out;
}

}  // namespace alfa::synthesis
