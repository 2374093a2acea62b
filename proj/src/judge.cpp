#include "alfa/judge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa::judge {

using synthesis::PairType;
using synthesis::PreferencePair;

std::string dimension_name(Attribute a) {
  return a == Attribute::coarse ? std::string(kOverall) : std::string(alfa::to_string(a));
}

std::string dimension_block(const std::string& dimension) {
  Attribute a = Attribute::coarse;
  if (dimension != kOverall) {
    auto parsed = attribute_from_string(dimension);
    if (!parsed) throw ValidationError("no rubric for dimension " + dimension);
    a = *parsed;
  }
  return dimension + ": " + rubric(a).definition;
}

std::vector<char> parse_ranking(std::string_view ranking, std::string_view expected_labels) {
  std::string raw(ranking);
  if (raw.find('=') != std::string::npos || raw.find(',') != std::string::npos ||
      raw.find('<') != std::string::npos) {
    throw ParseError("ranking is not a strict '>' chain (ties are not allowed): " + raw, raw);
  }
  std::vector<char> out;
  for (auto part : split(raw, '>')) {
    std::string t = trim(part);
    if (t.rfind("Question ", 0) == 0) t = trim(t.substr(9));
    if (t.size() != 1 || !std::isalpha(static_cast<unsigned char>(t[0]))) {
      throw ParseError("ranking element '" + t + "' is not a single label", raw);
    }
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(t[0]))));
  }
  std::string got(out.begin(), out.end());
  std::string want(expected_labels);
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  if (got != want) {
    throw ParseError("ranking must list each of " + std::string(expected_labels) +
                         " exactly once: " + raw, raw);
  }
  return out;
}

JudgeVerdict parse_judge_response(std::string_view text, const std::string& dimension,
                                  const std::vector<std::string>& presented) {
  json obj = extract_json_object(text);
  const json* entry = nullptr;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (to_lower(it.key()) == to_lower(dimension) && it->is_object()) entry = &*it;
  }
  if (entry == nullptr && obj.size() == 1 && obj.begin()->is_object()) entry = &*obj.begin();
  if (entry == nullptr && obj.contains("ranking")) entry = &obj;
  if (entry == nullptr || !entry->contains("ranking") || !(*entry)["ranking"].is_string()) {
    throw ParseError("judge reply has no ranking for dimension " + dimension, std::string(text));
  }
  std::string labels;
  for (std::size_t i = 0; i < presented.size(); ++i) labels.push_back(static_cast<char>('A' + i));
  JudgeVerdict v;
  v.dimension = dimension;
  v.presented = presented;
  v.ranking = parse_ranking((*entry)["ranking"].get<std::string>(), labels);
  if (entry->contains("reasoning") && (*entry)["reasoning"].is_string()) v.reasoning = (*entry)["reasoning"];
  return v;
}

namespace {

std::string ranking_example(std::size_t n) { return n == 3 ? "A > B > C" : "A > B"; }

}  // namespace

std::vector<JudgeVerdict> compare_candidates(const std::string& context,
                                             const std::vector<Candidate>& candidates,
                                             const std::string& dimension, const AuxInfo& aux,
                                             llm::Gateway& gateway, const JudgeOptions& opts) {
  if (candidates.size() != 2 && candidates.size() != 3) {
    throw ValidationError("judge compares 2 or 3 candidates, got " + std::to_string(candidates.size()));
  }
  if (!opts.allow_identical) {
    std::set<std::string> texts;
    for (const auto& c : candidates) {
      if (!texts.insert(c.text).second) throw ValidationError("judge candidates must be distinct");
    }
  }
  std::vector<std::vector<std::size_t>> orders;
  if (candidates.size() == 2) {
    orders = {{0, 1}, {1, 0}};
  } else {
    orders = opts.triple_orders;
    for (const auto& o : orders) {
      auto sorted = o;
      std::sort(sorted.begin(), sorted.end());
      if (sorted != std::vector<std::size_t>{0, 1, 2}) throw ValidationError("invalid presentation order");
    }
  }
  const std::size_t n = candidates.size();
  const std::string system = prompts::render_prompt(
      "judge_system", {{"candidate_count", n == 3 ? "three" : "two"}, {"ranking_example", ranking_example(n)}});

  std::vector<JudgeVerdict> verdicts;
  for (const auto& order : orders) {
    prompts::Vars vars = {{"prev_context", context},
                          {"dimensions", dimension_block(dimension)},
                          {"final_diagnosis", aux.final_diagnosis.value_or("N/A")},
                          {"conclusion", aux.conclusion.value_or("N/A")}};
    std::vector<std::string> presented;
    for (std::size_t pos = 0; pos < n; ++pos) {
      std::string key = std::string("question_") + static_cast<char>('a' + pos);
      vars[key] = candidates[order[pos]].text;
      presented.push_back(candidates[order[pos]].id);
    }
    auto req = llm::make_request(system, prompts::render_prompt(n == 3 ? "judge_user" : "judge_user_pair", vars),
                                 opts.temperature, opts.max_tokens);
    auto resp = gateway.cached_complete(opts.endpoint, req);
    JudgeVerdict v;
    try {
      v = parse_judge_response(resp.text, dimension, presented);
    } catch (const ParseError&) {
      req.messages.push_back({llm::Role::assistant, resp.text});
      req.messages.push_back({llm::Role::user,
                              prompts::render_prompt("judge_reminder", {{"dimension", dimension},
                                                                        {"ranking_example", ranking_example(n)}})});
      auto retry = gateway.cached_complete(opts.endpoint, req);
      v = parse_judge_response(retry.text, dimension, presented);
    }
    v.judge_endpoint = opts.endpoint;
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

bool verify_direction(PreferencePair& pair, const std::vector<JudgeVerdict>& verdicts) {
  const std::string dim = dimension_name(pair.attribute);
  auto [chosen_role, rejected_role] = synthesis::member_roles(pair.pair_type);
  bool kept = true;
  std::size_t considered = 0;
  for (const auto& v : verdicts) {
    if (v.dimension != dim) continue;
    auto rc = v.rank_of(std::string(chosen_role));
    auto rr = v.rank_of(std::string(rejected_role));
    if (!rc || !rr) {
      throw ValidationError("verdict on pair " + pair.pair_id + " does not rank both members");
    }
    ++considered;
    if (*rc > *rr) kept = false;
  }
  if (considered == 0) throw ValidationError("no verdict on dimension " + dim + " for pair " + pair.pair_id);
  pair.kept = kept;
  return kept;
}

FilterSummary judge_pairset(std::vector<PreferencePair>& pairs,
                            const std::map<std::string, AuxInfo>& aux_by_question,
                            llm::Gateway& gateway, const FilterOptions& opts) {
  // Group pair indices by (question, attribute), keeping first-seen order.
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::pair<std::string, Attribute>, std::size_t> group_of;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto key = std::make_pair(pairs[i].question_id, pairs[i].attribute);
    auto [it, inserted] = group_of.emplace(key, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  std::vector<std::string> errors(groups.size());
  std::vector<std::size_t> calls(groups.size(), 0);
  parallel_for(groups.size(), opts.workers, [&](std::size_t g) {
    const auto& members = groups[g];
    const PreferencePair& first = pairs[members.front()];
    AuxInfo aux;
    if (auto it = aux_by_question.find(first.question_id); it != aux_by_question.end()) aux = it->second;
    const std::string dim = dimension_name(first.attribute);
    try {
      const PreferencePair* eo = nullptr;
      const PreferencePair* ec = nullptr;
      for (auto i : members) {
        if (pairs[i].pair_type == PairType::EO) eo = &pairs[i];
        if (pairs[i].pair_type == PairType::EC) ec = &pairs[i];
      }
      if (opts.mode == JudgeMode::triple && eo != nullptr && ec != nullptr) {
        std::vector<Candidate> cands = {{std::string(synthesis::kEnhanced), eo->chosen},
                                        {std::string(synthesis::kOriginal), eo->rejected},
                                        {std::string(synthesis::kCorrupted), ec->rejected}};
        auto verdicts = compare_candidates(first.context, cands, dim, aux, gateway, opts.judge);
        calls[g] += verdicts.size();
        for (auto i : members) {
          pairs[i].verdicts = verdicts;
          verify_direction(pairs[i], verdicts);
        }
      } else {
        for (auto i : members) {
          auto [cr, rr] = synthesis::member_roles(pairs[i].pair_type);
          std::vector<Candidate> cands = {{std::string(cr), pairs[i].chosen}, {std::string(rr), pairs[i].rejected}};
          auto verdicts = compare_candidates(pairs[i].context, cands, dim, aux, gateway, opts.judge);
          calls[g] += verdicts.size();
          pairs[i].verdicts = verdicts;
          verify_direction(pairs[i], verdicts);
        }
      }
    } catch (const std::exception& e) {
      errors[g] = e.what();
      for (auto i : members) {
        pairs[i].kept.reset();
        pairs[i].verdicts.clear();
      }
    }
  });

  FilterSummary summary;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    summary.judge_calls += calls[g];
    if (!errors[g].empty()) {
      const auto& p = pairs[groups[g].front()];
      summary.failures.push_back({p.question_id, std::string(alfa::to_string(p.attribute)), errors[g]});
    }
  }
  return summary;
}

RetentionCell RetentionReport::pooled(PairType t) const {
  RetentionCell out;
  for (const auto& [attr, row] : cells) {
    if (auto it = row.find(t); it != row.end()) {
      out.total += it->second.total;
      out.kept += it->second.kept;
    }
  }
  return out;
}

std::size_t RetentionReport::kept_for(Attribute a) const {
  std::size_t k = 0;
  if (auto it = cells.find(a); it != cells.end()) {
    for (const auto& [t, c] : it->second) k += c.kept;
  }
  return k;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * fraction);
  return buf;
}

std::string RetentionReport::to_table() const {
  auto cell = [](const RetentionCell& c) {
    char buf[16];
    if (c.total == 0) return std::string("    -");
    std::snprintf(buf, sizeof(buf), "%5.1f", 100.0 * c.kept_fraction());
    return std::string(buf);
  };
  auto row = [&](const std::string& name, const RetentionCell& ec, const RetentionCell& eo,
                 const RetentionCell& oc, std::size_t kept, std::size_t total) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-22s %s  %s  %s  %8zu  %8zu\n", name.c_str(), cell(ec).c_str(),
                  cell(eo).c_str(), cell(oc).c_str(), kept, total);
    return std::string(buf);
  };
  std::string out;
  char header[160];
  std::snprintf(header, sizeof(header), "%-22s %5s  %5s  %5s  %8s  %8s\n", "Attribute", "E-C", "E-O", "O-C",
                "# Kept", "# Total");
  out += header;
  for (const auto& [attr, r] : cells) {
    auto get = [&](PairType t) {
      auto it = r.find(t);
      return it == r.end() ? RetentionCell{} : it->second;
    };
    std::size_t total = 0;
    for (const auto& [t, c] : r) total += c.total;
    out += row(std::string(alfa::to_string(attr)), get(PairType::EC), get(PairType::EO), get(PairType::OC),
               kept_for(attr), total);
  }
  out += row("All", pooled(PairType::EC), pooled(PairType::EO), pooled(PairType::OC), kept, total);
  out += "Kept overall: " + format_percent(kept_fraction()) + " (filtered " +
         format_percent(1.0 - kept_fraction()) + ")\n";
  return out;
}

json RetentionReport::to_json() const {
  json rows = json::object();
  for (const auto& [attr, r] : cells) {
    json row = json::object();
    for (const auto& [t, c] : r) {
      row[std::string(synthesis::to_string(t))] = {
          {"total", c.total}, {"kept", c.kept}, {"kept_fraction", c.kept_fraction()}};
    }
    rows[std::string(alfa::to_string(attr))] = row;
  }
  json all = json::object();
  for (auto t : synthesis::kPairTypes) {
    auto c = pooled(t);
    all[std::string(synthesis::to_string(t))] = {{"total", c.total}, {"kept", c.kept}, {"kept_fraction", c.kept_fraction()}};
  }
  return {{"cells", rows},
          {"all", all},
          {"total", total},
          {"kept", kept},
          {"kept_fraction", kept_fraction()},
          {"kept_percent", format_percent(kept_fraction())}};
}

RetentionReport retention_report(const std::vector<PreferencePair>& pairs) {
  std::size_t unjudged = static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const PreferencePair& p) { return !p.kept.has_value(); }));
  if (unjudged > 0) {
    throw ValidationError(std::to_string(unjudged) + " pair(s) have not been judged");
  }
  RetentionReport r;
  for (const auto& p : pairs) {
    auto& c = r.cells[p.attribute][p.pair_type];
    ++c.total;
    ++r.total;
    if (*p.kept) {
      ++c.kept;
      ++r.kept;
    }
  }
  return r;
}

double predicted_kept(std::size_t questions, double ec_percent, double eo_percent, double oc_percent) {
  return static_cast<double>(questions) * (ec_percent + eo_percent + oc_percent) / 100.0;
}

}  // namespace alfa::judge
