#include "alfa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "alfa/error.hpp"
#include "alfa/fusion.hpp"

namespace alfa::stats {

RatingsMatrix::RatingsMatrix(std::vector<std::string> items_, std::vector<std::string> raters_,
                             std::vector<std::string> categories_)
    : items(std::move(items_)), raters(std::move(raters_)), categories(std::move(categories_)) {
  cells.assign(items.size(), std::vector<std::optional<std::string>>(raters.size()));
}

void RatingsMatrix::set(std::size_t item, std::size_t rater, std::optional<std::string> label) {
  if (item >= items.size() || rater >= raters.size()) throw ValidationError("ratings cell out of range");
  cells[item][rater] = std::move(label);
}

void RatingsMatrix::validate() const {
  if (cells.size() != items.size()) throw ValidationError("ratings matrix has a row count different from its items");
  std::set<std::string> cats(categories.begin(), categories.end());
  if (cats.size() != categories.size()) throw ValidationError("ratings matrix has duplicate categories");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].size() != raters.size()) {
      throw ValidationError("item " + items[i] + " has " + std::to_string(cells[i].size()) + " cells for " +
                            std::to_string(raters.size()) + " raters");
    }
    for (const auto& c : cells[i]) {
      if (c && !cats.count(*c)) throw ValidationError("item " + items[i] + ": label '" + *c + "' is not a category");
    }
  }
}

std::size_t RatingsMatrix::category_index(const std::string& label) const {
  auto it = std::find(categories.begin(), categories.end(), label);
  if (it == categories.end()) throw ValidationError("unknown category " + label);
  return static_cast<std::size_t>(it - categories.begin());
}

std::vector<std::vector<std::size_t>> RatingsMatrix::category_counts() const {
  validate();
  std::vector<std::vector<std::size_t>> counts(items.size(), std::vector<std::size_t>(categories.size(), 0));
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const auto& c : cells[i]) {
      if (c) ++counts[i][category_index(*c)];
    }
  }
  return counts;
}

namespace {

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

RatingsMatrix RatingsMatrix::from_csv(std::string_view text, std::optional<std::vector<std::string>> categories) {
  std::vector<std::string> lines;
  for (auto& l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    if (!trim(l).empty()) lines.push_back(l);
  }
  if (lines.empty()) throw ParseError("ratings file is empty", "");
  auto header = csv_fields(lines[0]);
  if (header.size() < 2) throw ParseError("ratings header needs an item column and at least one rater", lines[0]);
  RatingsMatrix m;
  m.raters.assign(header.begin() + 1, header.end());
  std::set<std::string> seen;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    auto f = csv_fields(lines[ln]);
    if (f.size() != header.size()) {
      throw ParseError("ratings line " + std::to_string(ln + 1) + " has " + std::to_string(f.size()) +
                           " fields, expected " + std::to_string(header.size()),
                       lines[ln]);
    }
    m.items.push_back(f[0]);
    std::vector<std::optional<std::string>> row;
    for (std::size_t r = 1; r < f.size(); ++r) {
      if (f[r].empty()) {
        row.emplace_back();
      } else {
        row.emplace_back(f[r]);
        seen.insert(f[r]);
      }
    }
    m.cells.push_back(std::move(row));
  }
  m.categories = categories ? *categories : std::vector<std::string>(seen.begin(), seen.end());
  m.validate();
  return m;
}

std::string RatingsMatrix::to_csv() const {
  validate();
  std::string out = "item";
  for (const auto& r : raters) out += "," + csv_escape(r);
  out += '\n';
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += csv_escape(items[i]);
    for (const auto& c : cells[i]) out += "," + (c ? csv_escape(*c) : std::string());
    out += '\n';
  }
  return out;
}

RatingsMatrix RatingsMatrix::load(const std::filesystem::path& path,
                                  std::optional<std::vector<std::string>> categories) {
  return from_csv(read_file(path), std::move(categories));
}

void RatingsMatrix::save(const std::filesystem::path& path) const { write_file_atomic(path, to_csv()); }

// ------------------------------------------------------------ agreement

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

json AC1Result::to_json() const {
  return {{"ac1", ac1},         {"pa", pa},           {"pe", pe},          {"se", se},
          {"ci_low", ci_low},   {"ci_high", ci_high}, {"p_value", p_value}, {"items_used", items_used}};
}

AC1Result gwet_ac1(const RatingsMatrix& m) {
  if (m.raters.size() < 2) throw ValidationError("agreement needs at least two raters");
  const std::size_t q = m.categories.size();
  if (q < 2) throw ValidationError("undefined coefficient: fewer than two categories");
  auto counts = m.category_counts();

  std::vector<std::size_t> rated;  // items with >= 1 rating
  std::size_t n2 = 0;              // items with >= 2 ratings
  for (std::size_t i = 0; i < counts.size(); ++i) {
    auto r = std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0});
    if (r >= 1) rated.push_back(i);
    if (r >= 2) ++n2;
  }
  if (n2 == 0) throw ValidationError("agreement needs at least one item with two ratings");
  const double n = static_cast<double>(rated.size());

  std::vector<double> pi(q, 0.0);
  std::vector<double> pa_i(counts.size(), 0.0);
  double pa = 0.0;
  for (auto i : rated) {
    double r = static_cast<double>(std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0}));
    for (std::size_t k = 0; k < q; ++k) pi[k] += static_cast<double>(counts[i][k]) / r / n;
    if (r >= 2) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) {
        double c = static_cast<double>(counts[i][k]);
        s += c * (c - 1.0);
      }
      pa_i[i] = s / (r * (r - 1.0));
      pa += pa_i[i];
    }
  }
  pa /= static_cast<double>(n2);
  double pe = 0.0;
  for (double p : pi) pe += p * (1.0 - p);
  pe /= static_cast<double>(q - 1);
  if (pe >= 1.0) throw ValidationError("undefined coefficient: chance agreement is 1");

  AC1Result out;
  out.pa = pa;
  out.pe = pe;
  out.ac1 = (pa - pe) / (1.0 - pe);
  out.items_used = n2;

  if (rated.size() >= 2) {
    double ss = 0.0;
    for (auto i : rated) {
      double r = static_cast<double>(std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0}));
      double pa_star = r >= 2 ? pa_i[i] * n / static_cast<double>(n2) : 0.0;
      double pe_i = 0.0;
      for (std::size_t k = 0; k < q; ++k) pe_i += static_cast<double>(counts[i][k]) / r * (1.0 - pi[k]);
      pe_i /= static_cast<double>(q - 1);
      double g_star = (pa_star - pe) / (1.0 - pe);
      double g = g_star - 2.0 * (1.0 - out.ac1) * (pe_i - pe) / (1.0 - pe);
      ss += (g - out.ac1) * (g - out.ac1);
    }
    out.se = std::sqrt(ss / (n * (n - 1.0)));
  }
  out.ci_low = out.ac1 - 1.96 * out.se;
  out.ci_high = out.ac1 + 1.96 * out.se;
  if (out.se > 0.0) {
    out.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(out.ac1) / out.se));
  } else {
    out.p_value = out.ac1 > 0.0 ? 0.0 : 1.0;
  }
  return out;
}

KappaResult fleiss_kappa(const RatingsMatrix& m) {
  if (m.raters.size() < 2) throw ValidationError("agreement needs at least two raters");
  auto counts = m.category_counts();
  if (counts.empty()) throw ValidationError("Fleiss' kappa needs at least one item");
  std::size_t per_item = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    auto r = std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0});
    if (i == 0) per_item = r;
    if (r != per_item) {
      throw ValidationError("Fleiss' kappa needs the same number of ratings per item (item " + m.items[i] + " has " +
                            std::to_string(r) + ", expected " + std::to_string(per_item) +
                            "); use Gwet's AC1 for incomplete designs");
    }
  }
  if (per_item < 2) throw ValidationError("Fleiss' kappa needs at least two ratings per item");
  const double nr = static_cast<double>(per_item);
  const double N = static_cast<double>(counts.size());
  std::vector<double> p(m.categories.size(), 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      double c = static_cast<double>(row[k]);
      s += c * c;
      p[k] += c / (N * nr);
    }
    p_bar += (s - nr) / (nr * (nr - 1.0)) / N;
  }
  double pe_bar = 0.0;
  for (double x : p) pe_bar += x * x;
  if (pe_bar >= 1.0) throw ValidationError("undefined coefficient: chance agreement is 1");
  return {(p_bar - pe_bar) / (1.0 - pe_bar), p_bar, pe_bar};
}

ErrorReduction error_reduction(double acc_base, double acc_new) {
  for (double a : {acc_base, acc_new}) {
    if (!(a >= 0.0 && a <= 100.0)) throw ValidationError("accuracy must be a percentage in [0, 100]");
  }
  if (acc_base == 100.0) return {0.0, true};
  double base_err = 100.0 - acc_base;
  return {100.0 * (base_err - (100.0 - acc_new)) / base_err, false};
}

// ------------------------------------------------------------ win-rate

QuestionSource QuestionSource::from_endpoint(std::string endpoint) {
  QuestionSource s;
  s.name = endpoint;
  s.endpoint = std::move(endpoint);
  return s;
}

QuestionSource QuestionSource::from_texts(std::string name, std::map<std::string, std::string> texts) {
  QuestionSource s;
  s.name = std::move(name);
  s.texts = std::move(texts);
  return s;
}

std::string QuestionSource::question_for(const WinContext& c, llm::Gateway& gateway) const {
  if (endpoint) {
    auto req = llm::make_request("", fusion::training_prompt(c.context), temperature, max_tokens);
    std::string text = trim(gateway.cached_complete(*endpoint, req).text);
    if (text.empty()) throw ValidationError(name + " produced an empty question for " + c.id);
    return text;
  }
  auto it = texts.find(c.id);
  if (it == texts.end() || trim(it->second).empty()) throw ValidationError(name + " has no question for " + c.id);
  return trim(it->second);
}

json WinRateResult::to_json() const {
  json items_j = json::array();
  for (const auto& it : items) {
    json vs = json::array();
    for (const auto& v : it.verdicts) vs.push_back(v.to_json());
    items_j.push_back({{"context_id", it.context_id},
                       {"candidate", it.candidate_text},
                       {"baseline", it.baseline_text},
                       {"credit", it.credit},
                       {"verdicts", vs}});
  }
  json fails = json::array();
  for (const auto& [id, e] : failures) fails.push_back({{"context_id", id}, {"error", e}});
  return {{"wins", wins}, {"comparisons", comparisons}, {"rate", rate}, {"items", items_j}, {"failures", fails}};
}

WinRateResult winrate(const std::vector<WinContext>& contexts, const QuestionSource& candidate,
                      const QuestionSource& baseline, llm::Gateway& gateway, const judge::JudgeOptions& judge_opts,
                      const std::string& dimension, std::size_t workers) {
  if (contexts.empty()) throw ValidationError("win-rate needs at least one context");
  judge::JudgeOptions opts = judge_opts;
  opts.allow_identical = true;
  std::vector<std::optional<WinItem>> items(contexts.size());
  std::vector<std::string> errors(contexts.size());
  parallel_for(contexts.size(), workers, [&](std::size_t i) {
    const auto& c = contexts[i];
    try {
      WinItem item;
      item.context_id = c.id;
      item.candidate_text = candidate.question_for(c, gateway);
      item.baseline_text = baseline.question_for(c, gateway);
      item.verdicts = judge::compare_candidates(
          c.context, {{"candidate", item.candidate_text}, {"baseline", item.baseline_text}}, dimension, c.aux,
          gateway, opts);
      std::size_t preferred = 0;
      for (const auto& v : item.verdicts) preferred += v.rank_of("candidate") == std::optional<std::size_t>(0);
      item.credit = preferred == item.verdicts.size() ? 1.0 : preferred == 0 ? 0.0 : 0.5;
      items[i] = std::move(item);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  WinRateResult out;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (!items[i]) {
      out.failures.emplace_back(contexts[i].id, errors[i]);
      continue;
    }
    out.wins += items[i]->credit;
    ++out.comparisons;
    out.items.push_back(std::move(*items[i]));
  }
  out.rate = out.comparisons == 0 ? 0.0 : 100.0 * out.wins / static_cast<double>(out.comparisons);
  return out;
}

// ------------------------------------------------------------ rankings

double MajorityVoteResult::cell(const std::string& a, const std::string& b) const {
  auto ia = std::find(candidates.begin(), candidates.end(), a);
  auto ib = std::find(candidates.begin(), candidates.end(), b);
  if (ia == candidates.end() || ib == candidates.end()) throw ValidationError("unknown candidate " + a + "/" + b);
  return matrix[static_cast<std::size_t>(ia - candidates.begin())][static_cast<std::size_t>(ib - candidates.begin())];
}

json MajorityVoteResult::to_json() const {
  return {{"candidates", candidates}, {"matrix", matrix}, {"winrate_vs_baseline", winrate_vs_baseline}};
}

MajorityVoteResult majority_vote_rankings(const RankingSet& rankings, const std::string& baseline) {
  if (rankings.empty()) throw ValidationError("majority vote needs at least one item");
  std::vector<std::string> ref;
  for (std::size_t item = 0; item < rankings.size(); ++item) {
    if (rankings[item].empty()) throw ValidationError("item " + std::to_string(item) + " has no rankings");
    for (const auto& r : rankings[item]) {
      std::vector<std::string> sorted = r;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("item " + std::to_string(item) + ": ranking repeats a candidate (ties are not allowed)");
      }
      if (ref.empty()) ref = sorted;
      if (sorted != ref) {
        throw ValidationError("item " + std::to_string(item) + ": ranking is not a permutation of {" + join(ref, ", ") +
                              "}");
      }
    }
  }
  MajorityVoteResult out;
  out.candidates = ref;
  const std::size_t k = ref.size();
  out.matrix.assign(k, std::vector<double>(k, 0.0));
  for (const auto& item : rankings) {
    std::vector<std::vector<std::size_t>> pos;  // pos[rater][candidate]
    for (const auto& r : item) {
      std::vector<std::size_t> p(k);
      for (std::size_t rank = 0; rank < r.size(); ++rank) {
        p[static_cast<std::size_t>(std::lower_bound(ref.begin(), ref.end(), r[rank]) - ref.begin())] = rank;
      }
      pos.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        std::size_t votes = 0;
        for (const auto& p : pos) votes += p[i] < p[j];
        double credit = 2 * votes > pos.size() ? 1.0 : 2 * votes == pos.size() ? 0.5 : 0.0;
        out.matrix[i][j] += credit;
      }
    }
  }
  for (auto& row : out.matrix) {
    for (auto& c : row) c = 100.0 * c / static_cast<double>(rankings.size());
  }
  if (!std::binary_search(ref.begin(), ref.end(), baseline)) {
    throw ValidationError("baseline " + baseline + " is not among the ranked candidates");
  }
  for (const auto& c : ref) {
    if (c != baseline) out.winrate_vs_baseline[c] = out.cell(c, baseline);
  }
  return out;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw ValidationError("mean of no samples");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
  double pos = p * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

}  // namespace

Interval bootstrap_ci(const std::vector<double>& samples, std::size_t n_resamples, std::uint64_t seed, double level,
                      const std::function<double(const std::vector<double>&)>& statistic) {
  if (samples.size() < 2) throw ValidationError("bootstrap needs at least two samples");
  if (n_resamples == 0) throw ValidationError("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must be in (0, 1)");
  if (n_resamples < 100) log_warning("bootstrap with " + std::to_string(n_resamples) + " resamples is unreliable");
  std::mt19937_64 rng(seed);
  std::vector<double> stats;
  stats.reserve(n_resamples);
  std::vector<double> draw(samples.size());
  for (std::size_t b = 0; b < n_resamples; ++b) {
    for (auto& x : draw) x = samples[rng() % samples.size()];
    stats.push_back(statistic(draw));
  }
  std::sort(stats.begin(), stats.end());
  double alpha = (1.0 - level) / 2.0;
  return {quantile_sorted(stats, alpha), quantile_sorted(stats, 1.0 - alpha)};
}

// ------------------------------------------------------------ reports

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_p_value(double p) {
  if (p < 0.001) return "<0.001***";
  std::string s = fmt("%.3f", p);
  if (p < 0.01) return s + "**";
  if (p < 0.05) return s + "*";
  return s;
}

std::string winrate_table(const std::vector<WinRateRow>& rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  std::string out = pad("Model", w) + "  Win-rate  N\n";
  for (const auto& r : rows) {
    out += pad(r.label, w) + "  " + pad(fmt("%.2f", r.rate), 8) + "  " + std::to_string(r.comparisons) + "\n";
  }
  return out;
}

std::string ac1_table(const std::vector<AC1Row>& rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  std::string out = pad("Model", w) + "  AC1     CI Lower  CI Upper  p-value    PA     PE\n";
  for (const auto& r : rows) {
    const auto& a = r.result;
    out += pad(r.label, w) + "  " + pad(fmt("%.3f", a.ac1), 6) + "  " + pad(fmt("%.3f", a.ci_low), 8) + "  " +
           pad(fmt("%.3f", a.ci_high), 8) + "  " + pad(format_p_value(a.p_value), 9) + "  " +
           pad(fmt("%.3f", a.pa), 5) + "  " + fmt("%.3f", a.pe) + "\n";
  }
  return out;
}

}  // namespace alfa::stats
