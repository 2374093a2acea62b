#pragma once
// Independent reference implementations and scripted judges used as test
// oracles. Nothing here calls into the library's statistics or ranking code.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "alfa/attribute.hpp"
#include "alfa/corpus.hpp"
#include "alfa/llm.hpp"
#include "alfa/util.hpp"

namespace oracle {

using alfa::json;

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("alfa-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// ------------------------------------------------------------------ judges

// The "- **Question X:** text" lines of a judge prompt, in label order. Only
// the first block counts, so reprompts that replay the prompt are harmless.
inline std::vector<std::pair<char, std::string>> presented_questions(const std::string& prompt) {
  std::vector<std::pair<char, std::string>> out;
  const std::string marker = "- **Question ";
  std::size_t pos = 0;
  while ((pos = prompt.find(marker, pos)) != std::string::npos) {
    char label = prompt[pos + marker.size()];
    std::size_t start = pos + marker.size() + 5;  // "X:** "
    std::size_t end = prompt.find('\n', start);
    if (std::any_of(out.begin(), out.end(), [&](const auto& q) { return q.first == label; })) break;
    out.emplace_back(label, prompt.substr(start, end - start));
    pos = end;
  }
  return out;
}

inline std::string ranking_reply(const std::vector<char>& labels) {
  std::string r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) r += " > ";
    r += labels[i];
  }
  return json{{"ranking", r}, {"reasoning", "scripted"}}.dump();
}

// Judge that ranks presented questions by descending score; ties broken by
// label so the reply is always a strict order.
inline alfa::llm::MockBackend::Handler score_judge(std::function<double(const std::string&)> score) {
  return [score](const alfa::llm::CompletionRequest& req) {
    auto qs = presented_questions(req.joined_content());
    std::stable_sort(qs.begin(), qs.end(),
                     [&](const auto& a, const auto& b) { return score(a.second) > score(b.second); });
    std::vector<char> labels;
    for (auto& [l, _] : qs) labels.push_back(l);
    return ranking_reply(labels);
  };
}

inline alfa::llm::MockBackend::Handler positional_judge() {
  return [](const alfa::llm::CompletionRequest& req) {
    auto qs = presented_questions(req.joined_content());
    std::vector<char> labels;
    for (auto& [l, _] : qs) labels.push_back(l);
    return ranking_reply(labels);
  };
}

inline alfa::llm::MockBackend::Handler lexicographic_judge() {
  return [](const alfa::llm::CompletionRequest& req) {
    auto qs = presented_questions(req.joined_content());
    std::sort(qs.begin(), qs.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    std::vector<char> labels;
    for (auto& [l, _] : qs) labels.push_back(l);
    return ranking_reply(labels);
  };
}

// Perturbation mock: tags the original question with its direction.
inline constexpr const char* kEnhTag = "[better] ";
inline constexpr const char* kCorTag = "[worse] ";

inline std::string original_from_perturb_prompt(const std::string& prompt) {
  const std::string head = "***CLINICIAN RESPONSE***\n";
  auto s = prompt.find(head) + head.size();
  auto e = prompt.find("\n\n***INSTRUCTION***", s);
  return prompt.substr(s, e - s);
}

inline alfa::llm::MockBackend::Handler tagging_perturber() {
  return [](const alfa::llm::CompletionRequest& req) {
    const std::string& p = req.last_user_message();
    std::string q = original_from_perturb_prompt(p);
    for (auto a : {alfa::Attribute::clarity, alfa::Attribute::focus, alfa::Attribute::answerability,
                   alfa::Attribute::medical_accuracy, alfa::Attribute::diagnostic_relevance,
                   alfa::Attribute::avoid_ddx_bias, alfa::Attribute::coarse}) {
      const auto& r = alfa::rubric(a);
      if (p.find("so that it is " + r.enhance_phrase + " for the patient") != std::string::npos) return std::string(kEnhTag) + q;
      if (p.find("so that it is " + r.corrupt_phrase + " for the patient") != std::string::npos) return std::string(kCorTag) + q;
    }
    return std::string("unrecognised perturbation prompt");
  };
}

// enhanced > original > corrupted
inline double strict_order_score(const std::string& t) {
  if (t.rfind(kEnhTag, 0) == 0) return 2;
  if (t.rfind(kCorTag, 0) == 0) return 0;
  return 1;
}

// original > enhanced > corrupted: only the E-O comparison is inverted.
inline double eo_inverting_score(const std::string& t) {
  if (t.rfind(kEnhTag, 0) == 0) return 1;
  if (t.rfind(kCorTag, 0) == 0) return 0;
  return 2;
}

// --------------------------------------------------------------- statistics

// ratings[item][rater] = category index or -1 for missing.
using Ratings = std::vector<std::vector<int>>;

struct AgreementRef {
  double pa = 0, pe = 0, ac1 = 0;
};

// Gwet's AC1 by enumerating ordered rater pairs per item.
inline AgreementRef brute_ac1(const Ratings& r, int q) {
  double pa_sum = 0;
  int used = 0;
  std::vector<double> pi(q, 0.0);
  int rated = 0;
  for (const auto& item : r) {
    std::vector<int> present;
    for (int v : item)
      if (v >= 0) present.push_back(v);
    if (!present.empty()) {
      ++rated;
      for (int v : present) pi[v] += 1.0 / present.size();
    }
    if (present.size() < 2) continue;
    int agree = 0, pairs = 0;
    for (std::size_t a = 0; a < present.size(); ++a)
      for (std::size_t b = 0; b < present.size(); ++b) {
        if (a == b) continue;
        ++pairs;
        if (present[a] == present[b]) ++agree;
      }
    pa_sum += static_cast<double>(agree) / pairs;
    ++used;
  }
  AgreementRef out;
  out.pa = pa_sum / used;
  double s = 0;
  for (double& p : pi) {
    p /= rated;
    s += p * (1 - p);
  }
  out.pe = s / (q - 1);
  out.ac1 = (out.pa - out.pe) / (1 - out.pe);
  return out;
}

struct KappaRef {
  double kappa = 0, p_bar = 0, pe_bar = 0;
};

inline KappaRef brute_fleiss(const Ratings& r, int q) {
  double p_sum = 0;
  std::vector<double> pj(q, 0.0);
  double total = 0;
  for (const auto& item : r) {
    int agree = 0, pairs = 0;
    for (std::size_t a = 0; a < item.size(); ++a) {
      pj[item[a]] += 1;
      total += 1;
      for (std::size_t b = 0; b < item.size(); ++b) {
        if (a == b) continue;
        ++pairs;
        if (item[a] == item[b]) ++agree;
      }
    }
    p_sum += static_cast<double>(agree) / pairs;
  }
  KappaRef k;
  k.p_bar = p_sum / r.size();
  for (double p : pj) k.pe_bar += (p / total) * (p / total);
  k.kappa = (k.p_bar - k.pe_bar) / (1 - k.pe_bar);
  return k;
}

// Two raters, binary labels, n items: the (both-1, disagree) counts whose
// observed and chance agreement are closest to the targets.
struct BinaryConstruction {
  int both_one = 0, disagree = 0, both_zero = 0;
  double pa = 0, pe = 0;
};

inline BinaryConstruction construct_binary(double pa_target, double pe_target, int n = 100) {
  BinaryConstruction best;
  double best_err = 1e9;
  for (int b1 = 0; b1 <= n; ++b1)
    for (int d = 0; b1 + d <= n; ++d) {
      double pa = static_cast<double>(n - d) / n;
      double pi1 = (2.0 * b1 + d) / (2.0 * n);
      double pe = 2 * pi1 * (1 - pi1);
      double err = std::abs(pa - pa_target) + std::abs(pe - pe_target);
      if (err < best_err - 1e-12) {
        best_err = err;
        best = {b1, d, n - b1 - d, pa, pe};
      }
    }
  return best;
}

// Percent of items where a majority of raters place a above b (half credit
// for an even split).
inline double pair_counter(const std::vector<std::vector<std::vector<std::string>>>& rankings,
                           const std::string& a, const std::string& b) {
  double wins = 0;
  for (const auto& item : rankings) {
    int above = 0;
    for (const auto& r : item) {
      auto ia = std::find(r.begin(), r.end(), a) - r.begin();
      auto ib = std::find(r.begin(), r.end(), b) - r.begin();
      if (ia < ib) ++above;
    }
    int n = static_cast<int>(item.size());
    if (2 * above > n) wins += 1;
    else if (2 * above == n) wins += 0.5;
  }
  return 100.0 * wins / rankings.size();
}

// ----------------------------------------------------------------- corpora

// Questions spread over the 8 quality groups. Each post carries 1 or 2
// questions; conclusion and feedback are post-level, expertise per question.
inline std::vector<alfa::corpus::GroupedQuestion> synthetic_grouped(std::size_t n_questions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<alfa::corpus::GroupedQuestion> out;
  std::size_t post = 0;
  while (out.size() < n_questions) {
    ++post;
    bool concl = rng() % 2, fb = rng() % 2;
    std::size_t k = 1 + rng() % 2;
    for (std::size_t i = 0; i < k && out.size() < n_questions; ++i) {
      alfa::corpus::GroupedQuestion g;
      g.question.post_id = "p" + std::to_string(post);
      g.question.thread_id = "th" + std::to_string(post);
      g.question.question_id = g.question.thread_id + "-q" + std::to_string(i);
      g.question.question_text = "question " + std::to_string(out.size()) + "?";
      g.question.author_expert_verified = rng() % 2;
      g.group = {g.question.author_expert_verified, concl, fb};
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace oracle
