#include <random>

#include "doctest.h"
#include "alfa/error.hpp"
#include "alfa/judge.hpp"
#include "support/oracles.hpp"

using namespace alfa;
using namespace alfa::judge;
using synthesis::PairType;
using synthesis::PreferencePair;

namespace {

void add_judge(llm::Gateway& g, llm::MockBackend::Handler h, std::shared_ptr<llm::MockBackend>* out = nullptr) {
  auto m = std::make_shared<llm::MockBackend>();
  m->fallback(std::move(h));
  llm::EndpointConfig c;
  c.id = "judge";
  c.kind = "mock";
  g.add_endpoint(c, m);
  if (out) *out = m;
}

JudgeOptions opts() {
  JudgeOptions o;
  o.endpoint = "judge";
  return o;
}

std::vector<PreferencePair> tagged_pairs(int questions, const std::vector<Attribute>& attrs) {
  std::vector<PreferencePair> out;
  for (int i = 0; i < questions; ++i) {
    corpus::QuestionRecord q;
    q.question_id = "q" + std::to_string(i);
    q.context = "context " + std::to_string(i);
    q.question_text = "Original question number " + std::to_string(i) + "?";
    for (auto a : attrs) {
      synthesis::VariantQuestion e{"e", q.question_id, a, Direction::enhanced, oracle::kEnhTag + q.question_text, "g"};
      synthesis::VariantQuestion c{"c", q.question_id, a, Direction::corrupted, oracle::kCorTag + q.question_text, "g"};
      for (auto& p : synthesis::build_pairs(q, e, c)) out.push_back(p);
    }
  }
  return out;
}

JudgeVerdict verdict(const std::string& dim, std::vector<std::string> presented, std::vector<char> ranking) {
  JudgeVerdict v;
  v.dimension = dim;
  v.presented = std::move(presented);
  v.ranking = std::move(ranking);
  return v;
}

}  // namespace

TEST_CASE("ranking strings") {
  CHECK(parse_ranking("A > B > C", "ABC") == std::vector<char>{'A', 'B', 'C'});
  CHECK(parse_ranking("C>A>B", "ABC") == std::vector<char>{'C', 'A', 'B'});
  CHECK_THROWS_AS(parse_ranking("A = B > C", "ABC"), ParseError);
  CHECK_THROWS_AS(parse_ranking("A, B > C", "ABC"), ParseError);
  CHECK_THROWS_AS(parse_ranking("A > B", "ABC"), ParseError);
  CHECK_THROWS_AS(parse_ranking("A > A > C", "ABC"), ParseError);
  CHECK_THROWS_AS(parse_ranking("A > D > C", "ABC"), ParseError);
}

TEST_CASE("judge JSON with a dimension key") {
  auto v = parse_judge_response(
      R"(Here you go: {"clarity": {"ranking": "A > B > C", "reasoning": "A is unambiguous"}})", "clarity",
      {"x", "y", "z"});
  CHECK(v.ranking == std::vector<char>{'A', 'B', 'C'});
  CHECK(v.reasoning == "A is unambiguous");
  CHECK(v.ranked_ids() == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("lexicographic judge is consistent across presentation orders") {
  llm::Gateway g;
  add_judge(g, oracle::lexicographic_judge());
  auto vs = compare_candidates("ctx", {{"one", "b question"}, {"two", "a question"}}, "clarity", {}, g, opts());
  REQUIRE(vs.size() == 2);
  CHECK(vs[0].presentation_order() != vs[1].presentation_order());
  CHECK(vs[0].ranked_ids() == vs[1].ranked_ids());
  CHECK(vs[0].ranked_ids().front() == "two");

  auto triple = compare_candidates("ctx", {{"x", "c"}, {"y", "a"}, {"z", "b"}}, "focus", {}, g, opts());
  REQUIRE(triple.size() == 2);
  for (auto& v : triple) CHECK(v.ranked_ids() == std::vector<std::string>{"y", "z", "x"});
}

TEST_CASE("positional judge splits across the two orders") {
  llm::Gateway g;
  add_judge(g, oracle::positional_judge());
  auto vs = compare_candidates("ctx", {{"one", "first"}, {"two", "second"}}, "clarity", {}, g, opts());
  REQUIRE(vs.size() == 2);
  CHECK(vs[0].ranked_ids().front() != vs[1].ranked_ids().front());

  PreferencePair p;
  p.pair_type = PairType::EO;
  p.attribute = Attribute::clarity;
  auto ids = [&](const JudgeVerdict& v) {
    JudgeVerdict w = v;
    for (auto& id : w.presented) id = id == "one" ? "enhanced" : "original";
    return w;
  };
  CHECK_FALSE(verify_direction(p, {ids(vs[0]), ids(vs[1])}));
  CHECK(p.kept == std::optional<bool>(false));
}

TEST_CASE("unparseable judge output is reprompted once") {
  SUBCASE("recovers") {
    llm::Gateway g;
    std::shared_ptr<llm::MockBackend> m;
    add_judge(g, oracle::lexicographic_judge(), &m);
    m->enqueue("I think the first one is better.");
    auto vs = compare_candidates("ctx", {{"a", "x"}, {"b", "y"}}, "clarity", {}, g, opts());
    CHECK(vs.size() == 2);
    CHECK(m->calls() == 3);
    auto hist = m->history();
    CHECK(hist[1].messages.size() == 4);
  }
  SUBCASE("gives up") {
    llm::Gateway g;
    add_judge(g, [](const llm::CompletionRequest&) { return std::string("no idea"); });
    CHECK_THROWS_AS(compare_candidates("ctx", {{"a", "x"}, {"b", "y"}}, "clarity", {}, g, opts()), ParseError);
  }
  SUBCASE("ties are parse errors") {
    llm::Gateway g;
    add_judge(g, [](const llm::CompletionRequest&) { return std::string(R"({"ranking": "A = B"})"); });
    CHECK_THROWS_AS(compare_candidates("ctx", {{"a", "x"}, {"b", "y"}}, "clarity", {}, g, opts()), ParseError);
  }
}

TEST_CASE("identical candidates are refused unless allowed") {
  llm::Gateway g;
  add_judge(g, oracle::lexicographic_judge());
  CHECK_THROWS_AS(compare_candidates("ctx", {{"a", "same"}, {"b", "same"}}, "clarity", {}, g, opts()), ValidationError);
  auto o = opts();
  o.allow_identical = true;
  CHECK(compare_candidates("ctx", {{"a", "same"}, {"b", "same"}}, "clarity", {}, g, o).size() == 2);
}

TEST_CASE("supplementary information reaches the judge prompt") {
  llm::Gateway g;
  std::shared_ptr<llm::MockBackend> m;
  add_judge(g, oracle::lexicographic_judge(), &m);
  AuxInfo aux{"migraine", "Probably a migraine; try a headache diary."};
  compare_candidates("the context", {{"a", "x"}, {"b", "y"}}, "medical_accuracy", aux, g, opts());
  auto prompt = m->history().at(0).joined_content();
  CHECK(prompt.find("Final diagnosis: migraine") != std::string::npos);
  CHECK(prompt.find("Probably a migraine") != std::string::npos);
  CHECK(prompt.find("the context") != std::string::npos);
}

TEST_CASE("verify_direction needs unanimity") {
  PreferencePair p;
  p.pair_id = "p";
  p.pair_type = PairType::EC;
  p.attribute = Attribute::focus;
  auto good = verdict("focus", {"enhanced", "corrupted"}, {'A', 'B'});
  auto good2 = verdict("focus", {"corrupted", "enhanced"}, {'B', 'A'});
  auto bad = verdict("focus", {"corrupted", "enhanced"}, {'A', 'B'});
  CHECK(verify_direction(p, {good, good2}));
  CHECK(*p.kept);
  CHECK_FALSE(verify_direction(p, {good, bad}));
  // Adding verdicts never turns a discard into a keep.
  CHECK_FALSE(verify_direction(p, {good, bad, good2}));
  // Other dimensions are ignored; none at all is an error.
  CHECK(verify_direction(p, {good, verdict("clarity", {"corrupted", "enhanced"}, {'A', 'B'})}));
  CHECK_THROWS_AS(verify_direction(p, {verdict("clarity", {"enhanced", "corrupted"}, {'A', 'B'})}), ValidationError);
}

TEST_CASE("strict-order judge keeps everything, EO-inverting judge drops exactly EO") {
  auto attrs = parse_attribute_set("all");
  for (auto mode : {JudgeMode::triple, JudgeMode::pairwise}) {
    CAPTURE(static_cast<int>(mode));
    {
      llm::Gateway g;
      add_judge(g, oracle::score_judge(oracle::strict_order_score));
      auto pairs = tagged_pairs(5, attrs);
      FilterOptions fo{.judge = opts(), .mode = mode, .workers = 4};
      auto summary = judge_pairset(pairs, {}, g, fo);
      CHECK(summary.failures.empty());
      auto r = retention_report(pairs);
      CHECK(r.kept == r.total);
      for (auto t : synthesis::kPairTypes) CHECK(r.pooled(t).kept_fraction() == 1.0);
    }
    {
      llm::Gateway g;
      add_judge(g, oracle::score_judge(oracle::eo_inverting_score));
      auto pairs = tagged_pairs(5, attrs);
      judge_pairset(pairs, {}, g, {.judge = opts(), .mode = mode, .workers = 4});
      auto r = retention_report(pairs);
      CHECK(r.pooled(PairType::EO).kept_fraction() == 0.0);
      CHECK(r.pooled(PairType::EC).kept_fraction() == 1.0);
      CHECK(r.pooled(PairType::OC).kept_fraction() == 1.0);
    }
  }
}

TEST_CASE("triple mode uses one call per order per group") {
  llm::Gateway g;
  std::shared_ptr<llm::MockBackend> m;
  add_judge(g, oracle::score_judge(oracle::strict_order_score), &m);
  auto pairs = tagged_pairs(4, {Attribute::clarity, Attribute::focus});
  auto s = judge_pairset(pairs, {}, g, {.judge = opts()});
  CHECK(s.judge_calls == 4 * 2 * 2);
  CHECK(m->calls() == 16);
  for (auto& p : pairs) CHECK(p.verdicts.size() == 2);
}

TEST_CASE("noisy judges keep more enhanced-corrupted pairs than adjacent ones") {
  // Score plus a noise term fixed per (text, prompt); E and C sit two units apart.
  auto noisy = [](const llm::CompletionRequest& req) {
    auto qs = oracle::presented_questions(req.joined_content());
    std::vector<std::pair<double, char>> scored;
    for (auto& [label, text] : qs) {
      std::uint64_t h = std::stoull(sha256_hex(text + "|" + std::string(1, label)).substr(0, 12), nullptr, 16);
      std::mt19937_64 rng(h);
      std::normal_distribution<double> n(0.0, 0.9);
      scored.push_back({oracle::strict_order_score(text) + n(rng), label});
    }
    std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
    std::vector<char> labels;
    for (auto& s : scored) labels.push_back(s.second);
    return oracle::ranking_reply(labels);
  };
  llm::Gateway g;
  add_judge(g, noisy);
  auto pairs = tagged_pairs(150, {Attribute::clarity});
  judge_pairset(pairs, {}, g, {.judge = opts(), .mode = JudgeMode::pairwise});
  auto r = retention_report(pairs);
  double ec = r.pooled(PairType::EC).kept_fraction();
  CHECK(ec > r.pooled(PairType::EO).kept_fraction());
  CHECK(ec > r.pooled(PairType::OC).kept_fraction());
}

TEST_CASE("retention arithmetic") {
  std::vector<PreferencePair> pairs(10);
  for (int i = 0; i < 10; ++i) {
    pairs[i].pair_id = std::to_string(i);
    pairs[i].kept = i != 3;
  }
  auto r = retention_report(pairs);
  CHECK(r.kept == 9);
  CHECK(format_percent(r.kept_fraction()) == "90.0%");
  CHECK(r.to_table().find("90.0") != std::string::npos);

  pairs[0].kept.reset();
  pairs[5].kept.reset();
  try {
    retention_report(pairs);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("2 pair") != std::string::npos);
  }
}

// Per-cell retention (E-C, E-O, O-C) from the filtering table.
struct TableRow {
  Attribute attr;
  double ec, eo, oc;
  int train;
};
static const TableRow kTableRows[] = {
    {Attribute::medical_accuracy, 99.3, 98.3, 70.9, 11994},
    {Attribute::answerability, 99.6, 98.3, 69.4, 11933},
    {Attribute::avoid_ddx_bias, 99.8, 86.9, 94.5, 12548},
    {Attribute::clarity, 85.8, 73.4, 70.3, 10250},
    {Attribute::focus, 92.0, 72.8, 75.3, 10660},
    {Attribute::diagnostic_relevance, 99.2, 73.0, 91.2, 11756},
};

TEST_CASE("replayed per-cell retentions give the expected global filter rate") {
  const int n = 1000;
  std::vector<PreferencePair> pairs;
  for (const auto& row : kTableRows) {
    for (auto [type, pct] : {std::pair{PairType::EC, row.ec}, {PairType::EO, row.eo}, {PairType::OC, row.oc}}) {
      int keep = static_cast<int>(std::lround(pct * n / 100.0));
      auto [chosen, rejected] = synthesis::member_roles(type);
      for (int i = 0; i < n; ++i) {
        PreferencePair p;
        p.pair_id = std::string(to_string(row.attr)) + std::to_string(i);
        p.attribute = row.attr;
        p.pair_type = type;
        auto dim = dimension_name(row.attr);
        std::vector<std::string> shown = {std::string(chosen), std::string(rejected)};
        char first = i < keep ? 'A' : 'B';
        char second = first == 'A' ? 'B' : 'A';
        verify_direction(p, {verdict(dim, shown, {first, second})});
        pairs.push_back(p);
      }
    }
  }
  auto r = retention_report(pairs);
  CHECK(std::abs(100.0 * (1.0 - r.kept_fraction()) - 13.9) <= 0.2);
  CHECK(format_percent(r.kept_fraction()) == "86.1%");
}

TEST_CASE("predicted kept count for the accuracy attribute") {
  double k = predicted_kept(4463, 99.3, 98.3, 70.9);
  CHECK(std::abs(k - 11994) / 11994 <= 0.015);
}

TEST_CASE("verdicts survive JSON round trips") {
  auto v = verdict("overall", {"b", "a", "c"}, {'C', 'A', 'B'});
  v.reasoning = "r";
  v.judge_endpoint = "j";
  auto back = JudgeVerdict::from_json(v.to_json());
  CHECK(back.ranked_ids() == std::vector<std::string>{"c", "b", "a"});
  CHECK(back.presentation_order() == v.presentation_order());
  CHECK(back.rank_of("a") == std::optional<std::size_t>(2));
  CHECK_FALSE(back.rank_of("zzz").has_value());
}
