#include <set>

#include "doctest.h"
#include "alfa/error.hpp"
#include "alfa/synthesis.hpp"
#include "support/oracles.hpp"

using namespace alfa;
using namespace alfa::synthesis;

namespace {

corpus::QuestionRecord question(int i) {
  corpus::QuestionRecord q;
  q.question_id = "q" + std::to_string(i);
  q.thread_id = "t" + std::to_string(i);
  q.post_id = "p" + std::to_string(i);
  q.context = "Title " + std::to_string(i) + "\nMy knee hurts when I climb stairs.";
  q.question_text = "How long has your knee hurt (" + std::to_string(i) + ")?";
  return q;
}

void add_mock(llm::Gateway& g, std::shared_ptr<llm::MockBackend> m) {
  llm::EndpointConfig c;
  c.id = "gen";
  c.kind = "mock";
  g.add_endpoint(c, std::move(m));
}

}  // namespace

TEST_CASE("perturb returns the scripted rewrite") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  mock->enqueue("\"Is the pain sharp or dull?\"\n");
  add_mock(g, mock);
  auto v = perturb(question(1), Attribute::clarity, Direction::enhanced, g, {.endpoint = "gen"});
  CHECK(v.text == "Is the pain sharp or dull?");
  CHECK(v.attribute == Attribute::clarity);
  CHECK(v.direction == Direction::enhanced);
  CHECK(v.source_question_id == "q1");
  CHECK(v.generator_endpoint == "gen");
}

TEST_CASE("perturb rejects a rewrite identical to the source twice") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  auto q = question(2);
  mock->fallback([&](const llm::CompletionRequest&) { return q.question_text; });
  add_mock(g, mock);
  try {
    perturb(q, Attribute::focus, Direction::corrupted, g, {.endpoint = "gen"});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("degenerate variant") != std::string::npos);
  }
  CHECK(mock->calls() == 2);
}

TEST_CASE("perturb regenerates once after a degenerate rewrite") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  auto q = question(3);
  mock->enqueue(q.question_text).enqueue("Does the knee pain wake you at night?");
  add_mock(g, mock);
  auto v = perturb(q, Attribute::answerability, Direction::enhanced, g, {.endpoint = "gen"});
  CHECK(v.text == "Does the knee pain wake you at night?");
  CHECK(mock->calls() == 2);
}

TEST_CASE("perturbation prompt wording") {
  auto q = question(4);
  auto corrupt = perturbation_prompt(q, Attribute::clarity, Direction::corrupted);
  CHECK(corrupt.find("less clear/more ambiguous for the patient") != std::string::npos);
  CHECK(corrupt.find(q.question_text) != std::string::npos);
  CHECK(corrupt.find("My knee hurts when I climb stairs.") != std::string::npos);
  auto enhance = perturbation_prompt(q, Attribute::clarity, Direction::enhanced);
  CHECK(enhance.find("less clear/more ambiguous") == std::string::npos);
  CHECK(enhance != corrupt);
}

TEST_CASE("coarse perturbation can be disabled") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  mock->echo();
  add_mock(g, mock);
  PerturbOptions o{.endpoint = "gen"};
  o.allow_coarse = false;
  CHECK_THROWS_AS(perturb(question(5), Attribute::coarse, Direction::enhanced, g, o), ValidationError);
}

TEST_CASE("clean_generation strips whitespace and one layer of quotes") {
  CHECK(clean_generation("  \"Any fever?\"  ") == "Any fever?");
  CHECK(clean_generation("Any fever?\n") == "Any fever?");
}

TEST_CASE("build_pairs orientation and cardinality") {
  auto q = question(6);
  VariantQuestion e{"v1", q.question_id, Attribute::focus, Direction::enhanced, "E text", "gen"};
  VariantQuestion c{"v2", q.question_id, Attribute::focus, Direction::corrupted, "C text", "gen"};
  auto pairs = build_pairs(q, e, c);
  std::set<PairType> types;
  for (auto& p : pairs) {
    types.insert(p.pair_type);
    CHECK(p.chosen != p.rejected);
    CHECK_FALSE(p.kept.has_value());
    CHECK(p.attribute == Attribute::focus);
    CHECK(p.context == q.context);
  }
  CHECK(types.size() == 3);
  CHECK(pairs[0].pair_type == PairType::EO);
  CHECK(pairs[0].chosen == "E text");
  CHECK(pairs[0].rejected == q.question_text);
  CHECK(pairs[1].pair_type == PairType::EC);
  CHECK(pairs[1].chosen == "E text");
  CHECK(pairs[1].rejected == "C text");
  CHECK(pairs[2].pair_type == PairType::OC);
  CHECK(pairs[2].chosen == q.question_text);
  CHECK(pairs[2].rejected == "C text");

  VariantQuestion other{"v3", q.question_id, Attribute::clarity, Direction::corrupted, "C2", "gen"};
  CHECK_THROWS_AS(build_pairs(q, e, other), ValidationError);
}

TEST_CASE("pair count is questions x attributes x 3") {
  for (auto [n, attrs] : std::vector<std::pair<int, std::string>>{{2, "all"}, {10, "coarse"}, {3, "clinical"}, {7, "clarity"}}) {
    CAPTURE(attrs);
    llm::Gateway g;
    auto mock = std::make_shared<llm::MockBackend>();
    mock->fallback(oracle::tagging_perturber());
    add_mock(g, mock);
    std::vector<corpus::QuestionRecord> qs;
    for (int i = 0; i < n; ++i) qs.push_back(question(i));
    auto set = parse_attribute_set(attrs);
    auto ps = synthesize_corpus(qs, set, g, {.perturb = {.endpoint = "gen"}, .workers = 3});
    CHECK(ps.pairs.size() == static_cast<std::size_t>(n) * set.size() * 3);
    CHECK(ps.variants.size() == static_cast<std::size_t>(n) * set.size() * 2);
    CHECK(ps.failures.empty());
  }
}

TEST_CASE("coarse synthesis tags every pair coarse") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  mock->fallback(oracle::tagging_perturber());
  add_mock(g, mock);
  std::vector<corpus::QuestionRecord> qs;
  for (int i = 0; i < 10; ++i) qs.push_back(question(i));
  auto ps = synthesize_corpus(qs, {Attribute::coarse}, g, {.perturb = {.endpoint = "gen"}});
  REQUIRE(ps.pairs.size() == 30);
  for (auto& p : ps.pairs) CHECK(p.attribute == Attribute::coarse);
}

TEST_CASE("variants never leak across attributes") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  // Rewrites mention the attribute they were produced for.
  mock->fallback([](const llm::CompletionRequest& r) {
    const auto& p = r.last_user_message();
    for (auto a : kFineAttributes) {
      if (p.find(rubric(a).definition) != std::string::npos)
        return oracle::tagging_perturber()(r) + " /" + std::string(to_string(a));
    }
    return std::string("?");
  });
  add_mock(g, mock);
  auto ps = synthesize_corpus({question(1), question(2)}, parse_attribute_set("all"), g, {.perturb = {.endpoint = "gen"}});
  REQUIRE(ps.pairs.size() == 36);
  for (auto& p : ps.pairs) {
    std::string tag = " /" + std::string(to_string(p.attribute));
    for (const auto* t : {&p.chosen, &p.rejected}) {
      if (t->rfind("[", 0) == 0) CHECK(t->substr(t->size() - tag.size()) == tag);
    }
  }
}

TEST_CASE("failures are collected and the rest of the run continues") {
  llm::Gateway g;
  auto mock = std::make_shared<llm::MockBackend>();
  mock->fallback([](const llm::CompletionRequest& r) {
    if (r.last_user_message().find("(1)?") != std::string::npos) return std::string("");
    return oracle::tagging_perturber()(r);
  });
  add_mock(g, mock);
  auto ps = synthesize_corpus({question(0), question(1), question(2)}, {Attribute::clarity}, g, {.perturb = {.endpoint = "gen"}});
  CHECK(ps.pairs.size() == 6);
  CHECK(ps.failures.size() == 2);
  for (auto& f : ps.failures) CHECK(f.question_id == "q1");
}

TEST_CASE("rerun with a warm cache reproduces the pair set without backend calls") {
  oracle::TempDir dir("synth");
  auto qs = std::vector<corpus::QuestionRecord>{question(0), question(1), question(2)};
  auto run = [&](std::shared_ptr<llm::MockBackend> mock) {
    llm::Gateway g(dir.path / "cache");
    add_mock(g, mock);
    SynthesisOptions o{.perturb = {.endpoint = "gen"}};
    o.manifest_path = dir.path / "manifest.json";
    return synthesize_corpus(qs, parse_attribute_set("general"), g, o);
  };
  auto m1 = std::make_shared<llm::MockBackend>();
  m1->fallback(oracle::tagging_perturber());
  auto first = run(m1);
  auto m2 = std::make_shared<llm::MockBackend>();
  m2->fallback(oracle::tagging_perturber());
  auto second = run(m2);
  CHECK(m2->calls() == 0);
  REQUIRE(first.pairs.size() == second.pairs.size());
  for (std::size_t i = 0; i < first.pairs.size(); ++i) CHECK(first.pairs[i].to_json() == second.pairs[i].to_json());
  auto manifest = json::parse(read_file(dir.path / "manifest.json"));
  CHECK(manifest.dump().find("clarity") != std::string::npos);
}

TEST_CASE("pairs survive a JSONL round trip") {
  oracle::TempDir dir("pairs");
  auto q = question(9);
  VariantQuestion e{"v1", q.question_id, Attribute::avoid_ddx_bias, Direction::enhanced, "E", "gen"};
  VariantQuestion c{"v2", q.question_id, Attribute::avoid_ddx_bias, Direction::corrupted, "C", "gen"};
  auto arr = build_pairs(q, e, c);
  arr[1].kept = false;
  std::vector<PreferencePair> pairs(arr.begin(), arr.end());
  write_pairs(dir.path / "p.jsonl", pairs);
  auto back = read_pairs(dir.path / "p.jsonl");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back[i].to_json() == pairs[i].to_json());
}
