#include <map>

#include "doctest.h"
#include "alfa/error.hpp"
#include "alfa/mediq.hpp"
#include "alfa/prompts.hpp"
#include "support/oracles.hpp"
#include "support/scripted_mediq.hpp"

using namespace alfa;
using namespace alfa::mediq;

using namespace oracle;

TEST_CASE("label normalization") {
  CHECK(normalize_label("B") == std::optional<char>('B'));
  CHECK(normalize_label("[b]") == std::optional<char>('B'));
  CHECK(normalize_label("Option C") == std::optional<char>('C'));
  CHECK(normalize_label("(d)") == std::optional<char>('D'));
  CHECK_FALSE(normalize_label("E").has_value());
  CHECK_FALSE(normalize_label("AB").has_value());
}

TEST_CASE("scenario validation and file keys") {
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  CHECK_NOTHROW(s.validate());
  auto j = s.to_json();
  CHECK(j["question"] == s.inquiry);
  CHECK(j["optionB"] == "melanoma");
  CHECK(j["correct_answer"] == "B");
  auto back = ScenarioMCQ::from_json(j);
  CHECK(back.options == s.options);
  CHECK(back.correct == 'B');
  s.options[2] = "eczema";
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.options[2] = "";
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("shuffling moves the correct label with its option") {
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  std::map<char, int> seen;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    auto t = s;
    shuffle_options(t, seed);
    CHECK(t.option(t.correct) == "melanoma");
    CHECK(t.shuffle_seed == seed);
    ++seen[t.correct];
  }
  CHECK(seen.size() == 4);
}

namespace {

corpus::ThreadRecord mcq_thread() {
  corpus::ThreadRecord t;
  t.thread_id = "th1";
  t.post_id = "p1";
  t.title = "Rash after hiking";
  t.post_body = "I have a red ring on my leg after a hike. What could it be?";
  t.turns = {{corpus::AuthorRole::responder, true, "Did you notice a tick?"},
             {corpus::AuthorRole::patient, false, "Yes, last week."},
             {corpus::AuthorRole::responder, true, "This looks like Lyme disease."}};
  return t;
}

corpus::ParsedThread mcq_parsed(bool with_conclusion = true) {
  corpus::ParsedThread p;
  p.thread_id = "th1";
  if (with_conclusion) p.conclusion = "This looks like Lyme disease.";
  return p;
}

}  // namespace

TEST_CASE("MCQ construction from a scripted chain") {
  llm::Gateway g;
  auto m = std::make_shared<llm::MockBackend>();
  m->enqueue("A hiker reports a red ring-shaped rash on the leg.");
  m->enqueue(R"({"inquiry": "What could the rash be?", "conclusion": "Lyme disease"})");
  m->enqueue(R"({"question": "What is the most likely cause of the rash?", "optionA": "Contact dermatitis",
                 "optionB": "Lyme disease", "optionC": "Ringworm", "optionD": "Cellulitis", "correct_answer": "B"})");
  add(g, "builder", m);
  auto s = build_mcq_task(mcq_thread(), mcq_parsed(), g, {.endpoint = "builder", .seed = 4});
  CHECK(m->calls() == 3);
  CHECK(s.scenario_id == "th1");
  CHECK(s.initial_info == "A hiker reports a red ring-shaped rash on the leg.");
  CHECK(s.inquiry == "What is the most likely cause of the rash?");
  CHECK(s.option(s.correct) == "Lyme disease");
  CHECK(s.hidden_record.find("Did you notice a tick?") != std::string::npos);
  auto mcq_prompt = m->history().at(2).joined_content();
  CHECK(mcq_prompt.find("parse the patient's inquiry into a multiple choice question") != std::string::npos);
  CHECK(mcq_prompt.find("do a round of revision") != std::string::npos);
}

TEST_CASE("MCQ construction guards") {
  SUBCASE("label outside A-D") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    m->enqueue("info").enqueue(R"({"inquiry": "q", "conclusion": "c"})");
    m->enqueue(R"({"question": "q", "optionA": "a", "optionB": "b", "optionC": "c", "optionD": "d", "correct_answer": "E"})");
    add(g, "builder", m);
    try {
      build_mcq_task(mcq_thread(), mcq_parsed(), g, {.endpoint = "builder"});
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("'E'") != std::string::npos);
    }
  }
  SUBCASE("duplicate options") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    m->enqueue("info").enqueue(R"({"inquiry": "q", "conclusion": "c"})");
    m->enqueue(R"({"question": "q", "optionA": "a", "optionB": "a", "optionC": "c", "optionD": "d", "correct_answer": "A"})");
    add(g, "builder", m);
    CHECK_THROWS_AS(build_mcq_task(mcq_thread(), mcq_parsed(), g, {.endpoint = "builder"}), ValidationError);
  }
  SUBCASE("unparseable JSON after one reprompt") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    m->enqueue("info").enqueue("not json").enqueue("still not json");
    add(g, "builder", m);
    CHECK_THROWS_AS(build_mcq_task(mcq_thread(), mcq_parsed(), g, {.endpoint = "builder"}), ParseError);
    CHECK(m->calls() == 3);
  }
  SUBCASE("no conclusion") {
    llm::Gateway g;
    add(g, "builder", std::make_shared<llm::MockBackend>());
    CHECK_THROWS_AS(build_mcq_task(mcq_thread(), mcq_parsed(false), g, {.endpoint = "builder"}), ValidationError);
  }
}

TEST_CASE("patient answers are grounded in the record") {
  llm::Gateway g;
  auto cfg = std::make_shared<Scripted>();
  add(g, "expert", scripted_backend(cfg, "biopsy"));
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  CHECK(patient_answer(s, "What did the biopsy show?", g, params()) == "The biopsy showed melanoma.");
  CHECK(patient_answer(s, "Do you smoke?", g, params()) == prompts::kCannotAnswer);
  CHECK_THROWS_AS(patient_answer(s, "   ", g, params()), ValidationError);
  for (auto q : {"Any itching?", "What colour is it?", "Fever lately?"}) {
    auto a = patient_answer(s, q, g, params());
    bool grounded = a == prompts::kCannotAnswer || s.hidden_record.find(a.substr(0, a.size() - 1)) != std::string::npos;
    CHECK_MESSAGE(grounded, a);
  }
}

TEST_CASE("abstention thresholds") {
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  EpisodeState st;
  SUBCASE("confident at turn 0 answers without asking") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    m->on("How confident", R"({"rationale": "obvious", "confidence": 5})").on("Choose the single best option", R"({"answer": "B"})");
    add(g, "expert", m);
    auto r = run_episode(s, kExpert, params(), g);
    CHECK(r.turns_used == 0);
    CHECK(r.correct);
    CHECK(r.abstention_trace == std::vector<int>{5});
  }
  SUBCASE("boundary with a lowered threshold") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    m->on("How confident", R"({"rationale": "fair", "confidence": 3})");
    add(g, "expert", m);
    auto p = params();
    CHECK(abstain_decision(s, st, g, "expert", p).action == Action::ask);
    p.threshold = 3;
    auto d = abstain_decision(s, st, g, "expert", p);
    CHECK(d.action == Action::answer);
    CHECK(d.confidence == 3);
    CHECK(d.rationale == "fair");
  }
  SUBCASE("unreadable confidence counts as the minimum") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    m->on("How confident", "I am not sure");
    add(g, "expert", m);
    auto d = abstain_decision(s, st, g, "expert", params());
    CHECK_FALSE(d.parsed);
    CHECK(d.confidence == 1);
    CHECK(d.action == Action::ask);
    CHECK(m->calls() == 2);
  }
  SUBCASE("at the turn limit no call is made") {
    llm::Gateway g;
    auto m = std::make_shared<llm::MockBackend>();
    add(g, "expert", m);
    st.turn = 15;
    CHECK(abstain_decision(s, st, g, "expert", params()).action == Action::answer);
    CHECK(m->calls() == 0);
  }
}

TEST_CASE("a never-confident expert is stopped at the interaction limit") {
  llm::Gateway g;
  auto cfg = std::make_shared<Scripted>();
  cfg->confident_after = 1000;
  add(g, "expert", scripted_backend(cfg, "biopsy"));
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  auto r = run_episode(s, kExpert, params(), g);
  CHECK(r.turns_used == 15);
  CHECK(r.abstention_trace.size() == 15);
  int asks = 0;
  for (auto& e : r.transcript) asks += e["event"] == "ask";
  CHECK(asks == 15);
  CHECK(r.transcript[r.transcript.size() - 2]["event"] == "forced_answer");
  CHECK(r.transcript.back()["event"] == "decision");
}

TEST_CASE("scripted oracle episode needs exactly one question") {
  llm::Gateway g;
  auto cfg = std::make_shared<Scripted>();
  add(g, "expert", scripted_backend(cfg, "biopsy"));
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  auto r = run_episode(s, kExpert, params(), g);
  CHECK(r.correct);
  CHECK(r.chosen == 'B');
  CHECK(r.turns_used == 1);
  CHECK(r.abstention_trace == std::vector<int>{1, 5});
  CHECK(cfg->patient_calls == 1);
}

TEST_CASE("invalid decisions are flagged and scored wrong") {
  llm::Gateway g;
  auto cfg = std::make_shared<Scripted>();
  cfg->decide = false;
  add(g, "expert", scripted_backend(cfg, "biopsy"));
  auto s = scenario("s", "biopsy", "melanoma", {"eczema", "melanoma", "a wart", "psoriasis"}, 'B');
  auto r = run_episode(s, kExpert, params(), g);
  CHECK(r.flagged);
  CHECK_FALSE(r.correct);
  CHECK(r.chosen == '?');
}


TEST_CASE("benchmark accuracy, persistence and order invariance") {
  oracle::TempDir dir("bench");
  auto scenarios = four_scenarios();
  scenarios[3].hidden_record = "Title: ankle\nPost: My ankle is swollen.";
  auto cfg = std::make_shared<Scripted>();
  cfg->confident_after = 1;
  auto run = [&](std::vector<ScenarioMCQ> sc, std::shared_ptr<llm::MockBackend> m, bool persist) {
    llm::Gateway g(dir.path / "cache");
    add(g, "expert", m);
    std::optional<std::filesystem::path> out;
    if (persist) out = dir.path / "bench";
    return run_benchmark(sc, kExpert, params(), g, out, 3);
  };
  // The expert asks about each test keyword in turn.
  auto m1 = std::make_shared<llm::MockBackend>();
  {
    auto base = scripted_backend(cfg, "x");
    m1->on("Ask the patient exactly one follow-up question", [](const llm::CompletionRequest& r) {
      auto history = r.last_user_message();
      for (auto k : {"biopsy", "scan", "culture", "xray"}) {
        if (history.find(std::string("the ") + k + " show?") == std::string::npos) return "What did the " + std::string(k) + " show?";
      }
      return std::string("Anything else?");
    });
    m1->fallback([base](const llm::CompletionRequest& r) { return base->send(r).text; });
  }
  auto first = run(scenarios, m1, true);
  CHECK(first.accuracy == doctest::Approx(75.0));
  CHECK(first.correct == 3);
  CHECK(first.completed == 4);
  CHECK(std::filesystem::exists(dir.path / "bench" / "summary.json"));

  // Persisted episodes are reused outright.
  auto idle = std::make_shared<llm::MockBackend>();
  auto second = run(scenarios, idle, true);
  CHECK(idle->calls() == 0);
  CHECK(second.accuracy == first.accuracy);
  for (std::size_t i = 0; i < 4; ++i) CHECK(second.results[i].to_json() == first.results[i].to_json());

  // Warm cache without persisted episodes gives the same numbers too.
  auto again = std::make_shared<llm::MockBackend>();
  auto third = run(scenarios, again, false);
  CHECK(again->calls() == 0);
  CHECK(third.accuracy == first.accuracy);

  auto reversed = scenarios;
  std::reverse(reversed.begin(), reversed.end());
  auto fourth = run(reversed, again, false);
  CHECK(fourth.accuracy == first.accuracy);
  CHECK(fourth.results.front().scenario_id == "s4");
}

TEST_CASE("an always-confident expert with a correct decision module scores 100") {
  llm::Gateway g;
  auto m = std::make_shared<llm::MockBackend>();
  m->on("How confident", R"({"rationale": "sure", "confidence": 5})");
  auto scenarios = four_scenarios();
  m->on("Choose the single best option", [scenarios](const llm::CompletionRequest& r) {
    for (auto& s : scenarios)
      if (r.last_user_message().find(s.options[0]) != std::string::npos) return std::string(1, s.correct);
    return std::string("A");
  });
  add(g, "expert", m);
  auto res = run_benchmark(scenarios, kExpert, params(), g);
  CHECK(res.accuracy == 100.0);
  for (auto& r : res.results) CHECK(r.turns_used == 0);
}

TEST_CASE("benchmark needs scenarios and records episode failures") {
  llm::Gateway g;
  auto m = std::make_shared<llm::MockBackend>();
  m->on("How confident", R"({"confidence": 5})").on("Choose", R"({"answer": "A"})");
  add(g, "expert", m);
  CHECK_THROWS_AS(run_benchmark({}, kExpert, params(), g), ValidationError);
  auto sc = four_scenarios();
  sc[1].options[1] = sc[1].options[0];
  auto res = run_benchmark(sc, kExpert, params(), g);
  CHECK(res.excluded == 1);
  CHECK(res.completed == 3);
  CHECK(res.failures.size() == 1);
}

TEST_CASE("scenario files round trip") {
  oracle::TempDir dir("scen");
  auto sc = four_scenarios();
  write_scenarios(dir.path / "s.jsonl", sc);
  auto back = read_scenarios(dir.path / "s.jsonl");
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back[i].to_json() == sc[i].to_json());
}

TEST_CASE("history rendering") {
  CHECK(render_history({}) == "(no questions asked yet)");
  CHECK(render_history({{"Any fever?", "No."}}) == "Doctor: Any fever?\nPatient: No.");
}
