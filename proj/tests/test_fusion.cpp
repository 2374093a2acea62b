#include <cstring>
#include <random>
#include <set>

#include "doctest.h"
#include "alfa/error.hpp"
#include "alfa/fusion.hpp"
#include "support/oracles.hpp"

using namespace alfa;
using namespace alfa::fusion;
using synthesis::PairType;
using synthesis::PreferencePair;

namespace {

// 2 questions x 6 attributes x 3 pair types; pair index % 6 == 5 is dropped
// (6 of 36), so 30 are kept.
std::vector<PreferencePair> judged_fixture() {
  std::vector<PreferencePair> out;
  int idx = 0;
  for (int q = 0; q < 2; ++q)
    for (auto a : kFineAttributes)
      for (auto t : synthesis::kPairTypes) {
        PreferencePair p;
        p.question_id = "q" + std::to_string(q);
        p.pair_id = p.question_id + ":" + std::string(to_string(a)) + ":" + std::string(synthesis::to_string(t));
        p.context = "ctx " + std::to_string(q);
        p.chosen = "chosen " + p.pair_id;
        p.rejected = "rejected " + p.pair_id;
        p.attribute = a;
        p.pair_type = t;
        p.kept = (idx++ % 6) != 5;
        out.push_back(p);
      }
  return out;
}

std::set<std::string> record_ids(const ExportResult& r) {
  std::set<std::string> ids;
  for (auto& row : parse_jsonl(r.contents)) ids.insert(row["pair_id"].get<std::string>());
  return ids;
}

TensorArchive random_archive(std::mt19937_64& rng, DType dtype = DType::F32) {
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  TensorArchive a;
  for (auto [name, shape] : std::vector<std::pair<std::string, std::vector<std::int64_t>>>{
           {"layer.0.weight", {4, 8}}, {"layer.0.bias", {8}}, {"head", {3, 2, 5}}}) {
    std::size_t n = 1;
    for (auto s : shape) n *= static_cast<std::size_t>(s);
    TensorEntry e;
    e.dtype = dtype;
    e.shape = shape;
    e.data.resize(n * element_size(dtype));
    for (std::size_t i = 0; i < n; ++i) e.set(i, d(rng));
    a.entries[name] = e;
  }
  return a;
}

}  // namespace

TEST_CASE("filtered export keeps only kept pairs") {
  auto pairs = judged_fixture();
  auto spec = SelectionSpec::parse("all", "all", true);
  auto r = export_preference_dataset(pairs, spec, DatasetLayout::prompt_chosen_rejected);
  CHECK(r.records == 30);
  auto rows = parse_jsonl(r.contents);
  REQUIRE(rows.size() == 30);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1]["pair_id"] < rows[i]["pair_id"]);
  auto& row = rows[0];
  CHECK(row["prompt"].get<std::string>().find("ctx ") == 0);
  CHECK(row["chosen"].get<std::string>().find("chosen ") == 0);
  CHECK(row.contains("attribute"));
  CHECK(row.contains("pair_type"));

  auto unfiltered = export_preference_dataset(pairs, SelectionSpec::parse("all", "all", false),
                                              DatasetLayout::prompt_chosen_rejected);
  CHECK(unfiltered.records == 36);
}

TEST_CASE("corruption-only selection") {
  auto pairs = judged_fixture();
  auto r = export_preference_dataset(pairs, SelectionSpec::parse("all", "OC", false), DatasetLayout::pairwise);
  CHECK(r.records == 12);
  for (auto& row : parse_jsonl(r.contents)) {
    CHECK(row["pair_type"] == "OC");
    CHECK(row["chosen"].is_array());
    CHECK(row["chosen"][1]["role"] == "assistant");
  }
}

TEST_CASE("clinical group selection") {
  auto pairs = judged_fixture();
  auto r = export_preference_dataset(pairs, SelectionSpec::parse("clinical", "all", false),
                                     DatasetLayout::prompt_chosen_rejected);
  std::set<std::string> attrs;
  for (auto& row : parse_jsonl(r.contents)) attrs.insert(row["attribute"].get<std::string>());
  CHECK(attrs == std::set<std::string>{"medical_accuracy", "diagnostic_relevance", "avoid_ddx_bias"});
  CHECK(r.records == 18);
}

TEST_CASE("selection algebra over attributes") {
  auto pairs = judged_fixture();
  auto a = record_ids(export_preference_dataset(pairs, SelectionSpec::parse("clarity,focus", "EO,EC", true),
                                                DatasetLayout::prompt_chosen_rejected));
  auto b = record_ids(export_preference_dataset(pairs, SelectionSpec::parse("clinical", "EO,EC", true),
                                                DatasetLayout::prompt_chosen_rejected));
  auto u = record_ids(export_preference_dataset(
      pairs, SelectionSpec::parse("clarity,focus,clinical", "EO,EC", true), DatasetLayout::prompt_chosen_rejected));
  std::set<std::string> both = a;
  both.insert(b.begin(), b.end());
  CHECK(u == both);
}

TEST_CASE("export is byte stable and names an empty selection") {
  auto pairs = judged_fixture();
  oracle::TempDir dir("export");
  auto spec = SelectionSpec::parse("all", "all", true);
  export_preference_dataset(pairs, spec, DatasetLayout::prompt_chosen_rejected, dir.path / "a.jsonl");
  std::reverse(pairs.begin(), pairs.end());
  export_preference_dataset(pairs, spec, DatasetLayout::prompt_chosen_rejected, dir.path / "b.jsonl");
  CHECK(read_file(dir.path / "a.jsonl") == read_file(dir.path / "b.jsonl"));

  try {
    export_preference_dataset(pairs, SelectionSpec::parse("coarse", "all", true), DatasetLayout::pairwise);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("coarse") != std::string::npos);
  }
  pairs[0].kept.reset();
  CHECK_THROWS_AS(export_preference_dataset(pairs, spec, DatasetLayout::pairwise), ValidationError);
  CHECK_THROWS_AS(SelectionSpec::parse("", "all", true).validate(), ValidationError);
}

TEST_CASE("averaging closed forms") {
  TensorArchive a, b;
  a.entries["w"] = TensorArchive::make_f32({1}, {1.0f});
  b.entries["w"] = TensorArchive::make_f32({1}, {3.0f});
  CHECK(average_tensor_archives({a, b}).entries.at("w").get(0) == 2.0);

  std::vector<TensorArchive> six;
  for (int i = 1; i <= 6; ++i) {
    TensorArchive t;
    t.entries["w"] = TensorArchive::make_f64({1}, {static_cast<double>(i)});
    six.push_back(t);
  }
  CHECK(average_tensor_archives(six).entries.at("w").get(0) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(average_tensor_archives(six, std::vector<double>{1, 0, 0, 0, 0, 0}).entries.at("w").get(0) == 1.0);
  CHECK(average_tensor_archives(six, std::vector<double>{2, 0, 0, 0, 0, 2}).entries.at("w").get(0) == 3.5);
}

TEST_CASE("averaging matches the analytic mean, is idempotent and order invariant") {
  std::mt19937_64 rng(17);
  for (auto dtype : {DType::F32, DType::F64}) {
    std::vector<TensorArchive> as;
    for (int k = 0; k < 5; ++k) as.push_back(random_archive(rng, dtype));
    auto avg = average_tensor_archives(as);
    for (auto& [name, t] : avg.entries) {
      for (std::size_t i = 0; i < t.element_count(); ++i) {
        double ref = 0;
        for (auto& a : as) ref += a.entries.at(name).get(i);
        ref /= as.size();
        CHECK(std::abs(t.get(i) - ref) <= 1e-7 * std::max(1.0, std::abs(ref)));
      }
    }
    auto self = average_tensor_archives({as[0], as[0], as[0]});
    for (auto& [name, t] : self.entries) CHECK(t.data == as[0].entries.at(name).data);

    auto shuffled = as;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto avg2 = average_tensor_archives(shuffled);
    for (auto& [name, t] : avg.entries) CHECK(t.data == avg2.entries.at(name).data);
    CHECK(avg.metadata == avg2.metadata);
  }
}

TEST_CASE("nested equal-weight averages agree with the flat average") {
  std::mt19937_64 rng(3);
  std::vector<TensorArchive> as;
  for (int k = 0; k < 4; ++k) as.push_back(random_archive(rng, DType::F64));
  auto flat = average_tensor_archives(as);
  auto nested = average_tensor_archives({average_tensor_archives({as[0], as[1]}), average_tensor_archives({as[2], as[3]})});
  for (auto& [name, t] : flat.entries)
    for (std::size_t i = 0; i < t.element_count(); ++i) {
      double x = t.get(i), y = nested.entries.at(name).get(i);
      CHECK(std::abs(x - y) <= 1e-7 * std::max(1.0, std::abs(x)));
    }
}

TEST_CASE("averaging rejects mismatched archives") {
  TensorArchive a, b;
  a.entries["w"] = TensorArchive::make_f32({2}, {1, 2});
  a.entries["only_a"] = TensorArchive::make_f32({1}, {1});
  b.entries["w"] = TensorArchive::make_f32({2}, {1, 2});
  b.entries["only_b"] = TensorArchive::make_f32({1}, {1});
  try {
    average_tensor_archives({a, b});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    std::string m = e.what();
    CHECK(m.find("only_a") != std::string::npos);
    CHECK(m.find("only_b") != std::string::npos);
  }
  TensorArchive c, d;
  c.entries["w"] = TensorArchive::make_f32({2}, {1, 2});
  d.entries["w"] = TensorArchive::make_f32({1, 2}, {1, 2});
  try {
    average_tensor_archives({c, d});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("tensor w") != std::string::npos);
  }
  CHECK_THROWS_AS(average_tensor_archives({}), ValidationError);
  CHECK_THROWS_AS(average_tensor_archives({c, c}, std::vector<double>{0, 0}), ValidationError);
  CHECK_THROWS_AS(average_tensor_archives({c, c}, std::vector<double>{1}), ValidationError);
}

TEST_CASE("archive file layout: length-prefixed JSON header then raw data") {
  TensorArchive a;
  a.entries["b"] = TensorArchive::make_f32({2}, {1.5f, -2.0f});
  a.entries["a"] = TensorArchive::make_f64({1}, {0.25});
  a.metadata["note"] = "x";
  auto bytes = a.serialize();
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | bytes[i];
  auto header = json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(n)));
  CHECK(header["__metadata__"]["note"] == "x");
  CHECK(header["b"]["dtype"] == "F32");
  CHECK(header["b"]["shape"] == json::array({2}));
  auto off = header["b"]["data_offsets"];
  std::size_t base = 8 + n;
  float v;
  std::memcpy(&v, bytes.data() + base + off[0].get<std::size_t>() + 4, 4);
  CHECK(v == -2.0f);
  CHECK(off[1].get<std::size_t>() - off[0].get<std::size_t>() == 8);

  oracle::TempDir dir("tensors");
  a.save(dir.path / "m.safetensors");
  auto back = TensorArchive::load(dir.path / "m.safetensors");
  CHECK(back.entries.at("b").data == a.entries.at("b").data);
  CHECK(back.metadata.at("note") == "x");
  CHECK(back.digest() == a.digest());

  auto broken = bytes;
  broken.pop_back();
  CHECK_THROWS(TensorArchive::deserialize(broken));
}

TEST_CASE("half precision storage round trips through the average") {
  TensorEntry e;
  e.dtype = DType::BF16;
  e.shape = {3};
  e.data.resize(6);
  e.set(0, 1.0);
  e.set(1, -0.5);
  e.set(2, 8.0);
  TensorArchive a;
  a.entries["h"] = e;
  auto avg = average_tensor_archives({a, a, a});
  CHECK(avg.entries.at("h").data == e.data);
  TensorEntry f = e;
  f.dtype = DType::F16;
  f.set(0, 1.0);
  f.set(1, -0.5);
  f.set(2, 8.0);
  CHECK(f.get(1) == -0.5);
  CHECK(f.get(2) == 8.0);
}

TEST_CASE("trainer defaults and overrides") {
  auto dpo = trainer_config(TrainerStage::dpo);
  CHECK(dpo["learning_rate"] == 5e-7);
  CHECK(dpo["beta"] == 2.0);
  CHECK(dpo["epochs"] == 1);
  CHECK(dpo["batch_size"] == 256);
  CHECK(dpo["warmup_ratio"] == 0.03);
  CHECK(dpo.contains("dataset_path"));
  CHECK(dpo.contains("output_path"));
  auto sft = trainer_config(TrainerStage::sft);
  CHECK(sft["epochs"] == 2);
  CHECK(sft["learning_rate"] == 5e-6);
  CHECK(trainer_config(TrainerStage::rm)["learning_rate"] == 9e-6);
  CHECK(trainer_config(TrainerStage::ppo)["learning_rate"] == 5e-7);

  auto o = trainer_config(TrainerStage::dpo, {{"learning_rate", "1e-6"}});
  CHECK(o["learning_rate"] == 1e-6);
  auto rest = o;
  rest["learning_rate"] = dpo["learning_rate"];
  CHECK(rest == dpo);
  CHECK_THROWS_AS(trainer_config(TrainerStage::dpo, {{"lr_typo", "1"}}), ValidationError);
}
