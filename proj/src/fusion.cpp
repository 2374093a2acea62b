#include "alfa/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <tuple>

#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa::fusion {

using synthesis::PairType;
using synthesis::PreferencePair;

std::string_view to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::data_mixing: return "data_mixing";
    case FusionStrategy::reward_fusion: return "reward_fusion";
    case FusionStrategy::policy_fusion: return "policy_fusion";
  }
  return "data_mixing";
}

FusionStrategy fusion_strategy_from_string(std::string_view s) {
  if (s == "data_mixing") return FusionStrategy::data_mixing;
  if (s == "reward_fusion") return FusionStrategy::reward_fusion;
  if (s == "policy_fusion") return FusionStrategy::policy_fusion;
  throw ValidationError("unknown fusion strategy: " + std::string(s));
}

void SelectionSpec::validate() const {
  if (attributes.empty()) throw ValidationError("selection has no attributes");
  if (pair_types.empty()) throw ValidationError("selection has no pair types");
}

bool SelectionSpec::selects(const PreferencePair& p) const {
  if (!attributes.count(p.attribute) || !pair_types.count(p.pair_type)) return false;
  if (filtered_only) return p.kept.value_or(false);
  return true;
}

std::string SelectionSpec::describe() const {
  std::vector<std::string> a, t;
  for (auto x : attributes) a.emplace_back(alfa::to_string(x));
  for (auto x : pair_types) t.emplace_back(synthesis::to_string(x));
  return "attributes={" + join(a, ",") + "} pair_types={" + join(t, ",") + "} filtered_only=" +
         (filtered_only ? "true" : "false");
}

SelectionSpec SelectionSpec::parse(std::string_view attributes, std::string_view pair_types, bool filtered_only) {
  SelectionSpec s;
  for (auto a : parse_attribute_set(attributes)) s.attributes.insert(a);
  if (trim(pair_types) == "all") {
    s.pair_types = {PairType::EO, PairType::EC, PairType::OC};
  } else {
    for (const auto& t : split(pair_types, ',')) {
      if (!trim(t).empty()) s.pair_types.insert(synthesis::pair_type_from_string(trim(t)));
    }
  }
  s.filtered_only = filtered_only;
  s.validate();
  return s;
}

DatasetLayout dataset_layout_from_string(std::string_view s) {
  if (s == "pairwise") return DatasetLayout::pairwise;
  if (s == "prompt-chosen-rejected" || s == "prompt_chosen_rejected") return DatasetLayout::prompt_chosen_rejected;
  throw ValidationError("unknown dataset layout: " + std::string(s));
}

std::string training_prompt(const std::string& context) {
  return prompts::render_prompt("ask_question",
                                {{"context", context}, {"instruction", std::string(prompts::kAskInstruction)}});
}

ExportResult export_preference_dataset(const std::vector<PreferencePair>& pairs, const SelectionSpec& spec,
                                       DatasetLayout layout, const std::optional<std::filesystem::path>& out) {
  spec.validate();
  if (spec.filtered_only) {
    auto unjudged = std::count_if(pairs.begin(), pairs.end(), [&](const PreferencePair& p) {
      return spec.attributes.count(p.attribute) && spec.pair_types.count(p.pair_type) && !p.kept.has_value();
    });
    if (unjudged > 0) {
      throw ValidationError("filtered export requested but " + std::to_string(unjudged) +
                            " selected pair(s) are unjudged");
    }
  }
  std::vector<const PreferencePair*> selected;
  for (const auto& p : pairs) {
    if (spec.selects(p)) selected.push_back(&p);
  }
  if (selected.empty()) throw ValidationError("selection is empty: " + spec.describe());
  std::sort(selected.begin(), selected.end(), [](auto* a, auto* b) { return a->pair_id < b->pair_id; });

  ExportResult result;
  std::vector<json> rows;
  rows.reserve(selected.size());
  for (const auto* p : selected) {
    std::string prompt = training_prompt(p->context);
    json row;
    if (layout == DatasetLayout::prompt_chosen_rejected) {
      row = {{"prompt", prompt}, {"chosen", p->chosen}, {"rejected", p->rejected}};
    } else {
      row = {{"chosen", json::array({{{"role", "user"}, {"content", prompt}},
                                     {{"role", "assistant"}, {"content", p->chosen}}})},
             {"rejected", json::array({{{"role", "user"}, {"content", prompt}},
                                       {{"role", "assistant"}, {"content", p->rejected}}})}};
    }
    row["pair_id"] = p->pair_id;
    row["attribute"] = std::string(alfa::to_string(p->attribute));
    row["pair_type"] = std::string(synthesis::to_string(p->pair_type));
    rows.push_back(std::move(row));
    ++result.counts[std::string(alfa::to_string(p->attribute))][std::string(synthesis::to_string(p->pair_type))];
  }
  result.records = rows.size();
  result.contents = to_jsonl(rows);
  if (out) write_file_atomic(*out, result.contents);
  return result;
}

// ---------------------------------------------------------------- tensors

std::string_view to_string(DType d) {
  switch (d) {
    case DType::F64: return "F64";
    case DType::F32: return "F32";
    case DType::F16: return "F16";
    case DType::BF16: return "BF16";
    case DType::I64: return "I64";
    case DType::I32: return "I32";
    case DType::I16: return "I16";
    case DType::I8: return "I8";
    case DType::U8: return "U8";
    case DType::BOOL: return "BOOL";
  }
  return "F32";
}

DType dtype_from_string(std::string_view s) {
  for (auto d : {DType::F64, DType::F32, DType::F16, DType::BF16, DType::I64, DType::I32, DType::I16,
                 DType::I8, DType::U8, DType::BOOL}) {
    if (to_string(d) == s) return d;
  }
  throw ValidationError("unsupported tensor dtype: " + std::string(s));
}

std::size_t element_size(DType d) {
  switch (d) {
    case DType::F64:
    case DType::I64: return 8;
    case DType::F32:
    case DType::I32: return 4;
    case DType::F16:
    case DType::BF16:
    case DType::I16: return 2;
    case DType::I8:
    case DType::U8:
    case DType::BOOL: return 1;
  }
  return 1;
}

namespace {

static_assert(std::endian::native == std::endian::little, "tensor buffers assume a little-endian host");

float half_to_float(std::uint16_t h) {
  std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000) << 16;
  std::uint32_t exp = (h >> 10) & 0x1f;
  std::uint32_t mant = h & 0x3ff;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // Subnormal: renormalize.
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400) == 0);
      bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ff) << 13);
    }
  } else if (exp == 0x1f) {
    bits = sign | 0x7f800000 | (mant << 13);
  } else {
    bits = sign | ((exp + 112) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

std::uint16_t float_to_half(float f) {
  std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000);
  std::uint32_t absx = x & 0x7fffffff;
  if (absx >= 0x7f800000) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7c00 | (absx > 0x7f800000 ? 0x200 : 0));
  }
  if (absx >= 0x477ff000) return static_cast<std::uint16_t>(sign | 0x7c00);  // overflow
  if (absx < 0x38800000) {
    // Subnormal or zero in half precision.
    if (absx < 0x33000000) return sign;
    std::uint32_t mant = (absx & 0x7fffff) | 0x800000;
    int shift = 113 - static_cast<int>(absx >> 23) + 13;
    std::uint32_t half = mant >> shift;
    std::uint32_t rem = mant & ((1u << shift) - 1);
    std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t rebased = absx - 0x38000000;
  std::uint32_t half = rebased >> 13;
  std::uint32_t rem = rebased & 0x1fff;
  if (rem > 0x1000 || (rem == 0x1000 && (half & 1))) ++half;
  return static_cast<std::uint16_t>(sign | half);
}

float bf16_to_float(std::uint16_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16); }

std::uint16_t float_to_bf16(float f) {
  std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  if ((x & 0x7fffffff) > 0x7f800000) return static_cast<std::uint16_t>((x >> 16) | 0x40);
  std::uint32_t rounding = 0x7fff + ((x >> 16) & 1);
  return static_cast<std::uint16_t>((x + rounding) >> 16);
}

template <typename T>
T load_as(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store_as(std::uint8_t* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

template <typename T>
T round_to_int(double v) {
  double r = std::nearbyint(v);
  r = std::clamp(r, static_cast<double>(std::numeric_limits<T>::lowest()),
                 static_cast<double>(std::numeric_limits<T>::max()));
  return static_cast<T>(r);
}

}  // namespace

std::size_t TensorEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

double TensorEntry::get(std::size_t i) const {
  const std::uint8_t* p = data.data() + i * element_size(dtype);
  switch (dtype) {
    case DType::F64: return load_as<double>(p);
    case DType::F32: return load_as<float>(p);
    case DType::F16: return half_to_float(load_as<std::uint16_t>(p));
    case DType::BF16: return bf16_to_float(load_as<std::uint16_t>(p));
    case DType::I64: return static_cast<double>(load_as<std::int64_t>(p));
    case DType::I32: return load_as<std::int32_t>(p);
    case DType::I16: return load_as<std::int16_t>(p);
    case DType::I8: return load_as<std::int8_t>(p);
    case DType::U8: return load_as<std::uint8_t>(p);
    case DType::BOOL: return *p != 0 ? 1.0 : 0.0;
  }
  return 0.0;
}

void TensorEntry::set(std::size_t i, double v) {
  std::uint8_t* p = data.data() + i * element_size(dtype);
  switch (dtype) {
    case DType::F64: store_as<double>(p, v); break;
    case DType::F32: store_as<float>(p, static_cast<float>(v)); break;
    case DType::F16: store_as<std::uint16_t>(p, float_to_half(static_cast<float>(v))); break;
    case DType::BF16: store_as<std::uint16_t>(p, float_to_bf16(static_cast<float>(v))); break;
    case DType::I64: store_as<std::int64_t>(p, round_to_int<std::int64_t>(v)); break;
    case DType::I32: store_as<std::int32_t>(p, round_to_int<std::int32_t>(v)); break;
    case DType::I16: store_as<std::int16_t>(p, round_to_int<std::int16_t>(v)); break;
    case DType::I8: store_as<std::int8_t>(p, round_to_int<std::int8_t>(v)); break;
    case DType::U8: store_as<std::uint8_t>(p, round_to_int<std::uint8_t>(v)); break;
    case DType::BOOL: *p = v >= 0.5 ? 1 : 0; break;
  }
}

void TensorArchive::validate() const {
  for (const auto& [name, t] : entries) {
    if (name.empty() || name == "__metadata__") throw ValidationError("invalid tensor name '" + name + "'");
    if (t.data.size() != t.element_count() * element_size(t.dtype)) {
      throw ValidationError("tensor " + name + ": buffer holds " + std::to_string(t.data.size()) +
                            " bytes, expected " + std::to_string(t.element_count() * element_size(t.dtype)));
    }
  }
}

std::vector<std::uint8_t> TensorArchive::serialize() const {
  validate();
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : entries) {
    header[name] = {{"dtype", std::string(to_string(t.dtype))},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + t.data.size()}}};
    offset += t.data.size();
  }
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::string h = header.dump();
  while (h.size() % 8 != 0) h.push_back(' ');
  std::vector<std::uint8_t> out(8 + h.size() + offset);
  std::uint64_t hlen = h.size();
  std::memcpy(out.data(), &hlen, 8);
  std::memcpy(out.data() + 8, h.data(), h.size());
  std::size_t pos = 8 + h.size();
  for (const auto& [name, t] : entries) {
    std::memcpy(out.data() + pos, t.data.data(), t.data.size());
    pos += t.data.size();
  }
  return out;
}

TensorArchive TensorArchive::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw ParseError("tensor archive shorter than its length prefix");
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data(), 8);
  if (hlen > bytes.size() - 8) throw ParseError("tensor archive header length exceeds file size");
  std::string_view htext(reinterpret_cast<const char*>(bytes.data() + 8), hlen);
  json header = json::parse(htext, nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw ParseError("tensor archive header is not a JSON object");
  const std::uint8_t* data = bytes.data() + 8 + hlen;
  std::size_t data_len = bytes.size() - 8 - hlen;
  TensorArchive a;
  try {
    for (auto it = header.begin(); it != header.end(); ++it) {
      if (it.key() == "__metadata__") {
        for (auto m = it->begin(); m != it->end(); ++m) a.metadata[m.key()] = m->get<std::string>();
        continue;
      }
      TensorEntry t;
      t.dtype = dtype_from_string(it->at("dtype").get<std::string>());
      t.shape = it->at("shape").get<std::vector<std::int64_t>>();
      auto offs = it->at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offs.size() != 2 || offs[0] > offs[1] || offs[1] > data_len) {
        throw ParseError("tensor " + it.key() + ": data_offsets out of range");
      }
      t.data.assign(data + offs[0], data + offs[1]);
      a.entries.emplace(it.key(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed tensor archive header: ") + e.what());
  }
  a.validate();
  return a;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  auto bytes = serialize();
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::string raw = read_file(path);
  return deserialize(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

std::string TensorArchive::digest() const {
  auto bytes = serialize();
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

TensorEntry TensorArchive::make_f32(std::vector<std::int64_t> shape, const std::vector<float>& values) {
  TensorEntry t;
  t.dtype = DType::F32;
  t.shape = std::move(shape);
  if (t.element_count() != values.size()) throw ValidationError("value count does not match shape");
  t.data.resize(values.size() * 4);
  std::memcpy(t.data.data(), values.data(), t.data.size());
  return t;
}

TensorEntry TensorArchive::make_f64(std::vector<std::int64_t> shape, const std::vector<double>& values) {
  TensorEntry t;
  t.dtype = DType::F64;
  t.shape = std::move(shape);
  if (t.element_count() != values.size()) throw ValidationError("value count does not match shape");
  t.data.resize(values.size() * 8);
  std::memcpy(t.data.data(), values.data(), t.data.size());
  return t;
}

TensorArchive average_tensor_archives(const std::vector<TensorArchive>& archives,
                                      const std::optional<std::vector<double>>& weights,
                                      std::size_t workers) {
  if (archives.empty()) throw ValidationError("averaging needs at least one archive");
  std::vector<double> w(archives.size(), 1.0);
  if (weights) {
    if (weights->size() != archives.size()) {
      throw ValidationError("got " + std::to_string(weights->size()) + " weights for " +
                            std::to_string(archives.size()) + " archives");
    }
    w = *weights;
  }
  double sum = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw ValidationError("fusion weights must be finite and non-negative");
    sum += x;
  }
  if (!(sum > 0.0)) throw ValidationError("fusion weights must sum to a positive value");
  for (double& x : w) x /= sum;

  const auto& ref = archives.front();
  for (std::size_t k = 1; k < archives.size(); ++k) {
    std::vector<std::string> diff;
    for (const auto& [name, _] : ref.entries) {
      if (!archives[k].entries.count(name)) diff.push_back(name);
    }
    for (const auto& [name, _] : archives[k].entries) {
      if (!ref.entries.count(name)) diff.push_back(name);
    }
    if (!diff.empty()) {
      std::sort(diff.begin(), diff.end());
      throw ValidationError("archive " + std::to_string(k) + " tensor names differ from archive 0: " + join(diff, ", "));
    }
    for (const auto& [name, t] : ref.entries) {
      const auto& o = archives[k].entries.at(name);
      if (o.dtype != t.dtype) throw ValidationError("tensor " + name + ": dtype mismatch in archive " + std::to_string(k));
      if (o.shape != t.shape) throw ValidationError("tensor " + name + ": shape mismatch in archive " + std::to_string(k));
    }
  }
  for (const auto& a : archives) a.validate();

  // Sum in digest order so that permuting the inputs cannot change a single
  // rounding step.
  std::vector<std::string> digests;
  for (const auto& a : archives) digests.push_back(a.digest());
  std::vector<std::size_t> order(archives.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(digests[a], w[a]) < std::tie(digests[b], w[b]);
  });

  TensorArchive out;
  std::vector<std::string> names;
  for (const auto& [name, t] : ref.entries) {
    names.push_back(name);
    out.entries[name] = TensorEntry{t.dtype, t.shape, std::vector<std::uint8_t>(t.data.size())};
  }
  parallel_for(names.size(), workers, [&](std::size_t i) {
    const std::string& name = names[i];
    TensorEntry& dst = out.entries.at(name);
    const std::size_t n = dst.element_count();
    std::vector<const TensorEntry*> src;
    for (std::size_t k : order) src.push_back(&archives[k].entries.at(name));
    // Weighted deltas from the first archive: identical inputs come back
    // bit-exact and nearby checkpoints lose less to cancellation.
    for (std::size_t e = 0; e < n; ++e) {
      const double base = src[0]->get(e);
      double delta = 0.0;
      for (std::size_t k = 1; k < src.size(); ++k) delta += w[order[k]] * (src[k]->get(e) - base);
      dst.set(e, base + delta);
    }
  });

  std::vector<std::string> sources, ws;
  for (std::size_t k : order) {
    sources.push_back(digests[k]);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", w[k]);
    ws.emplace_back(buf);
  }
  out.metadata["fusion.sources"] = join(sources, ",");
  out.metadata["fusion.weights"] = join(ws, ",");
  return out;
}

// ---------------------------------------------------------------- trainer

std::string_view to_string(TrainerStage s) {
  switch (s) {
    case TrainerStage::sft: return "sft";
    case TrainerStage::dpo: return "dpo";
    case TrainerStage::rm: return "rm";
    case TrainerStage::ppo: return "ppo";
  }
  return "sft";
}

TrainerStage trainer_stage_from_string(std::string_view s) {
  if (s == "sft") return TrainerStage::sft;
  if (s == "dpo") return TrainerStage::dpo;
  if (s == "rm") return TrainerStage::rm;
  if (s == "ppo") return TrainerStage::ppo;
  throw ValidationError("unknown trainer stage: " + std::string(s));
}

json trainer_config(TrainerStage stage, const std::map<std::string, std::string>& overrides) {
  json cfg = {{"stage", std::string(to_string(stage))},
              {"warmup_ratio", 0.03},
              {"lr_scheduler", "cosine_with_min_lr"},
              {"batch_size", 256},
              {"epochs", 1},
              {"model_path", ""},
              {"dataset_path", ""},
              {"output_path", ""}};
  switch (stage) {
    case TrainerStage::sft:
      cfg["epochs"] = 2;
      cfg["learning_rate"] = 5e-6;
      break;
    case TrainerStage::dpo:
      cfg["learning_rate"] = 5e-7;
      cfg["beta"] = 2.0;
      break;
    case TrainerStage::rm:
      cfg["learning_rate"] = 9e-6;
      cfg["beta"] = 2.0;
      break;
    case TrainerStage::ppo:
      cfg["learning_rate"] = 5e-7;
      cfg["reward_model_path"] = "";
      break;
  }
  for (const auto& [key, value] : overrides) {
    if (key == "stage" || !cfg.contains(key)) {
      throw ValidationError("unknown override key for " + std::string(to_string(stage)) + " config: " + key);
    }
    json parsed = json::parse(value, nullptr, false);
    cfg[key] = parsed.is_discarded() ? json(value) : parsed;
  }
  return cfg;
}

void emit_trainer_config(const std::filesystem::path& path, TrainerStage stage,
                         const std::map<std::string, std::string>& overrides) {
  write_file_atomic(path, trainer_config(stage, overrides).dump(2) + "\n");
}

}  // namespace alfa::fusion
