#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace alfa {

using json = nlohmann::json;

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

// One JSON value per line; blank lines are skipped. Parse failures throw
// ParseError mentioning the 1-based line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);
std::vector<json> parse_jsonl(std::string_view text);
std::string to_jsonl(const std::vector<json>& rows);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string to_lower(std::string_view s);

// Extracts the first balanced JSON object from free-form LLM output
// (tolerates code fences and surrounding prose).
json extract_json_object(std::string_view text);

// Fisher-Yates driven directly by mt19937_64 output so the permutation is
// identical across standard library implementations.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

std::string utc_timestamp();

void log_warning(std::string_view msg);

}  // namespace alfa
