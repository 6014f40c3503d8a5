#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace storypipe::util {

// 64-bit finalizer used as the seed mixing primitive. Stable across
// platforms, unlike the standard distributions.
uint64_t splitmix64(uint64_t x);

// FNV-1a over raw bytes, used to fold strings into seed derivations.
uint64_t fnv1a64(std::string_view bytes);

// Maps a 64-bit word onto [0, 1).
double unit_interval(uint64_t x);

// Derives a child seed from a base seed and a list of string parts. Every
// per-loop and per-call seed in the pipeline comes from this chain, so a
// value depends only on its own coordinates and never on execution order.
uint64_t derive_seed(uint64_t base, std::initializer_list<std::string_view> parts);

// Small deterministic generator over the splitmix64 sequence.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next_u64();
  double next_unit();                   // [0, 1)
  int next_int(int lo, int hi);         // inclusive bounds
  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<size_t>(next_int(0, static_cast<int>(items.size()) - 1))];
  }

 private:
  uint64_t state_;
};

// Hex-encoded SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// Reads a whole file; throws storypipe::Error when unreadable.
std::string read_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Splits on runs of whitespace; no empty tokens.
std::vector<std::string> split_words(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

// Rounds half away from zero to one decimal place (so 56.45 -> 56.5).
double round_half_up_1dp(double value);

// Zero-padded decimal rendering, e.g. (7, 3) -> "007".
std::string zero_pad(int value, int width);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Word-boundary containment for alphabetic needles, plain substring
// containment otherwise. Case-insensitive.
bool contains_phrase(std::string_view haystack, std::string_view needle);

}  // namespace storypipe::util
