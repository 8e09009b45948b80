#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vlclip {

enum class errc {
  // catalog / core
  duplicate_id,
  empty_product_type,
  malformed_record,
  // grounding
  empty_proposal_set,
  non_finite_affinity,
  degenerate_box,
  // encoders / backends
  image_unreadable,
  backend_unavailable,
  dimension_mismatch,
  zero_vector,
  empty_completion,
  // dedup
  empty_image,
  // ann
  duplicate_vector_id,
  empty_index,
  corrupt_snapshot,
  version_mismatch,
  // trainer
  non_finite_input,
  empty_dataset,
  diverged_loss,
  // metrics / pipeline
  unparseable_verdict,
  unknown_item,
  invalid_argument,
  io_error,
};

const char* errc_name(errc code);

/// Engine-wide error type. Carries the error code alongside the message so
/// callers can branch on the category without string matching.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
  throw Error(code, message);
}

// ---------------------------------------------------------------------------
// Stable hashing. Used for the deterministic test encoder and shard seeding;
// the exact algorithms are part of the reproducibility contract, so they are
// pinned here rather than delegated to std::hash.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

/// splitmix64 step; a counter-based generator when driven with seed + index.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// CRC32 (IEEE, reflected, poly 0xEDB88320), as used in the snapshot and
// embedding-store formats.
std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

// LEB128-style unsigned varint, used by the snapshot adjacency sections.
void varint_encode(std::uint64_t value, std::vector<std::uint8_t>& out);
std::uint64_t varint_decode(std::span<const std::uint8_t> in, std::size_t& offset);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// ---------------------------------------------------------------------------
// Text helpers. Word counting everywhere in the engine is whitespace
// tokenization after trimming.
// ---------------------------------------------------------------------------

std::vector<std::string> split_words(std::string_view text);
std::size_t word_count(std::string_view text);
std::string join_words(const std::vector<std::string>& words);
std::string to_lower(std::string_view text);

/// Strips leading/trailing non-alphanumeric characters from a token.
std::string strip_punct(std::string_view token);

/// Case-insensitive, punctuation-insensitive search for a word sequence
/// (`needle` may be multi-word).
bool contains_phrase(std::string_view text, std::string_view needle);

}  // namespace vlclip
