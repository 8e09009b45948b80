#include "vlclip/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace vlclip {

const char* errc_name(errc code) {
  switch (code) {
    case errc::duplicate_id: return "DuplicateId";
    case errc::empty_product_type: return "EmptyProductType";
    case errc::malformed_record: return "MalformedRecord";
    case errc::empty_proposal_set: return "EmptyProposalSet";
    case errc::non_finite_affinity: return "NonFiniteAffinity";
    case errc::degenerate_box: return "DegenerateBox";
    case errc::image_unreadable: return "ImageUnreadable";
    case errc::backend_unavailable: return "BackendUnavailable";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::zero_vector: return "ZeroVector";
    case errc::empty_completion: return "EmptyCompletion";
    case errc::empty_image: return "EmptyImage";
    case errc::duplicate_vector_id: return "DuplicateVectorId";
    case errc::empty_index: return "EmptyIndex";
    case errc::corrupt_snapshot: return "CorruptSnapshot";
    case errc::version_mismatch: return "VersionMismatch";
    case errc::non_finite_input: return "NonFiniteInput";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::diverged_loss: return "DivergedLoss";
    case errc::unparseable_verdict: return "UnparseableVerdict";
    case errc::unknown_item: return "UnknownItem";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
      c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    }
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
  static const auto table = make_crc_table();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

void varint_encode(std::uint64_t value, std::vector<std::uint8_t>& out) {
  while (value >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(value) | 0x80u);
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

std::uint64_t varint_decode(std::span<const std::uint8_t> in, std::size_t& offset) {
  std::uint64_t value = 0;
  int shift = 0;
  while (true) {
    if (offset >= in.size() || shift > 63) {
      raise(errc::corrupt_snapshot, "truncated varint");
    }
    std::uint8_t b = in[offset++];
    value |= static_cast<std::uint64_t>(b & 0x7Fu) << shift;
    if (!(b & 0x80u)) break;
    shift += 7;
  }
  return value;
}

static constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t v = bytes[i] << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) raise(errc::malformed_record, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFFu));
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t word_count(std::string_view text) { return split_words(text).size(); }

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string strip_punct(std::string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && !std::isalnum(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && !std::isalnum(static_cast<unsigned char>(token[e - 1]))) --e;
  return std::string(token.substr(b, e - b));
}

static std::string match_key(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    std::string t = to_lower(strip_punct(w));
    if (t.empty()) continue;
    out.push_back(' ');
    out += t;
  }
  out.push_back(' ');
  return out;
}

bool contains_phrase(std::string_view text, std::string_view needle) {
  std::string nee = match_key(needle);
  if (nee == " ") return false;
  return match_key(text).find(nee) != std::string::npos;
}

}  // namespace vlclip
