#include "vlclip/encoders.hpp"

#include <cmath>
#include <numbers>
#include <semaphore>

#include <httplib.h>
#include <json.hpp>

namespace vlclip {

std::vector<float> DeterministicEncoder::expand_seed(std::uint64_t seed, std::size_t dimension) {
  auto unit_open = [](std::uint64_t x) {
    // 53-bit mantissa draw mapped to (0, 1].
    return (static_cast<double>(x >> 11) + 1.0) * 0x1p-53;
  };
  std::vector<float> out(dimension);
  for (std::size_t i = 0; i < dimension; ++i) {
    double u1 = unit_open(splitmix64(seed + 2 * i));
    double u2 = unit_open(splitmix64(seed + 2 * i + 1));
    out[i] = static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                                std::cos(2.0 * std::numbers::pi * u2));
  }
  return out;
}

std::vector<float> DeterministicEncoder::encode_image_raw(const Raster& image) {
  count_call();
  if (auto payload = extract_payload(image)) {
    return expand_seed(fnv1a64(*payload), dimension_);
  }
  auto bytes = raster_bytes(image);
  return expand_seed(fnv1a64(std::span<const std::uint8_t>(bytes)), dimension_);
}

std::vector<float> DeterministicEncoder::encode_text_raw(const std::string& text) {
  count_call();
  return expand_seed(fnv1a64(text), dimension_);
}

std::vector<BoundingBoxProposal> DeterministicEncoder::detect(const Raster& image,
                                                              const std::string& prompt) {
  count_call();
  (void)image;
  (void)prompt;
  BoundingBoxProposal full;
  full.x = 0.0;
  full.y = 0.0;
  full.w = 1.0;
  full.h = 1.0;
  full.affinity = 1.0;
  return {full};
}

// ---------------------------------------------------------------------------
// Remote client
// ---------------------------------------------------------------------------

struct RemoteEncoder::Impl {
  explicit Impl(const EncoderBackendDescriptor& desc)
      : client(desc.endpoint), slots(desc.max_in_flight) {
    client.set_connection_timeout(0, desc.timeout_ms * 1000);
    client.set_read_timeout(desc.timeout_ms / 1000, (desc.timeout_ms % 1000) * 1000);
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) {
    slots.acquire();
    auto res = client.Post(path, body.dump(), "application/json");
    slots.release();
    if (!res) {
      raise(errc::backend_unavailable, "no response from " + path);
    }
    if (res->status < 200 || res->status >= 300) {
      raise(errc::backend_unavailable,
            path + " returned " + std::to_string(res->status) + ": " +
                res->body.substr(0, 200));
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) {
      raise(errc::backend_unavailable,
            path + " returned unparseable payload: " + res->body.substr(0, 200));
    }
    return reply;
  }

  httplib::Client client;
  std::counting_semaphore<1024> slots;
};

RemoteEncoder::RemoteEncoder(const EncoderBackendDescriptor& desc)
    : impl_(std::make_unique<Impl>(desc)) {
  if (desc.endpoint.empty()) {
    raise(errc::invalid_argument, "remote encoder requires an endpoint");
  }
}

RemoteEncoder::~RemoteEncoder() = default;

namespace {

std::vector<float> parse_embedding(const nlohmann::json& reply, const std::string& path) {
  if (!reply.contains("embedding") || !reply["embedding"].is_array()) {
    raise(errc::backend_unavailable, path + " reply missing embedding array");
  }
  std::vector<float> values;
  values.reserve(reply["embedding"].size());
  for (const auto& v : reply["embedding"]) {
    if (!v.is_number()) raise(errc::backend_unavailable, path + " embedding has non-numbers");
    values.push_back(v.get<float>());
  }
  return values;
}

}  // namespace

std::vector<float> RemoteEncoder::encode_image_raw(const Raster& image) {
  count_call();
  auto bytes = raster_bytes(image);
  nlohmann::json body{{"image_b64", base64_encode(std::span<const std::uint8_t>(bytes))}};
  return parse_embedding(impl_->post("/encode_image", body), "/encode_image");
}

std::vector<float> RemoteEncoder::encode_text_raw(const std::string& text) {
  count_call();
  return parse_embedding(impl_->post("/encode_text", {{"text", text}}), "/encode_text");
}

std::vector<BoundingBoxProposal> RemoteEncoder::detect(const Raster& image,
                                                       const std::string& prompt) {
  count_call();
  auto bytes = raster_bytes(image);
  nlohmann::json body{{"image_b64", base64_encode(std::span<const std::uint8_t>(bytes))},
                      {"prompt", prompt}};
  nlohmann::json reply = impl_->post("/detect", body);
  if (!reply.contains("proposals") || !reply["proposals"].is_array()) {
    raise(errc::backend_unavailable, "/detect reply missing proposals array");
  }
  std::vector<BoundingBoxProposal> proposals;
  for (const auto& p : reply["proposals"]) {
    try {
      BoundingBoxProposal box;
      box.x = p.at("x").get<double>();
      box.y = p.at("y").get<double>();
      box.w = p.at("w").get<double>();
      box.h = p.at("h").get<double>();
      box.affinity = p.at("affinity").get<double>();
      proposals.push_back(box);
    } catch (const nlohmann::json::exception& e) {
      raise(errc::backend_unavailable, std::string("/detect proposal malformed: ") + e.what());
    }
  }
  return proposals;
}

std::shared_ptr<EncoderBackend> make_encoder_backend(const EncoderBackendDescriptor& desc) {
  switch (desc.kind) {
    case EncoderBackendDescriptor::Kind::kDeterministicTest:
      return std::make_shared<DeterministicEncoder>(desc.dimension);
    case EncoderBackendDescriptor::Kind::kRemote:
      return std::make_shared<RemoteEncoder>(desc);
  }
  raise(errc::invalid_argument, "unknown encoder backend kind");
}

// ---------------------------------------------------------------------------
// Engine-side operations
// ---------------------------------------------------------------------------

EmbeddingVector normalize(std::vector<float> raw) {
  double sq = 0.0;
  for (float v : raw) sq += static_cast<double>(v) * v;
  double norm = std::sqrt(sq);
  if (norm < 1e-12) raise(errc::zero_vector, "cannot normalize a zero vector");
  for (float& v : raw) v = static_cast<float>(v / norm);
  return EmbeddingVector{std::move(raw)};
}

namespace {

EmbeddingVector normalize_checked(std::vector<float> raw, std::size_t dim) {
  if (raw.size() != dim) {
    raise(errc::dimension_mismatch, "backend produced " + std::to_string(raw.size()) +
                                        " dims, engine expects " + std::to_string(dim));
  }
  return normalize(std::move(raw));
}

}  // namespace

EmbeddingVector encode_image(const std::string& image_ref, const RegionDecision& decision,
                             EncoderBackend& backend, std::size_t dim) {
  Raster image = load_ppm(image_ref);
  if (decision.is_crop()) {
    image = crop_image(image, *decision.box);
  }
  return normalize_checked(backend.encode_image_raw(image), dim);
}

EmbeddingVector encode_text(const std::string& text, EncoderBackend& backend, std::size_t dim) {
  if (text.empty()) raise(errc::invalid_argument, "cannot encode empty text");
  return normalize_checked(backend.encode_text_raw(text), dim);
}

std::vector<BoundingBoxProposal> detect_regions(const std::string& image_ref,
                                                const std::string& prompt,
                                                EncoderBackend& backend) {
  if (prompt.empty()) raise(errc::invalid_argument, "detector prompt must be non-empty");
  Raster image = load_ppm(image_ref);
  return backend.detect(image, prompt);
}

}  // namespace vlclip
