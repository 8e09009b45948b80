#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vlclip/grounding.hpp"
#include "vlclip/image.hpp"
#include "vlclip/types.hpp"

namespace vlclip {

struct EncoderBackendDescriptor {
  enum class Kind { kDeterministicTest, kRemote };

  Kind kind = Kind::kDeterministicTest;
  std::string endpoint;               // required for kRemote, e.g. http://host:port
  std::size_t dimension = kDefaultDim;
  int timeout_ms = 5000;
  int max_in_flight = 8;              // remote-only concurrency bound
};

/// Backend surface: raw (unnormalized) vectors in, engine-side normalization.
/// Implementations must be safe for concurrent calls.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::vector<float> encode_image_raw(const Raster& image) = 0;
  virtual std::vector<float> encode_text_raw(const std::string& text) = 0;
  virtual std::vector<BoundingBoxProposal> detect(const Raster& image,
                                                  const std::string& prompt) = 0;

  /// Total backend invocations, for cache audits.
  std::uint64_t call_count() const noexcept { return calls_.load(); }

 protected:
  void count_call() noexcept { calls_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

std::shared_ptr<EncoderBackend> make_encoder_backend(const EncoderBackendDescriptor& desc);

/// In-process test encoder: a 64-bit stable hash of the input bytes seeds a
/// counter-based generator (splitmix64 stream + Box-Muller) that draws
/// `dimension` standard normals. Pure function of its input bytes.
///
/// Rasters stamped with a text payload (see make_payload_raster) hash the
/// payload text instead of the pixels, so a payload raster and its text
/// encode to the identical vector. That is the alignment signal every
/// synthetic corpus in this repo is built on.
class DeterministicEncoder : public EncoderBackend {
 public:
  explicit DeterministicEncoder(std::size_t dimension) : dimension_(dimension) {}

  std::vector<float> encode_image_raw(const Raster& image) override;
  std::vector<float> encode_text_raw(const std::string& text) override;
  std::vector<BoundingBoxProposal> detect(const Raster& image,
                                          const std::string& prompt) override;

  /// The counter-based expansion itself, exposed for tests.
  static std::vector<float> expand_seed(std::uint64_t seed, std::size_t dimension);

 private:
  std::size_t dimension_;
};

/// HTTP client for the remote encoder protocol:
///   POST /encode_image {"image_b64": ...} -> {"embedding": [...]}
///   POST /encode_text  {"text": ...}      -> {"embedding": [...]}
///   POST /detect {"image_b64":..., "prompt":...} -> {"proposals":[{x,y,w,h,affinity}]}
/// Images travel as base64 of the canonical raster serialization. Non-2xx
/// replies surface as BackendUnavailable with a payload excerpt.
class RemoteEncoder : public EncoderBackend {
 public:
  explicit RemoteEncoder(const EncoderBackendDescriptor& desc);
  ~RemoteEncoder() override;

  std::vector<float> encode_image_raw(const Raster& image) override;
  std::vector<float> encode_text_raw(const std::string& text) override;
  std::vector<BoundingBoxProposal> detect(const Raster& image,
                                          const std::string& prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Divides by the Euclidean norm. Norms below 1e-12 raise ZeroVector.
EmbeddingVector normalize(std::vector<float> raw);

/// Loads the image, applies the region decision (crop or full image), runs
/// the backend, and normalizes. The result dimension must equal `dim`.
EmbeddingVector encode_image(const std::string& image_ref, const RegionDecision& decision,
                             EncoderBackend& backend, std::size_t dim);

EmbeddingVector encode_text(const std::string& text, EncoderBackend& backend, std::size_t dim);

/// Runs the detector with the product type as prompt. May return zero
/// proposals; grounding then falls back to the full image.
std::vector<BoundingBoxProposal> detect_regions(const std::string& image_ref,
                                                const std::string& prompt,
                                                EncoderBackend& backend);

}  // namespace vlclip
