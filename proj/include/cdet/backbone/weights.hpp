#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdet/backbone/encoder.hpp"
#include "cdet/backbone/registry.hpp"

namespace cdet::weights {

// Offline weight cache. Layout: <root>/<identifier with '/' as "__">/
// model.safetensors plus model.sha256 holding the pinned digest. Builds
// only ever read the cache; fetch/import are the sole writers.

std::filesystem::path default_cache_root();  // $CDET_CACHE, else ~/.cache/cdet
std::filesystem::path entry_dir(const WeightSource& source, const std::filesystem::path& root);

/// Path of verified cached weights. weights-unavailable when absent,
/// integrity-error when the digest disagrees with the manifest or the pin.
std::filesystem::path resolve(const WeightSource& source, const std::filesystem::path& root);

/// Downloads into the cache unless already present and verified.
std::filesystem::path fetch(const WeightSource& source, const std::filesystem::path& root);

/// Copies a locally obtained safetensors file into the cache and pins it.
std::filesystem::path import_file(const WeightSource& source, const std::filesystem::path& file,
                                  const std::filesystem::path& root);

struct LoadReport {
  size_t loaded = 0;
  std::vector<std::string> absent_optional;
  size_t ignored = 0;  // checkpoint tensors outside the encoder (heads, decoders)
};

/// Copies matching checkpoint tensors (after stripping `prefix`) into the
/// encoder. Missing required parameters or shape disagreements are
/// integrity-errors; the probe tensor is compared bit-exactly afterwards.
LoadReport load_encoder(EncoderImpl& encoder, const std::filesystem::path& file, const std::string& prefix);

}  // namespace cdet::weights
