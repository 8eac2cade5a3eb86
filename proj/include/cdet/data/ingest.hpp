#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cdet/data/dataset.hpp"

namespace cdet {

struct IngestOptions {
  int64_t oscd_tile = 96;        // OSCD scenes are cut into non-overlapping tiles
  SyntheticSpec synthetic;       // SYNTHETIC passthrough settings
  int64_t synthetic_size = 256;
};

struct IngestReport {
  std::map<std::string, int64_t> counts;  // split name -> samples written
  std::vector<std::string> warnings;      // count mismatches against the published splits
};

/// Converts an image-folder distribution into the canonical layout
/// <out>/<split>/{A,B,label}/<id>.png. Per split, the source may use any of
/// A/B/label, A/B/OUT, time1/time2/label, im1/im2/label, T1/T2/GT; split
/// folders named "validation" or "val" both map to val. OSCD sources hold
/// full RGB scenes and are tiled. SYNTHETIC ignores `source` and writes the
/// generator output. Unreadable files are io-errors naming the member.
IngestReport ingest_dataset(const std::filesystem::path& source, DatasetName name, const std::filesystem::path& out,
                            const IngestOptions& options = {});

}  // namespace cdet
