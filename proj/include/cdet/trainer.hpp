#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/data/dataset.hpp"
#include "cdet/eval/metrics.hpp"
#include "cdet/model/change_model.hpp"

namespace cdet {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double lr = 0;
};

struct RunResult {
  uint64_t seed = 0;
  std::vector<EpochRecord> per_epoch;
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;
  MetricsReport test_metrics;
  std::optional<MetricsReport> train_metrics;
};

struct TrainOptions {
  std::filesystem::path out_root = "runs";
  std::filesystem::path cache_root;  // empty: default weight cache
  bool write_artifacts = true;
  std::function<void(const std::string&)> log;  // progress lines, optional
};

/// Encoder from the registry (pretrained when requested) plus a freshly
/// initialized decoder; random parts are seeded from `seed`.
ChangeModel build_model(const ExperimentConfig& config, uint64_t seed, const std::filesystem::path& cache_root = {});

/// Final-epoch confusion counts over a split, no augmentation.
MetricsReport evaluate(ChangeModelImpl& model, const Dataset& data, int batch_size, torch::Device device);

/// One supervised run. Epoch e shuffles with derive_seed(seed, "shuffle", e)
/// and augments sample s with derive_seed(seed, s.sample_id, e).
/// training-diverged on a non-finite loss.
RunResult train(const ExperimentConfig& config, uint64_t seed, const TrainOptions& options = {});

struct SeedStatus {
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
};

struct ExperimentResult {
  std::string config_hash;
  std::filesystem::path dir;
  std::vector<RunResult> runs;  // successful seeds only
  std::vector<SeedStatus> statuses;
  MetricsReport report;  // aggregate over successful seeds
  bool partial = false;
};

/// Trains every seed of config.seeds, aggregates test F1 (mean, sample std)
/// and writes <out>/<hash>/experiment.json. Failed seeds are recorded, not
/// thrown; see require_complete().
ExperimentResult run_experiment(const ExperimentConfig& config, const TrainOptions& options = {});

/// partial-result listing per-seed status when any seed failed.
void require_complete(const ExperimentResult& result);

nlohmann::json to_json(const ExperimentResult& result);

}  // namespace cdet

namespace cdet {

struct LoadedRun {
  ExperimentConfig config;
  ChangeModel model{nullptr};
};

/// Rebuilds the model stored in a checkpoint (architecture from the stored
/// config, weights from the archive). No weight cache access.
LoadedRun load_run(const std::filesystem::path& checkpoint);

}  // namespace cdet
