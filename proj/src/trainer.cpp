#include "cdet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cdet/data/augment.hpp"
#include "cdet/device.hpp"
#include "cdet/error.hpp"
#include "cdet/model/checkpoint.hpp"
#include "cdet/random.hpp"
#include "cdet/schedulers.hpp"

namespace cdet {

namespace fs = std::filesystem;

namespace {

struct Batch {
  torch::Tensor pre, post, gt;
};

Batch collate(const std::vector<Sample>& samples, torch::Device device) {
  std::vector<torch::Tensor> pre, post, gt;
  for (const auto& s : samples) {
    pre.push_back(s.pair.pre);
    post.push_back(s.pair.post);
    gt.push_back(s.gt.tensor());
  }
  return {torch::stack(pre).to(device), torch::stack(post).to(device),
          torch::stack(gt).to(device, torch::kFloat32)};
}

// Batch boundaries over n items. A trailing batch of one is merged into the
// previous one because batch statistics need at least two samples.
std::vector<std::pair<size_t, size_t>> batch_ranges(size_t n, size_t batch) {
  std::vector<std::pair<size_t, size_t>> out;
  for (size_t start = 0; start < n; start += batch) out.emplace_back(start, std::min(n, start + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

class RunLog {
 public:
  RunLog(const fs::path& file, std::function<void(const std::string&)> sink) : sink_(std::move(sink)) {
    if (!file.empty()) out_.open(file, std::ios::trunc);
  }
  void operator()(const std::string& line) {
    if (out_.is_open()) out_ << line << "\n" << std::flush;
    if (sink_) sink_(line);
  }

 private:
  std::ofstream out_;
  std::function<void(const std::string&)> sink_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
}

}  // namespace

ChangeModel build_model(const ExperimentConfig& config, uint64_t seed, const fs::path& cache_root) {
  config.validate();
  torch::manual_seed(derive_seed(seed, "init"));
  BuildOptions options;
  options.cache_root = cache_root;
  options.drop_path_rate = config.drop_path_rate;
  auto encoder = build_backbone(config.backbone, options);
  return ChangeModel(encoder, config.decoder, config.threshold);
}

MetricsReport evaluate(ChangeModelImpl& model, const Dataset& data, int batch_size, torch::Device device) {
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard guard;
  ConfusionCounts counts;
  for (auto [begin, end] : batch_ranges(data.size(), static_cast<size_t>(batch_size))) {
    std::vector<Sample> samples;
    for (size_t i = begin; i < end; ++i) samples.push_back(preprocess(data.get(i), data.spec()));
    auto batch = collate(samples, device);
    auto pred = model.forward(batch.pre, batch.post);
    counts = accumulate(counts, pred.mask, batch.gt.to(torch::kUInt8));
  }
  model.train(was_training);
  return MetricsReport::from_counts(counts);
}

RunResult train(const ExperimentConfig& config, uint64_t seed, const TrainOptions& options) {
  config.validate();
  const auto device = select_device();
  if (config.runtime.threads > 0) torch::set_num_threads(config.runtime.threads);
  at::globalContext().setDeterministicAlgorithms(config.runtime.deterministic, /*warn_only=*/true);

  RunResult result;
  result.seed = seed;
  const auto hash = config_hash(config);
  if (options.write_artifacts) {
    result.run_dir = options.out_root / hash / std::to_string(seed);
    fs::create_directories(result.run_dir);
    write_text(result.run_dir / "config.json", to_json(config).dump(2) + "\n");
  }
  RunLog log(options.write_artifacts ? result.run_dir / "log.txt" : fs::path{}, options.log);
  log("config " + config.name + " hash " + hash + " seed " + std::to_string(seed));

  const auto train_set = open_dataset(config.dataset, Split::train);
  if (train_set.size() == 0) fail(Errc::dataset_not_found, "training split is empty");

  auto model = build_model(config, seed, options.cache_root);
  model->to(device);
  model->train();

  const auto schedule = config.scheduler_config();
  torch::optim::AdamW optimizer(model->parameters(),
                                torch::optim::AdamWOptions(schedule.base_lr)
                                    .weight_decay(config.effective_weight_decay())
                                    .betas({config.optimizer.betas.first, config.optimizer.betas.second})
                                    .eps(config.optimizer.eps));

  const int epochs = schedule.total_epochs;
  std::vector<size_t> order(train_set.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(schedule, epoch);
    set_lr(optimizer, lr);

    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    size_t seen = 0;
    for (auto [begin, end] : batch_ranges(order.size(), static_cast<size_t>(config.batch_size))) {
      std::vector<Sample> samples;
      for (size_t k = begin; k < end; ++k) {
        auto s = preprocess(train_set.get(order[k]), config.dataset);
        if (config.augmentation.any_enabled()) {
          Rng rng(derive_seed(seed, s.pair.sample_id, static_cast<uint64_t>(epoch)));
          s = apply_paired_augmentation(s, config.augmentation, rng);
        }
        samples.push_back(std::move(s));
      }
      auto batch = collate(samples, device);
      optimizer.zero_grad();
      auto logits = model->forward_logits(batch.pre, batch.post);
      auto loss = combined_loss_from_logits(config.loss, logits, batch.gt);
      const double value = loss.item<double>();
      if (!std::isfinite(value))
        fail(Errc::training_diverged, "non-finite loss at epoch " + std::to_string(epoch) + " (seed " +
                                          std::to_string(seed) + ")");
      loss.backward();
      optimizer.step();
      loss_sum += value * static_cast<double>(end - begin);
      seen += end - begin;
    }
    const double mean_loss = loss_sum / static_cast<double>(seen);
    result.per_epoch.push_back({epoch, mean_loss, lr});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d/%d lr %.6g loss %.6f (%.1fs)", epoch + 1, epochs, lr, mean_loss, secs);
    log(line);
  }

  // Final-epoch model only; no best-epoch selection.
  if (has_split(config.dataset.name, Split::test)) {
    const auto test_set = open_dataset(config.dataset, Split::test);
    if (test_set.size() > 0) result.test_metrics = evaluate(*model, test_set, config.batch_size, device);
  }
  if (config.runtime.evaluate_train) result.train_metrics = evaluate(*model, train_set, config.batch_size, device);
  log("test f1 " + std::to_string(result.test_metrics.f1) +
      (result.train_metrics ? " train f1 " + std::to_string(result.train_metrics->f1) : ""));

  if (options.write_artifacts) {
    result.checkpoint = result.run_dir / "checkpoint.safetensors";
    model->to(torch::kCPU);
    save_checkpoint(result.checkpoint, *model, to_json(config).dump());
    nlohmann::json metrics{{"seed", seed}, {"config_hash", hash}, {"epochs", epochs}, {"test", to_json(result.test_metrics)}};
    if (result.train_metrics) metrics["train"] = to_json(*result.train_metrics);
    write_text(result.run_dir / "metrics.json", metrics.dump(2) + "\n");
    std::string trace = "epoch,lr,train_loss\n";
    for (const auto& e : result.per_epoch) {
      char row[96];
      std::snprintf(row, sizeof row, "%d,%.17g,%.17g\n", e.epoch, e.lr, e.train_loss);
      trace += row;
    }
    write_text(result.run_dir / "lr_trace.csv", trace);
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  ExperimentResult out;
  out.config_hash = config_hash(config);
  out.dir = options.out_root / out.config_hash;
  std::vector<MetricsReport> reports;
  for (auto seed : config.seeds) {
    SeedStatus status{seed, false, ""};
    try {
      auto run = train(config, seed, options);
      reports.push_back(run.test_metrics);
      out.runs.push_back(std::move(run));
      status.ok = true;
    } catch (const Error& e) {
      // Bad configs and missing data or weights would fail every seed alike.
      if (failure_class(e.code()) != FailureClass::runtime) throw;
      status.error = e.what();
    }
    out.statuses.push_back(status);
  }
  out.partial = reports.size() != config.seeds.size();
  if (!reports.empty()) out.report = aggregate(reports);
  if (options.write_artifacts) {
    fs::create_directories(out.dir);
    write_text(out.dir / "experiment.json", to_json(out).dump(2) + "\n");
  }
  return out;
}

void require_complete(const ExperimentResult& result) {
  if (!result.partial) return;
  std::string msg = "not every seed finished:";
  for (const auto& s : result.statuses)
    msg += " seed " + std::to_string(s.seed) + (s.ok ? " ok;" : " failed (" + s.error + ");");
  fail(Errc::partial_result, msg);
}

nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.statuses) {
    nlohmann::json item{{"seed", s.seed}, {"ok", s.ok}};
    if (!s.ok) item["error"] = s.error;
    for (const auto& run : r.runs)
      if (run.seed == s.seed && s.ok) item["f1"] = run.test_metrics.f1;
    seeds.push_back(item);
  }
  nlohmann::json j{{"config_hash", r.config_hash}, {"partial", r.partial}, {"seeds", seeds}};
  if (!r.runs.empty()) j["aggregate"] = to_json(r.report);
  return j;
}

}  // namespace cdet

namespace cdet {

LoadedRun load_run(const std::filesystem::path& checkpoint) {
  LoadedRun run;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_checkpoint_config(checkpoint));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::integrity_error, checkpoint.string() + ": stored config is not valid JSON");
  }
  run.config = from_json(j);
  BuildOptions options;
  options.drop_path_rate = run.config.drop_path_rate;
  auto encoder = build_architecture(Registry::builtin().find(run.config.backbone), options);
  run.model = ChangeModel(encoder, run.config.decoder, run.config.threshold);
  load_checkpoint_weights(checkpoint, *run.model);
  run.model->eval();
  return run;
}

}  // namespace cdet
