#include "cdet/eval/metrics.hpp"

#include <cmath>
#include <numeric>

#include "cdet/error.hpp"

namespace cdet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts accumulate(ConfusionCounts counts, const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes())
    fail(Errc::shape_error, "prediction " + c10::str(pred.sizes()) + " vs ground truth " + c10::str(gt.sizes()));
  auto p = pred.to(torch::kCPU, torch::kInt64).flatten();
  auto g = gt.to(torch::kCPU, torch::kInt64).flatten();
  if (p.numel() > 0 && (p.min().item<int64_t>() < 0 || p.max().item<int64_t>() > 1 ||
                        g.min().item<int64_t>() < 0 || g.max().item<int64_t>() > 1))
    fail(Errc::invalid_mask, "masks must contain only 0 and 1");
  // 2*g + p indexes (tn, fp, fn, tp).
  auto bins = torch::bincount(2 * g + p, {}, 4);
  auto b = bins.accessor<int64_t, 1>();
  counts.tn += static_cast<uint64_t>(b[0]);
  counts.fp += static_cast<uint64_t>(b[1]);
  counts.fn += static_cast<uint64_t>(b[2]);
  counts.tp += static_cast<uint64_t>(b[3]);
  return counts;
}

ConfusionCounts accumulate(ConfusionCounts counts, const ChangeMask& pred, const ChangeMask& gt) {
  return accumulate(counts, pred.tensor(), gt.tensor());
}

bool zero_denominator(const ConfusionCounts& c) { return 2 * c.tp + c.fp + c.fn == 0; }

double binary_f1(const ConfusionCounts& c) {
  const uint64_t den = 2 * c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(den);
}

double precision(const ConfusionCounts& c) {
  const uint64_t den = c.tp + c.fp;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double recall(const ConfusionCounts& c) {
  const uint64_t den = c.tp + c.fn;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double mean_f1_two_class(const ConfusionCounts& c) {
  const ConfusionCounts swapped{c.tn, c.fn, c.fp, c.tp};
  return (binary_f1(c) + binary_f1(swapped)) / 2.0;
}

MetricsReport MetricsReport::from_counts(const ConfusionCounts& counts) {
  MetricsReport r;
  r.counts = counts;
  r.precision = cdet::precision(counts);
  r.recall = cdet::recall(counts);
  r.f1 = binary_f1(counts);
  r.mf1 = mean_f1_two_class(counts);
  r.zero_denominator_flag = zero_denominator(counts);
  return r;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) fail(Errc::invalid_argument, "cannot aggregate an empty list of reports");
  MetricsReport out;
  std::vector<double> p, r, m;
  for (const auto& rep : reports) {
    out.counts += rep.counts;
    out.per_seed.push_back(rep.f1);
    p.push_back(rep.precision);
    r.push_back(rep.recall);
    m.push_back(rep.mf1);
    out.zero_denominator_flag = out.zero_denominator_flag || rep.zero_denominator_flag;
  }
  out.f1 = mean_of(out.per_seed);
  out.precision = mean_of(p);
  out.recall = mean_of(r);
  out.mf1 = mean_of(m);
  out.mean = out.f1;
  out.std = sample_std(out.per_seed);
  out.single_sample_flag = reports.size() == 1;
  return out;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{{"tp", r.counts.tp},
                   {"fp", r.counts.fp},
                   {"fn", r.counts.fn},
                   {"tn", r.counts.tn},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"mf1", r.mf1},
                   {"mf1_note", "two-class mean F1, inflated by the unchanged class; not comparable with f1"},
                   {"averaging", "micro (counts accumulated over all pixels of the split)"},
                   {"zero_denominator_flag", r.zero_denominator_flag}};
  if (!r.per_seed.empty()) j["per_seed"] = r.per_seed;
  if (r.mean) j["mean"] = *r.mean;
  if (r.std) j["std"] = *r.std;
  if (r.mean) j["single_sample_flag"] = r.single_sample_flag;
  return j;
}

}  // namespace cdet
