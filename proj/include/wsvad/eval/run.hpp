#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wsvad/distill/archive.hpp"
#include "wsvad/eval/metrics.hpp"

namespace wsvad::eval {

/// Percentages except d_prime. Optional fields are absent when undefined
/// for the data (e.g. AUC on a single-class reference).
struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fer = 0.0;
  std::optional<double> auc;
  double event_f1 = 0.0;
  std::optional<double> p_fa;
  std::optional<double> p_miss;
  std::optional<double> map;
  std::optional<double> d_prime;

  /// Canonical JSON; percentages rounded half-even to 2 decimals, absent
  /// values as null.
  nlohmann::json to_json() const;
};

/// Rounds to 2 decimals, ties to even.
double round2(double x);

struct EvalResult {
  MetricsReport report;
  ConfusionCounts frames;
  EventCounts events;
  std::vector<RocPoint> roc;
  std::vector<SegmentList> predicted;  // per clip, archive order
};

struct EvalOptions {
  ThresholdConfig threshold;
  EventRule events;
  double hop_s = 0.020;
  std::size_t speech_column = 0;
};

/// Scores per-clip speech probabilities against reference segments. Frame
/// counts and event counts are pooled over clips; AUC uses all frames
/// together; mAP ranks clips by their linear-softmax-pooled speech score
/// against "clip contains speech". Throws InvalidInput listing the clip ids
/// present on only one side.
EvalResult evaluate_run(const std::vector<distill::FrameRecord>& probs,
                        const std::map<std::string, std::vector<Segment>>& refs,
                        const EvalOptions& opts = {});

/// "threshold,tpr,fpr" with one row per point.
void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& roc);

}  // namespace wsvad::eval
