#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wsvad/common/matrix.hpp"
#include "wsvad/eval/postprocess.hpp"

namespace wsvad::eval {

/// Frame confusion counts with Speech as the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept;
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// All values in percent.
struct FrameMetrics {
  ConfusionCounts counts;
  ClassScores speech;
  ClassScores non_speech;
  ClassScores macro;
  double fer = 0.0;
};

/// Per-class precision and recall with 0 for an empty denominator; F1 is
/// the harmonic mean (0 when P + R = 0). The macro scores average the
/// classes that occur in the prediction or the reference.
FrameMetrics frame_metrics(const ConfusionCounts& counts);
/// Throws InvalidInput on a length mismatch.
FrameMetrics frame_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);

/// False-alarm and miss rates in percent; a rate whose reference class is
/// absent is empty.
struct FaMiss {
  std::optional<double> p_fa;
  std::optional<double> p_miss;
};

FaMiss fa_miss(const ConfusionCounts& counts);
FaMiss fa_miss(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

/// One point per distinct score (predict positive when score >= threshold),
/// in descending threshold order, preceded by (+inf, 0, 0).
std::vector<RocPoint> roc_curve(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// Trapezoidal area under roc_curve(); equal scores form one step, so a
/// tied positive/negative pair counts one half. Throws Undefined when the
/// labels hold a single class.
double auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// Standard normal quantile, accurate to about 1e-9 on (0, 1).
double normal_quantile(double p);

/// sqrt(2) * Phi^-1(auc); auc 0 and 1 map to -inf and +inf.
double d_prime(double auc);

/// Non-interpolated average precision in [0, 1]: sum over distinct score
/// thresholds of (recall gain) x (precision there). Without ties this is
/// the mean precision at each positive's rank. Throws Undefined when there
/// is no positive.
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct MapResult {
  double map = 0.0;  // percent
  std::vector<std::size_t> excluded_events;  // no positive clip
};

/// Mean of per-event AP over events with at least one positive, in percent.
/// Throws Undefined when no event has a positive.
MapResult mean_average_precision(const Matrix<float>& scores, const Matrix<std::uint8_t>& refs);

struct EventCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  EventCounts& operator+=(const EventCounts& o) noexcept;
  bool operator==(const EventCounts&) const = default;
};

struct EventRule {
  double t_collar = 0.200;
  double dur_tol = 0.20;
};

/// True when prediction p may match reference r: onsets within the collar
/// and offsets within max(collar, dur_tol x duration(r)).
bool events_compatible(const Segment& pred, const Segment& ref, const EventRule& rule = {});

/// One-to-one matching: references in ascending onset order each take the
/// first unmatched compatible prediction in ascending onset order.
EventCounts match_events(std::span<const Segment> pred, std::span<const Segment> ref,
                         const EventRule& rule = {});

/// 100 * 2TP / (2TP + FP + FN); 100 when there are no events at all.
double event_f1(const EventCounts& counts);
double event_f1(std::span<const Segment> pred, std::span<const Segment> ref,
                const EventRule& rule = {});

}  // namespace wsvad::eval
