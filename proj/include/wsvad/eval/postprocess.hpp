#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace wsvad::eval {

enum class ThresholdMode { kDouble, kSimple };

struct ThresholdConfig {
  ThresholdMode mode = ThresholdMode::kDouble;
  double phi_low = 0.1;
  double phi_hi = 0.5;
  double phi = 0.5;  // simple mode

  static ThresholdConfig simple(double phi);
  static ThresholdConfig dual(double phi_low, double phi_hi);

  void validate() const;
  nlohmann::json to_json() const;
  static ThresholdConfig from_json(const nlohmann::json& j);
};

/// Seed-and-grow: every maximal run of frames >= phi_low that contains at
/// least one frame >= phi_hi is marked 1, everything else 0.
std::vector<std::uint8_t> double_threshold(std::span<const float> probs, double phi_low,
                                           double phi_hi);

/// 1 where prob >= phi.
std::vector<std::uint8_t> simple_threshold(std::span<const float> probs, double phi);

std::vector<std::uint8_t> apply_threshold(std::span<const float> probs, const ThresholdConfig& cfg);

struct Segment {
  double onset = 0.0;
  double offset = 0.0;

  bool operator==(const Segment&) const = default;
};

struct SegmentList {
  std::string clip_id;
  std::vector<Segment> segments;  // sorted, disjoint
};

/// Maximal runs of ones, run [s, e] -> (s * hop, (e + 1) * hop).
std::vector<Segment> decode_segments(std::span<const std::uint8_t> binary, double hop_s = 0.020);

/// Frame t is 1 when its centre (t + 0.5) * hop lies in some [onset, offset).
std::vector<std::uint8_t> segments_to_frames(std::span<const Segment> segments,
                                             std::size_t frames, double hop_s = 0.020);

/// Throws InvalidInput unless every onset < offset and segments are sorted
/// and disjoint.
void validate_segments(std::span<const Segment> segments);

}  // namespace wsvad::eval
