#include "wsvad/eval/postprocess.hpp"

#include <cmath>

#include "wsvad/common/error.hpp"

namespace wsvad::eval {

ThresholdConfig ThresholdConfig::simple(double phi) {
  ThresholdConfig c;
  c.mode = ThresholdMode::kSimple;
  c.phi = phi;
  return c;
}

ThresholdConfig ThresholdConfig::dual(double phi_low, double phi_hi) {
  ThresholdConfig c;
  c.mode = ThresholdMode::kDouble;
  c.phi_low = phi_low;
  c.phi_hi = phi_hi;
  return c;
}

void ThresholdConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (mode == ThresholdMode::kSimple) {
    if (!in_unit(phi)) throw InvalidInput("threshold phi must be in [0, 1]");
    return;
  }
  if (!in_unit(phi_low) || !in_unit(phi_hi)) throw InvalidInput("thresholds must be in [0, 1]");
  if (phi_low > phi_hi) throw InvalidInput("phi_low must not exceed phi_hi");
}

nlohmann::json ThresholdConfig::to_json() const {
  if (mode == ThresholdMode::kSimple) return {{"mode", "simple"}, {"phi", phi}};
  return {{"mode", "double"}, {"phi_low", phi_low}, {"phi_hi", phi_hi}};
}

ThresholdConfig ThresholdConfig::from_json(const nlohmann::json& j) {
  ThresholdConfig c;
  try {
    const std::string mode = j.value("mode", std::string("double"));
    if (mode == "simple") {
      c = simple(j.value("phi", 0.5));
    } else if (mode == "double") {
      c = dual(j.value("phi_low", 0.1), j.value("phi_hi", 0.5));
    } else {
      throw InvalidInput("unknown threshold mode '" + mode + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("threshold config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::uint8_t> double_threshold(std::span<const float> probs, double phi_low,
                                           double phi_hi) {
  if (phi_low > phi_hi) throw InvalidInput("phi_low must not exceed phi_hi");
  std::vector<std::uint8_t> out(probs.size(), 0);
  std::size_t t = 0;
  while (t < probs.size()) {
    if (!(probs[t] >= phi_low)) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    bool seeded = false;
    while (t < probs.size() && probs[t] >= phi_low) {
      seeded = seeded || probs[t] >= phi_hi;
      ++t;
    }
    if (seeded) std::fill(out.begin() + start, out.begin() + t, 1);
  }
  return out;
}

std::vector<std::uint8_t> simple_threshold(std::span<const float> probs, double phi) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) out[t] = probs[t] >= phi ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> apply_threshold(std::span<const float> probs, const ThresholdConfig& cfg) {
  cfg.validate();
  return cfg.mode == ThresholdMode::kSimple ? simple_threshold(probs, cfg.phi)
                                            : double_threshold(probs, cfg.phi_low, cfg.phi_hi);
}

namespace {

// Keeps grid times such as 3 x 0.02 at their shortest decimal spelling.
double snap(double x) { return std::round(x * 1e9) / 1e9; }

}  // namespace

std::vector<Segment> decode_segments(std::span<const std::uint8_t> binary, double hop_s) {
  std::vector<Segment> out;
  std::size_t t = 0;
  while (t < binary.size()) {
    if (!binary[t]) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    while (t < binary.size() && binary[t]) ++t;
    out.push_back({snap(static_cast<double>(start) * hop_s), snap(static_cast<double>(t) * hop_s)});
  }
  return out;
}

std::vector<std::uint8_t> segments_to_frames(std::span<const Segment> segments,
                                             std::size_t frames, double hop_s) {
  std::vector<std::uint8_t> out(frames, 0);
  for (const auto& s : segments) {
    // Frames whose centre lies in [onset, offset).
    const double first = std::ceil(s.onset / hop_s - 0.5 - 1e-9);
    const double last = std::ceil(s.offset / hop_s - 0.5 - 1e-9);
    const auto lo = static_cast<std::size_t>(std::max(0.0, first));
    const auto hi = static_cast<std::size_t>(std::clamp(last, 0.0, static_cast<double>(frames)));
    for (std::size_t t = lo; t < hi; ++t) out[t] = 1;
  }
  return out;
}

void validate_segments(std::span<const Segment> segments) {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (!(s.onset >= 0.0 && s.onset < s.offset) || !std::isfinite(s.offset)) {
      throw InvalidInput("segment needs 0 <= onset < offset");
    }
    if (i > 0 && s.onset < segments[i - 1].offset) {
      throw InvalidInput("segments must be sorted and disjoint");
    }
  }
}

}  // namespace wsvad::eval
