#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wsvad/common/matrix.hpp"

namespace wsvad::distill {

enum class LabelScheme { kSoft, kHard, kDynamic };

std::string to_string(LabelScheme scheme);
LabelScheme label_scheme_from_string(const std::string& s);

/// Per-frame student targets. Column 0 is Speech, column 1 non-Speech; the
/// two columns are independent and need not sum to one.
struct StudentTargets {
  Matrix<float> values;  // T x 2
  LabelScheme scheme = LabelScheme::kSoft;
  std::string clip_id;

  std::size_t frames() const noexcept { return values.rows(); }
};

struct DistillConfig {
  std::size_t speech_index = 0;
  double phi = 0.5;
  double dynamic_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Speech column = teacher speech probability, non-Speech column = maximum
/// over every other event, per frame. `probs` is T x E with E >= 2.
StudentTargets pool_teacher_labels(const Matrix<float>& probs, const DistillConfig& cfg,
                                   std::string clip_id = {});

/// Each cell becomes 1 if >= phi, else 0.
StudentTargets harden(const StudentTargets& targets, double phi = 0.5);

/// Frames drawn for hardening by dynamize(), ascending: floor(fraction x
/// speech-active count) frames sampled without replacement from the frames
/// whose Speech value is >= phi. The draw is seeded by (cfg.seed, clip id).
std::vector<std::size_t> dynamic_selection(const StudentTargets& soft, const DistillConfig& cfg);

/// Hardens both columns at the frames of dynamic_selection(); every other
/// frame keeps its soft values bit for bit.
StudentTargets dynamize(const StudentTargets& soft, const DistillConfig& cfg);

/// soft -> soft, harden or dynamize according to `scheme`.
StudentTargets apply_scheme(const StudentTargets& soft, LabelScheme scheme,
                            const DistillConfig& cfg);

}  // namespace wsvad::distill
