#include "wsvad/distill/labels.hpp"

#include <algorithm>
#include <cmath>

#include "wsvad/common/error.hpp"
#include "wsvad/common/rng.hpp"

namespace wsvad::distill {

std::string to_string(LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::kSoft: return "soft";
    case LabelScheme::kHard: return "hard";
    case LabelScheme::kDynamic: return "dynamic";
  }
  return "soft";
}

LabelScheme label_scheme_from_string(const std::string& s) {
  if (s == "soft") return LabelScheme::kSoft;
  if (s == "hard") return LabelScheme::kHard;
  if (s == "dynamic") return LabelScheme::kDynamic;
  throw InvalidInput("unknown label scheme '" + s + "' (expected soft, hard or dynamic)");
}

void DistillConfig::validate() const {
  if (!(phi > 0.0 && phi < 1.0)) throw InvalidInput("phi must be in (0, 1)");
  if (!(dynamic_fraction >= 0.0 && dynamic_fraction <= 1.0)) {
    throw InvalidInput("dynamic_fraction must be in [0, 1]");
  }
}

StudentTargets pool_teacher_labels(const Matrix<float>& probs, const DistillConfig& cfg,
                                   std::string clip_id) {
  const std::size_t events = probs.cols();
  if (events < 2) throw InvalidInput("teacher output needs at least 2 events");
  if (cfg.speech_index >= events) throw InvalidInput("speech index outside the teacher's events");
  StudentTargets out;
  out.clip_id = std::move(clip_id);
  out.values = Matrix<float>(probs.rows(), 2);
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    const auto row = probs.row(t);
    float other = 0.0f;
    for (std::size_t e = 0; e < events; ++e) {
      if (e != cfg.speech_index) other = std::max(other, row[e]);
    }
    out.values(t, 0) = row[cfg.speech_index];
    out.values(t, 1) = other;
  }
  return out;
}

namespace {

float hard_value(float v, double phi) { return v >= phi ? 1.0f : 0.0f; }

}  // namespace

StudentTargets harden(const StudentTargets& targets, double phi) {
  StudentTargets out = targets;
  out.scheme = LabelScheme::kHard;
  for (auto& v : out.values.values()) v = hard_value(v, phi);
  return out;
}

std::vector<std::size_t> dynamic_selection(const StudentTargets& soft, const DistillConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> active;
  for (std::size_t t = 0; t < soft.frames(); ++t) {
    if (soft.values(t, 0) >= cfg.phi) active.push_back(t);
  }
  const auto k = static_cast<std::size_t>(
      std::floor(cfg.dynamic_fraction * static_cast<double>(active.size())));
  Rng rng = make_rng(cfg.seed, "dynamic:" + soft.clip_id);
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, active.size() - 1);
    std::swap(active[i], active[pick(rng)]);
  }
  active.resize(k);
  std::sort(active.begin(), active.end());
  return active;
}

StudentTargets dynamize(const StudentTargets& soft, const DistillConfig& cfg) {
  StudentTargets out = soft;
  out.scheme = LabelScheme::kDynamic;
  for (std::size_t t : dynamic_selection(soft, cfg)) {
    out.values(t, 0) = hard_value(out.values(t, 0), cfg.phi);
    out.values(t, 1) = hard_value(out.values(t, 1), cfg.phi);
  }
  return out;
}

StudentTargets apply_scheme(const StudentTargets& soft, LabelScheme scheme,
                            const DistillConfig& cfg) {
  switch (scheme) {
    case LabelScheme::kHard: return harden(soft, cfg.phi);
    case LabelScheme::kDynamic: return dynamize(soft, cfg);
    case LabelScheme::kSoft: break;
  }
  StudentTargets out = soft;
  out.scheme = LabelScheme::kSoft;
  return out;
}

}  // namespace wsvad::distill
