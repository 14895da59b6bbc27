#include "wsvad/eval/run.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::eval {

double round2(double x) { return std::nearbyint(x * 100.0) / 100.0; }

nlohmann::json MetricsReport::to_json() const {
  auto pct = [](std::optional<double> v) {
    return v ? nlohmann::json(round2(*v)) : nlohmann::json(nullptr);
  };
  nlohmann::json dp = nullptr;
  if (d_prime) {
    if (std::isfinite(*d_prime)) dp = std::round(*d_prime * 1e4) / 1e4;
    else dp = *d_prime > 0 ? "inf" : "-inf";
  }
  return {{"precision", round2(precision)},
          {"recall", round2(recall)},
          {"f1", round2(f1)},
          {"fer", round2(fer)},
          {"auc", pct(auc)},
          {"event_f1", round2(event_f1)},
          {"p_fa", pct(p_fa)},
          {"p_miss", pct(p_miss)},
          {"map", pct(map)},
          {"d_prime", dp}};
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > 20) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

}  // namespace

EvalResult evaluate_run(const std::vector<distill::FrameRecord>& probs,
                        const std::map<std::string, std::vector<Segment>>& refs,
                        const EvalOptions& opts) {
  opts.threshold.validate();
  std::vector<std::string> missing_ref, missing_pred;
  std::set<std::string> seen;
  for (const auto& p : probs) {
    if (!seen.insert(p.clip_id).second) throw InvalidInput("duplicate clip " + p.clip_id);
    if (!refs.count(p.clip_id)) missing_ref.push_back(p.clip_id);
    if (p.values.cols() <= opts.speech_column) {
      throw InvalidInput("clip " + p.clip_id + " has no speech column");
    }
  }
  for (const auto& [id, segs] : refs) {
    if (!seen.count(id)) missing_pred.push_back(id);
  }
  if (!missing_ref.empty() || !missing_pred.empty()) {
    std::string msg = "clip ids do not align.";
    if (!missing_ref.empty()) msg += " No reference for: " + join_ids(missing_ref) + ".";
    if (!missing_pred.empty()) msg += " No prediction for: " + join_ids(missing_pred) + ".";
    throw InvalidInput(msg);
  }

  EvalResult res;
  std::vector<float> all_scores;
  std::vector<std::uint8_t> all_labels;
  std::vector<float> clip_scores;
  std::vector<std::uint8_t> clip_labels;
  for (const auto& p : probs) {
    const std::size_t frames = p.values.rows();
    std::vector<float> speech(frames);
    for (std::size_t t = 0; t < frames; ++t) speech[t] = p.values(t, opts.speech_column);
    const auto& ref_segs = refs.at(p.clip_id);
    const auto ref = segments_to_frames(ref_segs, frames, opts.hop_s);
    const auto pred = apply_threshold(speech, opts.threshold);
    res.frames += confusion(pred, ref);
    SegmentList decoded{p.clip_id, decode_segments(pred, opts.hop_s)};
    res.events += match_events(decoded.segments, ref_segs, opts.events);
    res.predicted.push_back(std::move(decoded));
    all_scores.insert(all_scores.end(), speech.begin(), speech.end());
    all_labels.insert(all_labels.end(), ref.begin(), ref.end());

    double s1 = 0.0, s2 = 0.0;
    for (float v : speech) {
      s1 += v;
      s2 += static_cast<double>(v) * v;
    }
    clip_scores.push_back(s1 == 0.0 ? 0.0f : static_cast<float>(s2 / s1));
    clip_labels.push_back(ref_segs.empty() ? 0 : 1);
  }

  const FrameMetrics fm = frame_metrics(res.frames);
  const FaMiss fam = fa_miss(res.frames);
  MetricsReport& r = res.report;
  r.precision = fm.macro.precision;
  r.recall = fm.macro.recall;
  r.f1 = fm.macro.f1;
  r.fer = fm.fer;
  r.event_f1 = event_f1(res.events);
  r.p_fa = fam.p_fa;
  r.p_miss = fam.p_miss;
  res.roc = roc_curve(all_scores, all_labels);
  try {
    const double a = auc(all_scores, all_labels);
    r.auc = 100.0 * a;
    r.d_prime = d_prime(a);
  } catch (const Undefined&) {
  }
  try {
    Matrix<float> s(clip_scores.size(), 1, clip_scores);
    Matrix<std::uint8_t> l(clip_labels.size(), 1, clip_labels);
    r.map = mean_average_precision(s, l).map;
  } catch (const Undefined&) {
  }
  return res;
}

void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& roc) {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,tpr,fpr\n";
  for (const auto& p : roc) {
    if (std::isinf(p.threshold)) out << "inf";
    else out << p.threshold;
    out << ',' << p.tpr << ',' << p.fpr << '\n';
  }
  io::write_file_atomic(path, out.str());
}

}  // namespace wsvad::eval
