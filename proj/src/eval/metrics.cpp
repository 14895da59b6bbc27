#include "wsvad/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wsvad/common/error.hpp"

namespace wsvad::eval {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

EventCounts& EventCounts::operator+=(const EventCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw InvalidInput("prediction has " + std::to_string(a) + " frames, reference has " +
                       std::to_string(b));
  }
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

ClassScores class_scores(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassScores s;
  s.precision = ratio(tp, tp + fp);
  s.recall = ratio(tp, tp + fn);
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

}  // namespace

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
  check_lengths(pred.size(), ref.size());
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, r = ref[i] != 0;
    if (p && r) ++c.tp;
    else if (p) ++c.fp;
    else if (r) ++c.fn;
    else ++c.tn;
  }
  return c;
}

FrameMetrics frame_metrics(const ConfusionCounts& c) {
  FrameMetrics m;
  m.counts = c;
  m.speech = class_scores(c.tp, c.fp, c.fn);
  m.non_speech = class_scores(c.tn, c.fn, c.fp);
  const bool has_speech = c.tp + c.fp + c.fn > 0;
  const bool has_non_speech = c.tn + c.fn + c.fp > 0;
  std::vector<const ClassScores*> present;
  if (has_speech) present.push_back(&m.speech);
  if (has_non_speech) present.push_back(&m.non_speech);
  for (const auto* s : present) {
    m.macro.precision += s->precision / static_cast<double>(present.size());
    m.macro.recall += s->recall / static_cast<double>(present.size());
    m.macro.f1 += s->f1 / static_cast<double>(present.size());
  }
  m.fer = ratio(c.fp + c.fn, c.total());
  return m;
}

FrameMetrics frame_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
  return frame_metrics(confusion(pred, ref));
}

FaMiss fa_miss(const ConfusionCounts& c) {
  FaMiss r;
  if (c.fp + c.tn > 0) r.p_fa = ratio(c.fp, c.fp + c.tn);
  if (c.tp + c.fn > 0) r.p_miss = ratio(c.fn, c.tp + c.fn);
  return r;
}

FaMiss fa_miss(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
  return fa_miss(confusion(pred, ref));
}

namespace {

struct RankedCounts {
  std::vector<float> thresholds;  // distinct scores, descending
  std::vector<std::uint64_t> tp;  // cumulative positives with score >= threshold
  std::vector<std::uint64_t> fp;
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

RankedCounts rank_scores(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (float s : scores) {
    if (std::isnan(s)) throw InvalidInput("score is NaN");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedCounts r;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (labels[order[i]]) ++tp;
    else ++fp;
    const bool last_of_group =
        i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
    if (last_of_group) {
      r.thresholds.push_back(scores[order[i]]);
      r.tp.push_back(tp);
      r.fp.push_back(fp);
    }
  }
  r.pos = tp;
  r.neg = fp;
  return r;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  const RankedCounts r = rank_scores(scores, labels);
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    out.push_back({r.thresholds[i],
                   r.pos ? static_cast<double>(r.tp[i]) / static_cast<double>(r.pos) : 0.0,
                   r.neg ? static_cast<double>(r.fp[i]) / static_cast<double>(r.neg) : 0.0});
  }
  return out;
}

double auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  const RankedCounts r = rank_scores(scores, labels);
  if (r.pos == 0 || r.neg == 0) throw Undefined("AUC needs both classes in the reference");
  // Twice the trapezoid area in count units is an exact integer.
  unsigned __int128 twice = 0;
  std::uint64_t prev_tp = 0, prev_fp = 0;
  for (std::size_t i = 0; i < r.tp.size(); ++i) {
    twice += static_cast<unsigned __int128>(r.fp[i] - prev_fp) * (r.tp[i] + prev_tp);
    prev_tp = r.tp[i];
    prev_fp = r.fp[i];
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(r.pos) * static_cast<double>(r.neg));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw InvalidInput("normal_quantile: p outside [0, 1]");
  }
  // Acklam's rational approximation (relative error 1.15e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // One Halley step on Phi(x) - p.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

double d_prime(double auc_value) {
  if (!(auc_value >= 0.0 && auc_value <= 1.0)) throw InvalidInput("d_prime: AUC outside [0, 1]");
  return std::sqrt(2.0) * normal_quantile(auc_value);
}

double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  const RankedCounts r = rank_scores(scores, labels);
  if (r.pos == 0) throw Undefined("average precision needs a positive");
  double ap = 0.0;
  std::uint64_t prev_tp = 0;
  for (std::size_t i = 0; i < r.tp.size(); ++i) {
    const double precision = static_cast<double>(r.tp[i]) / static_cast<double>(r.tp[i] + r.fp[i]);
    ap += static_cast<double>(r.tp[i] - prev_tp) / static_cast<double>(r.pos) * precision;
    prev_tp = r.tp[i];
  }
  return ap;
}

MapResult mean_average_precision(const Matrix<float>& scores, const Matrix<std::uint8_t>& refs) {
  if (scores.rows() != refs.rows() || scores.cols() != refs.cols()) {
    throw InvalidInput("score and reference matrices differ in shape");
  }
  MapResult out;
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<float> col_s(scores.rows());
  std::vector<std::uint8_t> col_r(scores.rows());
  for (std::size_t e = 0; e < scores.cols(); ++e) {
    bool any = false;
    for (std::size_t n = 0; n < scores.rows(); ++n) {
      col_s[n] = scores(n, e);
      col_r[n] = refs(n, e);
      any = any || refs(n, e);
    }
    if (!any) {
      out.excluded_events.push_back(e);
      continue;
    }
    sum += average_precision(col_s, col_r);
    ++used;
  }
  if (used == 0) throw Undefined("mAP needs at least one event with a positive clip");
  out.map = 100.0 * sum / static_cast<double>(used);
  return out;
}

bool events_compatible(const Segment& pred, const Segment& ref, const EventRule& rule) {
  // The slack absorbs rounding of times on the 20 ms grid.
  constexpr double kSlack = 1e-9;
  const double offset_tol = std::max(rule.t_collar, rule.dur_tol * (ref.offset - ref.onset));
  return std::abs(pred.onset - ref.onset) <= rule.t_collar + kSlack &&
         std::abs(pred.offset - ref.offset) <= offset_tol + kSlack;
}

EventCounts match_events(std::span<const Segment> pred, std::span<const Segment> ref,
                         const EventRule& rule) {
  std::vector<std::size_t> pi(pred.size()), ri(ref.size());
  std::iota(pi.begin(), pi.end(), std::size_t{0});
  std::iota(ri.begin(), ri.end(), std::size_t{0});
  std::stable_sort(pi.begin(), pi.end(),
                   [&](std::size_t a, std::size_t b) { return pred[a].onset < pred[b].onset; });
  std::stable_sort(ri.begin(), ri.end(),
                   [&](std::size_t a, std::size_t b) { return ref[a].onset < ref[b].onset; });
  std::vector<bool> used(pred.size(), false);
  EventCounts c;
  for (std::size_t r : ri) {
    for (std::size_t k = 0; k < pi.size(); ++k) {
      if (!used[k] && events_compatible(pred[pi[k]], ref[r], rule)) {
        used[k] = true;
        ++c.tp;
        break;
      }
    }
  }
  c.fn = ref.size() - c.tp;
  c.fp = pred.size() - c.tp;
  return c;
}

double event_f1(const EventCounts& c) {
  const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 100.0 : 100.0 * static_cast<double>(2 * c.tp) / static_cast<double>(den);
}

double event_f1(std::span<const Segment> pred, std::span<const Segment> ref,
                const EventRule& rule) {
  return event_f1(match_events(pred, ref, rule));
}

}  // namespace wsvad::eval
