#pragma once

// Brute-force reference implementations of the evaluation metrics, written
// independently of src/eval for cross-checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "wsvad/eval/metrics.hpp"
#include "wsvad/eval/postprocess.hpp"

namespace wsvad::testing {

using Bits = std::vector<std::uint8_t>;

// Frame i is on iff some frame j >= phi_hi is reachable from i through
// frames that are all >= phi_low.
inline Bits oracle_double_threshold(const std::vector<float>& p, double lo, double hi) {
  const std::size_t n = p.size();
  Bits out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n && !out[i]; ++j) {
      if (!(p[j] >= hi)) continue;
      bool connected = true;
      for (std::size_t k = std::min(i, j); k <= std::max(i, j); ++k) {
        connected = connected && p[k] >= lo;
      }
      out[i] = connected ? 1 : 0;
    }
  }
  return out;
}

struct OracleFrame {
  std::uint64_t tp, fp, fn, tn;
  double precision, recall, f1, fer;  // percent, macro over present classes
};

inline OracleFrame oracle_frame_metrics(const Bits& pred, const Bits& ref) {
  OracleFrame o{};
  double p_sum = 0, r_sum = 0, f_sum = 0;
  int classes = 0;
  for (int cls : {1, 0}) {
    std::uint64_t hit = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool pc = pred[i] == cls, rc = ref[i] == cls;
      hit += pc && rc;
      predicted += pc;
      actual += rc;
    }
    if (cls == 1) {
      o.tp = hit;
      o.fp = predicted - hit;
      o.fn = actual - hit;
    } else {
      o.tn = hit;
    }
    if (predicted == 0 && actual == 0) continue;
    const double prec = predicted ? 100.0 * hit / predicted : 0.0;
    const double rec = actual ? 100.0 * hit / actual : 0.0;
    p_sum += prec;
    r_sum += rec;
    f_sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    ++classes;
  }
  if (classes) {
    o.precision = p_sum / classes;
    o.recall = r_sum / classes;
    o.f1 = f_sum / classes;
  }
  std::uint64_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != ref[i];
  o.fer = pred.empty() ? 0.0 : 100.0 * wrong / pred.size();
  return o;
}

// Returns {p_fa, p_miss} in percent; -1 marks an undefined rate.
inline std::pair<double, double> oracle_fa_miss(const Bits& pred, const Bits& ref) {
  std::uint64_t neg = 0, false_alarms = 0, pos = 0, misses = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (ref[i]) {
      ++pos;
      misses += !pred[i];
    } else {
      ++neg;
      false_alarms += pred[i] != 0;
    }
  }
  return {neg ? 100.0 * false_alarms / neg : -1.0, pos ? 100.0 * misses / pos : -1.0};
}

// Probability that a random positive outscores a random negative, ties half.
inline double oracle_auc(const std::vector<float>& s, const Bits& y) {
  double wins = 0;
  std::uint64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

inline bool oracle_compatible(const eval::Segment& p, const eval::Segment& r) {
  const double tol = std::max(0.2, 0.2 * (r.offset - r.onset));
  return std::fabs(p.onset - r.onset) <= 0.2 + 1e-9 && std::fabs(p.offset - r.offset) <= tol + 1e-9;
}

// Largest one-to-one matching, by trying every assignment.
inline std::uint64_t oracle_max_matching(const std::vector<eval::Segment>& pred,
                                         const std::vector<eval::Segment>& ref) {
  std::vector<bool> used(pred.size(), false);
  std::function<std::uint64_t(std::size_t)> best = [&](std::size_t r) -> std::uint64_t {
    if (r == ref.size()) return 0;
    std::uint64_t b = best(r + 1);
    for (std::size_t p = 0; p < pred.size(); ++p) {
      if (used[p] || !oracle_compatible(pred[p], ref[r])) continue;
      used[p] = true;
      b = std::max(b, 1 + best(r + 1));
      used[p] = false;
    }
    return b;
  };
  return best(0);
}

inline double oracle_event_f1(std::uint64_t tp, std::uint64_t n_pred, std::uint64_t n_ref) {
  if (n_pred + n_ref == 0) return 100.0;
  return 100.0 * 2.0 * tp / static_cast<double>(n_pred + n_ref);
}

// Sorted disjoint segments on the 20 ms grid within [0, 4 s).
inline std::vector<eval::Segment> random_segments(std::mt19937_64& rng, std::size_t max_count) {
  const std::size_t count = std::uniform_int_distribution<std::size_t>(0, max_count)(rng);
  std::vector<int> cuts;
  for (std::size_t i = 0; i < 2 * count; ++i) {
    cuts.push_back(std::uniform_int_distribution<int>(0, 200)(rng));
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<eval::Segment> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); i += 2) {
    out.push_back({cuts[i] * 0.02, cuts[i + 1] * 0.02});
  }
  return out;
}

// A noisy copy of `ref`: each segment kept with its edges jittered by up to
// `jitter` grid steps, some dropped, some spurious ones added; the result is
// made sorted and disjoint again.
inline std::vector<eval::Segment> jittered(const std::vector<eval::Segment>& ref,
                                           std::mt19937_64& rng, int jitter) {
  std::vector<std::pair<int, int>> cells;
  std::uniform_int_distribution<int> d(-jitter, jitter);
  for (const auto& s : ref) {
    if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.2) continue;
    int on = static_cast<int>(std::lround(s.onset / 0.02)) + d(rng);
    int off = static_cast<int>(std::lround(s.offset / 0.02)) + d(rng);
    on = std::max(on, 0);
    if (off <= on) off = on + 1;
    cells.push_back({on, off});
  }
  if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.3) {
    const int on = std::uniform_int_distribution<int>(0, 190)(rng);
    cells.push_back({on, on + std::uniform_int_distribution<int>(1, 10)(rng)});
  }
  std::sort(cells.begin(), cells.end());
  std::vector<eval::Segment> out;
  int last_off = -1;
  for (auto [on, off] : cells) {
    if (on < last_off) on = last_off;
    if (off <= on) continue;
    out.push_back({on * 0.02, off * 0.02});
    last_off = off;
  }
  if (out.size() > 5) out.resize(5);
  return out;
}

}  // namespace wsvad::testing
