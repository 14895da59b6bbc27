#include "wsvad/dsp/logmel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include "wsvad/common/error.hpp"
#include "wsvad/dsp/resample.hpp"

namespace wsvad::dsp {

namespace {

// FFTW planning is not thread-safe; executing an existing plan on new
// arrays is. Plans are created once per size and shared.
class RealFftPlan {
 public:
  explicit RealFftPlan(int n) : n_(n) {
    auto* in = fftw_alloc_real(static_cast<std::size_t>(n));
    auto* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~RealFftPlan() { fftw_destroy_plan(plan_); }
  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;

  void execute(double* in, fftw_complex* out) const {
    fftw_execute_dft_r2c(plan_, in, out);
  }
  int size() const { return n_; }

 private:
  int n_;
  fftw_plan plan_;
};

const RealFftPlan& plan_for(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<RealFftPlan>> plans;
  std::lock_guard lock(mutex);
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<RealFftPlan>(n);
  return *slot;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

int DspConfig::win_samples() const {
  return static_cast<int>(std::lround(win_s * target_sr));
}

int DspConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_s * target_sr));
}

void DspConfig::validate() const {
  if (target_sr <= 0 || n_fft <= 0 || n_mels <= 0) {
    throw InvalidInput("dsp config: rates and sizes must be positive");
  }
  if (win_samples() <= 0 || hop_samples() <= 0) {
    throw InvalidInput("dsp config: window and hop must be positive");
  }
  if (win_samples() > n_fft) {
    throw InvalidInput("dsp config: window longer than the transform");
  }
  if (hop_s > win_s) throw InvalidInput("dsp config: hop exceeds window");
  if (!(log_floor > 0.0)) throw InvalidInput("dsp config: log_floor must be > 0");
}

MelFilterbank::MelFilterbank(int sample_rate, int n_fft, int n_mels)
    : n_mels_(n_mels), n_bins_(n_fft / 2 + 1) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  edges_hz_.resize(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges_hz_[i] = mel_to_hz(mel_max * i / (n_mels + 1));
  }
  weights_.assign(static_cast<std::size_t>(n_mels) * n_bins_, 0.0);
  first_.assign(n_mels, n_bins_);
  last_.assign(n_mels, 0);
  const double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges_hz_[m];
    const double mid = edges_hz_[m + 1];
    const double hi = edges_hz_[m + 2];
    for (int k = 0; k < n_bins_; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      if (w > 0.0) {
        weights_[static_cast<std::size_t>(m) * n_bins_ + k] = w;
        first_[m] = std::min(first_[m], k);
        last_[m] = std::max(last_[m], k + 1);
      }
    }
  }
}

double MelFilterbank::hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double MelFilterbank::mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

void MelFilterbank::apply(const double* power, double* out) const {
  for (int m = 0; m < n_mels_; ++m) {
    const double* w = &weights_[static_cast<std::size_t>(m) * n_bins_];
    double acc = 0.0;
    for (int k = first_[m]; k < last_[m]; ++k) acc += w[k] * power[k];
    out[m] = acc;
  }
}

LogMelSpec logmel(const AudioClip& clip, const DspConfig& cfg) {
  cfg.validate();
  if (clip.samples.empty()) throw InvalidInput("logmel: empty clip");
  if (clip.sample_rate != cfg.target_sr) {
    throw InvalidInput("logmel: clip must be resampled to " +
                       std::to_string(cfg.target_sr) + " Hz first");
  }

  const int win = cfg.win_samples();
  const int hop = cfg.hop_samples();
  const long n = static_cast<long>(clip.samples.size());
  const long frames = (n + hop - 1) / hop;
  // Window start relative to t*hop so the window centre matches the centre
  // of the hop interval.
  const long offset = (hop - win) / 2;

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
  }

  static thread_local std::map<std::tuple<int, int, int>,
                                std::unique_ptr<MelFilterbank>>
      banks;
  auto& bank = banks[{cfg.target_sr, cfg.n_fft, cfg.n_mels}];
  if (!bank) bank = std::make_unique<MelFilterbank>(cfg.target_sr, cfg.n_fft, cfg.n_mels);

  const auto& plan = plan_for(cfg.n_fft);
  std::unique_ptr<double, FftwDeleter> buf(
      fftw_alloc_real(static_cast<std::size_t>(cfg.n_fft)));
  std::unique_ptr<fftw_complex, FftwDeleter> spec(
      fftw_alloc_complex(static_cast<std::size_t>(cfg.n_fft / 2 + 1)));
  std::vector<double> power(static_cast<std::size_t>(cfg.n_fft / 2 + 1));
  std::vector<double> mel(static_cast<std::size_t>(cfg.n_mels));
  const double log_floor = std::log(cfg.log_floor);

  LogMelSpec out;
  out.values = Matrix<float>(static_cast<std::size_t>(frames),
                             static_cast<std::size_t>(cfg.n_mels));
  out.frame_hop_s = static_cast<double>(hop) / cfg.target_sr;
  out.clip_id = clip.id;
  for (long t = 0; t < frames; ++t) {
    std::fill(buf.get(), buf.get() + cfg.n_fft, 0.0);
    const long start = t * hop + offset;
    for (int i = 0; i < win; ++i) {
      const long k = start + i;
      if (k >= 0 && k < n) buf.get()[i] = window[i] * clip.samples[k];
    }
    plan.execute(buf.get(), spec.get());
    for (std::size_t k = 0; k < power.size(); ++k) {
      const double re = spec.get()[k][0];
      const double im = spec.get()[k][1];
      power[k] = re * re + im * im;
    }
    bank->apply(power.data(), mel.data());
    for (int m = 0; m < cfg.n_mels; ++m) {
      out.values(t, m) = static_cast<float>(
          mel[m] > cfg.log_floor ? std::log(mel[m]) : log_floor);
    }
  }
  return out;
}

LogMelSpec extract_features(const AudioClip& clip, const DspConfig& cfg) {
  return logmel(resample(clip, cfg.target_sr), cfg);
}

}  // namespace wsvad::dsp
