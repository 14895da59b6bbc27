#include "wsvad/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>

#include <spdlog/spdlog.h>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"
#include "wsvad/common/parallel.hpp"
#include "wsvad/common/rng.hpp"
#include "wsvad/nn/model_io.hpp"
#include "wsvad/nn/ops.hpp"
#include "wsvad/train/loss.hpp"
#include "wsvad/train/sampler.hpp"
#include "wsvad/train/scheduler.hpp"

namespace wsvad::train {

using nlohmann::json;

std::string to_string(TrainMode mode) { return mode == TrainMode::kClip ? "clip" : "frame"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "clip") return TrainMode::kClip;
  if (s == "frame") return TrainMode::kFrame;
  throw InvalidInput("unknown training mode '" + s + "' (expected clip or frame)");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw InvalidInput("lr0 must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw InvalidInput("lr_factor must be in (0, 1)");
  if (patience < 1) throw InvalidInput("patience must be at least 1");
  if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
  if (epochs < 1) throw InvalidInput("epochs must be at least 1");
  if (!(cv_fraction > 0.0 && cv_fraction < 1.0)) {
    throw InvalidInput("cv_fraction must be in (0, 1)");
  }
  if (cv_every_batches < 1) throw InvalidInput("cv_every_batches must be at least 1");
  if (!(time_shift_sigma >= 0.0)) throw InvalidInput("time_shift_sigma must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw InvalidInput("invalid Adam hyperparameters");
  }
  if (threads < 1) throw InvalidInput("threads must be at least 1");
  specaug.validate();
}

json TrainConfig::to_json() const {
  return {{"lr0", lr0},
          {"lr_factor", lr_factor},
          {"patience", patience},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"cv_fraction", cv_fraction},
          {"cv_every_batches", cv_every_batches},
          {"seed", seed},
          {"spec_augment", spec_augment},
          {"specaug",
           {{"time_masks", specaug.time_masks},
            {"max_time_width", specaug.max_time_width},
            {"freq_masks", specaug.freq_masks},
            {"max_freq_width", specaug.max_freq_width}}},
          {"time_shift_sigma", time_shift_sigma},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"threads", threads}};
}

namespace {

template <typename V>
void read_key(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw InvalidInput(std::string("unknown ") + what + " key '" + k + "'");
  }
}

}  // namespace

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("training config must be a JSON object");
  TrainConfig c;
  try {
    reject_unknown(j,
                   {"lr0", "lr_factor", "patience", "batch_size", "epochs", "cv_fraction",
                    "cv_every_batches", "seed", "spec_augment", "specaug", "time_shift_sigma",
                    "adam", "threads"},
                   "training config");
    read_key(j, "lr0", c.lr0);
    read_key(j, "lr_factor", c.lr_factor);
    read_key(j, "patience", c.patience);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "epochs", c.epochs);
    read_key(j, "cv_fraction", c.cv_fraction);
    read_key(j, "cv_every_batches", c.cv_every_batches);
    read_key(j, "seed", c.seed);
    read_key(j, "spec_augment", c.spec_augment);
    read_key(j, "time_shift_sigma", c.time_shift_sigma);
    read_key(j, "threads", c.threads);
    if (j.contains("specaug")) {
      const auto& s = j.at("specaug");
      reject_unknown(s, {"time_masks", "max_time_width", "freq_masks", "max_freq_width"},
                     "specaug");
      read_key(s, "time_masks", c.specaug.time_masks);
      read_key(s, "max_time_width", c.specaug.max_time_width);
      read_key(s, "freq_masks", c.specaug.freq_masks);
      read_key(s, "max_freq_width", c.specaug.max_freq_width);
    }
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      reject_unknown(a, {"beta1", "beta2", "eps"}, "adam");
      read_key(a, "beta1", c.adam.beta1);
      read_key(a, "beta2", c.adam.beta2);
      read_key(a, "eps", c.adam.eps);
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

Batch make_batch(std::span<const TrainItem* const> items, TrainMode mode,
                 std::size_t min_frames) {
  if (items.empty()) throw InvalidInput("make_batch: no items");
  const std::size_t dims = items[0]->features.cols();
  std::size_t frames = min_frames;
  for (const auto* it : items) {
    if (it->features.rows() == 0) throw InvalidInput("clip '" + it->id + "' has no frames");
    if (it->features.cols() != dims) throw ShapeError("feature dimension differs within batch");
    frames = std::max(frames, it->features.rows());
  }
  const std::size_t n = items.size();
  Batch b;
  b.features = nn::Tensor<float>({n, frames, dims});
  b.lengths.resize(n);
  b.ids.resize(n);
  if (mode == TrainMode::kClip) {
    const std::size_t events = items[0]->clip_targets.size();
    b.targets = nn::Tensor<float>({n, events});
    for (std::size_t i = 0; i < n; ++i) {
      if (items[i]->clip_targets.size() != events) {
        throw ShapeError("clip target count differs within batch");
      }
      std::copy(items[i]->clip_targets.begin(), items[i]->clip_targets.end(),
                b.targets.data() + i * events);
    }
  } else {
    const std::size_t outs = items[0]->frame_targets.cols();
    b.targets = nn::Tensor<float>({n, frames, outs});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ft = items[i]->frame_targets;
      if (ft.rows() != items[i]->features.rows() || ft.cols() != outs) {
        throw ShapeError("frame targets of clip '" + items[i]->id +
                         "' do not match its features");
      }
      std::copy(ft.data(), ft.data() + ft.size(), b.targets.data() + i * frames * outs);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = items[i]->features;
    std::copy(f.data(), f.data() + f.size(), b.features.data() + i * frames * dims);
    b.lengths[i] = f.rows();
    b.ids[i] = items[i]->id;
  }
  return b;
}

namespace {

struct LossSum {
  double mean = 0.0;
  std::size_t count = 0;
};

LossSum batch_loss_impl(nn::Crnn<float>& model, const Batch& batch, TrainMode mode,
                        nn::Mode nn_mode, bool backward) {
  nn::CrnnTape<float> tape;
  const bool need_tape = backward && nn_mode == nn::Mode::kTrain;
  if (backward && !need_tape) throw InvalidInput("gradients require train mode");
  nn::Tensor<float> probs =
      nn_mode == nn::Mode::kTrain
          ? model.forward(batch.features, batch.lengths, nn_mode, need_tape ? &tape : nullptr)
          : model.infer(batch.features, batch.lengths);
  if (mode == TrainMode::kClip) {
    auto pooled = nn::linear_softmax_pool(probs, batch.lengths);
    auto r = bce(pooled, batch.targets);
    if (backward) {
      model.backward(tape, nn::linear_softmax_pool_backward(probs, batch.lengths, r.grad));
    }
    return {r.loss, r.count};
  }
  auto mask = frame_mask<float>(batch.lengths, probs.dim(1), probs.dim(2));
  auto r = bce(probs, batch.targets, &mask);
  if (backward) model.backward(tape, r.grad);
  return {r.loss, r.count};
}

}  // namespace

double batch_loss(nn::Crnn<float>& model, const Batch& batch, TrainMode mode, nn::Mode nn_mode,
                  bool backward) {
  return batch_loss_impl(model, batch, mode, nn_mode, backward).mean;
}

Split split_train_cv(std::size_t n, double cv_fraction, std::uint64_t seed) {
  if (n < 2) throw InvalidInput("need at least 2 clips to hold out a cross-validation set");
  if (!(cv_fraction > 0.0 && cv_fraction < 1.0)) {
    throw InvalidInput("cv_fraction must be in (0, 1)");
  }
  auto n_cv = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cv_fraction));
  n_cv = std::clamp<std::size_t>(n_cv, 1, n - 1);
  auto order = shuffled_order(n, seed);
  Split s;
  s.cv.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cv));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_cv), order.end());
  std::sort(s.cv.begin(), s.cv.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

json LogRecord::to_json() const {
  return {{"step", step}, {"epoch", epoch},   {"split", split},
          {"loss", std::isfinite(loss) ? json(loss) : json(nullptr)},
          {"lr", lr},     {"wallclock", wallclock}};
}

namespace {

void check_data(const std::vector<TrainItem>& data, TrainMode mode, const nn::CrnnConfig& net) {
  if (data.empty()) throw InvalidInput("training set is empty");
  for (const auto& it : data) {
    if (it.features.rows() == 0) throw InvalidInput("clip '" + it.id + "' has no frames");
    if (it.features.cols() != net.n_mels) {
      throw ShapeError("clip '" + it.id + "' has " + std::to_string(it.features.cols()) +
                       " feature bins, model expects " + std::to_string(net.n_mels));
    }
    if (mode == TrainMode::kClip) {
      if (it.clip_targets.size() != net.num_outputs) {
        throw ShapeError("clip '" + it.id + "' has " + std::to_string(it.clip_targets.size()) +
                         " clip targets, model has " + std::to_string(net.num_outputs) +
                         " outputs");
      }
    } else {
      if (it.frame_targets.empty()) {
        throw InvalidInput("frame mode requires frame targets (clip '" + it.id + "')");
      }
      if (it.frame_targets.rows() != it.features.rows() ||
          it.frame_targets.cols() != net.num_outputs) {
        throw ShapeError("frame targets of clip '" + it.id + "' do not match its features");
      }
    }
  }
}

struct TrainerState {
  std::size_t epoch = 0;
  std::size_t batch = 0;  // batches done within `epoch`
  std::uint64_t step = 0;
  std::size_t since_cv = 0;
  std::size_t skipped = 0;
  bool have_best = false;
};

const std::string kAdamM = "adam.m/";
const std::string kAdamV = "adam.v/";
const std::string kBest = "best/";

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double from_finite_or_null(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

void save_checkpoint(const std::filesystem::path& path, const nn::Crnn<float>& model,
                     const Adam<float>& adam, const std::vector<nn::Tensor<float>>& best,
                     const PlateauScheduler& sched, const TrainerState& st, TrainMode mode,
                     const TrainConfig& cfg) {
  nn::Container c = nn::model_container(model);
  const auto& params = model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    const auto& m = adam.first_moments()[i];
    const auto& v = adam.second_moments()[i];
    c.tensors.push_back({kAdamM + params[i].name, m.shape(), m.storage()});
    c.tensors.push_back({kAdamV + params[i].name, v.shape(), v.storage()});
  }
  if (st.have_best) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.tensors.push_back({kBest + params[i].name, best[i].shape(), best[i].storage()});
    }
  }
  c.header["trainer"] = {
      {"mode", to_string(mode)},
      {"config", cfg.to_json()},
      {"epoch", st.epoch},
      {"batch", st.batch},
      {"step", st.step},
      {"since_cv", st.since_cv},
      {"skipped_steps", st.skipped},
      {"adam_steps", adam.steps()},
      {"scheduler",
       {{"best", finite_or_null(sched.best())},
        {"stale", sched.stale()},
        {"reductions", sched.reductions()},
        {"evaluations", sched.evaluations()}}}};
  io::write_file_atomic(path, nn::encode_container(c));
}

void load_checkpoint(const std::filesystem::path& path, nn::Crnn<float>& model,
                     Adam<float>& adam, std::vector<nn::Tensor<float>>& best,
                     PlateauScheduler& sched, TrainerState& st, TrainMode mode,
                     const TrainConfig& cfg) {
  const nn::Container c = nn::decode_container(io::read_file(path));
  if (!c.header.contains("trainer")) throw FormatError(path.string() + " is not a checkpoint");
  nn::Crnn<float> saved = nn::model_from_container(c);
  if (!(saved.config() == model.config())) {
    throw InvalidInput("checkpoint model config differs from the requested model");
  }
  try {
    const json& t = c.header.at("trainer");
    if (t.at("mode").get<std::string>() != to_string(mode)) {
      throw InvalidInput("checkpoint was written by a " + t.at("mode").get<std::string>() +
                         "-mode run");
    }
    if (TrainConfig::from_json(t.at("config")).to_json() != cfg.to_json()) {
      throw InvalidInput("checkpoint training config differs from the requested config");
    }
    st.epoch = t.at("epoch").get<std::size_t>();
    st.batch = t.at("batch").get<std::size_t>();
    st.step = t.at("step").get<std::uint64_t>();
    st.since_cv = t.at("since_cv").get<std::size_t>();
    st.skipped = t.at("skipped_steps").get<std::size_t>();
    adam.set_steps(t.at("adam_steps").get<std::uint64_t>());
    const json& s = t.at("scheduler");
    sched.restore(from_finite_or_null(s.at("best")), s.at("stale").get<std::size_t>(),
                  s.at("reductions").get<std::size_t>(), s.at("evaluations").get<std::size_t>());
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint state: " + std::string(e.what()));
  }

  auto& params = model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].value = saved.params().all()[i].value;
  }
  std::unordered_map<std::string, const nn::TensorRecord*> aux;
  for (const auto& r : c.tensors) {
    if (r.name.find('/') != std::string::npos) aux[r.name] = &r;
  }
  auto fetch = [&](const std::string& name, const nn::Shape& shape) {
    auto it = aux.find(name);
    if (it == aux.end()) throw FormatError("checkpoint is missing " + name);
    if (it->second->shape != shape) throw FormatError("checkpoint tensor " + name + " misshapen");
    return nn::Tensor<float>(shape, it->second->data);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    adam.first_moments()[i] = fetch(kAdamM + params[i].name, params[i].value.shape());
    adam.second_moments()[i] = fetch(kAdamV + params[i].name, params[i].value.shape());
  }
  st.have_best = aux.count(kBest + params.front().name) > 0;
  if (st.have_best) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      best[i] = fetch(kBest + params[i].name, params[i].value.shape());
    }
  }
}

std::vector<nn::Tensor<float>> snapshot(const nn::Crnn<float>& model) {
  std::vector<nn::Tensor<float>> out;
  for (const auto& p : model.params().all()) out.push_back(p.value);
  return out;
}

void restore(nn::Crnn<float>& model, const std::vector<nn::Tensor<float>>& values) {
  auto& params = model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = values[i];
}

// Augmented copy of one training clip. Seeds depend only on (seed, step,
// slot), so a resumed run reproduces the same batches.
TrainItem augment(const TrainItem& item, TrainMode mode, const TrainConfig& cfg,
                  std::uint64_t step, std::size_t slot) {
  TrainItem out = item;
  dsp::LogMelSpec spec;
  spec.values = item.features;
  if (mode == TrainMode::kClip && cfg.time_shift_sigma > 0.0) {
    spec = dsp::time_shift(spec, cfg.time_shift_sigma, derive_seed(cfg.seed, "shift", step, slot));
  }
  if (cfg.spec_augment) {
    dsp::SpecAugConfig sa = cfg.specaug;
    sa.seed = derive_seed(cfg.seed, "specaug", step, slot);
    spec = dsp::spec_augment(spec, sa);
  }
  out.features = std::move(spec.values);
  return out;
}

}  // namespace

FitResult fit(nn::Crnn<float> model, const std::vector<TrainItem>& data, TrainMode mode,
              const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  check_data(data, mode, model.config());
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const Split split = split_train_cv(data.size(), cfg.cv_fraction, derive_seed(cfg.seed, "split"));
  const std::size_t n_train = split.train.size();
  const std::size_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;

  std::vector<std::vector<std::size_t>> clip_events;
  if (mode == TrainMode::kClip) {
    for (std::size_t idx : split.train) {
      std::vector<std::size_t> ev;
      const auto& t = data[idx].clip_targets;
      for (std::size_t e = 0; e < t.size(); ++e) {
        if (t[e] >= 0.5f) ev.push_back(e);
      }
      clip_events.push_back(std::move(ev));
    }
  }

  Adam<float> adam(model.params(), cfg.adam);
  PlateauScheduler sched(cfg.lr0, cfg.lr_factor, cfg.patience);
  std::vector<nn::Tensor<float>> best = snapshot(model);
  TrainerState st;

  if (opts.resume && !opts.checkpoint.empty() && std::filesystem::exists(opts.checkpoint)) {
    load_checkpoint(opts.checkpoint, model, adam, best, sched, st, mode, cfg);
    spdlog::info("resumed from {} at epoch {}, step {}", opts.checkpoint.string(), st.epoch,
                 st.step);
  }

  std::optional<std::ofstream> log_file;
  if (!opts.log_path.empty()) {
    log_file.emplace(opts.log_path, std::ios::app);
    if (!*log_file) throw InvalidInput("cannot open training log " + opts.log_path.string());
  }

  FitResult result{nn::Crnn<float>(model.config())};
  result.train_items = n_train;
  result.cv_items = split.cv.size();
  auto emit = [&](LogRecord rec) {
    rec.wallclock = elapsed();
    if (log_file) *log_file << rec.to_json().dump() << '\n' << std::flush;
    if (opts.on_record) opts.on_record(rec);
    result.log.push_back(std::move(rec));
  };

  auto cv_loss = [&] {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < split.cv.size(); i += cfg.batch_size) {
      std::vector<const TrainItem*> items;
      for (std::size_t j = i; j < std::min(split.cv.size(), i + cfg.batch_size); ++j) {
        items.push_back(&data[split.cv[j]]);
      }
      const Batch b = make_batch(items, mode);
      const LossSum s = batch_loss_impl(model, b, mode, nn::Mode::kEval, false);
      total += s.mean * static_cast<double>(s.count);
      count += s.count;
    }
    return total / static_cast<double>(count);
  };

  std::uint64_t steps_this_call = 0;
  bool stopped = false;
  while (st.epoch < cfg.epochs && !stopped) {
    std::optional<BalancedSampler> sampler;
    std::vector<std::size_t> order;
    if (mode == TrainMode::kClip) {
      sampler.emplace(clip_events, model.config().num_outputs,
                      derive_seed(cfg.seed, "sampler", st.epoch));
      if (st.epoch == 0 && st.batch == 0) {
        for (std::size_t e : sampler->skipped_events()) {
          spdlog::warn("event {} has no training clip and is never sampled", e);
        }
      }
      for (std::size_t k = 0; k < st.batch; ++k) sampler->next_batch(cfg.batch_size);
    } else {
      order = shuffled_order(n_train, derive_seed(cfg.seed, "order", st.epoch));
    }

    while (st.batch < per_epoch) {
      if (opts.max_steps && steps_this_call >= opts.max_steps) {
        stopped = true;
        break;
      }
      std::vector<std::size_t> picks;
      if (sampler) {
        picks = sampler->next_batch(cfg.batch_size);
      } else {
        const std::size_t lo = st.batch * cfg.batch_size;
        const std::size_t hi = std::min(n_train, lo + cfg.batch_size);
        picks.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      }
      std::vector<TrainItem> augmented(picks.size());
      parallel_for(picks.size(), cfg.threads, [&](std::size_t slot) {
        augmented[slot] = augment(data[split.train[picks[slot]]], mode, cfg, st.step, slot);
      });
      std::vector<const TrainItem*> ptrs;
      for (const auto& it : augmented) ptrs.push_back(&it);
      const Batch batch = make_batch(ptrs, mode);

      const double lr = sched.lr();
      std::vector<nn::Tensor<float>> stats;
      for (const auto& p : model.params().all()) {
        if (!p.trainable) stats.push_back(p.value);
      }
      model.params().zero_grad();
      const double loss = batch_loss_impl(model, batch, mode, nn::Mode::kTrain, true).mean;
      const AdamStepResult step = adam.step(lr);
      if (!step.applied) {
        // A skipped step leaves the model exactly as before, running statistics included.
        auto saved = stats.begin();
        for (auto& p : model.params().all()) {
          if (!p.trainable) p.value = std::move(*saved++);
        }
        ++st.skipped;
        spdlog::warn("step {}: non-finite gradient in {} tensor(s) (first: {}); update skipped",
                     st.step, step.bad_params.size(), step.bad_params.front());
      }
      ++st.step;
      ++st.batch;
      ++st.since_cv;
      ++steps_this_call;
      emit({st.step, st.epoch, "train", loss, lr, 0.0});

      const bool epoch_done = st.batch == per_epoch;
      if (!epoch_done && st.since_cv < cfg.cv_every_batches) continue;

      const double cv = cv_loss();
      st.since_cv = 0;
      if (std::isnan(cv)) {
        emit({st.step, st.epoch, "cv", cv, lr, 0.0});
        spdlog::error("cross-validation loss is NaN at step {}; keeping the last good weights",
                      st.step);
        result.diverged = true;
        stopped = true;
        break;
      }
      if (cv < sched.best()) {
        best = snapshot(model);
        st.have_best = true;
      }
      const double next_lr = sched.observe(cv);
      emit({st.step, st.epoch, "cv", cv, next_lr, 0.0});
      if (next_lr < lr) spdlog::info("learning rate reduced to {}", next_lr);
      if (epoch_done) {
        ++st.epoch;
        st.batch = 0;
      }
      if (!opts.checkpoint.empty()) {
        save_checkpoint(opts.checkpoint, model, adam, best, sched, st, mode, cfg);
      }
      if (epoch_done) break;
    }
  }

  if (st.have_best || result.diverged) restore(model, best);
  result.best_cv_loss = st.have_best ? sched.best() : std::numeric_limits<double>::quiet_NaN();
  result.finished = st.epoch >= cfg.epochs;
  result.steps = st.step;
  result.skipped_steps = st.skipped;
  result.model = std::move(model);
  return result;
}

}  // namespace wsvad::train
