#include "wsvad/nn/crnn.hpp"

#include <cmath>
#include <random>

#include "wsvad/common/rng.hpp"

namespace wsvad::nn {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::string layer_name(std::size_t block, std::size_t layer) {
  return "block" + std::to_string(block + 1) + ".conv" + std::to_string(layer + 1);
}

template <typename T>
Tensor<T> to_sequence(const Tensor<T>& x) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), steps = x.dim(2), d = x.dim(3);
  Tensor<T> seq({batch, steps, ch * d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t t = 0; t < steps; ++t) {
        const T* src = x.data() + ((b * ch + c) * steps + t) * d;
        T* dst = seq.data() + (b * steps + t) * ch * d + c * d;
        std::copy(src, src + d, dst);
      }
    }
  }
  return seq;
}

template <typename T>
Tensor<T> from_sequence(const Tensor<T>& seq, const Shape& shape) {
  const std::size_t batch = shape[0], ch = shape[1], steps = shape[2], d = shape[3];
  Tensor<T> x(shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t t = 0; t < steps; ++t) {
        const T* src = seq.data() + (b * steps + t) * ch * d + c * d;
        std::copy(src, src + d, x.data() + ((b * ch + c) * steps + t) * d);
      }
    }
  }
  return x;
}

std::vector<std::size_t> pooled_lengths(const std::vector<std::size_t>& lengths,
                                        std::size_t stride) {
  std::vector<std::size_t> out(lengths.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) out[i] = ceil_div(lengths[i], stride);
  return out;
}

}  // namespace

CrnnConfig CrnnConfig::student() {
  CrnnConfig cfg;
  cfg.num_outputs = 2;
  cfg.output_labels = {"Speech", "Non-speech"};
  cfg.speech_index = 0;
  return cfg;
}

CrnnConfig CrnnConfig::teacher(std::vector<std::string> labels,
                               std::size_t speech_index) {
  CrnnConfig cfg;
  cfg.num_outputs = labels.size();
  cfg.output_labels = std::move(labels);
  cfg.speech_index = speech_index;
  cfg.validate();
  return cfg;
}

void CrnnConfig::validate() const {
  if (n_mels == 0) throw InvalidInput("crnn config: n_mels must be positive");
  if (blocks.empty()) throw InvalidInput("crnn config: no conv blocks");
  for (const auto& b : blocks) {
    if (b.channels.empty()) throw InvalidInput("crnn config: block without convs");
    for (auto c : b.channels) {
      if (c == 0) throw InvalidInput("crnn config: zero channel width");
    }
    if (b.pool_t == 0 || b.pool_d == 0) throw InvalidInput("crnn config: zero pool stride");
  }
  if (gru_hidden == 0) throw InvalidInput("crnn config: gru_hidden must be positive");
  if (num_outputs == 0) throw InvalidInput("crnn config: num_outputs must be positive");
  if (!output_labels.empty() && output_labels.size() != num_outputs) {
    throw InvalidInput("crnn config: output_labels size differs from num_outputs");
  }
  if (speech_index >= num_outputs) throw InvalidInput("crnn config: speech_index out of range");
  if (!(leaky_slope > 0.0 && leaky_slope <= 1.0)) {
    throw InvalidInput("crnn config: leaky_slope must be in (0, 1]");
  }
  if (!(bn_eps > 0.0)) throw InvalidInput("crnn config: bn_eps must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
    throw InvalidInput("crnn config: bn_momentum must be in [0, 1]");
  }
}

std::size_t CrnnConfig::time_factor() const {
  std::size_t f = 1;
  for (const auto& b : blocks) f *= b.pool_t;
  return f;
}

std::size_t CrnnConfig::pooled_bins() const {
  std::size_t d = n_mels;
  for (const auto& b : blocks) d = ceil_div(d, b.pool_d);
  return d;
}

std::size_t CrnnConfig::gru_input() const {
  return blocks.back().channels.back() * pooled_bins();
}

nlohmann::json CrnnConfig::to_json() const {
  nlohmann::json blocks_json = nlohmann::json::array();
  for (const auto& b : blocks) {
    blocks_json.push_back({{"channels", b.channels}, {"pool", {b.pool_t, b.pool_d}}});
  }
  return {{"n_mels", n_mels},
          {"blocks", blocks_json},
          {"gru_hidden", gru_hidden},
          {"num_outputs", num_outputs},
          {"leaky_slope", leaky_slope},
          {"bn_eps", bn_eps},
          {"bn_momentum", bn_momentum},
          {"output_labels", output_labels},
          {"speech_index", speech_index}};
}

CrnnConfig CrnnConfig::from_json(const nlohmann::json& j) {
  CrnnConfig cfg;
  try {
    cfg.n_mels = j.value("n_mels", cfg.n_mels);
    if (j.contains("blocks")) {
      cfg.blocks.clear();
      for (const auto& b : j.at("blocks")) {
        ConvBlockSpec spec;
        spec.channels = b.at("channels").get<std::vector<std::size_t>>();
        const auto pool = b.at("pool").get<std::vector<std::size_t>>();
        if (pool.size() != 2) throw InvalidInput("crnn config: pool needs two strides");
        spec.pool_t = pool[0];
        spec.pool_d = pool[1];
        cfg.blocks.push_back(std::move(spec));
      }
    }
    cfg.gru_hidden = j.value("gru_hidden", cfg.gru_hidden);
    cfg.num_outputs = j.value("num_outputs", cfg.num_outputs);
    cfg.leaky_slope = j.value("leaky_slope", cfg.leaky_slope);
    cfg.bn_eps = j.value("bn_eps", cfg.bn_eps);
    cfg.bn_momentum = j.value("bn_momentum", cfg.bn_momentum);
    cfg.output_labels = j.value("output_labels", std::vector<std::string>{});
    cfg.speech_index = j.value("speech_index", cfg.speech_index);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("crnn config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::size_t pooled_frames(const CrnnConfig& cfg, std::size_t frames) {
  for (const auto& b : cfg.blocks) frames = ceil_div(frames, b.pool_t);
  return frames;
}

template <typename T>
Crnn<T>::Crnn(CrnnConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::size_t in_ch = 1;
  for (std::size_t bi = 0; bi < cfg_.blocks.size(); ++bi) {
    const auto& block = cfg_.blocks[bi];
    for (std::size_t li = 0; li < block.channels.size(); ++li) {
      const std::string p = layer_name(bi, li);
      const std::size_t out_ch = block.channels[li];
      params_.add(p + ".bn.scale", {in_ch});
      params_.add(p + ".bn.shift", {in_ch});
      params_.add(p + ".bn.running_mean", {in_ch}, false);
      params_.add(p + ".bn.running_var", {in_ch}, false);
      params_.add(p + ".kernel", {out_ch, in_ch, 3, 3});
      in_ch = out_ch;
    }
  }
  const std::size_t h = cfg_.gru_hidden, f = cfg_.gru_input();
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("gru.") + dir;
    params_.add(p + ".w_ih", {3 * h, f});
    params_.add(p + ".w_hh", {3 * h, h});
    params_.add(p + ".b_ih", {3 * h});
    params_.add(p + ".b_hh", {3 * h});
  }
  params_.add("out.weight", {cfg_.num_outputs, 2 * h});
  params_.add("out.bias", {cfg_.num_outputs});
  initialize(0);
}

template <typename T>
void Crnn<T>::initialize(std::uint64_t seed) {
  const double slope = cfg_.leaky_slope;
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double gru_bound = 1.0 / std::sqrt(static_cast<double>(cfg_.gru_hidden));
  for (auto& p : params_.all()) {
    Rng rng = make_rng(seed, p.name);
    auto ends_with = [&](std::string_view suffix) {
      return p.name.size() >= suffix.size() &&
             p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".bn.scale") || ends_with(".bn.running_var")) {
      p.value.fill(T(1));
    } else if (ends_with(".bn.shift") || ends_with(".bn.running_mean") ||
               p.name == "out.bias") {
      p.value.fill(T(0));
    } else if (ends_with(".kernel")) {
      const double fan_in = static_cast<double>(p.value.dim(1) * 9);
      std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
      for (auto& v : p.value.values()) v = static_cast<T>(dist(rng));
    } else if (p.name.starts_with("gru.")) {
      std::uniform_real_distribution<double> dist(-gru_bound, gru_bound);
      for (auto& v : p.value.values()) v = static_cast<T>(dist(rng));
    } else if (p.name == "out.weight") {
      const double bound =
          std::sqrt(6.0 / static_cast<double>(p.value.dim(0) + p.value.dim(1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : p.value.values()) v = static_cast<T>(dist(rng));
    } else {
      throw InvalidInput("no initializer for parameter " + p.name);
    }
  }
  params_.zero_grad();
}

template <typename T>
Tensor<T> Crnn<T>::run(const Tensor<T>& features, std::span<const std::size_t> lengths_in,
                       Mode mode, CrnnTape<T>* tape,
                       std::vector<BatchNormCache<T>>* batch_stats) const {
  if (features.rank() != 3 || features.dim(2) != cfg_.n_mels) {
    throw ShapeError("crnn: expected [B, T, " + std::to_string(cfg_.n_mels) +
                     "] features, got " + shape_string(features.shape()));
  }
  const std::size_t batch = features.dim(0), frames = features.dim(1);
  if (batch == 0 || frames == 0) throw InvalidInput("crnn: empty batch");
  std::vector<std::size_t> lengths(batch, frames);
  if (!lengths_in.empty()) {
    if (lengths_in.size() != batch) throw ShapeError("crnn: lengths size does not match batch");
    for (std::size_t b = 0; b < batch; ++b) {
      if (lengths_in[b] == 0 || lengths_in[b] > frames) {
        throw InvalidInput("crnn: item length must be in [1, T]");
      }
      lengths[b] = lengths_in[b];
    }
  }

  Tensor<T> cur = features;
  cur.reshape({batch, 1, frames, cfg_.n_mels});
  mask_time(cur, lengths);
  if (tape) {
    tape->lengths = lengths;
    tape->input = cur;
    tape->blocks.assign(cfg_.blocks.size(), {});
    tape->mode = mode;
  }

  const T slope = static_cast<T>(cfg_.leaky_slope);
  std::vector<std::size_t> len = lengths;
  for (std::size_t bi = 0; bi < cfg_.blocks.size(); ++bi) {
    const auto& block = cfg_.blocks[bi];
    typename CrnnTape<T>::Block* tb = tape ? &tape->blocks[bi] : nullptr;
    if (tb) {
      tb->lengths_in = len;
      tb->layers.resize(block.channels.size());
    }
    for (std::size_t li = 0; li < block.channels.size(); ++li) {
      const std::string p = layer_name(bi, li);
      const auto& scale = params_.at(p + ".bn.scale").value;
      const auto& shift = params_.at(p + ".bn.shift").value;
      BatchNormCache<T> cache;
      const bool keep = tb || (mode == Mode::kTrain && batch_stats);
      Tensor<T> normed =
          mode == Mode::kTrain
              ? batch_norm_train(cur, len, scale, shift, cfg_.bn_eps, keep ? &cache : nullptr)
              : batch_norm_eval(cur, len, scale, shift,
                                params_.at(p + ".bn.running_mean").value,
                                params_.at(p + ".bn.running_var").value, cfg_.bn_eps,
                                keep ? &cache : nullptr);
      Tensor<T> act = leaky_relu(conv2d_3x3(normed, params_.at(p + ".kernel").value), slope);
      mask_time(act, len);
      if (mode == Mode::kTrain && batch_stats) {
        BatchNormCache<T> stats;
        stats.mean = cache.mean;
        stats.var = cache.var;
        stats.count = cache.count;
        batch_stats->push_back(std::move(stats));
      }
      if (tb) {
        auto& layer = tb->layers[li];
        layer.bn = std::move(cache);
        layer.conv_in = std::move(normed);
        layer.activated = act;
      }
      cur = std::move(act);
    }
    cur = l4_pool(cur, block.pool_t, block.pool_d);
    len = pooled_lengths(len, block.pool_t);
    if (tb) {
      tb->pooled = cur;
      tb->lengths_out = len;
    }
  }

  Tensor<T> seq = to_sequence(cur);
  auto weights = [&](const char* dir) {
    const std::string p = std::string("gru.") + dir;
    return GruWeights<T>{&params_.at(p + ".w_ih").value, &params_.at(p + ".w_hh").value,
                         &params_.at(p + ".b_ih").value, &params_.at(p + ".b_hh").value};
  };
  Tensor<T> gru_out =
      bigru_forward(seq, len, weights("fwd"), weights("bwd"), tape ? &tape->gru : nullptr);
  Tensor<T> coarse = sigmoid(
      linear(gru_out, params_.at("out.weight").value, params_.at("out.bias").value));
  mask_time(coarse, len);
  Tensor<T> probs = upsample_repeat(coarse, cfg_.time_factor(), frames);
  mask_time(probs, lengths);
  if (tape) {
    tape->gru_in = std::move(seq);
    tape->gru_out = std::move(gru_out);
    tape->coarse = std::move(coarse);
  }
  return probs;
}

template <typename T>
Tensor<T> Crnn<T>::forward(const Tensor<T>& features, std::span<const std::size_t> lengths,
                           Mode mode, CrnnTape<T>* tape) {
  std::vector<BatchNormCache<T>> stats;
  Tensor<T> probs = run(features, lengths, mode, tape, &stats);
  if (mode == Mode::kTrain) {
    std::size_t k = 0;
    for (std::size_t bi = 0; bi < cfg_.blocks.size(); ++bi) {
      for (std::size_t li = 0; li < cfg_.blocks[bi].channels.size(); ++li) {
        const std::string p = layer_name(bi, li);
        update_running_stats(params_.at(p + ".bn.running_mean").value,
                             params_.at(p + ".bn.running_var").value, stats[k++],
                             cfg_.bn_momentum);
      }
    }
  }
  return probs;
}

template <typename T>
Tensor<T> Crnn<T>::infer(const Tensor<T>& features,
                         std::span<const std::size_t> lengths) const {
  return run(features, lengths, Mode::kEval, nullptr, nullptr);
}

template <typename T>
void Crnn<T>::backward(const CrnnTape<T>& tape, const Tensor<T>& grad_probs) {
  if (tape.blocks.size() != cfg_.blocks.size()) throw InvalidInput("crnn: tape is empty");
  const std::size_t frames = tape.input.dim(2);
  expect_shape(grad_probs, {tape.input.dim(0), frames, cfg_.num_outputs},
               "crnn grad_probs");
  const auto& coarse_len = tape.blocks.back().lengths_out;

  Tensor<T> g = grad_probs;
  mask_time(g, tape.lengths);
  g = upsample_repeat_backward(g, cfg_.time_factor(), tape.coarse.dim(1));
  g = sigmoid_backward(tape.coarse, g);
  mask_time(g, coarse_len);

  Tensor<T> g_gru_out;
  linear_backward(tape.gru_out, params_.at("out.weight").value, g, &g_gru_out,
                  params_.at("out.weight").grad, params_.at("out.bias").grad);

  auto weights = [&](const char* dir) {
    const std::string p = std::string("gru.") + dir;
    return GruWeights<T>{&params_.at(p + ".w_ih").value, &params_.at(p + ".w_hh").value,
                         &params_.at(p + ".b_ih").value, &params_.at(p + ".b_hh").value};
  };
  auto grads = [&](const char* dir) {
    const std::string p = std::string("gru.") + dir;
    return GruGrads<T>{&params_.at(p + ".w_ih").grad, &params_.at(p + ".w_hh").grad,
                       &params_.at(p + ".b_ih").grad, &params_.at(p + ".b_hh").grad};
  };
  Tensor<T> g_seq;
  bigru_backward(tape.gru_in, weights("fwd"), weights("bwd"), tape.gru, g_gru_out, &g_seq,
                 grads("fwd"), grads("bwd"));

  Tensor<T> g_cur = from_sequence(g_seq, tape.blocks.back().pooled.shape());
  const T slope = static_cast<T>(cfg_.leaky_slope);
  for (std::size_t bi = cfg_.blocks.size(); bi-- > 0;) {
    const auto& block = cfg_.blocks[bi];
    const auto& tb = tape.blocks[bi];
    Tensor<T> g_act = l4_pool_backward(tb.layers.back().activated, tb.pooled, g_cur,
                                       block.pool_t, block.pool_d);
    for (std::size_t li = block.channels.size(); li-- > 0;) {
      const std::string p = layer_name(bi, li);
      const auto& layer = tb.layers[li];
      Tensor<T> g_conv = leaky_relu_backward(layer.activated, g_act, slope);
      mask_time(g_conv, tb.lengths_in);
      const bool first = bi == 0 && li == 0;
      Tensor<T> g_normed;
      conv2d_3x3_backward(layer.conv_in, params_.at(p + ".kernel").value, g_conv, &g_normed,
                          params_.at(p + ".kernel").grad);
      Tensor<T> g_in;
      batch_norm_backward(g_normed, params_.at(p + ".bn.scale").value, layer.bn,
                          first ? nullptr : &g_in, params_.at(p + ".bn.scale").grad,
                          params_.at(p + ".bn.shift").grad);
      g_act = std::move(g_in);
    }
    g_cur = std::move(g_act);
  }
}

template <typename T>
template <typename U>
Crnn<U> Crnn<T>::cast() const {
  Crnn<U> out(cfg_);
  for (const auto& p : params_.all()) out.params().at(p.name).value = p.value.template cast<U>();
  return out;
}

template <typename T>
Tensor<T> stack_features(std::span<const Matrix<float>* const> items,
                         std::vector<std::size_t>& lengths) {
  if (items.empty()) throw InvalidInput("stack_features: empty batch");
  const std::size_t d = items.front()->cols();
  std::size_t max_t = 0;
  for (const auto* m : items) {
    if (m->cols() != d) throw ShapeError("stack_features: bin counts differ");
    max_t = std::max(max_t, m->rows());
  }
  lengths.assign(items.size(), 0);
  Tensor<T> out({items.size(), max_t, d});
  for (std::size_t b = 0; b < items.size(); ++b) {
    lengths[b] = items[b]->rows();
    const float* src = items[b]->data();
    std::copy(src, src + items[b]->size(), out.data() + b * max_t * d);
  }
  return out;
}

Matrix<float> crnn_forward(const Crnn<float>& model, const Matrix<float>& features) {
  Tensor<float> x({1, features.rows(), features.cols()},
                  std::vector<float>(features.data(), features.data() + features.size()));
  Tensor<float> probs = model.infer(x);
  return Matrix<float>(features.rows(), model.config().num_outputs,
                       std::move(probs.storage()));
}

Matrix<float> crnn_forward(const Crnn<float>& model, const dsp::LogMelSpec& spec) {
  return crnn_forward(model, spec.values);
}

template class Crnn<float>;
template class Crnn<double>;
template Crnn<double> Crnn<float>::cast<double>() const;
template Crnn<float> Crnn<double>::cast<float>() const;
template Tensor<float> stack_features<float>(std::span<const Matrix<float>* const>,
                                             std::vector<std::size_t>&);
template Tensor<double> stack_features<double>(std::span<const Matrix<float>* const>,
                                               std::vector<std::size_t>&);

}  // namespace wsvad::nn
