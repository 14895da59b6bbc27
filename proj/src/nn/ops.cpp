#include "wsvad/nn/ops.hpp"

#include <Eigen/Core>

#include <cmath>

namespace wsvad::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

std::size_t valid_len(std::span<const std::size_t> lengths, std::size_t b,
                      std::size_t steps) {
  return lengths.empty() ? steps : std::min(lengths[b], steps);
}

void check_lengths(std::span<const std::size_t> lengths, std::size_t batch) {
  if (!lengths.empty() && lengths.size() != batch) {
    throw ShapeError("lengths size does not match batch");
  }
}

template <typename T>
void expect_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_string(t.shape()));
  }
}

// cols[(c*3+ky)*3+kx, h*W+w] = x[c, h+ky-1, w+kx-1] (zero outside).
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t height,
            std::size_t width, T* cols) {
  const std::size_t hw = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t h = 0; h < height; ++h) {
          T* dst = row + h * width;
          const long sh = static_cast<long>(h) + ky - 1;
          if (sh < 0 || sh >= static_cast<long>(height)) {
            std::fill(dst, dst + width, T(0));
            continue;
          }
          const T* src = plane + sh * width;
          const long shift = kx - 1;
          for (std::size_t w = 0; w < width; ++w) {
            const long sw = static_cast<long>(w) + shift;
            dst[w] = (sw < 0 || sw >= static_cast<long>(width)) ? T(0) : src[sw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height,
            std::size_t width, T* x) {
  const std::size_t hw = height * width;
  std::fill(x, x + channels * hw, T(0));
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = x + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t h = 0; h < height; ++h) {
          const long sh = static_cast<long>(h) + ky - 1;
          if (sh < 0 || sh >= static_cast<long>(height)) continue;
          T* dst = plane + sh * width;
          const T* src = row + h * width;
          const long shift = kx - 1;
          for (std::size_t w = 0; w < width; ++w) {
            const long sw = static_cast<long>(w) + shift;
            if (sw >= 0 && sw < static_cast<long>(width)) dst[sw] += src[w];
          }
        }
      }
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
void mask_time(Tensor<T>& x, std::span<const std::size_t> lengths) {
  if (lengths.empty()) return;
  if (x.rank() == 4) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), steps = x.dim(2), d = x.dim(3);
    check_lengths(lengths, batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t len = valid_len(lengths, b, steps);
      if (len == steps) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        T* p = x.data() + ((b * ch + c) * steps + len) * d;
        std::fill(p, p + (steps - len) * d, T(0));
      }
    }
  } else if (x.rank() == 3) {
    const std::size_t batch = x.dim(0), steps = x.dim(1), f = x.dim(2);
    check_lengths(lengths, batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t len = valid_len(lengths, b, steps);
      T* p = x.data() + (b * steps + len) * f;
      std::fill(p, p + (steps - len) * f, T(0));
    }
  } else {
    throw ShapeError("mask_time: expected rank 3 or 4");
  }
}

template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& input, const Tensor<T>& kernel,
                     const std::type_identity_t<Tensor<T>>* bias) {
  expect_rank(input, 4, "conv2d_3x3 input");
  const std::size_t batch = input.dim(0), cin = input.dim(1);
  const std::size_t height = input.dim(2), width = input.dim(3);
  if (kernel.rank() != 4 || kernel.dim(1) != cin || kernel.dim(2) != 3 ||
      kernel.dim(3) != 3) {
    throw ShapeError("conv2d_3x3: kernel " + shape_string(kernel.shape()) +
                     " does not fit input " + shape_string(input.shape()));
  }
  const std::size_t cout = kernel.dim(0);
  if (bias) expect_shape(*bias, {cout}, "conv2d_3x3 bias");

  const std::size_t hw = height * width;
  Tensor<T> out({batch, cout, height, width});
  std::vector<T> cols(cin * 9 * hw);
  ConstMatMap<T> k(kernel.data(), cout, cin * 9);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(input.data() + b * cin * hw, cin, height, width, cols.data());
    MatMap<T> o(out.data() + b * cout * hw, cout, hw);
    o.noalias() = k * ConstMatMap<T>(cols.data(), cin * 9, hw);
    if (bias) {
      for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += (*bias)[c];
    }
  }
  return out;
}

template <typename T>
void conv2d_3x3_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& grad_out, Tensor<T>* grad_input,
                         Tensor<T>& grad_kernel,
                         std::type_identity_t<Tensor<T>>* grad_bias) {
  const std::size_t batch = input.dim(0), cin = input.dim(1);
  const std::size_t height = input.dim(2), width = input.dim(3);
  const std::size_t cout = kernel.dim(0);
  const std::size_t hw = height * width;
  expect_shape(grad_out, {batch, cout, height, width}, "conv2d_3x3 grad_out");
  expect_shape(grad_kernel, kernel.shape(), "conv2d_3x3 grad_kernel");

  std::vector<T> cols(cin * 9 * hw);
  std::vector<T> dcols(grad_input ? cin * 9 * hw : 0);
  if (grad_input) *grad_input = Tensor<T>(input.shape());
  ConstMatMap<T> k(kernel.data(), cout, cin * 9);
  MatMap<T> dk(grad_kernel.data(), cout, cin * 9);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatMap<T> go(grad_out.data() + b * cout * hw, cout, hw);
    im2col(input.data() + b * cin * hw, cin, height, width, cols.data());
    dk.noalias() += go * ConstMatMap<T>(cols.data(), cin * 9, hw).transpose();
    if (grad_bias) {
      for (std::size_t c = 0; c < cout; ++c) (*grad_bias)[c] += go.row(c).sum();
    }
    if (grad_input) {
      MatMap<T>(dcols.data(), cin * 9, hw).noalias() = k.transpose() * go;
      col2im(dcols.data(), cin, height, width, grad_input->data() + b * cin * hw);
    }
  }
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& input,
                           std::span<const std::size_t> lengths,
                           const Tensor<T>& scale, const Tensor<T>& shift,
                           double eps,
                           std::type_identity_t<BatchNormCache<T>>* cache) {
  expect_rank(input, 4, "batch_norm input");
  const std::size_t batch = input.dim(0), ch = input.dim(1);
  const std::size_t steps = input.dim(2), d = input.dim(3);
  check_lengths(lengths, batch);
  expect_shape(scale, {ch}, "batch_norm scale");
  expect_shape(shift, {ch}, "batch_norm shift");

  std::vector<double> mean(ch, 0.0), var(ch, 0.0), inv_std(ch, 0.0);
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch; ++b) count += valid_len(lengths, b, steps) * d;
  if (count == 0) throw InvalidInput("batch_norm: no valid positions");

  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = input.data() + (b * ch + c) * steps * d;
      const std::size_t n = valid_len(lengths, b, steps) * d;
      for (std::size_t i = 0; i < n; ++i) sum += p[i];
    }
    const double m = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = input.data() + (b * ch + c) * steps * d;
      const std::size_t n = valid_len(lengths, b, steps) * d;
      for (std::size_t i = 0; i < n; ++i) {
        const double dv = p[i] - m;
        sq += dv * dv;
      }
    }
    mean[c] = m;
    var[c] = sq / static_cast<double>(count);
    inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  }

  Tensor<T> out(input.shape());
  Tensor<T> normalized(input.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = valid_len(lengths, b, steps) * d;
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * steps * d;
      const T m = static_cast<T>(mean[c]);
      const T is = static_cast<T>(inv_std[c]);
      for (std::size_t i = 0; i < n; ++i) {
        const T xh = (input[off + i] - m) * is;
        normalized[off + i] = xh;
        out[off + i] = scale[c] * xh + shift[c];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->count = count;
    cache->lengths.assign(lengths.begin(), lengths.end());
    cache->mode = Mode::kTrain;
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& input,
                          std::span<const std::size_t> lengths,
                          const Tensor<T>& scale, const Tensor<T>& shift,
                          const Tensor<T>& running_mean,
                          const Tensor<T>& running_var, double eps,
                          std::type_identity_t<BatchNormCache<T>>* cache) {
  expect_rank(input, 4, "batch_norm input");
  const std::size_t batch = input.dim(0), ch = input.dim(1);
  const std::size_t steps = input.dim(2), d = input.dim(3);
  check_lengths(lengths, batch);
  expect_shape(scale, {ch}, "batch_norm scale");
  expect_shape(shift, {ch}, "batch_norm shift");
  expect_shape(running_mean, {ch}, "batch_norm running_mean");
  expect_shape(running_var, {ch}, "batch_norm running_var");

  std::vector<double> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
  }
  Tensor<T> out(input.shape());
  Tensor<T> normalized(cache ? input.shape() : Shape{});
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = valid_len(lengths, b, steps) * d;
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * steps * d;
      const T m = running_mean[c];
      const T is = static_cast<T>(inv_std[c]);
      for (std::size_t i = 0; i < n; ++i) {
        const T xh = (input[off + i] - m) * is;
        if (cache) normalized[off + i] = xh;
        out[off + i] = scale[c] * xh + shift[c];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->lengths.assign(lengths.begin(), lengths.end());
    cache->mode = Mode::kEval;
  }
  return out;
}

template <typename T>
void update_running_stats(Tensor<T>& running_mean, Tensor<T>& running_var,
                          const BatchNormCache<T>& cache, double momentum) {
  const double n = static_cast<double>(cache.count);
  const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] +
                                     momentum * cache.mean[c]);
    running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] +
                                    momentum * cache.var[c] * unbias);
  }
}

template <typename T>
void batch_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& scale,
                         const BatchNormCache<T>& cache, Tensor<T>* grad_input,
                         Tensor<T>& grad_scale, Tensor<T>& grad_shift) {
  const Tensor<T>& xh = cache.normalized;
  expect_shape(grad_out, xh.shape(), "batch_norm grad_out");
  const std::size_t batch = xh.dim(0), ch = xh.dim(1);
  const std::size_t steps = xh.dim(2), d = xh.dim(3);
  const std::span<const std::size_t> lengths(cache.lengths);

  std::vector<double> sum_dy(ch, 0.0), sum_dy_xh(ch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = valid_len(lengths, b, steps) * d;
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * steps * d;
      double s = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += grad_out[off + i];
        sx += static_cast<double>(grad_out[off + i]) * xh[off + i];
      }
      sum_dy[c] += s;
      sum_dy_xh[c] += sx;
    }
  }
  for (std::size_t c = 0; c < ch; ++c) {
    grad_scale[c] += static_cast<T>(sum_dy_xh[c]);
    grad_shift[c] += static_cast<T>(sum_dy[c]);
  }
  if (!grad_input) return;

  *grad_input = Tensor<T>(xh.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    const double k = static_cast<double>(scale[c]) * cache.inv_std[c];
    double mean_dy = 0.0, mean_dy_xh = 0.0;
    if (cache.mode == Mode::kTrain) {
      mean_dy = sum_dy[c] / static_cast<double>(cache.count);
      mean_dy_xh = sum_dy_xh[c] / static_cast<double>(cache.count);
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t n = valid_len(lengths, b, steps) * d;
      const std::size_t off = (b * ch + c) * steps * d;
      for (std::size_t i = 0; i < n; ++i) {
        (*grad_input)[off + i] = static_cast<T>(
            k * (grad_out[off + i] - mean_dy - xh[off + i] * mean_dy_xh));
      }
    }
  }
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, std::type_identity_t<T> slope) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    out[i] = x >= T(0) ? x : slope * x;
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out,
                              std::type_identity_t<T> slope) {
  expect_shape(grad_out, output.shape(), "leaky_relu grad_out");
  Tensor<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    g[i] = output[i] >= T(0) ? grad_out[i] : slope * grad_out[i];
  }
  return g;
}

template <typename T>
Tensor<T> l4_pool(const Tensor<T>& input, std::size_t stride_t,
                  std::size_t stride_d) {
  expect_rank(input, 4, "l4_pool input");
  if (stride_t == 0 || stride_d == 0) throw InvalidInput("l4_pool: zero stride");
  const std::size_t bc = input.dim(0) * input.dim(1);
  const std::size_t steps = input.dim(2), d = input.dim(3);
  const std::size_t ot = (steps + stride_t - 1) / stride_t;
  const std::size_t od = (d + stride_d - 1) / stride_d;
  const double inv_n = 1.0 / static_cast<double>(stride_t * stride_d);
  Tensor<T> out({input.dim(0), input.dim(1), ot, od});
  for (std::size_t p = 0; p < bc; ++p) {
    const T* x = input.data() + p * steps * d;
    T* y = out.data() + p * ot * od;
    for (std::size_t i = 0; i < ot; ++i) {
      const std::size_t t_end = std::min(steps, (i + 1) * stride_t);
      for (std::size_t j = 0; j < od; ++j) {
        const std::size_t d_end = std::min(d, (j + 1) * stride_d);
        double acc = 0.0;
        for (std::size_t t = i * stride_t; t < t_end; ++t) {
          for (std::size_t k = j * stride_d; k < d_end; ++k) {
            const double v = x[t * d + k];
            const double v2 = v * v;
            acc += v2 * v2;
          }
        }
        y[i * od + j] = static_cast<T>(std::sqrt(std::sqrt(acc * inv_n)));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> l4_pool_backward(const Tensor<T>& input, const Tensor<T>& output,
                           const Tensor<T>& grad_out, std::size_t stride_t,
                           std::size_t stride_d) {
  expect_shape(grad_out, output.shape(), "l4_pool grad_out");
  const std::size_t bc = input.dim(0) * input.dim(1);
  const std::size_t steps = input.dim(2), d = input.dim(3);
  const std::size_t ot = output.dim(2), od = output.dim(3);
  const double inv_n = 1.0 / static_cast<double>(stride_t * stride_d);
  Tensor<T> g(input.shape());
  for (std::size_t p = 0; p < bc; ++p) {
    const T* x = input.data() + p * steps * d;
    const T* y = output.data() + p * ot * od;
    const T* gy = grad_out.data() + p * ot * od;
    T* gx = g.data() + p * steps * d;
    for (std::size_t i = 0; i < ot; ++i) {
      const std::size_t t_end = std::min(steps, (i + 1) * stride_t);
      for (std::size_t j = 0; j < od; ++j) {
        const double yv = y[i * od + j];
        if (yv <= 0.0) continue;
        // dy/dx = x^3 / (n y^3)
        const double k = gy[i * od + j] * inv_n / (yv * yv * yv);
        const std::size_t d_end = std::min(d, (j + 1) * stride_d);
        for (std::size_t t = i * stride_t; t < t_end; ++t) {
          for (std::size_t c = j * stride_d; c < d_end; ++c) {
            const double v = x[t * d + c];
            gx[t * d + c] = static_cast<T>(k * v * v * v);
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  if (input.rank() < 1 || weight.rank() != 2) throw ShapeError("linear: bad ranks");
  const std::size_t f = input.shape().back();
  const std::size_t e = weight.dim(0);
  if (weight.dim(1) != f) {
    throw ShapeError("linear: weight " + shape_string(weight.shape()) +
                     " does not fit input " + shape_string(input.shape()));
  }
  expect_shape(bias, {e}, "linear bias");
  const std::size_t rows = input.size() / f;
  Shape out_shape = input.shape();
  out_shape.back() = e;
  Tensor<T> out(out_shape);
  MatMap<T> o(out.data(), rows, e);
  o.noalias() = ConstMatMap<T>(input.data(), rows, f) *
                ConstMatMap<T>(weight.data(), e, f).transpose();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < e; ++k) o(r, k) += bias[k];
  }
  return out;
}

template <typename T>
void linear_backward(const Tensor<T>& input, const Tensor<T>& weight,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input,
                     Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
  const std::size_t f = input.shape().back();
  const std::size_t e = weight.dim(0);
  const std::size_t rows = input.size() / f;
  if (grad_out.size() != rows * e) throw ShapeError("linear: grad_out size");
  ConstMatMap<T> go(grad_out.data(), rows, e);
  ConstMatMap<T> x(input.data(), rows, f);
  MatMap<T>(grad_weight.data(), e, f).noalias() += go.transpose() * x;
  for (std::size_t k = 0; k < e; ++k) grad_bias[k] += go.col(k).sum();
  if (grad_input) {
    *grad_input = Tensor<T>(input.shape());
    MatMap<T>(grad_input->data(), rows, f).noalias() =
        go * ConstMatMap<T>(weight.data(), e, f);
  }
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = stable_sigmoid(input[i]);
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  expect_shape(grad_out, output.shape(), "sigmoid grad_out");
  Tensor<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    g[i] = grad_out[i] * output[i] * (T(1) - output[i]);
  }
  return g;
}

template <typename T>
Tensor<T> upsample_repeat(const Tensor<T>& input, std::size_t factor,
                          std::size_t frames) {
  expect_rank(input, 3, "upsample input");
  const std::size_t batch = input.dim(0), steps = input.dim(1), e = input.dim(2);
  if (frames > steps * factor) throw ShapeError("upsample: too many frames");
  Tensor<T> out({batch, frames, e});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      const T* src = input.data() + (b * steps + t / factor) * e;
      std::copy(src, src + e, out.data() + (b * frames + t) * e);
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample_repeat_backward(const Tensor<T>& grad_out,
                                   std::size_t factor, std::size_t steps) {
  const std::size_t batch = grad_out.dim(0), frames = grad_out.dim(1);
  const std::size_t e = grad_out.dim(2);
  Tensor<T> g({batch, steps, e});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      const T* src = grad_out.data() + (b * frames + t) * e;
      T* dst = g.data() + (b * steps + t / factor) * e;
      for (std::size_t k = 0; k < e; ++k) dst[k] += src[k];
    }
  }
  return g;
}

template <typename T>
Tensor<T> linear_softmax_pool(const Tensor<T>& probs,
                              std::span<const std::size_t> lengths) {
  expect_rank(probs, 3, "linear_softmax_pool input");
  const std::size_t batch = probs.dim(0), steps = probs.dim(1), e = probs.dim(2);
  check_lengths(lengths, batch);
  Tensor<T> out({batch, e});
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = valid_len(lengths, b, steps);
    if (len == 0) throw InvalidInput("linear_softmax_pool: no valid frames");
    for (std::size_t k = 0; k < e; ++k) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double p = probs[(b * steps + t) * e + k];
        s1 += p;
        s2 += p * p;
      }
      out[b * e + k] = s1 == 0.0 ? T(0) : static_cast<T>(s2 / s1);
    }
  }
  return out;
}

template <typename T>
Tensor<T> linear_softmax_pool_backward(const Tensor<T>& probs,
                                       std::span<const std::size_t> lengths,
                                       const Tensor<T>& grad_out) {
  const std::size_t batch = probs.dim(0), steps = probs.dim(1), e = probs.dim(2);
  expect_shape(grad_out, {batch, e}, "linear_softmax_pool grad_out");
  Tensor<T> g(probs.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = valid_len(lengths, b, steps);
    for (std::size_t k = 0; k < e; ++k) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double p = probs[(b * steps + t) * e + k];
        s1 += p;
        s2 += p * p;
      }
      if (s1 == 0.0) continue;
      // d(s2/s1)/dp_t = (2 p_t - y) / s1
      const double y = s2 / s1;
      const double go = grad_out[b * e + k];
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = (b * steps + t) * e + k;
        g[i] = static_cast<T>(go * (2.0 * probs[i] - y) / s1);
      }
    }
  }
  return g;
}

#define WSVAD_INSTANTIATE_OPS(T)                                                  \
  template void mask_time<T>(Tensor<T>&, std::span<const std::size_t>);          \
  template Tensor<T> conv2d_3x3<T>(const Tensor<T>&, const Tensor<T>&,           \
                                   const Tensor<T>*);                            \
  template void conv2d_3x3_backward<T>(const Tensor<T>&, const Tensor<T>&,       \
                                       const Tensor<T>&, Tensor<T>*, Tensor<T>&, \
                                       Tensor<T>*);                              \
  template Tensor<T> batch_norm_train<T>(const Tensor<T>&,                       \
                                         std::span<const std::size_t>,           \
                                         const Tensor<T>&, const Tensor<T>&,     \
                                         double, BatchNormCache<T>*);            \
  template Tensor<T> batch_norm_eval<T>(                                         \
      const Tensor<T>&, std::span<const std::size_t>, const Tensor<T>&,          \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,              \
      BatchNormCache<T>*);                                                       \
  template void update_running_stats<T>(Tensor<T>&, Tensor<T>&,                  \
                                        const BatchNormCache<T>&, double);       \
  template void batch_norm_backward<T>(const Tensor<T>&, const Tensor<T>&,       \
                                       const BatchNormCache<T>&, Tensor<T>*,     \
                                       Tensor<T>&, Tensor<T>&);                  \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                         \
  template Tensor<T> leaky_relu_backward<T>(const Tensor<T>&, const Tensor<T>&,  \
                                            T);                                  \
  template Tensor<T> l4_pool<T>(const Tensor<T>&, std::size_t, std::size_t);     \
  template Tensor<T> l4_pool_backward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                         const Tensor<T>&, std::size_t,          \
                                         std::size_t);                           \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&,               \
                               const Tensor<T>&);                                \
  template void linear_backward<T>(const Tensor<T>&, const Tensor<T>&,           \
                                   const Tensor<T>&, Tensor<T>*, Tensor<T>&,     \
                                   Tensor<T>&);                                  \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                               \
  template Tensor<T> sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> upsample_repeat<T>(const Tensor<T>&, std::size_t,           \
                                        std::size_t);                            \
  template Tensor<T> upsample_repeat_backward<T>(const Tensor<T>&, std::size_t,  \
                                                 std::size_t);                   \
  template Tensor<T> linear_softmax_pool<T>(const Tensor<T>&,                    \
                                            std::span<const std::size_t>);       \
  template Tensor<T> linear_softmax_pool_backward<T>(                            \
      const Tensor<T>&, std::span<const std::size_t>, const Tensor<T>&);

WSVAD_INSTANTIATE_OPS(float)
WSVAD_INSTANTIATE_OPS(double)

}  // namespace wsvad::nn
