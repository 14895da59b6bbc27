#include "wsvad/nn/gru.hpp"

#include <Eigen/Core>

#include <cmath>

namespace wsvad::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
T sigm(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void check_weights(const GruWeights<T>& w, std::size_t features, const char* dir) {
  if (!w.w_ih || !w.w_hh || !w.b_ih || !w.b_hh) {
    throw InvalidInput(std::string("bigru: missing weights for ") + dir);
  }
  const std::size_t h = w.w_hh->dim(1);
  expect_shape(*w.w_ih, {3 * h, features}, "bigru w_ih");
  expect_shape(*w.w_hh, {3 * h, h}, "bigru w_hh");
  expect_shape(*w.b_ih, {3 * h}, "bigru b_ih");
  expect_shape(*w.b_hh, {3 * h}, "bigru b_hh");
}

template <typename T>
void run_direction(const T* x, std::size_t len, std::size_t features,
                   const GruWeights<T>& w, bool reverse, T* out,
                   std::size_t out_stride, GruTrace<T>* trace) {
  const std::size_t h = w.hidden();
  if (len == 0) return;
  ConstMatMap<T> wih(w.w_ih->data(), 3 * h, features);
  ConstMatMap<T> whh(w.w_hh->data(), 3 * h, h);
  Eigen::Map<const Vec<T>> bih(w.b_ih->data(), 3 * h);
  Eigen::Map<const Vec<T>> bhh(w.b_hh->data(), 3 * h);

  RowMat<T> gx = ConstMatMap<T>(x, len, features) * wih.transpose();
  gx.rowwise() += bih.transpose();

  if (trace) {
    trace->gates.assign(len * 3 * h, T(0));
    trace->h_prev.assign(len * h, T(0));
    trace->hn.assign(len * h, T(0));
  }
  Vec<T> state = Vec<T>::Zero(h);
  Vec<T> gh(3 * h);
  for (std::size_t s = 0; s < len; ++s) {
    const std::size_t t = reverse ? len - 1 - s : s;
    gh.noalias() = whh * state;
    gh += bhh;
    const T* g = gx.data() + t * 3 * h;
    T* o = out + t * out_stride;
    if (trace) {
      std::copy(state.data(), state.data() + h, trace->h_prev.data() + s * h);
      std::copy(gh.data() + 2 * h, gh.data() + 3 * h, trace->hn.data() + s * h);
    }
    for (std::size_t k = 0; k < h; ++k) {
      const T r = sigm(g[k] + gh[k]);
      const T z = sigm(g[h + k] + gh[h + k]);
      const T n = std::tanh(g[2 * h + k] + r * gh[2 * h + k]);
      const T next = (T(1) - z) * n + z * state[k];
      if (trace) {
        T* gates = trace->gates.data() + s * 3 * h;
        gates[k] = r;
        gates[h + k] = z;
        gates[2 * h + k] = n;
      }
      o[k] = next;
    }
    std::copy(o, o + h, state.data());
  }
}

template <typename T>
void backprop_direction(const T* x, std::size_t len, std::size_t features,
                        const GruWeights<T>& w, bool reverse, const T* grad_out,
                        std::size_t out_stride, const GruTrace<T>& trace,
                        T* grad_x, const GruGrads<T>& grads) {
  const std::size_t h = w.hidden();
  if (len == 0) return;
  ConstMatMap<T> wih(w.w_ih->data(), 3 * h, features);
  ConstMatMap<T> whh(w.w_hh->data(), 3 * h, h);

  RowMat<T> dgx(len, 3 * h);  // indexed by time
  RowMat<T> dgh(len, 3 * h);  // indexed by processing step
  Vec<T> dh = Vec<T>::Zero(h);
  Vec<T> dprev(h);
  for (std::size_t s = len; s-- > 0;) {
    const std::size_t t = reverse ? len - 1 - s : s;
    const T* go = grad_out + t * out_stride;
    const T* gates = trace.gates.data() + s * 3 * h;
    const T* hp = trace.h_prev.data() + s * h;
    const T* hn = trace.hn.data() + s * h;
    for (std::size_t k = 0; k < h; ++k) {
      const T r = gates[k], z = gates[h + k], n = gates[2 * h + k];
      const T d = dh[k] + go[k];
      const T dn = d * (T(1) - z);
      const T dz = d * (hp[k] - n);
      dprev[k] = d * z;
      const T dn_pre = dn * (T(1) - n * n);
      const T dr_pre = dn_pre * hn[k] * r * (T(1) - r);
      const T dz_pre = dz * z * (T(1) - z);
      dgx(t, k) = dr_pre;
      dgx(t, h + k) = dz_pre;
      dgx(t, 2 * h + k) = dn_pre;
      dgh(s, k) = dr_pre;
      dgh(s, h + k) = dz_pre;
      dgh(s, 2 * h + k) = dn_pre * r;
    }
    dh.noalias() = whh.transpose() * dgh.row(s).transpose();
    dh += dprev;
  }

  ConstMatMap<T> hprev(trace.h_prev.data(), len, h);
  ConstMatMap<T> xs(x, len, features);
  MatMap<T>(grads.w_hh->data(), 3 * h, h).noalias() += dgh.transpose() * hprev;
  MatMap<T>(grads.w_ih->data(), 3 * h, features).noalias() += dgx.transpose() * xs;
  Eigen::Map<Vec<T>>(grads.b_hh->data(), 3 * h) += dgh.colwise().sum().transpose();
  Eigen::Map<Vec<T>>(grads.b_ih->data(), 3 * h) += dgx.colwise().sum().transpose();
  if (grad_x) MatMap<T>(grad_x, len, features).noalias() += dgx * wih;
}

}  // namespace

template <typename T>
Tensor<T> bigru_forward(const Tensor<T>& input, std::span<const std::size_t> lengths,
                        const GruWeights<T>& fwd, const GruWeights<T>& bwd,
                        BiGruCache<T>* cache) {
  if (input.rank() != 3) throw ShapeError("bigru: expected [B, T, F] input");
  const std::size_t batch = input.dim(0), steps = input.dim(1), features = input.dim(2);
  if (!lengths.empty() && lengths.size() != batch) {
    throw ShapeError("bigru: lengths size does not match batch");
  }
  check_weights(fwd, features, "forward direction");
  check_weights(bwd, features, "backward direction");
  const std::size_t h = fwd.hidden();
  if (bwd.hidden() != h) throw ShapeError("bigru: direction hidden sizes differ");

  Tensor<T> out({batch, steps, 2 * h});
  if (cache) {
    cache->fwd.assign(batch, {});
    cache->bwd.assign(batch, {});
    cache->lengths.assign(batch, steps);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = lengths.empty() ? steps : std::min(lengths[b], steps);
    if (cache) cache->lengths[b] = len;
    const T* x = input.data() + b * steps * features;
    T* o = out.data() + b * steps * 2 * h;
    run_direction(x, len, features, fwd, false, o, 2 * h,
                  cache ? &cache->fwd[b] : nullptr);
    run_direction(x, len, features, bwd, true, o + h, 2 * h,
                  cache ? &cache->bwd[b] : nullptr);
  }
  return out;
}

template <typename T>
void bigru_backward(const Tensor<T>& input, const GruWeights<T>& fwd,
                    const GruWeights<T>& bwd, const BiGruCache<T>& cache,
                    const Tensor<T>& grad_out, Tensor<T>* grad_input,
                    const GruGrads<T>& grad_fwd, const GruGrads<T>& grad_bwd) {
  const std::size_t batch = input.dim(0), steps = input.dim(1), features = input.dim(2);
  const std::size_t h = fwd.hidden();
  expect_shape(grad_out, {batch, steps, 2 * h}, "bigru grad_out");
  if (cache.lengths.size() != batch) throw InvalidInput("bigru: cache does not match input");
  if (grad_input) *grad_input = Tensor<T>(input.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = cache.lengths[b];
    const T* x = input.data() + b * steps * features;
    const T* go = grad_out.data() + b * steps * 2 * h;
    T* gx = grad_input ? grad_input->data() + b * steps * features : nullptr;
    backprop_direction(x, len, features, fwd, false, go, 2 * h, cache.fwd[b], gx,
                       grad_fwd);
    backprop_direction(x, len, features, bwd, true, go + h, 2 * h, cache.bwd[b], gx,
                       grad_bwd);
  }
}

#define WSVAD_INSTANTIATE_GRU(T)                                                     \
  template Tensor<T> bigru_forward<T>(const Tensor<T>&, std::span<const std::size_t>, \
                                      const GruWeights<T>&, const GruWeights<T>&,    \
                                      BiGruCache<T>*);                               \
  template void bigru_backward<T>(const Tensor<T>&, const GruWeights<T>&,            \
                                  const GruWeights<T>&, const BiGruCache<T>&,        \
                                  const Tensor<T>&, Tensor<T>*, const GruGrads<T>&,  \
                                  const GruGrads<T>&);

WSVAD_INSTANTIATE_GRU(float)
WSVAD_INSTANTIATE_GRU(double)

}  // namespace wsvad::nn
