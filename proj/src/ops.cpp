#include "dcbdl/ops.hpp"

#include <cmath>

#include "dcbdl/kernels.hpp"

namespace dcbdl::ops {

namespace {

constexpr std::int64_t kParallelCutoff = 1 << 12;

template <class T, class F>
void map_elems(const Tensor<T>& a, Tensor<T>& out, F f) {
  const std::int64_t n = a.numel();
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(a[i]);
}

// Generic unary op. dfdx receives (x, f(x)).
template <class T, class F, class DF>
Var unary(Tape<T>& t, Var a, F f, DF dfdx, const char* what) {
  const auto& x = t.value(a);
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  map_elems(x, y, f);
  const bool rg = t.requires_grad(a);
  Var out{};
  out = t.emit(std::move(y), rg,
               [a, out_id = static_cast<std::int32_t>(t.size()), dfdx](Tape<T>& tp) {
                 Var self{out_id};
                 const auto& g = tp.grad(self);
                 const auto& x = tp.value(Var{a.id});
                 const auto& y = tp.value(self);
                 auto& ga = tp.grad_accum(a);
                 const std::int64_t n = g.numel();
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
                 for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
               },
               what);
  return out;
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ContractViolation(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                            " vs " + shape_str(b.shape));
}

}  // namespace

template <class T>
Var relu(Tape<T>& t, Var a) {
  return unary(
      t, a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); }, "relu");
}

template <class T>
Var sigmoid(Tape<T>& t, Var a) {
  return unary(
      t, a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : T(1) - T(1) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <class T>
Var exp(Tape<T>& t, Var a) {
  return unary(
      t, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; }, "exp");
}

template <class T>
Var log(Tape<T>& t, Var a) {
  const auto& x = t.value(a);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    if (!(x[i] > T(0)))
      throw DomainError("log: non-positive input at flat index " + std::to_string(i));
  return unary(
      t, a, [](T x_) { return std::log(x_); }, [](T x_, T) { return T(1) / x_; }, "log");
}

template <class T>
Var square(Tape<T>& t, Var a) {
  return unary(
      t, a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; }, "square");
}

template <class T>
Var neg(Tape<T>& t, Var a) {
  return unary(
      t, a, [](T x) { return -x; }, [](T, T) { return T(-1); }, "neg");
}

template <class T>
Var reciprocal(Tape<T>& t, Var a) {
  return unary(
      t, a, [](T x) { return T(1) / x; }, [](T, T y) { return -y * y; }, "reciprocal");
}

template <class T>
Var add_const(Tape<T>& t, Var a, T c) {
  return unary(
      t, a, [c](T x) { return x + c; }, [](T, T) { return T(1); }, "add_const");
}

template <class T>
Var mul_const(Tape<T>& t, Var a, T c) {
  return unary(
      t, a, [c](T x) { return x * c; }, [c](T, T) { return c; }, "mul_const");
}

template <class T>
Var add_tensor(Tape<T>& t, Var a, const Tensor<T>& k) {
  const auto& x = t.value(a);
  check_same_shape(x, k, "add_tensor");
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] + k[i];
  const bool rg = t.requires_grad(a);
  return t.emit(std::move(y), rg,
                [a, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  auto& ga = tp.grad_accum(a);
                  for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                },
                "add_tensor");
}

namespace {

template <class T, class FWD, class BWD_A, class BWD_B>
Var binary(Tape<T>& t, Var a, Var b, FWD f, BWD_A dfa, BWD_B dfb, const char* what) {
  const auto& xa = t.value(a);
  const auto& xb = t.value(b);
  check_same_shape(xa, xb, what);
  Tensor<T> y;
  y.shape = xa.shape;
  y.data.resize(xa.data.size());
  const std::int64_t n = xa.numel();
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) y[i] = f(xa[i], xb[i]);
  const bool rga = t.requires_grad(a), rgb = t.requires_grad(b);
  return t.emit(std::move(y), rga || rgb,
                [a, b, rga, rgb, dfa, dfb, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  const auto& xa_ = tp.value(a);
                  const auto& xb_ = tp.value(b);
                  const std::int64_t n_ = g.numel();
                  if (rga) {
                    auto& ga = tp.grad_accum(a);
                    for (std::int64_t i = 0; i < n_; ++i) ga[i] += g[i] * dfa(xa_[i], xb_[i]);
                  }
                  if (rgb) {
                    auto& gb = tp.grad_accum(b);
                    for (std::int64_t i = 0; i < n_; ++i) gb[i] += g[i] * dfb(xa_[i], xb_[i]);
                  }
                },
                what);
}

}  // namespace

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  return binary(
      t, a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); }, "add");
}

template <class T>
Var sub(Tape<T>& t, Var a, Var b) {
  return binary(
      t, a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); }, "sub");
}

template <class T>
Var mul(Tape<T>& t, Var a, Var b) {
  return binary(
      t, a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; }, "mul");
}

template <class T>
Var mul_scalar(Tape<T>& t, Var a, Var s) {
  const auto& x = t.value(a);
  const auto& sv = t.value(s);
  if (sv.numel() != 1) throw ContractViolation("mul_scalar: scale must have one element");
  const T c = sv[0];
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] * c;
  const bool rga = t.requires_grad(a), rgs = t.requires_grad(s);
  return t.emit(std::move(y), rga || rgs,
                [a, s, rga, rgs, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  const auto& x_ = tp.value(a);
                  const T c_ = tp.value(s)[0];
                  const std::int64_t n_ = g.numel();
                  if (rga) {
                    auto& ga = tp.grad_accum(a);
                    for (std::int64_t i = 0; i < n_; ++i) ga[i] += g[i] * c_;
                  }
                  if (rgs) {
                    T acc = T(0);
                    for (std::int64_t i = 0; i < n_; ++i) acc += g[i] * x_[i];
                    tp.grad_accum(s)[0] += acc;
                  }
                },
                "mul_scalar");
}

template <class T>
Var mul_bcast(Tape<T>& t, Var a, Var m) {
  const auto& x = t.value(a);
  const auto& mv = t.value(m);
  if (x.shape.size() < 2 ||
      std::vector<std::int64_t>(x.shape.begin() + 1, x.shape.end()) != mv.shape)
    throw ContractViolation("mul_bcast: mask shape " + shape_str(mv.shape) +
                            " must equal input shape " + shape_str(x.shape) +
                            " without its batch extent");
  const std::int64_t batch = x.shape[0];
  const std::int64_t inner = mv.numel();
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
#pragma omp parallel for schedule(static) if (batch * inner >= kParallelCutoff)
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t i = 0; i < inner; ++i) y[b * inner + i] = x[b * inner + i] * mv[i];
  const bool rga = t.requires_grad(a), rgm = t.requires_grad(m);
  return t.emit(std::move(y), rga || rgm,
                [a, m, rga, rgm, batch, inner,
                 out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  const auto& x_ = tp.value(a);
                  const auto& m_ = tp.value(m);
                  if (rga) {
                    auto& ga = tp.grad_accum(a);
                    for (std::int64_t b = 0; b < batch; ++b)
                      for (std::int64_t i = 0; i < inner; ++i)
                        ga[b * inner + i] += g[b * inner + i] * m_[i];
                  }
                  if (rgm) {
                    auto& gm = tp.grad_accum(m);
                    for (std::int64_t i = 0; i < inner; ++i) {
                      T acc = T(0);
                      for (std::int64_t b = 0; b < batch; ++b)
                        acc += g[b * inner + i] * x_[b * inner + i];
                      gm[i] += acc;
                    }
                  }
                },
                "mul_bcast");
}

template <class T>
Var slice_channel(Tape<T>& t, Var a, std::int64_t c) {
  const auto& x = t.value(a);
  if (x.shape.size() != 4)
    throw ContractViolation("slice_channel: expected rank-4 input, got " + shape_str(x.shape));
  const std::int64_t batch = x.shape[0], chans = x.shape[1], hw = x.shape[2] * x.shape[3];
  if (c < 0 || c >= chans)
    throw ContractViolation("slice_channel: channel " + std::to_string(c) + " out of range");
  Tensor<T> y = Tensor<T>::zeros({batch, 1, x.shape[2], x.shape[3]});
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t i = 0; i < hw; ++i) y[b * hw + i] = x[(b * chans + c) * hw + i];
  const bool rg = t.requires_grad(a);
  return t.emit(std::move(y), rg,
                [a, c, batch, chans, hw, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  auto& ga = tp.grad_accum(a);
                  for (std::int64_t b = 0; b < batch; ++b)
                    for (std::int64_t i = 0; i < hw; ++i)
                      ga[(b * chans + c) * hw + i] += g[b * hw + i];
                },
                "slice_channel");
}

template <class T>
Var sum(Tape<T>& t, Var a) {
  const auto& x = t.value(a);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  const bool rg = t.requires_grad(a);
  return t.emit(Tensor<T>::scalar(static_cast<T>(acc)), rg,
                [a, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const T g = tp.grad(Var{out_id})[0];
                  auto& ga = tp.grad_accum(a);
                  for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
                },
                "sum");
}

template <class T>
Var sumsq(Tape<T>& t, Var a) {
  const auto& x = t.value(a);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i)
    acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  const bool rg = t.requires_grad(a);
  return t.emit(Tensor<T>::scalar(static_cast<T>(acc)), rg,
                [a, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const T g = tp.grad(Var{out_id})[0];
                  const auto& x_ = tp.value(a);
                  auto& ga = tp.grad_accum(a);
                  for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g * T(2) * x_[i];
                },
                "sumsq");
}

template <class T>
Var conv2d(Tape<T>& t, Var input, Var kernels, Var bias) {
  const auto& x = t.value(input);
  const auto& k = t.value(kernels);
  const auto& bv = t.value(bias);
  if (x.shape.size() != 4 || k.shape.size() != 4)
    throw ContractViolation("conv2d: input and kernels must be rank 4, got " +
                            shape_str(x.shape) + " and " + shape_str(k.shape));
  if (k.shape[1] != x.shape[1])
    throw ContractViolation("conv2d: kernel input channels " + std::to_string(k.shape[1]) +
                            " != input channels " + std::to_string(x.shape[1]));
  if (k.shape[2] % 2 == 0 || k.shape[3] % 2 == 0)
    throw ContractViolation("conv2d: kernel extents must be odd, got " + shape_str(k.shape));
  if (bv.shape.size() != 1 || bv.shape[0] != k.shape[0])
    throw ContractViolation("conv2d: bias must have one value per output channel");
  const kern::ConvDims d{x.shape[0], x.shape[1], x.shape[2], x.shape[3],
                         k.shape[0], k.shape[2], k.shape[3]};
  Tensor<T> y = Tensor<T>::zeros({d.batch, d.cout, d.h, d.w});
  kern::conv2d_forward_omp(x.data.data(), k.data.data(), bv.data.data(), y.data.data(), d);
  const bool rgi = t.requires_grad(input);
  const bool rgk = t.requires_grad(kernels);
  const bool rgb = t.requires_grad(bias);
  return t.emit(std::move(y), rgi || rgk || rgb,
                [input, kernels, bias, rgi, rgk, rgb, d,
                 out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  if (rgi)
                    kern::conv2d_backward_input_omp(g.data.data(), tp.value(kernels).data.data(),
                                                    tp.grad_accum(input).data.data(), d);
                  if (rgk)
                    kern::conv2d_backward_kernel_omp(g.data.data(), tp.value(input).data.data(),
                                                     tp.grad_accum(kernels).data.data(), d);
                  if (rgb)
                    kern::conv2d_backward_bias_omp(g.data.data(),
                                                   tp.grad_accum(bias).data.data(), d);
                },
                "conv2d");
}

#define DCBDL_INSTANTIATE_OPS(T)                                      \
  template Var relu<T>(Tape<T>&, Var);                               \
  template Var sigmoid<T>(Tape<T>&, Var);                            \
  template Var exp<T>(Tape<T>&, Var);                                \
  template Var log<T>(Tape<T>&, Var);                                \
  template Var square<T>(Tape<T>&, Var);                             \
  template Var neg<T>(Tape<T>&, Var);                                \
  template Var reciprocal<T>(Tape<T>&, Var);                         \
  template Var add<T>(Tape<T>&, Var, Var);                           \
  template Var sub<T>(Tape<T>&, Var, Var);                           \
  template Var mul<T>(Tape<T>&, Var, Var);                           \
  template Var add_const<T>(Tape<T>&, Var, T);                       \
  template Var mul_const<T>(Tape<T>&, Var, T);                       \
  template Var add_tensor<T>(Tape<T>&, Var, const Tensor<T>&);       \
  template Var mul_scalar<T>(Tape<T>&, Var, Var);                    \
  template Var mul_bcast<T>(Tape<T>&, Var, Var);                     \
  template Var slice_channel<T>(Tape<T>&, Var, std::int64_t);        \
  template Var sum<T>(Tape<T>&, Var);                                \
  template Var sumsq<T>(Tape<T>&, Var);                              \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var);

DCBDL_INSTANTIATE_OPS(float)
DCBDL_INSTANTIATE_OPS(double)

}  // namespace dcbdl::ops
