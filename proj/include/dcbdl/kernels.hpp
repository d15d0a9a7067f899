#pragma once

#include <cstdint>

namespace dcbdl::kern {

// Cross-correlation with same-size zero padding (kh, kw odd).
//   out[b,oc,y,x] = bias[oc] + sum_{ic,ky,kx} in[b,ic,y+ky-kh/2,x+kx-kw/2] * ker[oc,ic,ky,kx]
struct ConvDims {
  std::int64_t batch, cin, h, w, cout, kh, kw;
};

// Serial reference implementations and OpenMP versions share the same
// per-output accumulation order, so their results are bit-identical.
template <class T>
void conv2d_forward_serial(const T* in, const T* ker, const T* bias, T* out, const ConvDims& d);
template <class T>
void conv2d_forward_omp(const T* in, const T* ker, const T* bias, T* out, const ConvDims& d);

template <class T>
void conv2d_backward_input_serial(const T* gout, const T* ker, T* gin, const ConvDims& d);
template <class T>
void conv2d_backward_input_omp(const T* gout, const T* ker, T* gin, const ConvDims& d);

template <class T>
void conv2d_backward_kernel_serial(const T* gout, const T* in, T* gker, const ConvDims& d);
template <class T>
void conv2d_backward_kernel_omp(const T* gout, const T* in, T* gker, const ConvDims& d);

template <class T>
void conv2d_backward_bias_serial(const T* gout, T* gbias, const ConvDims& d);
template <class T>
void conv2d_backward_bias_omp(const T* gout, T* gbias, const ConvDims& d);

}  // namespace dcbdl::kern
