#include "dcbdl/kernels.hpp"

#include <algorithm>

namespace dcbdl::kern {

namespace {

// Row-accumulation form: for a fixed (input row, kernel tap) pair the update
// of an output row is out[x] += w * src[x + shift], which vectorizes without
// reordering the per-pixel accumulation. The serial and OpenMP drivers share
// these helpers, so their results are bit-identical.

// out[x] += w * src[x + shift] over the x range valid for this shift.
template <class T>
inline void axpy_shifted(T* out, const T* src, T w, std::int64_t shift, std::int64_t width) {
  const std::int64_t x0 = std::max<std::int64_t>(0, -shift);
  const std::int64_t x1 = std::min<std::int64_t>(width, width - shift);
  const T* s = src + shift;
  for (std::int64_t x = x0; x < x1; ++x) out[x] += w * s[x];
}

// One forward output row (b, oc, y).
template <class T>
inline void forward_row(const T* in, const T* ker, const T* bias, T* out_row, std::int64_t b,
                        std::int64_t oc, std::int64_t y, const ConvDims& d) {
  const std::int64_t ph = d.kh / 2, pw = d.kw / 2;
  for (std::int64_t x = 0; x < d.w; ++x) out_row[x] = bias[oc];
  for (std::int64_t ic = 0; ic < d.cin; ++ic) {
    const T* in_c = in + ((b * d.cin + ic) * d.h) * d.w;
    const T* ker_c = ker + ((oc * d.cin + ic) * d.kh) * d.kw;
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      const std::int64_t iy = y + ky - ph;
      if (iy < 0 || iy >= d.h) continue;
      const T* in_row = in_c + iy * d.w;
      for (std::int64_t kx = 0; kx < d.kw; ++kx)
        axpy_shifted(out_row, in_row, ker_c[ky * d.kw + kx], kx - pw, d.w);
    }
  }
}

// One input-gradient row (b, ic, iy): correlate the output gradient with the
// flipped kernel.
template <class T>
inline void backward_input_row(const T* gout, const T* ker, T* gin_row, std::int64_t b,
                               std::int64_t ic, std::int64_t iy, const ConvDims& d) {
  const std::int64_t ph = d.kh / 2, pw = d.kw / 2;
  for (std::int64_t oc = 0; oc < d.cout; ++oc) {
    const T* gout_c = gout + ((b * d.cout + oc) * d.h) * d.w;
    const T* ker_c = ker + ((oc * d.cin + ic) * d.kh) * d.kw;
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      const std::int64_t oy = iy - ky + ph;
      if (oy < 0 || oy >= d.h) continue;
      const T* g_row = gout_c + oy * d.w;
      for (std::int64_t kx = 0; kx < d.kw; ++kx)
        axpy_shifted(gin_row, g_row, ker_c[ky * d.kw + kx], pw - kx, d.w);
    }
  }
}

// Shifted dot product with eight fixed accumulation lanes; lane layout and
// combine order are fixed, so results do not depend on the caller.
template <class T>
inline T dot_shifted(const T* a, const T* b, std::int64_t shift, std::int64_t width) {
  const std::int64_t x0 = std::max<std::int64_t>(0, -shift);
  const std::int64_t x1 = std::min<std::int64_t>(width, width - shift);
  const T* bs = b + shift;
  T lanes[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  std::int64_t x = x0;
  for (; x + 8 <= x1; x += 8)
    for (int j = 0; j < 8; ++j) lanes[j] += a[x + j] * bs[x + j];
  for (int j = 0; x < x1; ++x, ++j) lanes[j] += a[x] * bs[x];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

// Gradient for every tap of one (oc, ic) kernel plane.
template <class T>
inline void backward_kernel_plane(const T* gout, const T* in, T* gker_plane, std::int64_t oc,
                                  std::int64_t ic, const ConvDims& d) {
  const std::int64_t ph = d.kh / 2, pw = d.kw / 2;
  for (std::int64_t ky = 0; ky < d.kh; ++ky) {
    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
      T acc = T(0);
      for (std::int64_t b = 0; b < d.batch; ++b) {
        const T* gout_c = gout + ((b * d.cout + oc) * d.h) * d.w;
        const T* in_c = in + ((b * d.cin + ic) * d.h) * d.w;
        for (std::int64_t y = 0; y < d.h; ++y) {
          const std::int64_t iy = y + ky - ph;
          if (iy < 0 || iy >= d.h) continue;
          acc += dot_shifted(gout_c + y * d.w, in_c + iy * d.w, kx - pw, d.w);
        }
      }
      gker_plane[ky * d.kw + kx] += acc;
    }
  }
}

// Plain eight-lane sum, same lane discipline as dot_shifted.
template <class T>
inline T lane_sum(const T* a, std::int64_t n) {
  T lanes[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  std::int64_t x = 0;
  for (; x + 8 <= n; x += 8)
    for (int j = 0; j < 8; ++j) lanes[j] += a[x + j];
  for (int j = 0; x < n; ++x, ++j) lanes[j] += a[x];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

template <class T>
inline T bias_sum(const T* gout, std::int64_t oc, const ConvDims& d) {
  T acc = T(0);
  for (std::int64_t b = 0; b < d.batch; ++b) {
    const T* g = gout + ((b * d.cout + oc) * d.h) * d.w;
    acc += lane_sum(g, d.h * d.w);
  }
  return acc;
}

}  // namespace

template <class T>
void conv2d_forward_serial(const T* in, const T* ker, const T* bias, T* out, const ConvDims& d) {
  const std::int64_t rows = d.batch * d.cout * d.h;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t y = r % d.h;
    const std::int64_t oc = (r / d.h) % d.cout;
    const std::int64_t b = r / (d.h * d.cout);
    forward_row(in, ker, bias, out + r * d.w, b, oc, y, d);
  }
}

template <class T>
void conv2d_forward_omp(const T* in, const T* ker, const T* bias, T* out, const ConvDims& d) {
  const std::int64_t rows = d.batch * d.cout * d.h;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t y = r % d.h;
    const std::int64_t oc = (r / d.h) % d.cout;
    const std::int64_t b = r / (d.h * d.cout);
    forward_row(in, ker, bias, out + r * d.w, b, oc, y, d);
  }
}

template <class T>
void conv2d_backward_input_serial(const T* gout, const T* ker, T* gin, const ConvDims& d) {
  const std::int64_t rows = d.batch * d.cin * d.h;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t iy = r % d.h;
    const std::int64_t ic = (r / d.h) % d.cin;
    const std::int64_t b = r / (d.h * d.cin);
    backward_input_row(gout, ker, gin + r * d.w, b, ic, iy, d);
  }
}

template <class T>
void conv2d_backward_input_omp(const T* gout, const T* ker, T* gin, const ConvDims& d) {
  const std::int64_t rows = d.batch * d.cin * d.h;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t iy = r % d.h;
    const std::int64_t ic = (r / d.h) % d.cin;
    const std::int64_t b = r / (d.h * d.cin);
    backward_input_row(gout, ker, gin + r * d.w, b, ic, iy, d);
  }
}

template <class T>
void conv2d_backward_kernel_serial(const T* gout, const T* in, T* gker, const ConvDims& d) {
  const std::int64_t planes = d.cout * d.cin;
  for (std::int64_t pl = 0; pl < planes; ++pl)
    backward_kernel_plane(gout, in, gker + pl * d.kh * d.kw, pl / d.cin, pl % d.cin, d);
}

template <class T>
void conv2d_backward_kernel_omp(const T* gout, const T* in, T* gker, const ConvDims& d) {
  const std::int64_t planes = d.cout * d.cin;
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl)
    backward_kernel_plane(gout, in, gker + pl * d.kh * d.kw, pl / d.cin, pl % d.cin, d);
}

template <class T>
void conv2d_backward_bias_serial(const T* gout, T* gbias, const ConvDims& d) {
  for (std::int64_t oc = 0; oc < d.cout; ++oc) gbias[oc] += bias_sum(gout, oc, d);
}

template <class T>
void conv2d_backward_bias_omp(const T* gout, T* gbias, const ConvDims& d) {
#pragma omp parallel for schedule(static)
  for (std::int64_t oc = 0; oc < d.cout; ++oc) gbias[oc] += bias_sum(gout, oc, d);
}

#define DCBDL_INSTANTIATE_KERNELS(T)                                                            \
  template void conv2d_forward_serial<T>(const T*, const T*, const T*, T*, const ConvDims&);    \
  template void conv2d_forward_omp<T>(const T*, const T*, const T*, T*, const ConvDims&);       \
  template void conv2d_backward_input_serial<T>(const T*, const T*, T*, const ConvDims&);       \
  template void conv2d_backward_input_omp<T>(const T*, const T*, T*, const ConvDims&);          \
  template void conv2d_backward_kernel_serial<T>(const T*, const T*, T*, const ConvDims&);      \
  template void conv2d_backward_kernel_omp<T>(const T*, const T*, T*, const ConvDims&);         \
  template void conv2d_backward_bias_serial<T>(const T*, T*, const ConvDims&);                  \
  template void conv2d_backward_bias_omp<T>(const T*, T*, const ConvDims&);

DCBDL_INSTANTIATE_KERNELS(float)
DCBDL_INSTANTIATE_KERNELS(double)

}  // namespace dcbdl::kern
