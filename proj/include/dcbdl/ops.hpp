#pragma once

#include "dcbdl/tape.hpp"

namespace dcbdl::ops {

using dcbdl::Tape;
using dcbdl::Tensor;
using dcbdl::Var;

// Elementwise, all differentiable. log is domain-checked (input > 0).
template <class T> Var relu(Tape<T>& t, Var a);
template <class T> Var sigmoid(Tape<T>& t, Var a);
template <class T> Var exp(Tape<T>& t, Var a);
template <class T> Var log(Tape<T>& t, Var a);
template <class T> Var square(Tape<T>& t, Var a);
template <class T> Var neg(Tape<T>& t, Var a);
template <class T> Var reciprocal(Tape<T>& t, Var a);

template <class T> Var add(Tape<T>& t, Var a, Var b);
template <class T> Var sub(Tape<T>& t, Var a, Var b);
template <class T> Var mul(Tape<T>& t, Var a, Var b);

template <class T> Var add_const(Tape<T>& t, Var a, T c);
template <class T> Var mul_const(Tape<T>& t, Var a, T c);

// a + k with k a constant tensor of the same shape (no gradient through k).
template <class T> Var add_tensor(Tape<T>& t, Var a, const Tensor<T>& k);

// Broadcasts: s is a 1-element tensor; m matches a's shape with the leading
// (batch) extent dropped.
template <class T> Var mul_scalar(Tape<T>& t, Var a, Var s);
template <class T> Var mul_bcast(Tape<T>& t, Var a, Var m);

// a: [batch, channels, H, W] -> [batch, 1, H, W]
template <class T> Var slice_channel(Tape<T>& t, Var a, std::int64_t c);

template <class T> Var sum(Tape<T>& t, Var a);
template <class T> Var sumsq(Tape<T>& t, Var a);

// Same-size zero-padded cross-correlation; kernels [cout, cin, kh, kw] with
// kh, kw odd; bias per output channel.
template <class T> Var conv2d(Tape<T>& t, Var input, Var kernels, Var bias);

}  // namespace dcbdl::ops
