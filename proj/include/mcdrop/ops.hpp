#pragma once

#include "mcdrop/autodiff.hpp"

#include <span>

namespace mcdrop {

// Elementwise binary ops require equal shapes, or a rank-0 right operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add(Var a, double c);
Var scale(Var a, double c);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(double c, Var a);

/// [n, k] x [k, m] -> [n, m]
Var matmul(Var a, Var b);
/// Adds b (shape [m]) along the last axis of a.
Var bias_add(Var a, Var b);

Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
/// Sums over the last axis: [..., m] -> [...].
Var sum_last(Var a);

/// Row-wise over the last axis.
Var softmax(Var a);
Var log_softmax(Var a);

/// Mean over rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::span<const int> targets);

Var reshape(Var a, Shape shape);

/// NCHW convolution with stride 1 and zero padding k/2. Weight [out, in, k, k], bias [out].
Var conv2d(Var x, Var weight, Var bias);
/// [B, C, H, W] -> [B, C]
Var global_avg_pool(Var x);

}  // namespace mcdrop
