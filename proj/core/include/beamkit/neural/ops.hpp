#pragma once

#include <vector>

#include "beamkit/neural/tensor.hpp"

namespace beamkit::nn {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// max(x, 0) + slope * min(x, 0) with a single learnable slope of shape [1].
Tensor prelu(const Tensor& x, const Tensor& slope);

Tensor reshape(const Tensor& x, Shape shape);
/// Output axis i is input axis perm[i].
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor slice(const Tensor& x, int axis, int start, int length);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// x[..., in] -> x W^T + b over the last axis. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Batched product a [B, n, k] x b [B, k, m]; with `transpose_b`, b is [B, m, k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// Recurrent part of one GRU layer. gates_x [S, B, 3H] holds the input
/// projections (r, z, n order); w_hh [3H, H], b_hh [3H]. The state starts at
/// zero; returns every state [S, B, H]. One graph node for the whole sequence.
Tensor gru_sequence(const Tensor& gates_x, const Tensor& w_hh, const Tensor& b_hh);

/// softmax(q k^T / sqrt(d)) v for q [B, Lq, d], k [B, Lk, d], v [B, Lk, dv].
/// Keeps only the attention probabilities for the backward pass.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
/// Normalizes over the last axis with affine gamma/beta of that size.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// x [Cin, H, W], w [Cout, Cin, KH, KW], b [Cout]. Stride applies to H only.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h, int pad_h,
              int pad_w);
/// Adjoint-shaped convolution: x [Cin, H, W], w [Cin, Cout, KH, KW];
/// H_out = (H - 1) * stride_h - 2 pad_h + KH, W_out = W - 1 - 2 pad_w + KW.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h,
                        int pad_h, int pad_w);
/// x [Cin, T], w [Cout, Cin, K]; T_out = T + 2 pad - dilation (K - 1).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int dilation, int pad);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean squared difference over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace beamkit::nn
