#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sao/dsp.hpp"
#include "sao/tensor.hpp"

// Differentiable tensor operations. Shapes are given as [rows, cols] for 2-D
// tensors; signal-like tensors are [channels, frames].
namespace sao {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, Real slope = 0.2);
Tensor silu(const Tensor& a);

// y = x + sin^2(beta * x) / beta with beta per row of a [C, T] tensor.
Tensor snake(const Tensor& x, const Tensor& beta);

// Broadcast helpers. `row` has one entry per column of x [R, C];
// `col` has one entry per row.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor add_col(const Tensor& x, const Tensor& col);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor mean_abs_diff(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor transpose(const Tensor& a);
// x [T, in] -> [T, out] with weight [out, in] and optional bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end);
Tensor slice_cols(const Tensor& a, int64_t begin, int64_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

struct Conv1dOptions {
    int stride = 1;
    int dilation = 1;
    int pad_left = 0;
    int pad_right = 0;
};
// x [Cin, T], weight [Cout, Cin, K], bias [Cout] (optional) -> [Cout, Tout].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv1dOptions& opt);
int64_t conv1d_output_length(int64_t length, int kernel, const Conv1dOptions& opt);

// x [Cin, T], weight [Cin, Cout, K] -> [Cout, (T-1)*stride + K - 2*padding].
Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);

// Effective kernel g[i] * v[i,...] / ||v[i,...]|| for every slice along axis 0.
Tensor weight_norm(const Tensor& direction, const Tensor& magnitude);

// Normalizes each row of x [R, C] to zero mean and unit variance, then
// multiplies by gain [C] when given. There is no additive bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, Real eps = 1e-5);

// Row-wise softmax. Columns whose key_mask entry is 0 receive zero weight.
Tensor softmax_rows(const Tensor& x, std::span<const uint8_t> key_mask = {});

// Rotates the first `rotary_dims` columns of x [T, D] pairwise (half-split
// pairing) by angles position * base^(-2i/rotary_dims). Other columns pass
// through unchanged.
Tensor rope(const Tensor& x, std::span<const Real> positions, int rotary_dims, Real base = 10000.0);

// x [N] (or [1, N]) -> [frames, 2*(n_fft/2+1)]: real parts then imaginary parts.
Tensor stft(const Tensor& x, const StftOptions& opt);
// Magnitude sqrt(re^2 + im^2 + eps) of stft(), shape [frames, n_fft/2+1].
Tensor stft_magnitude(const Tensor& x, const StftOptions& opt, Real eps = 1e-8);

}  // namespace sao
