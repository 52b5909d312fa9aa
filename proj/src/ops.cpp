#include "sao/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sao/types.hpp"

namespace sao {

using detail::Node;

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using ConstStridedMap = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
using MutStridedMap = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_ndim(const Tensor& a, int n, const char* op) {
    if (a.ndim() != n)
        throw ShapeError(std::string(op) + ": expected " + std::to_string(n) + "-D tensor, got " + shape_str(a.shape()));
}

Node& parent(Node& out, size_t i) { return *out.parents[i]; }
bool wants(const Node& out, size_t i) { return out.parents[i] && out.parents[i]->requires_grad; }

template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D derivative) {
    std::vector<Real> y(a.data().size());
    auto x = a.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
    return detail::make_result(a.shape(), std::move(y), {&a}, [derivative](Node& out) {
        Node& p = parent(out, 0);
        auto& g = p.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * derivative(p.value[i], out.value[i]);
    });
}

}  // namespace

Matrix to_matrix(const Tensor& t) {
    require_ndim(t, 2, "to_matrix");
    return ConstMap(t.data().data(), t.dim(0), t.dim(1));
}

Tensor to_tensor(const Matrix& m, bool requires_grad) {
    std::vector<Real> v(m.data(), m.data() + m.size());
    return Tensor::from({m.rows(), m.cols()}, std::move(v), requires_grad);
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Real> y(a.data().begin(), a.data().end());
    auto bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    return detail::make_result(a.shape(), std::move(y), {&a, &b}, [](Node& out) {
        for (size_t k = 0; k < 2; ++k) {
            if (!wants(out, k)) continue;
            auto& g = parent(out, k).ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Real> y(a.data().begin(), a.data().end());
    auto bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    return detail::make_result(a.shape(), std::move(y), {&a, &b}, [](Node& out) {
        if (wants(out, 0)) {
            auto& g = parent(out, 0).ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
        if (wants(out, 1)) {
            auto& g = parent(out, 1).ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= out.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Real> y(a.data().begin(), a.data().end());
    auto bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    return detail::make_result(a.shape(), std::move(y), {&a, &b}, [](Node& out) {
        Node& pa = parent(out, 0);
        Node& pb = parent(out, 1);
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, Real s) {
    return unary(a, [s](Real x) { return s * x; }, [s](Real, Real) { return s; });
}

Tensor add_scalar(const Tensor& a, Real s) {
    return unary(a, [s](Real x) { return x + s; }, [](Real, Real) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
    return unary(a, [](Real x) { return x * x; }, [](Real x, Real) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    return unary(a, [](Real x) { return std::sqrt(x); }, [](Real, Real y) { return 0.5 / y; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](Real x) { return std::log(x); }, [](Real x, Real) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
    return unary(a, [](Real x) { return std::abs(x); },
                 [](Real x, Real) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](Real x) { return x > 0 ? x : 0.0; }, [](Real x, Real) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, Real slope) {
    return unary(a, [slope](Real x) { return x > 0 ? x : slope * x; },
                 [slope](Real x, Real) { return x > 0 ? 1.0 : slope; });
}

Tensor silu(const Tensor& a) {
    return unary(
        a, [](Real x) { return x / (1.0 + std::exp(-x)); },
        [](Real x, Real) {
            const Real s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor snake(const Tensor& x, const Tensor& beta) {
    require_ndim(x, 2, "snake");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (beta.numel() != rows) throw ShapeError("snake: beta needs one entry per channel");
    static constexpr Real kMinBeta = 1e-9;
    std::vector<Real> y(static_cast<size_t>(rows * cols));
    auto xv = x.data();
    auto bv = beta.data();
    for (int64_t r = 0; r < rows; ++r) {
        const Real b = std::max(bv[static_cast<size_t>(r)], kMinBeta);
        for (int64_t c = 0; c < cols; ++c) {
            const size_t i = static_cast<size_t>(r * cols + c);
            const Real s = std::sin(b * xv[i]);
            y[i] = xv[i] + s * s / b;
        }
    }
    return detail::make_result(x.shape(), std::move(y), {&x, &beta}, [rows, cols](Node& out) {
        Node& px = parent(out, 0);
        Node& pb = parent(out, 1);
        for (int64_t r = 0; r < rows; ++r) {
            const Real b = std::max(pb.value[static_cast<size_t>(r)], kMinBeta);
            Real gb = 0.0;
            for (int64_t c = 0; c < cols; ++c) {
                const size_t i = static_cast<size_t>(r * cols + c);
                const Real xi = px.value[i];
                const Real s = std::sin(b * xi);
                const Real s2 = std::sin(2.0 * b * xi);
                if (px.requires_grad) px.ensure_grad()[i] += out.grad[i] * (1.0 + s2);
                gb += out.grad[i] * (xi * s2 / b - s * s / (b * b));
            }
            if (pb.requires_grad) pb.ensure_grad()[static_cast<size_t>(r)] += gb;
        }
    });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    require_ndim(x, 2, "add_row");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (row.numel() != cols) throw ShapeError("add_row: expected " + std::to_string(cols) + " entries");
    std::vector<Real> y(x.data().begin(), x.data().end());
    auto rv = row.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) y[static_cast<size_t>(r * cols + c)] += rv[static_cast<size_t>(c)];
    return detail::make_result(x.shape(), std::move(y), {&x, &row}, [rows, cols](Node& out) {
        if (wants(out, 0)) {
            auto& g = parent(out, 0).ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
        if (wants(out, 1)) {
            auto& g = parent(out, 1).ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) g[static_cast<size_t>(c)] += out.grad[static_cast<size_t>(r * cols + c)];
        }
    });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
    require_ndim(x, 2, "mul_row");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (row.numel() != cols) throw ShapeError("mul_row: expected " + std::to_string(cols) + " entries");
    std::vector<Real> y(x.data().begin(), x.data().end());
    auto rv = row.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) y[static_cast<size_t>(r * cols + c)] *= rv[static_cast<size_t>(c)];
    return detail::make_result(x.shape(), std::move(y), {&x, &row}, [rows, cols](Node& out) {
        Node& px = parent(out, 0);
        Node& pr = parent(out, 1);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) {
                const size_t i = static_cast<size_t>(r * cols + c);
                if (px.requires_grad) px.ensure_grad()[i] += out.grad[i] * pr.value[static_cast<size_t>(c)];
                if (pr.requires_grad) pr.ensure_grad()[static_cast<size_t>(c)] += out.grad[i] * px.value[i];
            }
    });
}

Tensor add_col(const Tensor& x, const Tensor& col) {
    require_ndim(x, 2, "add_col");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (col.numel() != rows) throw ShapeError("add_col: expected " + std::to_string(rows) + " entries");
    std::vector<Real> y(x.data().begin(), x.data().end());
    auto cv = col.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) y[static_cast<size_t>(r * cols + c)] += cv[static_cast<size_t>(r)];
    return detail::make_result(x.shape(), std::move(y), {&x, &col}, [rows, cols](Node& out) {
        if (wants(out, 0)) {
            auto& g = parent(out, 0).ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
        if (wants(out, 1)) {
            auto& g = parent(out, 1).ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) g[static_cast<size_t>(r)] += out.grad[static_cast<size_t>(r * cols + c)];
        }
    });
}

Tensor sum(const Tensor& a) {
    Real s = 0.0;
    for (Real v : a.data()) s += v;
    return detail::make_result({}, {s}, {&a}, [](Node& out) {
        auto& g = parent(out, 0).ensure_grad();
        for (auto& v : g) v += out.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<Real>(a.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor mean_abs_diff(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_ndim(a, 2, "matmul");
    require_ndim(b, 2, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<Real> y(static_cast<size_t>(m * n));
    MutMap(y.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
    return detail::make_result({m, n}, std::move(y), {&a, &b}, [m, k, n](Node& out) {
        ConstMap g(out.grad.data(), m, n);
        Node& pa = parent(out, 0);
        Node& pb = parent(out, 1);
        if (pa.requires_grad)
            MutMap(pa.ensure_grad().data(), m, k).noalias() += g * ConstMap(pb.value.data(), k, n).transpose();
        if (pb.requires_grad)
            MutMap(pb.ensure_grad().data(), k, n).noalias() += ConstMap(pa.value.data(), m, k).transpose() * g;
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_ndim(a, 2, "matmul_nt");
    require_ndim(b, 2, "matmul_nt");
    if (a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<Real> y(static_cast<size_t>(m * n));
    MutMap(y.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), n, k).transpose();
    return detail::make_result({m, n}, std::move(y), {&a, &b}, [m, k, n](Node& out) {
        ConstMap g(out.grad.data(), m, n);
        Node& pa = parent(out, 0);
        Node& pb = parent(out, 1);
        if (pa.requires_grad) MutMap(pa.ensure_grad().data(), m, k).noalias() += g * ConstMap(pb.value.data(), n, k);
        if (pb.requires_grad)
            MutMap(pb.ensure_grad().data(), n, k).noalias() += g.transpose() * ConstMap(pa.value.data(), m, k);
    });
}

Tensor transpose(const Tensor& a) {
    require_ndim(a, 2, "transpose");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<Real> y(static_cast<size_t>(m * n));
    MutMap(y.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
    return detail::make_result({n, m}, std::move(y), {&a}, [m, n](Node& out) {
        MutMap(parent(out, 0).ensure_grad().data(), m, n) += ConstMap(out.grad.data(), n, m).transpose();
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    Tensor y = matmul_nt(x, weight);
    return bias.defined() ? add_row(y, bias) : y;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    std::vector<Real> y(a.data().begin(), a.data().end());
    return detail::make_result(std::move(shape), std::move(y), {&a}, [](Node& out) {
        auto& g = parent(out, 0).ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    });
}

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end) {
    require_ndim(a, 2, "slice_rows");
    const int64_t rows = a.dim(0), cols = a.dim(1);
    if (begin < 0 || end > rows || begin > end) throw ShapeError("slice_rows: range out of bounds");
    std::vector<Real> y(a.data().begin() + begin * cols, a.data().begin() + end * cols);
    return detail::make_result({end - begin, cols}, std::move(y), {&a}, [begin, cols](Node& out) {
        auto& g = parent(out, 0).ensure_grad();
        for (size_t i = 0; i < out.grad.size(); ++i) g[static_cast<size_t>(begin * cols) + i] += out.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, int64_t begin, int64_t end) {
    require_ndim(a, 2, "slice_cols");
    const int64_t rows = a.dim(0), cols = a.dim(1);
    if (begin < 0 || end > cols || begin > end) throw ShapeError("slice_cols: range out of bounds");
    const int64_t w = end - begin;
    std::vector<Real> y(static_cast<size_t>(rows * w));
    MutMap(y.data(), rows, w) = ConstMap(a.data().data(), rows, cols).middleCols(begin, w);
    return detail::make_result({rows, w}, std::move(y), {&a}, [rows, cols, begin, w](Node& out) {
        MutMap(parent(out, 0).ensure_grad().data(), rows, cols).middleCols(begin, w) += ConstMap(out.grad.data(), rows, w);
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int64_t cols = parts[0].dim(1);
    int64_t rows = 0;
    for (const auto& p : parts) {
        require_ndim(p, 2, "concat_rows");
        if (p.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.dim(0);
    }
    std::vector<Real> y;
    y.reserve(static_cast<size_t>(rows * cols));
    for (const auto& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
    return detail::make_result({rows, cols}, std::move(y), parts, [](Node& out) {
        size_t offset = 0;
        for (auto& p : out.parents) {
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[offset + i];
            }
            offset += p->value.size();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int64_t rows = parts[0].dim(0);
    int64_t cols = 0;
    for (const auto& p : parts) {
        require_ndim(p, 2, "concat_cols");
        if (p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.dim(1);
    }
    std::vector<Real> y(static_cast<size_t>(rows * cols));
    MutMap ym(y.data(), rows, cols);
    int64_t offset = 0;
    for (const auto& p : parts) {
        ym.middleCols(offset, p.dim(1)) = ConstMap(p.data().data(), rows, p.dim(1));
        offset += p.dim(1);
    }
    return detail::make_result({rows, cols}, std::move(y), parts, [rows, cols](Node& out) {
        ConstMap g(out.grad.data(), rows, cols);
        int64_t off = 0;
        for (auto& p : out.parents) {
            const int64_t w = p->shape[1];
            if (p->requires_grad) MutMap(p->ensure_grad().data(), rows, w) += g.middleCols(off, w);
            off += w;
        }
    });
}

int64_t conv1d_output_length(int64_t length, int kernel, const Conv1dOptions& opt) {
    const int64_t span = static_cast<int64_t>(opt.dilation) * (kernel - 1) + 1;
    const int64_t padded = length + opt.pad_left + opt.pad_right;
    if (padded < span) return 0;
    return (padded - span) / opt.stride + 1;
}

namespace {

// Per-tap weight matrices W_j[o, i] = w[o, i, j] for a [Cout, Cin, K] kernel.
std::vector<Matrix> conv_taps(std::span<const Real> w, int64_t cout, int64_t cin, int64_t k) {
    std::vector<Matrix> taps(static_cast<size_t>(k), Matrix(cout, cin));
    for (int64_t o = 0; o < cout; ++o)
        for (int64_t i = 0; i < cin; ++i)
            for (int64_t j = 0; j < k; ++j) taps[static_cast<size_t>(j)](o, i) = w[static_cast<size_t>((o * cin + i) * k + j)];
    return taps;
}

std::vector<Real> pad_columns(std::span<const Real> x, int64_t rows, int64_t cols, int pad_left, int pad_right) {
    const int64_t padded = cols + pad_left + pad_right;
    std::vector<Real> xp(static_cast<size_t>(rows * padded), 0.0);
    for (int64_t r = 0; r < rows; ++r)
        std::copy_n(x.begin() + r * cols, cols, xp.begin() + r * padded + pad_left);
    return xp;
}

Matrix gather_columns(const std::vector<Real>& xp, int64_t rows, int64_t stride_cols, int64_t first, int64_t step,
                      int64_t count) {
    Matrix v(rows, count);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t t = 0; t < count; ++t) v(r, t) = xp[static_cast<size_t>(r * stride_cols + first + t * step)];
    return v;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv1dOptions& opt) {
    require_ndim(x, 2, "conv1d");
    require_ndim(weight, 3, "conv1d weight");
    const int64_t cin = x.dim(0), len = x.dim(1), cout = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != cin)
        throw ShapeError("conv1d: input has " + std::to_string(cin) + " channels, weight expects " + std::to_string(weight.dim(1)));
    if (bias.defined() && bias.numel() != cout) throw ShapeError("conv1d: bias size mismatch");
    if (opt.stride < 1 || opt.dilation < 1 || opt.pad_left < 0 || opt.pad_right < 0)
        throw std::invalid_argument("conv1d: invalid stride/dilation/padding");
    const int64_t tout = conv1d_output_length(len, static_cast<int>(k), opt);
    if (tout < 1) throw ShapeError("conv1d: input of length " + std::to_string(len) + " too short for kernel");
    const int64_t tp = len + opt.pad_left + opt.pad_right;
    const int64_t s = opt.stride, d = opt.dilation;

    const auto xp = pad_columns(x.data(), cin, len, opt.pad_left, opt.pad_right);
    const auto taps = conv_taps(weight.data(), cout, cin, k);
    std::vector<Real> y(static_cast<size_t>(cout * tout), 0.0);
    MutMap ym(y.data(), cout, tout);
    for (int64_t j = 0; j < k; ++j) {
        if (s == 1)
            ym.noalias() += taps[static_cast<size_t>(j)] * ConstStridedMap(xp.data() + j * d, cin, tout, Eigen::OuterStride<>(tp));
        else
            ym.noalias() += taps[static_cast<size_t>(j)] * gather_columns(xp, cin, tp, j * d, s, tout);
    }
    if (bias.defined()) ym.colwise() += Eigen::Map<const Vector>(bias.data().data(), cout);

    const bool has_bias = bias.defined();
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return detail::make_result({cout, tout}, std::move(y), inputs, [=](Node& out) {
        Node& px = parent(out, 0);
        Node& pw = parent(out, 1);
        ConstMap g(out.grad.data(), cout, tout);
        if (has_bias && wants(out, 2)) {
            auto& gb = parent(out, 2).ensure_grad();
            Eigen::Map<Vector>(gb.data(), cout) += g.rowwise().sum();
        }
        const auto xpad = pad_columns(px.value, cin, len, opt.pad_left, opt.pad_right);
        if (pw.requires_grad) {
            auto& gw = pw.ensure_grad();
            for (int64_t j = 0; j < k; ++j) {
                Matrix gwj = (s == 1) ? Matrix(g * ConstStridedMap(xpad.data() + j * d, cin, tout, Eigen::OuterStride<>(tp)).transpose())
                                      : Matrix(g * gather_columns(xpad, cin, tp, j * d, s, tout).transpose());
                for (int64_t o = 0; o < cout; ++o)
                    for (int64_t i = 0; i < cin; ++i) gw[static_cast<size_t>((o * cin + i) * k + j)] += gwj(o, i);
            }
        }
        if (px.requires_grad) {
            const auto wt = conv_taps(pw.value, cout, cin, k);
            std::vector<Real> gxp(static_cast<size_t>(cin * tp), 0.0);
            for (int64_t j = 0; j < k; ++j) {
                if (s == 1) {
                    MutStridedMap(gxp.data() + j * d, cin, tout, Eigen::OuterStride<>(tp)).noalias() +=
                        wt[static_cast<size_t>(j)].transpose() * g;
                } else {
                    Matrix part = wt[static_cast<size_t>(j)].transpose() * g;
                    for (int64_t r = 0; r < cin; ++r)
                        for (int64_t t = 0; t < tout; ++t) gxp[static_cast<size_t>(r * tp + j * d + t * s)] += part(r, t);
                }
            }
            auto& gx = px.ensure_grad();
            for (int64_t r = 0; r < cin; ++r)
                for (int64_t t = 0; t < len; ++t) gx[static_cast<size_t>(r * len + t)] += gxp[static_cast<size_t>(r * tp + opt.pad_left + t)];
        }
    });
}

namespace {

// Per-tap matrices W_j[i, o] = w[i, o, j] for a [Cin, Cout, K] kernel.
std::vector<Matrix> transpose_taps(std::span<const Real> w, int64_t cin, int64_t cout, int64_t k) {
    std::vector<Matrix> taps(static_cast<size_t>(k), Matrix(cin, cout));
    for (int64_t i = 0; i < cin; ++i)
        for (int64_t o = 0; o < cout; ++o)
            for (int64_t j = 0; j < k; ++j) taps[static_cast<size_t>(j)](i, o) = w[static_cast<size_t>((i * cout + o) * k + j)];
    return taps;
}

}  // namespace

Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    require_ndim(x, 2, "conv_transpose1d");
    require_ndim(weight, 3, "conv_transpose1d weight");
    const int64_t cin = x.dim(0), len = x.dim(1), cout = weight.dim(1), k = weight.dim(2);
    if (weight.dim(0) != cin) throw ShapeError("conv_transpose1d: channel mismatch");
    if (bias.defined() && bias.numel() != cout) throw ShapeError("conv_transpose1d: bias size mismatch");
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv_transpose1d: invalid stride/padding");
    const int64_t full = (len - 1) * stride + k;
    const int64_t tout = full - 2 * padding;
    if (tout < 1) throw ShapeError("conv_transpose1d: empty output");

    ConstMap xm(x.data().data(), cin, len);
    const auto taps = transpose_taps(weight.data(), cin, cout, k);
    Matrix yf = Matrix::Zero(cout, full);
    for (int64_t j = 0; j < k; ++j) {
        Matrix part = taps[static_cast<size_t>(j)].transpose() * xm;
        for (int64_t t = 0; t < len; ++t) yf.col(j + t * stride) += part.col(t);
    }
    std::vector<Real> y(static_cast<size_t>(cout * tout));
    MutMap ym(y.data(), cout, tout);
    ym = yf.middleCols(padding, tout);
    if (bias.defined()) ym.colwise() += Eigen::Map<const Vector>(bias.data().data(), cout);

    const bool has_bias = bias.defined();
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return detail::make_result({cout, tout}, std::move(y), inputs, [=](Node& out) {
        Node& px = parent(out, 0);
        Node& pw = parent(out, 1);
        ConstMap g(out.grad.data(), cout, tout);
        if (has_bias && wants(out, 2)) Eigen::Map<Vector>(parent(out, 2).ensure_grad().data(), cout) += g.rowwise().sum();
        Matrix gf = Matrix::Zero(cout, full);
        gf.middleCols(padding, tout) = g;
        ConstMap xv(px.value.data(), cin, len);
        const auto wt = transpose_taps(pw.value, cin, cout, k);
        Matrix gx = Matrix::Zero(cin, len);
        for (int64_t j = 0; j < k; ++j) {
            Matrix gj(cout, len);
            for (int64_t t = 0; t < len; ++t) gj.col(t) = gf.col(j + t * stride);
            if (px.requires_grad) gx.noalias() += wt[static_cast<size_t>(j)] * gj;
            if (pw.requires_grad) {
                Matrix gwj = xv * gj.transpose();
                auto& gw = pw.ensure_grad();
                for (int64_t i = 0; i < cin; ++i)
                    for (int64_t o = 0; o < cout; ++o) gw[static_cast<size_t>((i * cout + o) * k + j)] += gwj(i, o);
            }
        }
        if (px.requires_grad) MutMap(px.ensure_grad().data(), cin, len) += gx;
    });
}

Tensor weight_norm(const Tensor& direction, const Tensor& magnitude) {
    if (direction.ndim() < 1) throw ShapeError("weight_norm: direction must have at least one axis");
    const int64_t rows = direction.dim(0);
    const int64_t width = rows ? direction.numel() / rows : 0;
    if (magnitude.numel() != rows) throw ShapeError("weight_norm: magnitude needs one entry per output slice");
    std::vector<Real> w(direction.data().begin(), direction.data().end());
    auto gv = magnitude.data();
    for (int64_t r = 0; r < rows; ++r) {
        Real n2 = 0.0;
        for (int64_t c = 0; c < width; ++c) n2 += w[static_cast<size_t>(r * width + c)] * w[static_cast<size_t>(r * width + c)];
        const Real f = gv[static_cast<size_t>(r)] / std::sqrt(std::max(n2, 1e-24));
        for (int64_t c = 0; c < width; ++c) w[static_cast<size_t>(r * width + c)] *= f;
    }
    return detail::make_result(direction.shape(), std::move(w), {&direction, &magnitude}, [rows, width](Node& out) {
        Node& pv = parent(out, 0);
        Node& pg = parent(out, 1);
        for (int64_t r = 0; r < rows; ++r) {
            const Real* v = pv.value.data() + r * width;
            const Real* g = out.grad.data() + r * width;
            Real n2 = 0.0, gdotv = 0.0;
            for (int64_t c = 0; c < width; ++c) {
                n2 += v[c] * v[c];
                gdotv += g[c] * v[c];
            }
            const Real n = std::sqrt(std::max(n2, 1e-24));
            const Real gdotu = gdotv / n;
            if (pg.requires_grad) pg.ensure_grad()[static_cast<size_t>(r)] += gdotu;
            if (pv.requires_grad) {
                const Real mag = pg.value[static_cast<size_t>(r)];
                Real* gv_out = pv.ensure_grad().data() + r * width;
                for (int64_t c = 0; c < width; ++c) gv_out[c] += mag / n * (g[c] - gdotu * v[c] / n);
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, Real eps) {
    require_ndim(x, 2, "layer_norm");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    const bool has_gain = gain.defined();
    if (has_gain && gain.numel() != cols) throw ShapeError("layer_norm: gain size mismatch");
    std::vector<Real> y(static_cast<size_t>(rows * cols));
    auto xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const Real* xr = xv.data() + r * cols;
        Real mu = 0.0;
        for (int64_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<Real>(cols);
        Real var = 0.0;
        for (int64_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<Real>(cols);
        const Real inv = 1.0 / std::sqrt(var + eps);
        for (int64_t c = 0; c < cols; ++c)
            y[static_cast<size_t>(r * cols + c)] = (xr[c] - mu) * inv * (has_gain ? gain.data()[static_cast<size_t>(c)] : 1.0);
    }
    std::vector<Tensor> inputs{x};
    if (has_gain) inputs.push_back(gain);
    return detail::make_result(x.shape(), std::move(y), inputs, [rows, cols, eps, has_gain](Node& out) {
        Node& px = parent(out, 0);
        Node* pg = has_gain ? &parent(out, 1) : nullptr;
        std::vector<Real> xhat(static_cast<size_t>(cols)), gh(static_cast<size_t>(cols));
        for (int64_t r = 0; r < rows; ++r) {
            const Real* xr = px.value.data() + r * cols;
            const Real* g = out.grad.data() + r * cols;
            Real mu = 0.0;
            for (int64_t c = 0; c < cols; ++c) mu += xr[c];
            mu /= static_cast<Real>(cols);
            Real var = 0.0;
            for (int64_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
            var /= static_cast<Real>(cols);
            const Real inv = 1.0 / std::sqrt(var + eps);
            Real mean_gh = 0.0, mean_ghx = 0.0;
            for (int64_t c = 0; c < cols; ++c) {
                const size_t ci = static_cast<size_t>(c);
                xhat[ci] = (xr[c] - mu) * inv;
                gh[ci] = g[c] * (pg ? pg->value[ci] : 1.0);
                mean_gh += gh[ci];
                mean_ghx += gh[ci] * xhat[ci];
                if (pg && pg->requires_grad) pg->ensure_grad()[ci] += g[c] * xhat[ci];
            }
            if (!px.requires_grad) continue;
            mean_gh /= static_cast<Real>(cols);
            mean_ghx /= static_cast<Real>(cols);
            Real* gx = px.ensure_grad().data() + r * cols;
            for (int64_t c = 0; c < cols; ++c) {
                const size_t ci = static_cast<size_t>(c);
                gx[c] += inv * (gh[ci] - mean_gh - xhat[ci] * mean_ghx);
            }
        }
    });
}

Tensor softmax_rows(const Tensor& x, std::span<const uint8_t> key_mask) {
    require_ndim(x, 2, "softmax_rows");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (!key_mask.empty() && static_cast<int64_t>(key_mask.size()) != cols)
        throw ShapeError("softmax_rows: mask length mismatch");
    std::vector<Real> y(static_cast<size_t>(rows * cols), 0.0);
    auto xv = x.data();
    auto keep = [&](int64_t c) { return key_mask.empty() || key_mask[static_cast<size_t>(c)] != 0; };
    for (int64_t r = 0; r < rows; ++r) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int64_t c = 0; c < cols; ++c)
            if (keep(c)) mx = std::max(mx, xv[static_cast<size_t>(r * cols + c)]);
        if (!std::isfinite(mx)) continue;
        Real total = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            if (!keep(c)) continue;
            const Real e = std::exp(xv[static_cast<size_t>(r * cols + c)] - mx);
            y[static_cast<size_t>(r * cols + c)] = e;
            total += e;
        }
        for (int64_t c = 0; c < cols; ++c) y[static_cast<size_t>(r * cols + c)] /= total;
    }
    return detail::make_result(x.shape(), std::move(y), {&x}, [rows, cols](Node& out) {
        auto& gx = parent(out, 0).ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const Real* yr = out.value.data() + r * cols;
            const Real* g = out.grad.data() + r * cols;
            Real dot = 0.0;
            for (int64_t c = 0; c < cols; ++c) dot += g[c] * yr[c];
            for (int64_t c = 0; c < cols; ++c) gx[static_cast<size_t>(r * cols + c)] += yr[c] * (g[c] - dot);
        }
    });
}

Tensor rope(const Tensor& x, std::span<const Real> positions, int rotary_dims, Real base) {
    require_ndim(x, 2, "rope");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (rotary_dims < 0 || rotary_dims > cols || rotary_dims % 2 != 0)
        throw std::invalid_argument("rope: rotated width must be even and at most the head width, got " +
                                    std::to_string(rotary_dims));
    if (static_cast<int64_t>(positions.size()) != rows) throw ShapeError("rope: one position per row required");
    const int half = rotary_dims / 2;
    // angle table [rows, half]
    std::vector<Real> cosv(static_cast<size_t>(rows * half)), sinv(static_cast<size_t>(rows * half));
    for (int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < half; ++i) {
            const Real freq = std::pow(base, -2.0 * i / rotary_dims);
            const Real angle = positions[static_cast<size_t>(r)] * freq;
            cosv[static_cast<size_t>(r * half + i)] = std::cos(angle);
            sinv[static_cast<size_t>(r * half + i)] = std::sin(angle);
        }
    std::vector<Real> y(x.data().begin(), x.data().end());
    for (int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < half; ++i) {
            const size_t ia = static_cast<size_t>(r * cols + i), ib = static_cast<size_t>(r * cols + i + half);
            const Real c = cosv[static_cast<size_t>(r * half + i)], s = sinv[static_cast<size_t>(r * half + i)];
            const Real a = x.data()[ia], b = x.data()[ib];
            y[ia] = a * c - b * s;
            y[ib] = a * s + b * c;
        }
    return detail::make_result(x.shape(), std::move(y), {&x},
                               [rows, cols, half, cosv = std::move(cosv), sinv = std::move(sinv)](Node& out) {
        auto& gx = parent(out, 0).ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 2 * half; c < cols; ++c) gx[static_cast<size_t>(r * cols + c)] += out.grad[static_cast<size_t>(r * cols + c)];
            for (int i = 0; i < half; ++i) {
                const size_t ia = static_cast<size_t>(r * cols + i), ib = static_cast<size_t>(r * cols + i + half);
                const Real c = cosv[static_cast<size_t>(r * half + i)], s = sinv[static_cast<size_t>(r * half + i)];
                const Real ga = out.grad[ia], gb = out.grad[ib];
                gx[ia] += ga * c + gb * s;
                gx[ib] += -ga * s + gb * c;
            }
        }
    });
}

Tensor stft(const Tensor& x, const StftOptions& opt) {
    dsp::validate(opt);
    if (!(x.ndim() == 1 || (x.ndim() == 2 && x.dim(0) == 1))) throw ShapeError("stft: expected a single channel");
    const int64_t n = x.numel();
    const int64_t frames = dsp::stft_frames(n, opt);
    if (frames < 1) throw ShapeError("stft: signal shorter than one frame");
    const int bins = opt.n_fft / 2 + 1;
    const int64_t pad = opt.center ? opt.n_fft / 2 : 0;
    const auto window = dsp::stft_window(opt);
    std::vector<Real> y(static_cast<size_t>(frames * 2 * bins));
    std::vector<Real> frame(static_cast<size_t>(opt.n_fft));
    std::vector<dsp::Complex> spec(static_cast<size_t>(bins));
    auto xv = x.data();
    for (int64_t f = 0; f < frames; ++f) {
        const int64_t start = f * opt.hop - pad;
        for (int i = 0; i < opt.n_fft; ++i) {
            const int64_t idx = start + i;
            frame[static_cast<size_t>(i)] = (idx >= 0 && idx < n) ? xv[static_cast<size_t>(idx)] * window[static_cast<size_t>(i)] : 0.0;
        }
        dsp::rfft(frame, spec);
        for (int k = 0; k < bins; ++k) {
            y[static_cast<size_t>(f * 2 * bins + k)] = spec[static_cast<size_t>(k)].real();
            y[static_cast<size_t>(f * 2 * bins + bins + k)] = spec[static_cast<size_t>(k)].imag();
        }
    }
    return detail::make_result({frames, 2 * bins}, std::move(y), {&x}, [=](Node& out) {
        auto& gx = parent(out, 0).ensure_grad();
        std::vector<dsp::Complex> h(static_cast<size_t>(opt.n_fft)), time(static_cast<size_t>(opt.n_fft));
        for (int64_t f = 0; f < frames; ++f) {
            std::fill(h.begin(), h.end(), dsp::Complex(0.0, 0.0));
            for (int k = 0; k < bins; ++k)
                h[static_cast<size_t>(k)] = {out.grad[static_cast<size_t>(f * 2 * bins + k)],
                                             out.grad[static_cast<size_t>(f * 2 * bins + bins + k)]};
            dsp::ifft_unnormalized(h, time);
            const int64_t start = f * opt.hop - pad;
            for (int i = 0; i < opt.n_fft; ++i) {
                const int64_t idx = start + i;
                if (idx >= 0 && idx < n) gx[static_cast<size_t>(idx)] += window[static_cast<size_t>(i)] * time[static_cast<size_t>(i)].real();
            }
        }
    });
}

Tensor stft_magnitude(const Tensor& x, const StftOptions& opt, Real eps) {
    Tensor s = stft(x, opt);
    const int64_t bins = s.dim(1) / 2;
    Tensor re = slice_cols(s, 0, bins);
    Tensor im = slice_cols(s, bins, 2 * bins);
    return sqrt(add_scalar(add(square(re), square(im)), eps));
}

}  // namespace sao
