#include "sao/nn.hpp"

#include <cmath>

#include "sao/error.hpp"

namespace sao::nn {

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<Real> values) {
    for (const auto& [n, _] : params_)
        if (n == name) throw std::logic_error("duplicate parameter name " + name);
    Tensor t = Tensor::from(std::move(shape), std::move(values), true);
    params_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, Real bound, Rng& rng) {
    std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return add(name, std::move(shape), std::move(v));
}

Tensor ParamStore::constant(const std::string& name, Shape shape, Real value) {
    std::vector<Real> v(static_cast<size_t>(shape_numel(shape)), value);
    return add(name, std::move(shape), std::move(v));
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
}

NamedTensors ParamStore::with_prefix(const std::string& prefix) const {
    NamedTensors out;
    for (const auto& p : params_)
        if (p.first.compare(0, prefix.size(), prefix) == 0) out.push_back(p);
    return out;
}

size_t ParamStore::count() const {
    size_t n = 0;
    for (const auto& [_, t] : params_) n += static_cast<size_t>(t.numel());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [n, t] : params_)
        if (n.compare(0, prefix.size(), prefix) == 0) t.set_requires_grad(trainable);
}

void ParamStore::export_to(io::TensorContainer& c) const {
    for (const auto& [n, t] : params_) c.put(n, t);
}

void ParamStore::import_from(const io::TensorContainer& c) {
    for (auto& [n, t] : params_) {
        const Tensor& src = c.get(n);
        if (src.shape() != t.shape())
            throw DataError("parameter '" + n + "' has shape " + shape_str(src.shape()) + ", model expects " +
                            shape_str(t.shape()));
        std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
    }
}

namespace {

// Magnitudes start at ||v|| so the initial effective kernel equals v.
Tensor row_norms(ParamStore& ps, const std::string& name, const Tensor& v) {
    const int64_t rows = v.dim(0), width = v.numel() / rows;
    std::vector<Real> g(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        Real s = 0.0;
        for (int64_t c = 0; c < width; ++c) s += v.data()[static_cast<size_t>(r * width + c)] * v.data()[static_cast<size_t>(r * width + c)];
        g[static_cast<size_t>(r)] = std::sqrt(s);
    }
    return ps.add(name, {rows}, std::move(g));
}

}  // namespace

WNConv1d WNConv1d::create(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel, Rng& rng,
                          Conv1dOptions opt) {
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_ch * kernel));
    WNConv1d c;
    c.direction = ps.uniform(name + ".weight_v", {out_ch, in_ch, kernel}, bound, rng);
    c.magnitude = row_norms(ps, name + ".weight_g", c.direction);
    c.bias = ps.uniform(name + ".bias", {out_ch}, bound, rng);
    c.options = opt;
    return c;
}

WNConvTranspose1d WNConvTranspose1d::create(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel,
                                            int stride, int padding, Rng& rng) {
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(out_ch * kernel));
    WNConvTranspose1d c;
    c.direction = ps.uniform(name + ".weight_v", {in_ch, out_ch, kernel}, bound, rng);
    c.magnitude = row_norms(ps, name + ".weight_g", c.direction);
    c.bias = ps.uniform(name + ".bias", {out_ch}, bound, rng);
    c.stride = stride;
    c.padding = padding;
    return c;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, bool with_bias, Rng& rng) {
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(in));
    Linear l;
    l.weight = ps.uniform(name + ".weight", {out, in}, bound, rng);
    if (with_bias) l.bias = ps.uniform(name + ".bias", {out}, bound, rng);
    return l;
}

}  // namespace sao::nn
