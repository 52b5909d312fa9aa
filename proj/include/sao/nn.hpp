#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sao/container.hpp"
#include "sao/ops.hpp"
#include "sao/rng.hpp"
#include "sao/tensor.hpp"

namespace sao::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Ordered collection of trainable leaves. Layers keep Tensor handles into the
// store, so loading weights in place keeps every layer pointing at them.
class ParamStore {
public:
    Tensor add(const std::string& name, Shape shape, std::vector<Real> values);
    Tensor uniform(const std::string& name, Shape shape, Real bound, Rng& rng);
    Tensor constant(const std::string& name, Shape shape, Real value);

    const Tensor& get(const std::string& name) const;
    const NamedTensors& all() const { return params_; }
    NamedTensors with_prefix(const std::string& prefix) const;
    size_t count() const;

    void zero_grad();
    void set_trainable(const std::string& prefix, bool trainable);

    void export_to(io::TensorContainer& c) const;
    // Copies values in place; every parameter must be present with its shape.
    void import_from(const io::TensorContainer& c);

private:
    NamedTensors params_;
};

// Convolution with weight normalization: kernel = g * v / ||v|| per output
// channel.
struct WNConv1d {
    Tensor direction, magnitude, bias;
    Conv1dOptions options;

    static WNConv1d create(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel, Rng& rng,
                           Conv1dOptions opt);
    Tensor weight() const { return weight_norm(direction, magnitude); }
    Tensor forward(const Tensor& x) const { return conv1d(x, weight(), bias, options); }
    int kernel() const { return static_cast<int>(direction.dim(2)); }
};

// Transposed convolution with weight normalization over the input-channel axis.
struct WNConvTranspose1d {
    Tensor direction, magnitude, bias;
    int stride = 1;
    int padding = 0;

    static WNConvTranspose1d create(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel,
                                    int stride, int padding, Rng& rng);
    Tensor weight() const { return weight_norm(direction, magnitude); }
    Tensor forward(const Tensor& x) const { return conv_transpose1d(x, weight(), bias, stride, padding); }
    int kernel() const { return static_cast<int>(direction.dim(2)); }
};

struct Linear {
    Tensor weight, bias;  // bias may be undefined

    static Linear create(ParamStore& ps, const std::string& name, int in, int out, bool with_bias, Rng& rng);
    Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
};

}  // namespace sao::nn
