#pragma once

#include <vector>

#include "sao/nn.hpp"

namespace sao::optim {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.001;
};

// Decoupled weight decay: p *= (1 - lr * wd), then the Adam update. Only
// tensors that currently require grad are touched; a trainable tensor with
// no accumulated gradient is treated as having a zero gradient.
class AdamW {
public:
    AdamW(nn::NamedTensors params, AdamWConfig cfg = {});

    void step(double lr);
    void zero_grad();
    int64_t steps() const { return steps_; }

private:
    struct Slot {
        Tensor param;
        std::vector<Real> m, v;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    int64_t steps_ = 0;
};

// base_lr * (1 - exp(-step / warmup_steps)) * decay_rate^(step / max_steps)
double lr_at(int64_t step, double base_lr, int64_t warmup_steps, double decay_rate, int64_t max_steps);

}  // namespace sao::optim
