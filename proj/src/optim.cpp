#include "sao/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sao::optim {

AdamW::AdamW(nn::NamedTensors params, AdamWConfig cfg) : cfg_(cfg) {
    for (auto& [name, t] : params) {
        const auto n = static_cast<size_t>(t.numel());
        slots_.push_back({t, std::vector<Real>(n, 0.0), std::vector<Real>(n, 0.0)});
    }
}

void AdamW::step(double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    const double decay = 1.0 - lr * cfg_.weight_decay;
    for (auto& s : slots_) {
        if (!s.param.requires_grad()) continue;
        auto p = s.param.mutable_data();
        const bool has_grad = s.param.has_grad();
        const auto g = s.param.grad();
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = has_grad ? g[i] : 0.0;
            p[i] *= decay;
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            p[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
}

double lr_at(int64_t step, double base_lr, int64_t warmup_steps, double decay_rate, int64_t max_steps) {
    if (step < 0) throw std::invalid_argument("step must be >= 0");
    if (warmup_steps < 1 || max_steps < 1) throw std::invalid_argument("warmup_steps and max_steps must be positive");
    const double s = static_cast<double>(step);
    return base_lr * (1.0 - std::exp(-s / static_cast<double>(warmup_steps))) *
           std::pow(decay_rate, s / static_cast<double>(max_steps));
}

}  // namespace sao::optim
