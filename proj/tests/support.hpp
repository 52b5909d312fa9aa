#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sao/rng.hpp"
#include "sao/tensor.hpp"
#include "sao/types.hpp"

namespace sao::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false) {
    std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = scale * rng.normal();
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Matrix random_matrix(int64_t rows, int64_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    size_t checked = 0;
};

// Central differences of a scalar function against backward() for up to
// `max_per_tensor` randomly chosen entries of each input. Relative error is
// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, uint64_t seed = 1,
                                  size_t max_per_tensor = 12, double h = 1e-6, double floor = 1e-7) {
    for (auto& t : inputs) t.zero_grad();
    f().backward();
    std::vector<std::vector<Real>> analytic;
    for (auto& t : inputs) {
        if (t.has_grad()) analytic.emplace_back(t.grad().begin(), t.grad().end());
        else analytic.emplace_back(static_cast<size_t>(t.numel()), 0.0);
    }
    Rng rng(seed);
    GradCheckResult r;
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto& t = inputs[k];
        const auto n = static_cast<size_t>(t.numel());
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(std::min(n, max_per_tensor));
        for (size_t i : idx) {
            auto p = t.mutable_data();
            const Real keep = p[i];
            double plus, minus;
            {
                NoGradGuard ng;
                p[i] = keep + h;
                plus = f().item();
                p[i] = keep - h;
                minus = f().item();
                p[i] = keep;
            }
            const double numeric = (plus - minus) / (2 * h);
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            r.max_rel_error = std::max(r.max_rel_error, rel);
            ++r.checked;
        }
    }
    return r;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        Rng rng(fnv1a(tag) ^ static_cast<uint64_t>(std::hash<std::string>{}(std::filesystem::current_path().string())));
        path_ = std::filesystem::temp_directory_path() / ("sao_test_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace sao::testing
