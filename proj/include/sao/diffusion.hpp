#pragma once

#include <functional>
#include <string>

#include "sao/audio.hpp"
#include "sao/autoencoder.hpp"
#include "sao/conditioning.hpp"
#include "sao/dit.hpp"
#include "sao/types.hpp"

namespace sao::diffusion {

// Cosine schedule: alpha = cos(pi t / 2), sigma = sin(pi t / 2).
struct NoiseSchedule {
    enum class Kind { cosine };
    Kind kind = Kind::cosine;

    double alpha(double t) const;
    double sigma(double t) const;
    // log(alpha / sigma)
    double log_snr(double t) const;
    double t_from_log_snr(double lambda) const;
};

Matrix noise(const Matrix& x0, const Matrix& eps, double t, const NoiseSchedule& s = {});
Matrix v_target(const Matrix& x0, const Matrix& eps, double t, const NoiseSchedule& s = {});
Matrix x0_from_v(const Matrix& x_t, const Matrix& v, double t, const NoiseSchedule& s = {});
Matrix eps_from_v(const Matrix& x_t, const Matrix& v, double t, const NoiseSchedule& s = {});
Matrix cfg_combine(const Matrix& cond_v, const Matrix& uncond_v, double scale);

struct SamplerConfig {
    int steps = 100;
    double cfg_scale = 7.0;
    int order = 2;
    uint64_t rng_seed = 0;
    double t_max = 1.0 - 1e-4;
    double t_min = 1e-4;

    void validate() const;
};

class VPredictor {
public:
    virtual ~VPredictor() = default;
    // v estimate at (x_t, t), with or without the real conditioning.
    virtual Matrix predict(const Matrix& x_t, double t, bool conditional) const = 0;
};

// The `steps + 1` sampling times, t_max first, uniform in log-SNR.
std::vector<double> time_grid(const SamplerConfig& cfg, const NoiseSchedule& s = {});

// Multistep DPM-Solver++ in data prediction form, starting from x_T.
Matrix dpm_solver_pp(const VPredictor& model, const SamplerConfig& cfg, const NoiseSchedule& s, Matrix x_T);
// Same, with x_T ~ N(0, I) of the given shape drawn from cfg.rng_seed.
Matrix dpm_solver_pp(const VPredictor& model, const SamplerConfig& cfg, const NoiseSchedule& s, int64_t rows, int64_t cols);

// Optimal v-predictor when every row r of the data is N(mean[r], std^2).
class GaussianVPredictor : public VPredictor {
public:
    GaussianVPredictor(Vector mean, double std, NoiseSchedule s = {});
    Matrix predict(const Matrix& x_t, double t, bool conditional) const override;
    // Where the probability-flow ODE carries x_t (at time t_from) at time t_to.
    Matrix exact_flow(const Matrix& x_t, double t_from, double t_to) const;

private:
    Vector mean_;
    double std_;
    NoiseSchedule schedule_;
};

// Adapts a DiT plus prompt/timing conditioning to the VPredictor interface.
class DitVPredictor : public VPredictor {
public:
    DitVPredictor(const dit::Dit& model, cond::TokenEmbedding text, cond::TimingCondition timing);
    Matrix predict(const Matrix& x_t, double t, bool conditional) const override;

private:
    const dit::Dit& model_;
    cond::TokenEmbedding text_;
    cond::TimingCondition timing_;
};

inline constexpr int kGenerationLatentFrames = 1024;

struct GenerateOptions {
    int latent_frames = kGenerationLatentFrames;
    double trim_threshold_db = -60.0;
    double trim_window_ms = 10.0;
    bool trim = true;
};

struct Models {
    const ae::Autoencoder* autoencoder = nullptr;
    const dit::Dit* dit = nullptr;
    const cond::TextEmbedder* embedder = nullptr;
};

// Samples a latent with timing (0, seconds_total), decodes and trims it.
audio::Waveform generate(const std::string& prompt, double seconds_total, const SamplerConfig& sampler,
                         const Models& models, const GenerateOptions& opt = {});

}  // namespace sao::diffusion
