#include "sao/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "sao/error.hpp"
#include "sao/rng.hpp"

namespace sao::diffusion {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shapes differ");
}

}  // namespace

double NoiseSchedule::alpha(double t) const {
    // cos(pi/2) is 6e-17 in floating point; pin the endpoint to pure noise.
    if (t >= 1.0) return 0.0;
    return std::cos(0.5 * std::numbers::pi * t);
}

double NoiseSchedule::sigma(double t) const { return std::sin(0.5 * std::numbers::pi * t); }

double NoiseSchedule::log_snr(double t) const { return std::log(alpha(t) / sigma(t)); }

double NoiseSchedule::t_from_log_snr(double lambda) const { return 2.0 / std::numbers::pi * std::atan(std::exp(-lambda)); }

Matrix noise(const Matrix& x0, const Matrix& eps, double t, const NoiseSchedule& s) {
    require_same_shape(x0, eps, "noise");
    return s.alpha(t) * x0 + s.sigma(t) * eps;
}

Matrix v_target(const Matrix& x0, const Matrix& eps, double t, const NoiseSchedule& s) {
    require_same_shape(x0, eps, "v_target");
    return s.alpha(t) * eps - s.sigma(t) * x0;
}

Matrix x0_from_v(const Matrix& x_t, const Matrix& v, double t, const NoiseSchedule& s) {
    require_same_shape(x_t, v, "x0_from_v");
    return s.alpha(t) * x_t - s.sigma(t) * v;
}

Matrix eps_from_v(const Matrix& x_t, const Matrix& v, double t, const NoiseSchedule& s) {
    require_same_shape(x_t, v, "eps_from_v");
    return s.sigma(t) * x_t + s.alpha(t) * v;
}

Matrix cfg_combine(const Matrix& cond_v, const Matrix& uncond_v, double scale) {
    require_same_shape(cond_v, uncond_v, "cfg_combine");
    return scale * cond_v + (1.0 - scale) * uncond_v;
}

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("sampler steps must be >= 1");
    if (order != 1 && order != 2) throw std::invalid_argument("sampler order must be 1 or 2");
    if (!std::isfinite(cfg_scale)) throw std::invalid_argument("cfg_scale must be finite");
    if (!(t_min > 0 && t_max < 1 && t_min < t_max)) throw std::invalid_argument("need 0 < t_min < t_max < 1");
}

std::vector<double> time_grid(const SamplerConfig& cfg, const NoiseSchedule& s) {
    cfg.validate();
    const double l0 = s.log_snr(cfg.t_max), l1 = s.log_snr(cfg.t_min);
    std::vector<double> ts(static_cast<size_t>(cfg.steps) + 1);
    for (int i = 0; i <= cfg.steps; ++i) ts[static_cast<size_t>(i)] = s.t_from_log_snr(l0 + (l1 - l0) * i / cfg.steps);
    ts.front() = cfg.t_max;
    ts.back() = cfg.t_min;
    return ts;
}

Matrix dpm_solver_pp(const VPredictor& model, const SamplerConfig& cfg, const NoiseSchedule& s, Matrix x) {
    const auto ts = time_grid(cfg, s);
    auto data_prediction = [&](const Matrix& xt, double t, int step) {
        Matrix v = model.predict(xt, t, true);
        if (cfg.cfg_scale != 1.0) v = cfg_combine(v, model.predict(xt, t, false), cfg.cfg_scale);
        if (v.rows() != xt.rows() || v.cols() != xt.cols()) throw ShapeError("v-predictor changed the latent shape");
        if (!v.allFinite()) throw NumericError("non-finite model output at sampler step " + std::to_string(step));
        return x0_from_v(xt, v, t, s);
    };
    Matrix prev_x0;
    double prev_h = 0.0;
    for (int i = 1; i <= cfg.steps; ++i) {
        const double t_prev = ts[static_cast<size_t>(i - 1)], t = ts[static_cast<size_t>(i)];
        const Matrix x0 = data_prediction(x, t_prev, i - 1);
        const double h = s.log_snr(t) - s.log_snr(t_prev);
        Matrix d = x0;
        if (cfg.order == 2 && i > 1) {
            const double r = prev_h / h;
            d = (1.0 + 0.5 / r) * x0 - (0.5 / r) * prev_x0;
        }
        x = (s.sigma(t) / s.sigma(t_prev)) * x - (s.alpha(t) * std::expm1(-h)) * d;
        prev_x0 = x0;
        prev_h = h;
    }
    return x;
}

Matrix dpm_solver_pp(const VPredictor& model, const SamplerConfig& cfg, const NoiseSchedule& s, int64_t rows, int64_t cols) {
    cfg.validate();
    if (rows < 1 || cols < 1) throw std::invalid_argument("sample shape must be positive");
    Rng rng(cfg.rng_seed);
    Matrix x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    return dpm_solver_pp(model, cfg, s, std::move(x));
}

GaussianVPredictor::GaussianVPredictor(Vector mean, double std, NoiseSchedule s)
    : mean_(std::move(mean)), std_(std), schedule_(s) {
    if (!(std_ > 0)) throw std::invalid_argument("Gaussian oracle needs a positive standard deviation");
}

Matrix GaussianVPredictor::predict(const Matrix& x_t, double t, bool) const {
    if (x_t.rows() != mean_.size()) throw ShapeError("Gaussian oracle: row count differs from mean dimension");
    const double a = schedule_.alpha(t), sg = schedule_.sigma(t), var = std_ * std_;
    const double gain = a * var / (a * a * var + sg * sg);
    Matrix x0 = x_t;
    for (Eigen::Index r = 0; r < x_t.rows(); ++r)
        x0.row(r) = (mean_[r] + gain * (x_t.row(r).array() - a * mean_[r])).matrix();
    return (a * x_t - x0) / sg;
}

Matrix GaussianVPredictor::exact_flow(const Matrix& x_t, double t_from, double t_to) const {
    const double var = std_ * std_;
    const double a0 = schedule_.alpha(t_from), s0 = schedule_.sigma(t_from);
    const double a1 = schedule_.alpha(t_to), s1 = schedule_.sigma(t_to);
    const double ratio = std::sqrt(a1 * a1 * var + s1 * s1) / std::sqrt(a0 * a0 * var + s0 * s0);
    Matrix out = x_t;
    for (Eigen::Index r = 0; r < x_t.rows(); ++r)
        out.row(r) = (a1 * mean_[r] + ratio * (x_t.row(r).array() - a0 * mean_[r])).matrix();
    return out;
}

DitVPredictor::DitVPredictor(const dit::Dit& model, cond::TokenEmbedding text, cond::TimingCondition timing)
    : model_(model), text_(std::move(text)), timing_(timing) {
    timing_.validate();
}

Matrix DitVPredictor::predict(const Matrix& x_t, double t, bool conditional) const {
    NoGradGuard no_grad;
    const auto bundle = conditional ? model_.condition(text_, timing_, t) : model_.null_condition(timing_, t);
    return to_matrix(model_.forward(to_tensor(x_t), bundle));
}

audio::Waveform generate(const std::string& prompt, double seconds_total, const SamplerConfig& sampler,
                         const Models& models, const GenerateOptions& opt) {
    const cond::TimingCondition timing{0.0, seconds_total};
    timing.validate();
    if (!models.autoencoder || !models.dit || !models.embedder) throw DataError("generation needs autoencoder, DiT and embedder weights");
    if (opt.latent_frames < 1) throw std::invalid_argument("latent_frames must be positive");
    const DitVPredictor predictor(*models.dit, models.embedder->embed(prompt), timing);
    ae::LatentSeq z;
    z.values = dpm_solver_pp(predictor, sampler, NoiseSchedule{}, ae::kLatentChannels, opt.latent_frames);
    audio::Waveform w = models.autoencoder->decode(z);
    if (!w.samples.allFinite()) throw NumericError("decoder produced non-finite audio");
    return opt.trim ? audio::trim_trailing_silence(w, opt.trim_threshold_db, opt.trim_window_ms) : w;
}

}  // namespace sao::diffusion
