#include "sao/losses.hpp"

#include <cmath>

#include "sao/dsp.hpp"
#include "sao/error.hpp"

namespace sao::losses {

void MrstftConfig::validate() const {
    if (fft_sizes.empty()) throw std::invalid_argument("MRSTFT needs at least one resolution");
    if (hop_sizes.size() != fft_sizes.size() || window_sizes.size() != fft_sizes.size())
        throw std::invalid_argument("MRSTFT fft/hop/window lists must have equal lengths");
    for (size_t i = 0; i < fft_sizes.size(); ++i)
        dsp::validate({fft_sizes[i], hop_sizes[i], window_sizes[i], true});
    if (lr_weight < 0) throw std::invalid_argument("lr_weight must be non-negative");
    if (perceptual_weighting && (weighting_taps < 1 || weighting_taps % 2 == 0))
        throw std::invalid_argument("weighting_taps must be odd");
}

namespace {

constexpr Real kNormEps = 1e-12;

Tensor weighting_kernel(const MrstftConfig& cfg) {
    auto h = dsp::a_weighting_fir(cfg.weighting_taps, cfg.sample_rate);
    // conv1d correlates; the filter is symmetric so no flip is needed.
    return Tensor::from({1, 1, cfg.weighting_taps}, std::move(h));
}

Tensor perceptual(const Tensor& x, const Tensor& kernel) {
    const int pad = static_cast<int>(kernel.dim(2) / 2);
    std::vector<Tensor> rows;
    for (int64_t c = 0; c < x.dim(0); ++c) rows.push_back(conv1d(slice_rows(x, c, c + 1), kernel, {}, {1, 1, pad, pad}));
    return concat_rows(rows);
}

}  // namespace

Tensor mrstft_distance(const Tensor& ref, const Tensor& est, const MrstftConfig& cfg) {
    cfg.validate();
    if (ref.shape() != est.shape() || ref.ndim() != 2)
        throw DataError("MRSTFT inputs must have equal [channels, frames] shapes");
    Tensor r = ref, e = est;
    if (cfg.perceptual_weighting) {
        const Tensor kernel = weighting_kernel(cfg);
        r = perceptual(ref, kernel);
        e = perceptual(est, kernel);
    }
    Tensor total;
    for (size_t i = 0; i < cfg.resolutions(); ++i) {
        const StftOptions opt{cfg.fft_sizes[i], cfg.hop_sizes[i], cfg.window_sizes[i], true};
        std::vector<Tensor> mr, me;
        for (int64_t c = 0; c < ref.dim(0); ++c) {
            mr.push_back(stft_magnitude(slice_rows(r, c, c + 1), opt));
            me.push_back(stft_magnitude(slice_rows(e, c, c + 1), opt));
        }
        const Tensor mag_ref = concat_rows(mr), mag_est = concat_rows(me);
        // Offset so that identical inputs score exactly zero with a finite gradient.
        Tensor diff_norm = add_scalar(sqrt(add_scalar(sum(square(sub(mag_ref, mag_est))), kNormEps)), -std::sqrt(kNormEps));
        Tensor ref_norm = sqrt(sum(square(mag_ref)));
        Tensor convergence = mul(diff_norm, exp(neg(log(ref_norm))));
        Tensor log_mag = mean_abs_diff(log(mag_ref), log(mag_est));
        Tensor term = add(convergence, log_mag);
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, 1.0 / static_cast<Real>(cfg.resolutions()));
}

Tensor to_mid_side(const Tensor& stereo) {
    if (stereo.ndim() != 2 || stereo.dim(0) != 2) throw ShapeError("to_mid_side expects [2, N]");
    Tensor left = slice_rows(stereo, 0, 1), right = slice_rows(stereo, 1, 2);
    return concat_rows({scale(add(left, right), 0.5), scale(sub(left, right), 0.5)});
}

MrstftTerms mrstft_terms(const Tensor& ref, const Tensor& est, const MrstftConfig& cfg) {
    if (ref.shape() != est.shape()) throw DataError("MRSTFT: reference and estimate lengths differ");
    if (ref.ndim() != 2 || ref.dim(0) != 2) throw DataError("MRSTFT: stereo [2, N] inputs required");
    MrstftTerms t;
    t.mid_side = mrstft_distance(to_mid_side(ref), to_mid_side(est), cfg);
    t.left_right = mrstft_distance(ref, est, cfg);
    t.total = add(t.mid_side, scale(t.left_right, cfg.lr_weight));
    return t;
}

double mrstft_loss(const audio::Waveform& ref, const audio::Waveform& est, const MrstftConfig& cfg) {
    ref.validate();
    est.validate();
    if (ref.frames() != est.frames()) throw DataError("MRSTFT: reference and estimate lengths differ");
    if (ref.sample_rate != est.sample_rate) throw DataError("MRSTFT: sample rates differ");
    NoGradGuard no_grad;
    return mrstft_terms(ref.to_tensor(), est.to_tensor(), cfg).total.item();
}

Tensor kl_regularizer(const Tensor& mean_t, const Tensor& log_variance) {
    if (mean_t.shape() != log_variance.shape()) throw ShapeError("KL: mean and log-variance shapes differ");
    Tensor inner = sub(add_scalar(log_variance, 1.0), add(square(mean_t), exp(log_variance)));
    return scale(mean(inner), -0.5 * kKlWeight);
}

double kl_regularizer(const ae::GaussianLatentParams& p) {
    p.validate();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
        const double m = p.mean.data()[i], lv = p.log_variance.data()[i];
        acc += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
    return kKlWeight * acc / static_cast<double>(p.mean.size());
}

void DiscriminatorConfig::validate() const {
    if (fft_sizes.size() != 5) throw std::invalid_argument("the discriminator bank has exactly 5 discriminators");
    for (int n : fft_sizes) dsp::validate({n, std::max(1, n / 4), n, true});
    if (hidden_channels < 1) throw std::invalid_argument("hidden_channels must be positive");
}

DiscriminatorBank::DiscriminatorBank(DiscriminatorConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const int h = cfg_.hidden_channels;
    for (size_t i = 0; i < cfg_.fft_sizes.size(); ++i) {
        const std::string name = "disc" + std::to_string(i);
        Scale s;
        s.n_fft = cfg_.fft_sizes[i];
        const int in_ch = 4 * (s.n_fft / 2 + 1);
        s.input = nn::WNConv1d::create(params_, name + ".in", in_ch, h, 1, rng, {});
        for (size_t j = 0; j < cfg_.dilations.size(); ++j) {
            const int d = cfg_.dilations[j];
            s.hidden.push_back(nn::WNConv1d::create(params_, name + ".conv" + std::to_string(j), h, h, 3, rng, {1, d, d, d}));
        }
        s.output = nn::WNConv1d::create(params_, name + ".out", h, 1, 3, rng, {1, 1, 1, 1});
        scales_.push_back(std::move(s));
    }
}

DiscriminatorOutput DiscriminatorBank::forward(const Tensor& stereo) const {
    if (stereo.ndim() != 2 || stereo.dim(0) != 2) throw ShapeError("discriminator input must be [2, N]");
    DiscriminatorOutput out;
    for (const auto& s : scales_) {
        const StftOptions opt{s.n_fft, std::max(1, s.n_fft / 4), s.n_fft, true};
        Tensor spec = concat_cols({stft(slice_rows(stereo, 0, 1), opt), stft(slice_rows(stereo, 1, 2), opt)});
        Tensor h = leaky_relu(s.input.forward(transpose(spec)));
        std::vector<Tensor> feats{h};
        for (const auto& c : s.hidden) {
            h = leaky_relu(c.forward(h));
            feats.push_back(h);
        }
        out.logits.push_back(s.output.forward(h));
        out.features.push_back(std::move(feats));
    }
    return out;
}

void DiscriminatorBank::save(const std::filesystem::path& path) const {
    io::TensorContainer c;
    c.manifest = R"({"type":"discriminator_bank"})";
    params_.export_to(c);
    c.save(path);
}

void DiscriminatorBank::load_weights(const std::filesystem::path& path) { params_.import_from(io::TensorContainer::load(path)); }

AdversarialTerms adversarial_terms(const DiscriminatorBank& bank, const Tensor& real, const Tensor& fake) {
    if (real.shape() != fake.shape()) throw DataError("adversarial loss: real and fake lengths differ");
    const auto dr = bank.forward(real);
    const auto df = bank.forward(fake);
    const size_t n = dr.logits.size();
    Tensor d_loss, g_loss, fm_loss;
    size_t fm_count = 0;
    auto accumulate = [](Tensor& acc, const Tensor& v) { acc = acc.defined() ? add(acc, v) : v; };
    for (size_t s = 0; s < n; ++s) {
        accumulate(d_loss, add(mean(relu(add_scalar(neg(dr.logits[s]), 1.0))), mean(relu(add_scalar(df.logits[s], 1.0)))));
        accumulate(g_loss, mean(relu(add_scalar(neg(df.logits[s]), 1.0))));
        for (size_t l = 0; l < dr.features[s].size(); ++l) {
            accumulate(fm_loss, mean_abs_diff(dr.features[s][l], df.features[s][l]));
            ++fm_count;
        }
    }
    return {scale(d_loss, 1.0 / static_cast<Real>(n)), scale(g_loss, 1.0 / static_cast<Real>(n)),
            scale(fm_loss, 1.0 / static_cast<Real>(fm_count))};
}

AdversarialValues adversarial_step(const audio::Waveform& real, const audio::Waveform& fake, const DiscriminatorBank& bank) {
    real.validate();
    fake.validate();
    if (real.frames() != fake.frames()) throw DataError("adversarial loss: real and fake lengths differ");
    NoGradGuard no_grad;
    const auto t = adversarial_terms(bank, real.to_tensor(), fake.to_tensor());
    return {t.d_loss.item(), t.g_loss.item(), t.fm_loss.item()};
}

}  // namespace sao::losses
