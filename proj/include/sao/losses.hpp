#pragma once

#include <string>
#include <vector>

#include "sao/audio.hpp"
#include "sao/autoencoder.hpp"
#include "sao/nn.hpp"

namespace sao::losses {

struct MrstftConfig {
    std::vector<int> fft_sizes{2048, 1024, 512, 256, 128, 64};
    std::vector<int> hop_sizes{512, 256, 128, 64, 32, 16};
    std::vector<int> window_sizes{2048, 1024, 512, 256, 128, 64};
    double lr_weight = 0.5;
    bool perceptual_weighting = true;
    int weighting_taps = 101;
    int sample_rate = audio::kDefaultSampleRate;

    void validate() const;
    size_t resolutions() const { return fft_sizes.size(); }
};

// Multi-resolution STFT distance between two signal pairs. `ref` and `est`
// are [C, N]; spectral convergence and log-magnitude L1 are taken jointly
// over all C channels, then averaged over resolutions.
Tensor mrstft_distance(const Tensor& ref, const Tensor& est, const MrstftConfig& cfg);

struct MrstftTerms {
    Tensor mid_side;
    Tensor left_right;
    Tensor total;  // mid_side + lr_weight * left_right
};
// ref/est are [2, N] stereo tensors.
MrstftTerms mrstft_terms(const Tensor& ref, const Tensor& est, const MrstftConfig& cfg);
double mrstft_loss(const audio::Waveform& ref, const audio::Waveform& est, const MrstftConfig& cfg = {});

// [2, N] -> [2, N] with rows (mid, side).
Tensor to_mid_side(const Tensor& stereo);

inline constexpr double kKlWeight = 1e-4;
// kKlWeight * mean(-0.5 * (1 + log_var - mean^2 - exp(log_var))).
Tensor kl_regularizer(const Tensor& mean, const Tensor& log_variance);
double kl_regularizer(const ae::GaussianLatentParams& p);

struct DiscriminatorConfig {
    std::vector<int> fft_sizes{2048, 1024, 512, 256, 128};
    int hidden_channels = 32;
    std::vector<int> dilations{1, 2, 4};

    void validate() const;
};

struct DiscriminatorOutput {
    std::vector<Tensor> logits;                 // one [1, frames] map per scale
    std::vector<std::vector<Tensor>> features;  // per scale, per hidden layer
};

// Five convolutional discriminators, each reading the complex STFT of both
// channels at its own resolution (frequency bins as input channels).
class DiscriminatorBank {
public:
    DiscriminatorBank(DiscriminatorConfig cfg, uint64_t seed);

    const DiscriminatorConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    DiscriminatorOutput forward(const Tensor& stereo) const;

    void save(const std::filesystem::path& path) const;
    void load_weights(const std::filesystem::path& path);

private:
    struct Scale {
        int n_fft = 0;
        nn::WNConv1d input;
        std::vector<nn::WNConv1d> hidden;
        nn::WNConv1d output;
    };
    DiscriminatorConfig cfg_;
    nn::ParamStore params_;
    std::vector<Scale> scales_;
};

struct AdversarialTerms {
    Tensor d_loss;   // hinge: mean relu(1 - D(real)) + mean relu(1 + D(fake))
    Tensor g_loss;   // hinge: mean relu(1 - D(fake))
    Tensor fm_loss;  // mean |features(real) - features(fake)|
};
AdversarialTerms adversarial_terms(const DiscriminatorBank& bank, const Tensor& real, const Tensor& fake);

struct AdversarialValues {
    double d_loss = 0.0;
    double g_loss = 0.0;
    double fm_loss = 0.0;
};
AdversarialValues adversarial_step(const audio::Waveform& real, const audio::Waveform& fake, const DiscriminatorBank& bank);

struct LossWeights {
    double reconstruction = 1.0;
    double adversarial = 0.1;
    double feature_matching = 5.0;
};

}  // namespace sao::losses
