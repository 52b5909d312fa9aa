#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sao/audio.hpp"
#include "sao/config.hpp"
#include "sao/nn.hpp"
#include "sao/types.hpp"

// Convolutional variational autoencoder between stereo waveforms and 64-channel
// latent sequences at sample_rate / 2048.
namespace sao::ae {

inline constexpr int kLatentChannels = 64;
inline constexpr int kTotalStride = 2048;

struct AutoencoderConfig {
    std::vector<int> block_strides{2, 4, 4, 8, 8};
    std::vector<int> block_channels{32, 64, 128, 256, 512};
    int resnet_layers_per_block = 2;
    // Residual unit j of a block uses dilation_schedule[j % size].
    std::vector<int> dilation_schedule{1, 3, 9};
    int latent_channels = kLatentChannels;
    int kernel_size = 7;

    void validate() const;
    int total_stride() const;

    std::string to_json() const;
    static AutoencoderConfig from_json(const std::string& json);
    // Reads keys under "autoencoder." (strides, channels, resnet_layers,
    // dilations, kernel_size), falling back to the defaults above.
    static AutoencoderConfig from_config(const Config& c);
};

struct LatentSeq {
    Matrix values;  // [64, T]
    double latent_rate = static_cast<double>(audio::kDefaultSampleRate) / kTotalStride;

    int64_t frames() const { return values.cols(); }
    void validate() const;
};

struct GaussianLatentParams {
    Matrix mean;          // [64, T]
    Matrix log_variance;  // [64, T]

    void validate() const;
};

// Differentiable encoder outputs.
struct EncodedTensors {
    Tensor mean;
    Tensor log_variance;
};

class Autoencoder {
public:
    Autoencoder(AutoencoderConfig cfg, uint64_t seed);

    const AutoencoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    nn::NamedTensors encoder_params() const { return params_.with_prefix("encoder."); }
    nn::NamedTensors decoder_params() const { return params_.with_prefix("decoder."); }
    std::string encoder_hash() const;

    // audio [2, N] with N divisible by the total stride.
    EncodedTensors encode_tensor(const Tensor& audio) const;
    // z [64, T] -> [2, T * total_stride].
    Tensor decode_tensor(const Tensor& z) const;

    GaussianLatentParams encode(const audio::Waveform& w) const;
    audio::Waveform decode(const LatentSeq& z) const;

    void save(const std::filesystem::path& path) const;
    static Autoencoder load(const std::filesystem::path& path);

    // When false, the decoder's convolutions use the precomputed effective
    // kernels instead of recomputing them from (direction, magnitude).
    // Both paths must agree; this exists so that can be tested.
    bool reparameterized_forward = true;

private:
    struct ResUnit {
        Tensor snake1, snake2;
        nn::WNConv1d dilated, pointwise;
    };
    struct EncoderBlock {
        std::vector<ResUnit> units;
        Tensor snake;
        nn::WNConv1d down;
    };
    struct DecoderBlock {
        Tensor snake;
        nn::WNConvTranspose1d up;
        std::vector<ResUnit> units;
    };

    Tensor conv(const nn::WNConv1d& c, const Tensor& x) const;
    Tensor conv_t(const nn::WNConvTranspose1d& c, const Tensor& x) const;
    Tensor res_unit(const ResUnit& u, const Tensor& x) const;
    ResUnit make_unit(const std::string& name, int channels, int dilation, Rng& rng);

    AutoencoderConfig cfg_;
    nn::ParamStore params_;
    nn::WNConv1d enc_in_;
    std::vector<EncoderBlock> enc_blocks_;
    Tensor enc_out_snake_;
    nn::WNConv1d enc_out_;
    nn::WNConv1d dec_in_;
    std::vector<DecoderBlock> dec_blocks_;
    Tensor dec_out_snake_;
    nn::WNConv1d dec_out_;
};

// Latent files: a tensor container holding "latent" [64, T].
void save_latents(const LatentSeq& z, const std::filesystem::path& path);
LatentSeq load_latents(const std::filesystem::path& path);

// z = mean + exp(log_variance / 2) * eps, eps ~ N(0, 1) from the seed.
LatentSeq reparameterize(const GaussianLatentParams& p, uint64_t rng_seed);

// Decodes overlapping windows of `chunk_len` latents and keeps the central
// part of each. Exact whenever overlap >= receptive_field_latents(config).
audio::Waveform chunked_decode(const Autoencoder& model, const LatentSeq& z, int chunk_len, int overlap = 16);

// One decoder layer as seen by receptive-field analysis.
struct LayerGeometry {
    enum class Kind { conv, conv_transpose };
    Kind kind = Kind::conv;
    int kernel = 1;
    int stride = 1;
    int dilation = 1;
    int padding = 0;  // left padding for conv, symmetric crop for conv_transpose
};

std::vector<LayerGeometry> decoder_geometry(const AutoencoderConfig& cfg);
// One-sided decoder receptive field in latent frames for a layer stack whose
// transposed convolutions multiply the rate by `total_stride` overall.
int receptive_field_latents(const std::vector<LayerGeometry>& layers, int total_stride);
int receptive_field_latents(const AutoencoderConfig& cfg);

}  // namespace sao::ae
