#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sao/audio.hpp"
#include "sao/autoencoder.hpp"
#include "sao/conditioning.hpp"
#include "sao/config.hpp"
#include "sao/dit.hpp"
#include "sao/losses.hpp"

namespace sao::train {

enum class Phase { ae_full, ae_decoder_only, dit };

std::string phase_name(Phase p);

struct TrainConfig {
    double base_lr = 1.5e-4;
    double disc_lr = 3e-4;
    double weight_decay = 0.001;
    int64_t warmup_steps = 1000;
    double decay_rate = 0.1;
    int batch_size = 4;
    int64_t max_steps = 1000;
    Phase phase = Phase::ae_full;
    double cond_dropout = 0.10;

    int64_t chunk_frames = 65536;  // autoencoder phases
    bool adversarial = true;
    losses::LossWeights loss_weights;
    losses::MrstftConfig mrstft;

    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0: only after the last step
    std::filesystem::path checkpoint_dir;  // empty: keep checkpoints in memory only
    std::filesystem::path log_path;        // CSV; empty: no file

    void validate() const;
    static TrainConfig defaults(Phase p);
    // Keys under "train." (base_lr, disc_lr, weight_decay, warmup_steps,
    // decay_rate, batch_size, max_steps, cond_dropout, chunk_frames,
    // adversarial, recon_weight, adv_weight, fm_weight, checkpoint_every,
    // perceptual_weighting).
    static TrainConfig from_config(const Config& c, Phase p);
};

double lr_at(int64_t step, const TrainConfig& cfg);

struct ToyClip {
    audio::Waveform audio;
    std::string prompt;
};

// Sines, chirps and noise bursts with template prompts.
std::vector<ToyClip> toy_corpus(size_t count, int64_t frames, uint64_t seed, int sample_rate = audio::kDefaultSampleRate);

struct AeStepLog {
    int64_t step = 0;
    double lr = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    double g_loss = 0.0;
    double fm_loss = 0.0;
    double d_loss = 0.0;
};

struct AeTrainResult {
    std::vector<AeStepLog> log;
    std::vector<std::filesystem::path> checkpoints;
    // Encoder hash before the first step and after every checkpoint.
    std::vector<std::string> encoder_hashes;
};

// One phase. ae_decoder_only freezes every "encoder." parameter and checks
// the encoder hash at each checkpoint; a change throws std::logic_error.
AeTrainResult train_autoencoder_phase(ae::Autoencoder& model, losses::DiscriminatorBank& bank,
                                      const std::vector<audio::Waveform>& data, const TrainConfig& cfg);

struct AeTwoPhaseResult {
    AeTrainResult full;
    AeTrainResult decoder_only;
};
AeTwoPhaseResult train_autoencoder(ae::Autoencoder& model, losses::DiscriminatorBank& bank,
                                   const std::vector<audio::Waveform>& data, const TrainConfig& phase1,
                                   const TrainConfig& phase2);

// Mean reconstruction loss of decode(encode(x).mean) over fixed chunks.
double ae_reconstruction_loss(const ae::Autoencoder& model, const std::vector<audio::Waveform>& chunks,
                              const losses::MrstftConfig& cfg);

struct DitExample {
    Matrix latent;  // [64, T]
    std::string prompt;
    cond::TimingCondition timing;
};

struct DitStepLog {
    int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    bool conditioned = true;
};

struct DitTrainResult {
    std::vector<DitStepLog> log;
    std::vector<std::filesystem::path> checkpoints;
    int64_t conditioned_steps = 0;
    int64_t null_steps = 0;
};

DitTrainResult train_dit(dit::Dit& model, const std::vector<DitExample>& data, const cond::TextEmbedder& embedder,
                         const TrainConfig& cfg);

// v-objective MSE with real conditioning over every example and the given
// times, with noise drawn from `seed`.
double dit_eval_mse(const dit::Dit& model, const std::vector<DitExample>& data, const cond::TextEmbedder& embedder,
                    const std::vector<double>& times, uint64_t seed);

// Encodes clips (posterior means) into DiT training examples.
std::vector<DitExample> encode_examples(const ae::Autoencoder& model, const std::vector<ToyClip>& clips);

}  // namespace sao::train
