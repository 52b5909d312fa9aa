#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sao/audio.hpp"
#include "sao/types.hpp"

namespace sao::eval {

// Spectral-convergence + log-magnitude distance averaged over resolutions.
struct SpectralDistanceConfig {
    std::vector<int> fft_sizes{1024, 2048, 512};
    std::vector<int> hop_sizes{120, 240, 50};
    std::vector<int> window_sizes{600, 1200, 240};
    int n_mels = 0;  // > 0 projects magnitudes through a mel filterbank
    double fmin = 0.0;
    double fmax = 22050.0;
    int sample_rate = audio::kDefaultSampleRate;

    void validate() const;
    static SpectralDistanceConfig stft_defaults() { return {}; }
    static SpectralDistanceConfig mel_defaults();
};

double spectral_distance(const audio::Waveform& ref, const audio::Waveform& est, const SpectralDistanceConfig& cfg);
double stft_distance(const audio::Waveform& ref, const audio::Waveform& est);
double mel_distance(const audio::Waveform& ref, const audio::Waveform& est);

inline constexpr double kSiSdrCap = 100.0;
// One channel, clamped to [-kSiSdrCap, kSiSdrCap].
double si_sdr(std::span<const double> ref, std::span<const double> est);
// Mean over channels.
double si_sdr(const audio::Waveform& ref, const audio::Waveform& est);

struct EmbeddingStats {
    Vector mean;
    Matrix covariance;
    int64_t count = 0;

    void validate() const;
    // Rows of `samples` are embeddings; unbiased covariance.
    static EmbeddingStats from_samples(const Matrix& samples);
};

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

using ProbabilityPair = std::pair<Vector, Vector>;
double mean_kl(const std::vector<ProbabilityPair>& pairs);

using VectorPair = std::pair<Vector, Vector>;
double clap_score(const std::vector<VectorPair>& pairs);

struct PromptFilterList {
    std::vector<std::string> connector_words;
    std::vector<std::string> speech_words;

    void validate() const;
    static PromptFilterList defaults();
    // Word files hold one lowercase word per line.
    static PromptFilterList load(const std::filesystem::path& connectors, const std::filesystem::path& speech);
};

enum class FilterMode {
    keep_all,
    no_speech,
    no_connectors,
    neither,  // no speech and no connector words
};

FilterMode parse_filter_mode(const std::string& name);
// Whole-word, case-insensitive.
bool contains_word(const std::string& prompt, const std::vector<std::string>& words);
std::vector<std::string> filter_prompts(const std::vector<std::string>& prompts, const PromptFilterList& lists, FilterMode mode);

}  // namespace sao::eval
