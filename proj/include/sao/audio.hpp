#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "sao/tensor.hpp"

namespace sao::audio {

inline constexpr int kDefaultSampleRate = 44100;

using SampleMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Stereo audio: samples is [2, frames], nominally within [-1, 1].
struct Waveform {
    SampleMatrix samples;
    int sample_rate = kDefaultSampleRate;

    static Waveform zeros(int64_t frames, int sample_rate = kDefaultSampleRate);

    int64_t frames() const { return samples.cols(); }
    int channels() const { return static_cast<int>(samples.rows()); }
    double seconds() const { return static_cast<double>(frames()) / sample_rate; }

    // Throws DataError unless the waveform is stereo, non-empty and finite.
    void validate() const;

    // [2, frames] tensor in working precision and back.
    Tensor to_tensor() const;
    static Waveform from_tensor(const Tensor& t, int sample_rate = kDefaultSampleRate);
};

// Reads PCM16 or float32 RIFF/WAVE. Mono input is duplicated to both channels.
Waveform load_wav(const std::filesystem::path& path);
// Writes 32-bit float WAV. Validates before touching the filesystem.
void save_wav(const Waveform& w, const std::filesystem::path& path);

struct ChunkPolicy {
    double chunk_seconds = 5.0;
    int max_chunks_per_recording = 3;
    bool hifi_double_sample = false;
    int sample_rate = kDefaultSampleRate;

    int64_t chunk_frames() const;
    void validate() const;
};

// [start, end) in recording frames; end may run past the recording, in which
// case the chunk is zero-padded when extracted.
struct Chunk {
    int64_t start_frame = 0;
    int64_t end_frame = 0;
    bool operator==(const Chunk&) const = default;
};

std::vector<Chunk> sample_chunks(int64_t recording_length_frames, const ChunkPolicy& policy, uint64_t rng_seed);
Waveform extract_chunk(const Waveform& w, const Chunk& chunk);

// Removes the trailing run of windows whose RMS (over both channels) is
// below threshold_db dBFS. At least one window is always kept.
Waveform trim_trailing_silence(const Waveform& w, double threshold_db = -60.0, double window_ms = 10.0);

struct MidSideLeftRight {
    std::vector<double> mid, side, left, right;
};
MidSideLeftRight ms_lr_split(const Waveform& w);
// Inverse of the mid/side part: left = mid + side, right = mid - side.
Waveform ms_to_waveform(const std::vector<double>& mid, const std::vector<double>& side,
                        int sample_rate = kDefaultSampleRate);

}  // namespace sao::audio
