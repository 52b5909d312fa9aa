#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "sao/types.hpp"

// Spectral helpers shared by the loss functions and the evaluation metrics.
namespace sao::dsp {

using Complex = std::complex<Real>;

struct StftOptions {
    int n_fft = 1024;
    int hop = 256;
    int win_length = 1024;
    bool center = true;  // zero-pad n_fft/2 on both sides
};

void validate(const StftOptions& opt);
int64_t stft_frames(int64_t length, const StftOptions& opt);

// Periodic Hann of `win_length`, zero-padded symmetrically to n_fft.
std::vector<Real> stft_window(const StftOptions& opt);

// Real-to-half-complex forward transform: out has n/2+1 bins.
void rfft(std::span<const Real> in, std::span<Complex> out);
// Unnormalized inverse complex transform: out[m] = sum_k in[k] e^{+2 pi i k m / n}.
void ifft_unnormalized(std::span<const Complex> in, std::span<Complex> out);

// Magnitude spectrogram [frames, n_fft/2+1] of a single channel.
Matrix stft_magnitude(std::span<const Real> x, const StftOptions& opt, Real eps = 1e-8);

// HTK-style triangular mel filters, [n_mels, n_fft/2+1].
Matrix mel_filterbank(int n_mels, int n_fft, Real sample_rate, Real fmin, Real fmax);
Real hz_to_mel(Real hz);
Real mel_to_hz(Real mel);

// Linear-phase FIR approximating the A-weighting curve, designed by frequency
// sampling with a Hann taper. Gain is normalized to 1 at 1 kHz.
std::vector<Real> a_weighting_fir(int taps, Real sample_rate);
Real a_weighting_gain(Real hz);

}  // namespace sao::dsp

namespace sao {
using dsp::StftOptions;
}
