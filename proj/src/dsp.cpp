#include "sao/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sao::dsp {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per size and kept for the process.
struct PlanCache {
    std::mutex mutex;
    std::map<int, fftw_plan> r2c;
    std::map<int, fftw_plan> c2c_backward;

    fftw_plan get_r2c(int n) {
        std::lock_guard lock(mutex);
        auto it = r2c.find(n);
        if (it != r2c.end()) return it->second;
        std::vector<double> in(static_cast<size_t>(n));
        std::vector<fftw_complex> out(static_cast<size_t>(n / 2 + 1));
        fftw_plan p = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        r2c.emplace(n, p);
        return p;
    }

    fftw_plan get_c2c_backward(int n) {
        std::lock_guard lock(mutex);
        auto it = c2c_backward.find(n);
        if (it != c2c_backward.end()) return it->second;
        std::vector<fftw_complex> in(static_cast<size_t>(n)), out(static_cast<size_t>(n));
        fftw_plan p = fftw_plan_dft_1d(n, in.data(), out.data(), FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        c2c_backward.emplace(n, p);
        return p;
    }
};

PlanCache& plans() {
    static PlanCache cache;
    return cache;
}

}  // namespace

void validate(const StftOptions& opt) {
    if (opt.n_fft < 2 || (opt.n_fft & (opt.n_fft - 1)) != 0)
        throw std::invalid_argument("n_fft must be a power of two >= 2, got " + std::to_string(opt.n_fft));
    if (opt.hop < 1 || opt.win_length < 1 || opt.hop > opt.win_length || opt.win_length > opt.n_fft)
        throw std::invalid_argument("STFT requires 1 <= hop <= win_length <= n_fft");
}

int64_t stft_frames(int64_t length, const StftOptions& opt) {
    const int64_t padded = opt.center ? length + 2 * (opt.n_fft / 2) : length;
    if (padded < opt.n_fft) return 0;
    return (padded - opt.n_fft) / opt.hop + 1;
}

std::vector<Real> stft_window(const StftOptions& opt) {
    std::vector<Real> w(static_cast<size_t>(opt.n_fft), 0.0);
    const int offset = (opt.n_fft - opt.win_length) / 2;
    for (int i = 0; i < opt.win_length; ++i)
        w[static_cast<size_t>(offset + i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / opt.win_length);
    return w;
}

void rfft(std::span<const Real> in, std::span<Complex> out) {
    const int n = static_cast<int>(in.size());
    if (out.size() != in.size() / 2 + 1) throw std::invalid_argument("rfft: output must have n/2+1 bins");
    static_assert(sizeof(Complex) == sizeof(fftw_complex));
    fftw_execute_dft_r2c(plans().get_r2c(n), const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
}

void ifft_unnormalized(std::span<const Complex> in, std::span<Complex> out) {
    const int n = static_cast<int>(in.size());
    if (out.size() != in.size()) throw std::invalid_argument("ifft: size mismatch");
    fftw_execute_dft(plans().get_c2c_backward(n), reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
}

Matrix stft_magnitude(std::span<const Real> x, const StftOptions& opt, Real eps) {
    validate(opt);
    const int64_t n = static_cast<int64_t>(x.size());
    const int64_t frames = stft_frames(n, opt);
    const int bins = opt.n_fft / 2 + 1;
    const int64_t pad = opt.center ? opt.n_fft / 2 : 0;
    const auto window = stft_window(opt);
    Matrix mag(frames, bins);
    std::vector<Real> frame(static_cast<size_t>(opt.n_fft));
    std::vector<Complex> spec(static_cast<size_t>(bins));
    for (int64_t f = 0; f < frames; ++f) {
        const int64_t start = f * opt.hop - pad;
        for (int i = 0; i < opt.n_fft; ++i) {
            const int64_t idx = start + i;
            frame[static_cast<size_t>(i)] = (idx >= 0 && idx < n) ? x[static_cast<size_t>(idx)] * window[static_cast<size_t>(i)] : 0.0;
        }
        rfft(frame, spec);
        for (int k = 0; k < bins; ++k) mag(f, k) = std::sqrt(std::norm(spec[static_cast<size_t>(k)]) + eps);
    }
    return mag;
}

Real hz_to_mel(Real hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
Real mel_to_hz(Real mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(int n_mels, int n_fft, Real sample_rate, Real fmin, Real fmax) {
    if (n_mels < 1 || fmax <= fmin) throw std::invalid_argument("mel_filterbank: bad band specification");
    const int bins = n_fft / 2 + 1;
    const Real mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);
    std::vector<Real> edges(static_cast<size_t>(n_mels + 2));
    for (int i = 0; i < n_mels + 2; ++i)
        edges[static_cast<size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    Matrix fb = Matrix::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
        const Real lo = edges[static_cast<size_t>(m)], mid = edges[static_cast<size_t>(m + 1)],
                   hi = edges[static_cast<size_t>(m + 2)];
        for (int k = 0; k < bins; ++k) {
            const Real f = k * sample_rate / n_fft;
            Real w = 0.0;
            if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
            else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
            fb(m, k) = w;
        }
    }
    return fb;
}

Real a_weighting_gain(Real hz) {
    const Real f2 = hz * hz;
    const Real num = 12194.0 * 12194.0 * f2 * f2;
    const Real den = (f2 + 20.6 * 20.6) * std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) * (f2 + 12194.0 * 12194.0);
    return num / den;
}

std::vector<Real> a_weighting_fir(int taps, Real sample_rate) {
    if (taps < 1 || taps % 2 == 0) throw std::invalid_argument("a_weighting_fir: taps must be odd");
    constexpr int grid = 8192;
    const Real ref = a_weighting_gain(1000.0);
    std::vector<Complex> response(grid), impulse(grid);
    for (int k = 0; k < grid; ++k) {
        const int kk = k <= grid / 2 ? k : grid - k;
        response[static_cast<size_t>(k)] = a_weighting_gain(kk * sample_rate / grid) / ref;
    }
    ifft_unnormalized(response, impulse);
    const int half = taps / 2;
    std::vector<Real> h(static_cast<size_t>(taps));
    for (int i = -half; i <= half; ++i) {
        const Real taper = 0.5 + 0.5 * std::cos(std::numbers::pi * i / (half + 1));
        h[static_cast<size_t>(i + half)] = impulse[static_cast<size_t>((i + grid) % grid)].real() / grid * taper;
    }
    return h;
}

}  // namespace sao::dsp
