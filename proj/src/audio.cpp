#include "sao/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "sao/error.hpp"
#include "sao/rng.hpp"

namespace sao::audio {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t read_u16(const std::vector<char>& b, size_t at) {
    return static_cast<uint16_t>(static_cast<unsigned char>(b[at]) | (static_cast<unsigned char>(b[at + 1]) << 8));
}

uint32_t read_u32(const std::vector<char>& b, size_t at) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<size_t>(i)]);
    return v;
}

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

Waveform Waveform::zeros(int64_t frames, int sample_rate) {
    Waveform w;
    w.samples = SampleMatrix::Zero(2, frames);
    w.sample_rate = sample_rate;
    return w;
}

void Waveform::validate() const {
    if (samples.rows() != 2) throw DataError("waveform must have 2 channels, has " + std::to_string(samples.rows()));
    if (samples.cols() < 1) throw DataError("waveform has no frames");
    if (sample_rate <= 0) throw DataError("waveform has non-positive sample rate");
    if (!samples.allFinite()) throw DataError("waveform contains non-finite samples");
}

Tensor Waveform::to_tensor() const {
    std::vector<Real> v(static_cast<size_t>(samples.size()));
    for (Eigen::Index i = 0; i < samples.size(); ++i) v[static_cast<size_t>(i)] = samples.data()[i];
    return Tensor::from({samples.rows(), samples.cols()}, std::move(v));
}

Waveform Waveform::from_tensor(const Tensor& t, int sample_rate) {
    if (t.ndim() != 2) throw ShapeError("waveform tensor must be [channels, frames]");
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(t.dim(0), t.dim(1));
    for (int64_t i = 0; i < t.numel(); ++i) w.samples.data()[i] = static_cast<float>(t.at(i));
    return w;
}

Waveform load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw DataError("not a RIFF/WAVE file: " + path.string());

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    bool have_fmt = false;
    size_t data_at = 0, data_size = 0;
    bool have_data = false;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string id(bytes.data() + pos, 4);
        const size_t size = read_u32(bytes, pos + 4);
        const size_t body = pos + 8;
        if (id == "fmt ") {
            if (size < 16 || body + 16 > bytes.size()) throw DataError("truncated fmt chunk: " + path.string());
            format = read_u16(bytes, body);
            channels = read_u16(bytes, body + 2);
            sample_rate = read_u32(bytes, body + 4);
            bits = read_u16(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (size < 40 || body + 26 > bytes.size()) throw DataError("truncated extensible fmt chunk: " + path.string());
                format = read_u16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (id == "data") {
            data_at = body;
            data_size = std::min(size, bytes.size() - body);
            have_data = true;
        }
        pos = body + size + (size & 1);
    }
    if (!have_fmt || !have_data) throw DataError("WAV file lacks fmt or data chunk: " + path.string());
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32)
        throw DataError("unsupported WAV encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                        " bits); expected PCM16 or float32: " + path.string());
    if (channels != 1 && channels != 2)
        throw DataError("unsupported channel count " + std::to_string(channels) + ": " + path.string());
    if (sample_rate == 0) throw DataError("WAV sample rate is zero: " + path.string());

    const size_t bytes_per_sample = bits / 8;
    const int64_t frames = static_cast<int64_t>(data_size / (bytes_per_sample * channels));
    if (frames == 0) throw DataError("WAV file has zero-length audio: " + path.string());

    Waveform w;
    w.sample_rate = static_cast<int>(sample_rate);
    w.samples.resize(2, frames);
    for (int64_t f = 0; f < frames; ++f) {
        for (int c = 0; c < channels; ++c) {
            const size_t at = data_at + (static_cast<size_t>(f) * channels + static_cast<size_t>(c)) * bytes_per_sample;
            float v;
            if (pcm16) {
                v = static_cast<float>(static_cast<int16_t>(read_u16(bytes, at))) / 32768.0f;
            } else {
                const uint32_t u = read_u32(bytes, at);
                std::memcpy(&v, &u, sizeof v);
            }
            w.samples(c, f) = v;
        }
        if (channels == 1) w.samples(1, f) = w.samples(0, f);
    }
    if (!w.samples.allFinite()) throw DataError("WAV file contains non-finite samples: " + path.string());
    return w;
}

void save_wav(const Waveform& w, const std::filesystem::path& path) {
    w.validate();
    const uint32_t channels = 2;
    const uint64_t data_bytes = static_cast<uint64_t>(w.frames()) * channels * 4;
    if (data_bytes > 0xFFFFFFFFull - 36) throw DataError("waveform too long for a RIFF file");
    std::string out;
    out.reserve(static_cast<size_t>(44 + data_bytes));
    out += "RIFF";
    put_u32(out, static_cast<uint32_t>(36 + data_bytes));
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, kFormatFloat);
    put_u16(out, static_cast<uint16_t>(channels));
    put_u32(out, static_cast<uint32_t>(w.sample_rate));
    put_u32(out, static_cast<uint32_t>(w.sample_rate) * channels * 4);
    put_u16(out, static_cast<uint16_t>(channels * 4));
    put_u16(out, 32);
    out += "data";
    put_u32(out, static_cast<uint32_t>(data_bytes));
    for (int64_t f = 0; f < w.frames(); ++f)
        for (uint32_t c = 0; c < channels; ++c) {
            uint32_t u;
            const float v = w.samples(c, f);
            std::memcpy(&u, &v, sizeof u);
            put_u32(out, u);
        }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write WAV file: " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw DataError("write failed: " + path.string());
}

int64_t ChunkPolicy::chunk_frames() const { return std::llround(chunk_seconds * sample_rate); }

void ChunkPolicy::validate() const {
    if (!(chunk_seconds > 0)) throw std::invalid_argument("chunk_seconds must be positive");
    if (max_chunks_per_recording < 1) throw std::invalid_argument("max_chunks_per_recording must be >= 1");
    if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
}

std::vector<Chunk> sample_chunks(int64_t recording_length_frames, const ChunkPolicy& policy, uint64_t rng_seed) {
    policy.validate();
    if (recording_length_frames < 1) throw std::invalid_argument("recording must have at least one frame");
    const int64_t len = policy.chunk_frames();
    const int multiplier = policy.hifi_double_sample ? 2 : 1;
    if (recording_length_frames <= len) return std::vector<Chunk>(static_cast<size_t>(multiplier), Chunk{0, len});

    // One chunk per full chunk length present, capped by the policy.
    const int64_t available = recording_length_frames / len;
    const int64_t count = std::min<int64_t>(policy.max_chunks_per_recording, std::max<int64_t>(1, available)) * multiplier;
    Rng rng(rng_seed);
    const uint64_t positions = static_cast<uint64_t>(recording_length_frames - len + 1);
    std::vector<Chunk> chunks;
    chunks.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const int64_t start = static_cast<int64_t>(rng.below(positions));
        chunks.push_back({start, start + len});
    }
    return chunks;
}

Waveform extract_chunk(const Waveform& w, const Chunk& chunk) {
    if (chunk.end_frame <= chunk.start_frame || chunk.start_frame < 0) throw std::invalid_argument("empty chunk");
    Waveform out = Waveform::zeros(chunk.end_frame - chunk.start_frame, w.sample_rate);
    const int64_t avail = std::max<int64_t>(0, std::min(w.frames(), chunk.end_frame) - chunk.start_frame);
    if (avail > 0) out.samples.leftCols(avail) = w.samples.middleCols(chunk.start_frame, avail);
    return out;
}

Waveform trim_trailing_silence(const Waveform& w, double threshold_db, double window_ms) {
    w.validate();
    const int64_t n = w.frames();
    const int64_t win = std::max<int64_t>(1, std::llround(window_ms * w.sample_rate / 1000.0));
    const double threshold = std::pow(10.0, threshold_db / 20.0);
    const int64_t windows = (n + win - 1) / win;
    int64_t keep_windows = windows;
    while (keep_windows > 1) {
        const int64_t start = (keep_windows - 1) * win;
        const int64_t end = std::min(n, start + win);
        double energy = 0.0;
        for (int64_t f = start; f < end; ++f)
            for (int c = 0; c < 2; ++c) energy += static_cast<double>(w.samples(c, f)) * w.samples(c, f);
        const double rms = std::sqrt(energy / static_cast<double>(2 * (end - start)));
        if (rms >= threshold) break;
        --keep_windows;
    }
    if (keep_windows == windows) return w;
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.samples = w.samples.leftCols(std::min(n, keep_windows * win));
    return out;
}

MidSideLeftRight ms_lr_split(const Waveform& w) {
    if (w.channels() != 2) throw DataError("mid/side split requires stereo input");
    const auto n = static_cast<size_t>(w.frames());
    MidSideLeftRight r;
    r.mid.resize(n);
    r.side.resize(n);
    r.left.resize(n);
    r.right.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double l = w.samples(0, static_cast<Eigen::Index>(i));
        const double rr = w.samples(1, static_cast<Eigen::Index>(i));
        r.left[i] = l;
        r.right[i] = rr;
        r.mid[i] = 0.5 * (l + rr);
        r.side[i] = 0.5 * (l - rr);
    }
    return r;
}

Waveform ms_to_waveform(const std::vector<double>& mid, const std::vector<double>& side, int sample_rate) {
    if (mid.size() != side.size()) throw std::invalid_argument("mid and side lengths differ");
    Waveform w = Waveform::zeros(static_cast<int64_t>(mid.size()), sample_rate);
    for (size_t i = 0; i < mid.size(); ++i) {
        w.samples(0, static_cast<Eigen::Index>(i)) = static_cast<float>(mid[i] + side[i]);
        w.samples(1, static_cast<Eigen::Index>(i)) = static_cast<float>(mid[i] - side[i]);
    }
    return w;
}

}  // namespace sao::audio
