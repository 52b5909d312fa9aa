#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "sao/audio.hpp"
#include "sao/config.hpp"
#include "sao/container.hpp"
#include "sao/error.hpp"
#include "support.hpp"

using namespace sao;
using namespace sao::audio;
using sao::testing::TempDir;

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

// Minimal PCM16 writer, independent of the library's WAV code.
void write_pcm16(const std::filesystem::path& p, int channels, const std::vector<int16_t>& interleaved, int rate = 44100) {
    std::ofstream out(p, std::ios::binary);
    const uint32_t data_bytes = static_cast<uint32_t>(interleaved.size() * 2);
    out.write("RIFF", 4);
    put<uint32_t>(out, 36 + data_bytes);
    out.write("WAVEfmt ", 8);
    put<uint32_t>(out, 16);
    put<uint16_t>(out, 1);
    put<uint16_t>(out, static_cast<uint16_t>(channels));
    put<uint32_t>(out, static_cast<uint32_t>(rate));
    put<uint32_t>(out, static_cast<uint32_t>(rate * channels * 2));
    put<uint16_t>(out, static_cast<uint16_t>(channels * 2));
    put<uint16_t>(out, 16);
    out.write("data", 4);
    put<uint32_t>(out, data_bytes);
    for (int16_t s : interleaved) put<int16_t>(out, s);
}

Waveform random_waveform(int64_t frames, uint64_t seed) {
    Rng rng(seed);
    Waveform w = Waveform::zeros(frames);
    for (Eigen::Index i = 0; i < w.samples.size(); ++i) w.samples.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    return w;
}

}  // namespace

TEST_CASE("16-bit silence loads as zeros") {
    TempDir dir("audio_silence");
    write_pcm16(dir / "s.wav", 2, std::vector<int16_t>(2 * 44100, 0));
    const Waveform w = load_wav(dir / "s.wav");
    CHECK(w.frames() == 44100);
    CHECK(w.channels() == 2);
    CHECK(w.sample_rate == 44100);
    CHECK(w.samples.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("mono input is duplicated to both channels") {
    TempDir dir("audio_mono");
    std::vector<int16_t> v{0, 1000, -1000, 32767, -32768};
    write_pcm16(dir / "m.wav", 1, v);
    const Waveform w = load_wav(dir / "m.wav");
    REQUIRE(w.frames() == 5);
    for (int64_t i = 0; i < 5; ++i) {
        CHECK(w.samples(0, i) == w.samples(1, i));
        CHECK(w.samples(0, i) == static_cast<float>(v[static_cast<size_t>(i)] / 32768.0));
    }
}

TEST_CASE("full-scale 16-bit square wave maps to +-32767/32768 and -1") {
    TempDir dir("audio_square");
    std::vector<int16_t> v;
    for (int i = 0; i < 200; ++i) {
        const int16_t s = (i / 10) % 2 ? int16_t(-32767) : int16_t(32767);
        v.push_back(s);
        v.push_back(s);
    }
    write_pcm16(dir / "q.wav", 2, v);
    const Waveform w = load_wav(dir / "q.wav");
    const float hi = static_cast<float>(32767.0 / 32768.0);
    for (int64_t i = 0; i < w.frames(); ++i) CHECK(std::abs(w.samples(0, i)) == hi);
    CHECK(w.samples.maxCoeff() <= 1.0f);
}

TEST_CASE("float WAV round trip is bit exact") {
    TempDir dir("audio_roundtrip");
    Waveform w = random_waveform(1234, 5);
    w.samples(0, 3) = 1e-30f;
    w.samples(1, 7) = -3.5f;  // out-of-range values survive float storage
    save_wav(w, dir / "r.wav");
    const Waveform r = load_wav(dir / "r.wav");
    REQUIRE(r.frames() == w.frames());
    CHECK(std::memcmp(r.samples.data(), w.samples.data(), sizeof(float) * static_cast<size_t>(w.samples.size())) == 0);
}

TEST_CASE("invalid waveforms are rejected before any file is written") {
    TempDir dir("audio_invalid");
    Waveform w = random_waveform(10, 1);
    w.samples(0, 2) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(save_wav(w, dir / "nan.wav"), DataError);
    CHECK_FALSE(std::filesystem::exists(dir / "nan.wav"));
    Waveform empty;
    empty.samples.resize(2, 0);
    CHECK_THROWS_AS(save_wav(empty, dir / "empty.wav"), DataError);
    CHECK_FALSE(std::filesystem::exists(dir / "empty.wav"));
}

TEST_CASE("unreadable and unsupported files") {
    TempDir dir("audio_bad");
    CHECK_THROWS_AS(load_wav(dir / "missing.wav"), DataError);
    std::ofstream(dir / "junk.wav") << "not a wave file at all";
    CHECK_THROWS_AS(load_wav(dir / "junk.wav"), DataError);
    write_pcm16(dir / "zero.wav", 2, {});
    CHECK_THROWS_AS(load_wav(dir / "zero.wav"), DataError);
}

TEST_CASE("sample_chunks follows the policy") {
    ChunkPolicy p;
    const int64_t len = p.chunk_frames();
    CHECK(len == 220500);

    const auto c30 = sample_chunks(30 * 44100, p, 7);
    CHECK(c30.size() == 3);
    for (const auto& c : c30) {
        CHECK(c.end_frame - c.start_frame == len);
        CHECK(c.start_frame >= 0);
        CHECK(c.end_frame <= 30 * 44100);
    }
    CHECK(sample_chunks(30 * 44100, p, 7) == c30);

    const auto c2 = sample_chunks(2 * 44100, p, 7);
    REQUIRE(c2.size() == 1);
    CHECK(c2[0].start_frame == 0);
    CHECK(c2[0].end_frame == len);

    Waveform w = random_waveform(2 * 44100, 3);
    const Waveform padded = extract_chunk(w, c2[0]);
    CHECK(padded.frames() == len);
    CHECK(padded.samples.rightCols(len - 2 * 44100).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(padded.samples.leftCols(2 * 44100) == w.samples);

    p.hifi_double_sample = true;
    CHECK(sample_chunks(30 * 44100, p, 7).size() == 6);
    CHECK(sample_chunks(100, p, 7).size() == 2);
}

TEST_CASE("sample_chunks property sweep") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        ChunkPolicy p;
        p.chunk_seconds = rng.uniform(0.01, 0.5);
        p.max_chunks_per_recording = 1 + static_cast<int>(rng.below(5));
        p.hifi_double_sample = rng.bernoulli(0.3);
        const int64_t n = 1 + static_cast<int64_t>(rng.below(100000));
        const auto chunks = sample_chunks(n, p, trial);
        const size_t cap = static_cast<size_t>(p.max_chunks_per_recording * (p.hifi_double_sample ? 2 : 1));
        CHECK(!chunks.empty());
        CHECK(chunks.size() <= cap);
        for (const auto& c : chunks) {
            CHECK(c.end_frame - c.start_frame == p.chunk_frames());
            CHECK(c.start_frame >= 0);
            if (n >= p.chunk_frames()) CHECK(c.end_frame <= n);
        }
        CHECK(sample_chunks(n, p, trial) == chunks);
    }
}

TEST_CASE("trim_trailing_silence") {
    const int sr = 44100;
    Waveform w = Waveform::zeros(47 * sr);
    for (int64_t i = 0; i < 20 * sr; ++i) {
        const float v = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / sr));
        w.samples(0, i) = v;
        w.samples(1, i) = v;
    }
    const Waveform t = trim_trailing_silence(w);
    CHECK(std::abs(t.seconds() - 20.0) <= 0.010 + 1e-9);
    CHECK(trim_trailing_silence(t).frames() == t.frames());

    const Waveform silent = Waveform::zeros(sr);
    CHECK(trim_trailing_silence(silent).frames() == 441);

    const Waveform loud = random_waveform(sr, 4);
    CHECK(trim_trailing_silence(loud).frames() == loud.frames());
}

TEST_CASE("trim is idempotent on random silence layouts") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        Waveform w = Waveform::zeros(1000 + static_cast<int64_t>(rng.below(20000)));
        const int64_t active = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w.frames())));
        for (int64_t i = 0; i < active; ++i) w.samples(0, i) = w.samples(1, i) = static_cast<float>(rng.uniform(-0.5, 0.5));
        const Waveform once = trim_trailing_silence(w);
        CHECK(trim_trailing_silence(once).frames() == once.frames());
        CHECK(once.frames() >= 1);
    }
}

TEST_CASE("mid/side split") {
    Waveform same = random_waveform(100, 1);
    same.samples.row(1) = same.samples.row(0);
    for (double s : ms_lr_split(same).side) CHECK(s == 0.0);

    Waveform anti = random_waveform(100, 2);
    anti.samples.row(1) = -anti.samples.row(0);
    for (double m : ms_lr_split(anti).mid) CHECK(m == 0.0);

    const Waveform w = random_waveform(1000, 3);
    const auto parts = ms_lr_split(w);
    const Waveform back = ms_to_waveform(parts.mid, parts.side);
    double err = 0.0;
    for (int c = 0; c < 2; ++c)
        for (int64_t i = 0; i < w.frames(); ++i) {
            err = std::max(err, std::abs(static_cast<double>(back.samples(c, i)) - w.samples(c, i)));
            CHECK((c == 0 ? parts.left : parts.right)[static_cast<size_t>(i)] == static_cast<double>(w.samples(c, i)));
        }
    CHECK(err < 1e-6);
}

TEST_CASE("tensor container round trip, manifest and errors") {
    TempDir dir("container");
    io::TensorContainer c;
    c.manifest = R"({"type":"test","n":3})";
    c.put("a.weight", Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6.5}));
    c.put("b", Tensor::from({4}, {0.1, -0.2, 1e-3, 7}));
    c.save(dir / "c.saot");
    const auto r = io::TensorContainer::load(dir / "c.saot");
    CHECK(r.manifest == c.manifest);
    CHECK(r.names() == std::vector<std::string>{"a.weight", "b"});
    CHECK(r.get("a.weight").shape() == Shape{2, 3});
    CHECK(r.get("a.weight").at(5) == 6.5);
    CHECK(r.get("b").at(0) == static_cast<double>(0.1f));
    CHECK_THROWS_AS(r.get("missing"), DataError);

    std::ofstream(dir / "bad.saot") << "SAOTgarbage";
    CHECK_THROWS_AS(io::TensorContainer::load(dir / "bad.saot"), DataError);
}

TEST_CASE("sha256 of known strings") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config parsing with sections, lists and fallbacks") {
    const Config c = Config::parse(
        "# comment\n"
        "seed = 4\n"
        "[train]\n"
        "base_lr = 1.5e-4\n"
        "adversarial = false\n"
        "[autoencoder]\n"
        "strides = 2, 4, 4, 8, 8\n");
    CHECK(c.get_int("seed", 0) == 4);
    CHECK(c.get_double("train.base_lr", 0) == 1.5e-4);
    CHECK_FALSE(c.get_bool("train.adversarial", true));
    CHECK(c.get_ints("autoencoder.strides", {}) == std::vector<int>{2, 4, 4, 8, 8});
    CHECK(c.get_double("train.missing", 3.0) == 3.0);
    CHECK_THROWS(Config::parse("no equals sign here\n"));
    CHECK_THROWS(Config::parse("x = abc\n").get_double("x", 0));
}
