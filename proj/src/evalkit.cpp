#include "sao/evalkit.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "sao/dsp.hpp"
#include "sao/error.hpp"

namespace sao::eval {

void SpectralDistanceConfig::validate() const {
    if (fft_sizes.empty() || hop_sizes.size() != fft_sizes.size() || window_sizes.size() != fft_sizes.size())
        throw std::invalid_argument("spectral distance needs equal-length fft/hop/window lists");
    for (size_t i = 0; i < fft_sizes.size(); ++i) dsp::validate({fft_sizes[i], hop_sizes[i], window_sizes[i], true});
    if (n_mels < 0) throw std::invalid_argument("n_mels must be >= 0");
}

SpectralDistanceConfig SpectralDistanceConfig::mel_defaults() {
    SpectralDistanceConfig c;
    c.n_mels = 128;
    return c;
}

namespace {

void check_pair(const audio::Waveform& ref, const audio::Waveform& est) {
    ref.validate();
    est.validate();
    if (ref.frames() != est.frames()) throw DataError("reference and estimate lengths differ");
    if (ref.sample_rate != est.sample_rate) throw DataError("reference and estimate sample rates differ");
}

std::vector<double> channel(const audio::Waveform& w, int c) {
    std::vector<double> out(static_cast<size_t>(w.frames()));
    for (int64_t i = 0; i < w.frames(); ++i) out[static_cast<size_t>(i)] = w.samples(c, i);
    return out;
}

constexpr double kLogEps = 1e-8;

}  // namespace

double spectral_distance(const audio::Waveform& ref, const audio::Waveform& est, const SpectralDistanceConfig& cfg) {
    cfg.validate();
    check_pair(ref, est);
    double total = 0.0;
    for (size_t i = 0; i < cfg.fft_sizes.size(); ++i) {
        const StftOptions opt{cfg.fft_sizes[i], cfg.hop_sizes[i], cfg.window_sizes[i], true};
        Matrix fb;
        if (cfg.n_mels > 0) fb = dsp::mel_filterbank(cfg.n_mels, opt.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax);
        double diff2 = 0.0, ref2 = 0.0, log_sum = 0.0;
        int64_t count = 0;
        for (int c = 0; c < 2; ++c) {
            const auto r = channel(ref, c), e = channel(est, c);
            Matrix mr = dsp::stft_magnitude(r, opt), me = dsp::stft_magnitude(e, opt);
            if (cfg.n_mels > 0) {
                mr = (mr * fb.transpose()).eval();
                me = (me * fb.transpose()).eval();
            }
            diff2 += (mr - me).squaredNorm();
            ref2 += mr.squaredNorm();
            log_sum += ((mr.array() + kLogEps).log() - (me.array() + kLogEps).log()).abs().sum();
            count += mr.size();
        }
        const double sc = diff2 == 0.0 ? 0.0 : std::sqrt(diff2) / std::sqrt(std::max(ref2, 1e-300));
        total += sc + log_sum / static_cast<double>(count);
    }
    return total / static_cast<double>(cfg.fft_sizes.size());
}

double stft_distance(const audio::Waveform& ref, const audio::Waveform& est) {
    return spectral_distance(ref, est, SpectralDistanceConfig::stft_defaults());
}

double mel_distance(const audio::Waveform& ref, const audio::Waveform& est) {
    auto cfg = SpectralDistanceConfig::mel_defaults();
    cfg.sample_rate = ref.sample_rate;
    cfg.fmax = ref.sample_rate / 2.0;
    return spectral_distance(ref, est, cfg);
}

double si_sdr(std::span<const double> ref, std::span<const double> est) {
    if (ref.size() != est.size()) throw DataError("SI-SDR: lengths differ");
    double dot = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        dot += est[i] * ref[i];
        ref2 += ref[i] * ref[i];
    }
    if (ref2 == 0.0) throw DataError("SI-SDR: reference is all zeros");
    const double a = dot / ref2;
    double s2 = 0.0, e2 = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        const double s = a * ref[i];
        s2 += s * s;
        e2 += (est[i] - s) * (est[i] - s);
    }
    if (e2 == 0.0) return kSiSdrCap;
    if (s2 == 0.0) return -kSiSdrCap;
    return std::clamp(10.0 * std::log10(s2 / e2), -kSiSdrCap, kSiSdrCap);
}

double si_sdr(const audio::Waveform& ref, const audio::Waveform& est) {
    check_pair(ref, est);
    double acc = 0.0;
    for (int c = 0; c < 2; ++c) acc += si_sdr(channel(ref, c), channel(est, c));
    return acc / 2.0;
}

void EmbeddingStats::validate() const {
    if (count < 2) throw DataError("embedding statistics need at least 2 samples");
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
        throw DataError("covariance shape does not match mean dimension");
    if (!mean.allFinite() || !covariance.allFinite()) throw DataError("embedding statistics are not finite");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8) throw DataError("covariance is not symmetric");
}

EmbeddingStats EmbeddingStats::from_samples(const Matrix& samples) {
    if (samples.rows() < 2) throw DataError("embedding statistics need at least 2 samples");
    EmbeddingStats s;
    s.count = samples.rows();
    s.mean = samples.colwise().mean().transpose();
    const Matrix centered = samples.rowwise() - s.mean.transpose();
    s.covariance = (centered.transpose() * centered) / static_cast<double>(s.count - 1);
    s.covariance = (0.5 * (s.covariance + s.covariance.transpose())).eval();
    return s;
}

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
    a.validate();
    b.validate();
    if (a.mean.size() != b.mean.size())
        throw DataError("Frechet distance: dims differ (" + std::to_string(a.mean.size()) + " vs " + std::to_string(b.mean.size()) + ")");
    constexpr double kFloor = 1e-10;
    using Dense = Eigen::MatrixXd;
    auto check_psd = [](const Eigen::VectorXd& ev, const char* which) {
        const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
        if (ev.minCoeff() < -1e-6 * scale) throw DataError(std::string("Frechet distance: covariance ") + which + " is not PSD");
    };
    Eigen::SelfAdjointEigenSolver<Dense> ea(Dense(a.covariance));
    check_psd(ea.eigenvalues(), "a");
    check_psd(Eigen::SelfAdjointEigenSolver<Dense>(Dense(b.covariance), Eigen::EigenvaluesOnly).eigenvalues(), "b");
    const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(kFloor).cwiseSqrt();
    const Dense sqrt_a = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
    Dense m = sqrt_a * Dense(b.covariance) * sqrt_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Dense> em(m, Eigen::EigenvaluesOnly);
    const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
    return std::max(d, 0.0);
}

double mean_kl(const std::vector<ProbabilityPair>& pairs) {
    if (pairs.empty()) throw DataError("mean_kl needs at least one pair");
    constexpr double kEps = 1e-10;
    double total = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        const auto& [p, q] = pairs[i];
        if (p.size() != q.size() || p.size() == 0) throw DataError("mean_kl: pair " + std::to_string(i) + " has mismatched sizes");
        for (const Vector* v : {&p, &q}) {
            if (!v->allFinite() || v->minCoeff() < 0) throw DataError("mean_kl: negative or non-finite probability in pair " + std::to_string(i));
            if (std::abs(v->sum() - 1.0) > 1e-5) throw DataError("mean_kl: pair " + std::to_string(i) + " is not normalized");
        }
        const Vector pn = p / p.sum();
        const Vector qs = (q.array() + kEps).matrix() / (q.sum() + kEps * static_cast<double>(q.size()));
        double kl = 0.0;
        for (Eigen::Index k = 0; k < pn.size(); ++k)
            if (pn[k] > 0) kl += pn[k] * std::log(pn[k] / qs[k]);
        total += std::max(kl, 0.0);
    }
    return total / static_cast<double>(pairs.size());
}

double clap_score(const std::vector<VectorPair>& pairs) {
    if (pairs.empty()) throw DataError("clap_score needs at least one pair");
    double total = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        const auto& [t, a] = pairs[i];
        if (t.size() != a.size()) throw DataError("clap_score: pair " + std::to_string(i) + " has mismatched dims");
        const double n = t.norm() * a.norm();
        if (!(n > 0)) throw DataError("clap_score: zero vector in pair " + std::to_string(i));
        total += std::clamp(t.dot(a) / n, -1.0, 1.0);
    }
    return total / static_cast<double>(pairs.size());
}

void PromptFilterList::validate() const {
    if (connector_words.empty() || speech_words.empty()) throw DataError("prompt filter word lists must be nonempty");
    for (const auto* list : {&connector_words, &speech_words})
        for (const auto& w : *list)
            if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isupper(c); }))
                throw DataError("prompt filter word \"" + w + "\" must be lowercase");
}

PromptFilterList PromptFilterList::defaults() {
    return {{"and", "followed", "while", "as", "then", "with", "later", "before", "after"},
            {"speech", "male", "female", "woman", "man", "speaking", "speaks"}};
}

PromptFilterList PromptFilterList::load(const std::filesystem::path& connectors, const std::filesystem::path& speech) {
    auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) throw DataError("cannot open word list " + p.string());
        std::vector<std::string> words;
        for (std::string line; std::getline(in, line);) {
            line.erase(0, line.find_first_not_of(" \t\r"));
            line.erase(line.find_last_not_of(" \t\r") + 1);
            if (!line.empty() && line[0] != '#') words.push_back(line);
        }
        return words;
    };
    PromptFilterList l{read(connectors), read(speech)};
    l.validate();
    return l;
}

FilterMode parse_filter_mode(const std::string& name) {
    if (name == "keep_all") return FilterMode::keep_all;
    if (name == "no_speech") return FilterMode::no_speech;
    if (name == "no_connectors") return FilterMode::no_connectors;
    if (name == "neither") return FilterMode::neither;
    throw std::invalid_argument("unknown filter mode \"" + name + "\"");
}

bool contains_word(const std::string& prompt, const std::vector<std::string>& words) {
    std::string cur;
    auto hit = [&] { return !cur.empty() && std::find(words.begin(), words.end(), cur) != words.end(); };
    for (unsigned char c : prompt) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (hit()) return true;
            cur.clear();
        }
    }
    return hit();
}

std::vector<std::string> filter_prompts(const std::vector<std::string>& prompts, const PromptFilterList& lists, FilterMode mode) {
    lists.validate();
    const bool drop_speech = mode == FilterMode::no_speech || mode == FilterMode::neither;
    const bool drop_connectors = mode == FilterMode::no_connectors || mode == FilterMode::neither;
    std::vector<std::string> out;
    for (const auto& p : prompts) {
        if (drop_speech && contains_word(p, lists.speech_words)) continue;
        if (drop_connectors && contains_word(p, lists.connector_words)) continue;
        out.push_back(p);
    }
    return out;
}

}  // namespace sao::eval
