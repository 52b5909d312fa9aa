#include "sao/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "sao/diffusion.hpp"
#include "sao/error.hpp"
#include "sao/optim.hpp"
#include "sao/rng.hpp"

namespace sao::train {

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::ae_full: return "ae_full";
        case Phase::ae_decoder_only: return "ae_decoder_only";
        case Phase::dit: return "dit";
    }
    return "unknown";
}

void TrainConfig::validate() const {
    if (!(base_lr > 0) || !(disc_lr > 0)) throw std::invalid_argument("learning rates must be positive");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
    if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
    if (!(decay_rate > 0)) throw std::invalid_argument("decay_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (!(cond_dropout >= 0 && cond_dropout < 1)) throw std::invalid_argument("cond_dropout must be in [0, 1)");
    if (chunk_frames < ae::kTotalStride || chunk_frames % ae::kTotalStride != 0)
        throw std::invalid_argument("chunk_frames must be a positive multiple of 2048");
    if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
    mrstft.validate();
}

TrainConfig TrainConfig::defaults(Phase p) {
    TrainConfig c;
    c.phase = p;
    if (p == Phase::dit) c.base_lr = 5e-5;
    return c;
}

TrainConfig TrainConfig::from_config(const Config& cfg, Phase p) {
    TrainConfig c = defaults(p);
    c.base_lr = cfg.get_double("train.base_lr", c.base_lr);
    c.disc_lr = cfg.get_double("train.disc_lr", c.disc_lr);
    c.weight_decay = cfg.get_double("train.weight_decay", c.weight_decay);
    c.warmup_steps = cfg.get_int("train.warmup_steps", c.warmup_steps);
    c.decay_rate = cfg.get_double("train.decay_rate", c.decay_rate);
    c.batch_size = static_cast<int>(cfg.get_int("train.batch_size", c.batch_size));
    c.max_steps = cfg.get_int("train.max_steps", c.max_steps);
    c.cond_dropout = cfg.get_double("train.cond_dropout", c.cond_dropout);
    c.chunk_frames = cfg.get_int("train.chunk_frames", c.chunk_frames);
    c.adversarial = cfg.get_bool("train.adversarial", c.adversarial);
    c.loss_weights.reconstruction = cfg.get_double("train.recon_weight", c.loss_weights.reconstruction);
    c.loss_weights.adversarial = cfg.get_double("train.adv_weight", c.loss_weights.adversarial);
    c.loss_weights.feature_matching = cfg.get_double("train.fm_weight", c.loss_weights.feature_matching);
    c.checkpoint_every = cfg.get_int("train.checkpoint_every", c.checkpoint_every);
    c.mrstft.perceptual_weighting = cfg.get_bool("train.perceptual_weighting", c.mrstft.perceptual_weighting);
    c.validate();
    return c;
}

double lr_at(int64_t step, const TrainConfig& cfg) {
    return optim::lr_at(step, cfg.base_lr, cfg.warmup_steps, cfg.decay_rate, cfg.max_steps);
}

std::vector<ToyClip> toy_corpus(size_t count, int64_t frames, uint64_t seed, int sample_rate) {
    if (frames < 1) throw std::invalid_argument("toy clips need at least one frame");
    Rng rng(seed);
    const double sr = sample_rate;
    std::vector<ToyClip> out;
    for (size_t i = 0; i < count; ++i) {
        ToyClip clip;
        clip.audio = audio::Waveform::zeros(frames, sample_rate);
        const double pan = rng.uniform(0.3, 0.7);
        const double amp = rng.uniform(0.2, 0.6);
        auto put = [&](int64_t n, double v) {
            clip.audio.samples(0, n) = static_cast<float>(v * (1.0 - pan) * 2.0);
            clip.audio.samples(1, n) = static_cast<float>(v * pan * 2.0);
        };
        switch (i % 3) {
            case 0: {
                const double f = std::round(rng.uniform(110.0, 1760.0));
                for (int64_t n = 0; n < frames; ++n) put(n, amp * std::sin(2.0 * std::numbers::pi * f * n / sr));
                clip.prompt = "steady sine tone at " + std::to_string(static_cast<int>(f)) + " hz";
                break;
            }
            case 1: {
                const bool rising = rng.bernoulli(0.5);
                const double f0 = rising ? 200.0 : 3000.0, f1 = rising ? 3000.0 : 200.0;
                const double dur = static_cast<double>(frames) / sr;
                for (int64_t n = 0; n < frames; ++n) {
                    const double t = n / sr;
                    const double phase = 2.0 * std::numbers::pi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur);
                    put(n, amp * std::sin(phase));
                }
                clip.prompt = rising ? "rising chirp sweep" : "falling chirp sweep";
                break;
            }
            default: {
                const double rate = rng.uniform(4.0, 12.0);
                const int64_t period = std::max<int64_t>(1, static_cast<int64_t>(sr / rate));
                for (int64_t n = 0; n < frames; ++n) {
                    const double env = std::exp(-static_cast<double>(n % period) / (0.1 * period));
                    put(n, amp * env * rng.uniform(-1.0, 1.0));
                }
                clip.prompt = "short noise bursts";
                break;
            }
        }
        out.push_back(std::move(clip));
    }
    return out;
}

namespace {

class CsvLog {
public:
    CsvLog(const std::filesystem::path& path, const std::string& header) {
        if (path.empty()) return;
        out_.open(path, std::ios::trunc);
        if (!out_) throw DataError("cannot write loss log " + path.string());
        out_ << header << '\n';
        out_ << std::setprecision(10);
    }
    template <typename... Ts>
    void row(const Ts&... vals) {
        if (!out_.is_open()) return;
        bool first = true;
        ((out_ << (first ? "" : ",") << vals, first = false), ...);
        out_ << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

bool is_checkpoint_step(int64_t step, const TrainConfig& cfg) {
    return step == cfg.max_steps || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0);
}

std::filesystem::path checkpoint_path(const TrainConfig& cfg, const std::string& what, int64_t step) {
    return cfg.checkpoint_dir / (what + "_" + phase_name(cfg.phase) + "_step" + std::to_string(step) + ".saot");
}

Tensor random_chunk(const std::vector<audio::Waveform>& data, int64_t frames, Rng& rng) {
    const auto& w = data[static_cast<size_t>(rng.below(data.size()))];
    int64_t start = 0;
    if (w.frames() > frames) start = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w.frames() - frames + 1)));
    return audio::extract_chunk(w, {start, start + frames}).to_tensor();
}

Tensor normal_tensor(Shape shape, Rng& rng) {
    std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.normal();
    return Tensor::from(std::move(shape), std::move(v));
}

void require_finite(double v, const std::string& what, int64_t step) {
    if (!std::isfinite(v)) throw NumericError("non-finite " + what + " at step " + std::to_string(step));
}

}  // namespace

AeTrainResult train_autoencoder_phase(ae::Autoencoder& model, losses::DiscriminatorBank& bank,
                                      const std::vector<audio::Waveform>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.phase == Phase::dit) throw std::invalid_argument("train_autoencoder_phase needs an autoencoder phase");
    if (data.empty()) throw DataError("autoencoder training needs at least one recording");
    for (const auto& w : data) w.validate();
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

    const bool frozen = cfg.phase == Phase::ae_decoder_only;
    model.params().set_trainable("encoder.", !frozen);
    model.params().set_trainable("decoder.", true);
    optim::AdamW gen_opt(model.params().all(), {0.9, 0.999, 1e-8, cfg.weight_decay});
    optim::AdamW disc_opt(bank.params().all(), {0.9, 0.999, 1e-8, cfg.weight_decay});

    AeTrainResult result;
    const std::string initial_hash = model.encoder_hash();
    result.encoder_hashes.push_back(initial_hash);
    CsvLog csv(cfg.log_path, "step,lr,recon,kl,g_loss,fm_loss,d_loss");
    Rng rng(cfg.seed);
    const auto& w = cfg.loss_weights;

    for (int64_t step = 1; step <= cfg.max_steps; ++step) {
        const double lr = lr_at(step, cfg);
        const double disc_lr = optim::lr_at(step, cfg.disc_lr, cfg.warmup_steps, cfg.decay_rate, cfg.max_steps);
        std::vector<Tensor> reals, fakes;
        Tensor gen_loss;
        AeStepLog entry;
        entry.step = step;
        entry.lr = lr;
        const Real inv_b = 1.0 / cfg.batch_size;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Tensor x = random_chunk(data, cfg.chunk_frames, rng);
            const auto enc = model.encode_tensor(x);
            const Tensor eps = normal_tensor(enc.mean.shape(), rng);
            const Tensor z = add(enc.mean, mul(exp(scale(enc.log_variance, 0.5)), eps));
            const Tensor y = model.decode_tensor(z);
            const Tensor recon = losses::mrstft_terms(x, y, cfg.mrstft).total;
            const Tensor kl = losses::kl_regularizer(enc.mean, enc.log_variance);
            Tensor item = add(scale(recon, w.reconstruction), kl);
            entry.recon += recon.item() * inv_b;
            entry.kl += kl.item() * inv_b;
            if (cfg.adversarial) {
                const auto adv = losses::adversarial_terms(bank, x, y);
                item = add(item, add(scale(adv.g_loss, w.adversarial), scale(adv.fm_loss, w.feature_matching)));
                entry.g_loss += adv.g_loss.item() * inv_b;
                entry.fm_loss += adv.fm_loss.item() * inv_b;
            }
            gen_loss = gen_loss.defined() ? add(gen_loss, item) : item;
            reals.push_back(x);
            fakes.push_back(y.detach());
        }
        gen_loss = scale(gen_loss, inv_b);
        require_finite(gen_loss.item(), "generator loss (recon " + std::to_string(entry.recon) + ", kl " +
                                            std::to_string(entry.kl) + ")", step);
        gen_opt.zero_grad();
        disc_opt.zero_grad();
        gen_loss.backward();
        gen_opt.step(lr);

        if (cfg.adversarial) {
            disc_opt.zero_grad();
            Tensor d_loss;
            for (size_t b = 0; b < reals.size(); ++b) {
                const Tensor d = losses::adversarial_terms(bank, reals[b], fakes[b]).d_loss;
                d_loss = d_loss.defined() ? add(d_loss, d) : d;
            }
            d_loss = scale(d_loss, inv_b);
            entry.d_loss = d_loss.item();
            require_finite(entry.d_loss, "discriminator loss", step);
            d_loss.backward();
            disc_opt.step(disc_lr);
        }
        result.log.push_back(entry);
        csv.row(step, lr, entry.recon, entry.kl, entry.g_loss, entry.fm_loss, entry.d_loss);

        if (is_checkpoint_step(step, cfg)) {
            const std::string h = model.encoder_hash();
            result.encoder_hashes.push_back(h);
            if (frozen && h != initial_hash)
                throw std::logic_error("encoder weights changed during decoder-only training at step " + std::to_string(step));
            if (!cfg.checkpoint_dir.empty()) {
                const auto p = checkpoint_path(cfg, "ae", step);
                model.save(p);
                bank.save(checkpoint_path(cfg, "disc", step));
                result.checkpoints.push_back(p);
            }
        }
    }
    model.params().set_trainable("encoder.", true);
    return result;
}

AeTwoPhaseResult train_autoencoder(ae::Autoencoder& model, losses::DiscriminatorBank& bank,
                                   const std::vector<audio::Waveform>& data, const TrainConfig& phase1,
                                   const TrainConfig& phase2) {
    if (phase1.phase != Phase::ae_full || phase2.phase != Phase::ae_decoder_only)
        throw std::invalid_argument("phase configs must be ae_full then ae_decoder_only");
    AeTwoPhaseResult r;
    r.full = train_autoencoder_phase(model, bank, data, phase1);
    r.decoder_only = train_autoencoder_phase(model, bank, data, phase2);
    return r;
}

double ae_reconstruction_loss(const ae::Autoencoder& model, const std::vector<audio::Waveform>& chunks,
                              const losses::MrstftConfig& cfg) {
    if (chunks.empty()) throw DataError("no evaluation chunks");
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& c : chunks) {
        const Tensor x = c.to_tensor();
        const Tensor y = model.decode_tensor(model.encode_tensor(x).mean);
        total += losses::mrstft_terms(x, y, cfg).total.item();
    }
    return total / static_cast<double>(chunks.size());
}

DitTrainResult train_dit(dit::Dit& model, const std::vector<DitExample>& data, const cond::TextEmbedder& embedder,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("DiT training needs at least one example");
    std::vector<cond::TokenEmbedding> text;
    for (const auto& ex : data) {
        if (ex.latent.rows() != ae::kLatentChannels || ex.latent.cols() < 1)
            throw DataError("DiT examples must be [64, T] latents");
        ex.timing.validate();
        text.push_back(embedder.embed(ex.prompt));
    }
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
    optim::AdamW opt(model.params().all(), {0.9, 0.999, 1e-8, cfg.weight_decay});
    const diffusion::NoiseSchedule sched;
    Rng rng(cfg.seed);
    CsvLog csv(cfg.log_path, "step,lr,loss,conditioned");
    DitTrainResult result;

    for (int64_t step = 1; step <= cfg.max_steps; ++step) {
        const double lr = lr_at(step, cfg);
        const bool conditioned = !rng.bernoulli(cfg.cond_dropout);
        Tensor loss;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t i = static_cast<size_t>(rng.below(data.size()));
            const Matrix& x0 = data[i].latent;
            const double t = rng.uniform();
            Matrix eps(x0.rows(), x0.cols());
            for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = rng.normal();
            const Matrix xt = diffusion::noise(x0, eps, t, sched);
            const Matrix v = diffusion::v_target(x0, eps, t, sched);
            const auto bundle = conditioned ? model.condition(text[i], data[i].timing, t) : model.null_condition(data[i].timing, t);
            const Tensor item = mse(model.forward(to_tensor(xt), bundle), to_tensor(v));
            loss = loss.defined() ? add(loss, item) : item;
        }
        loss = scale(loss, 1.0 / cfg.batch_size);
        require_finite(loss.item(), "diffusion loss", step);
        opt.zero_grad();
        loss.backward();
        opt.step(lr);
        (conditioned ? result.conditioned_steps : result.null_steps) += 1;
        result.log.push_back({step, lr, loss.item(), conditioned});
        csv.row(step, lr, loss.item(), conditioned ? 1 : 0);
        if (is_checkpoint_step(step, cfg) && !cfg.checkpoint_dir.empty()) {
            const auto p = checkpoint_path(cfg, "dit", step);
            model.save(p);
            result.checkpoints.push_back(p);
        }
    }
    return result;
}

double dit_eval_mse(const dit::Dit& model, const std::vector<DitExample>& data, const cond::TextEmbedder& embedder,
                    const std::vector<double>& times, uint64_t seed) {
    if (data.empty() || times.empty()) throw DataError("evaluation needs examples and times");
    NoGradGuard no_grad;
    const diffusion::NoiseSchedule sched;
    Rng rng(seed);
    double total = 0.0;
    int64_t n = 0;
    for (const auto& ex : data) {
        const auto text = embedder.embed(ex.prompt);
        for (double t : times) {
            Matrix eps(ex.latent.rows(), ex.latent.cols());
            for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = rng.normal();
            const Matrix xt = diffusion::noise(ex.latent, eps, t, sched);
            const Matrix v = diffusion::v_target(ex.latent, eps, t, sched);
            const Matrix pred = to_matrix(model.forward(to_tensor(xt), model.condition(text, ex.timing, t)));
            total += (pred - v).squaredNorm() / static_cast<double>(v.size());
            ++n;
        }
    }
    return total / static_cast<double>(n);
}

std::vector<DitExample> encode_examples(const ae::Autoencoder& model, const std::vector<ToyClip>& clips) {
    std::vector<DitExample> out;
    for (const auto& c : clips) {
        const int64_t padded = (c.audio.frames() + ae::kTotalStride - 1) / ae::kTotalStride * ae::kTotalStride;
        const auto w = audio::extract_chunk(c.audio, {0, padded});
        DitExample ex;
        ex.latent = model.encode(w).mean;
        ex.prompt = c.prompt;
        ex.timing = {0.0, std::min(cond::kWindowSeconds, c.audio.seconds())};
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace sao::train
