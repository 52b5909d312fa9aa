// sao: command-line entry point for training, generation, coding and evaluation.
#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "sao/audio.hpp"
#include "sao/autoencoder.hpp"
#include "sao/conditioning.hpp"
#include "sao/config.hpp"
#include "sao/container.hpp"
#include "sao/datapipe.hpp"
#include "sao/diffusion.hpp"
#include "sao/dit.hpp"
#include "sao/error.hpp"
#include "sao/evalkit.hpp"
#include "sao/losses.hpp"
#include "sao/trainer.hpp"

namespace fs = std::filesystem;
using namespace sao;

namespace {

struct Globals {
    std::string config_path;
    uint64_t seed = 0;
    int threads = 1;
    bool verbose = false;
};

Globals g;

void note(const std::string& msg) {
    if (g.verbose) std::cerr << "[sao] " << msg << '\n';
}

Config load_config() {
    return g.config_path.empty() ? Config{} : Config::load(g.config_path);
}

std::vector<fs::path> wav_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw DataError("no .wav files in " + dir.string());
    return out;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out.precision(10);
    return out;
}

std::shared_ptr<const cond::TextEmbedder> make_embedder(int dim, const std::string& imported, bool strict) {
    auto toy = std::make_shared<cond::ToyTextEmbedder>(dim);
    if (imported.empty()) return toy;
    return std::make_shared<cond::ImportedTextEmbedder>(imported, dim, strict, toy);
}

// Clips with prompts from "<dir>/prompts.tsv" (file<TAB>prompt per line).
std::vector<train::ToyClip> load_clips(const fs::path& dir) {
    std::ifstream in(dir / "prompts.tsv");
    if (!in) throw DataError("missing " + (dir / "prompts.tsv").string());
    std::vector<train::ToyClip> clips;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("prompts.tsv lines must be <file>\\t<prompt>");
        clips.push_back({audio::load_wav(dir / line.substr(0, tab)), line.substr(tab + 1)});
    }
    if (clips.empty()) throw DataError("no clips listed in prompts.tsv");
    return clips;
}

void run_train_ae(const std::string& data_dir, int toy, const std::string& out_dir, int64_t steps1, int64_t steps2,
                  int64_t chunk) {
    Config cfg = load_config();
    const auto ae_cfg = ae::AutoencoderConfig::from_config(cfg);
    auto p1 = train::TrainConfig::from_config(cfg, train::Phase::ae_full);
    auto p2 = train::TrainConfig::from_config(cfg, train::Phase::ae_decoder_only);
    for (auto* p : {&p1, &p2}) {
        p->seed = g.seed;
        if (chunk > 0) p->chunk_frames = chunk;
        p->checkpoint_dir = out_dir;
    }
    if (steps1 > 0) p1.max_steps = steps1;
    if (steps2 > 0) p2.max_steps = steps2;
    p1.log_path = fs::path(out_dir) / "loss_ae_full.csv";
    p2.log_path = fs::path(out_dir) / "loss_ae_decoder_only.csv";
    p2.seed = g.seed + 1;
    p1.validate();
    p2.validate();
    fs::create_directories(out_dir);

    std::vector<audio::Waveform> data;
    if (toy > 0) {
        for (auto& c : train::toy_corpus(static_cast<size_t>(toy), p1.chunk_frames * 2, g.seed)) data.push_back(std::move(c.audio));
    } else {
        for (const auto& f : wav_files(data_dir)) data.push_back(audio::load_wav(f));
    }
    note("training autoencoder on " + std::to_string(data.size()) + " recordings");
    ae::Autoencoder model(ae_cfg, g.seed);
    losses::DiscriminatorBank bank({}, g.seed + 7);
    const auto r = train::train_autoencoder(model, bank, data, p1, p2);
    model.save(fs::path(out_dir) / "ae.saot");
    bank.save(fs::path(out_dir) / "disc.saot");
    std::cerr << "phase 1 recon " << r.full.log.front().recon << " -> " << r.full.log.back().recon << "; phase 2 recon "
              << r.decoder_only.log.front().recon << " -> " << r.decoder_only.log.back().recon << "; encoder hash "
              << r.decoder_only.encoder_hashes.back() << '\n';
}

void run_train_dit(const std::string& ae_path, const std::string& data_dir, int toy, const std::string& out_dir,
                   int64_t steps, const std::string& embeddings, bool strict) {
    Config cfg = load_config();
    auto tc = train::TrainConfig::from_config(cfg, train::Phase::dit);
    tc.seed = g.seed;
    if (steps > 0) tc.max_steps = steps;
    tc.checkpoint_dir = out_dir;
    tc.log_path = fs::path(out_dir) / "loss_dit.csv";
    tc.validate();
    fs::create_directories(out_dir);
    const auto model_ae = ae::Autoencoder::load(ae_path);
    const auto clips = toy > 0 ? train::toy_corpus(static_cast<size_t>(toy), 4 * ae::kTotalStride * 8, g.seed) : load_clips(data_dir);
    const auto examples = train::encode_examples(model_ae, clips);
    dit::Dit model(dit::DitConfig::from_config(cfg), g.seed);
    const auto embedder = make_embedder(model.config().text_dim, embeddings, strict);
    note("training DiT on " + std::to_string(examples.size()) + " examples");
    const auto r = train::train_dit(model, examples, *embedder, tc);
    model.save(fs::path(out_dir) / "dit.saot");
    std::cerr << "dit loss " << r.log.front().loss << " -> " << r.log.back().loss << " (" << r.null_steps
              << " null-conditioned steps)\n";
}

void run_generate(const std::string& prompt, double seconds, const std::string& out, const std::string& ae_path,
                  const std::string& dit_path, int steps, double cfg_scale, int latent_frames, const std::string& embeddings,
                  bool strict) {
    Config cfg = load_config();
    diffusion::SamplerConfig s;
    s.steps = static_cast<int>(cfg.get_int("sampler.steps", s.steps));
    s.cfg_scale = cfg.get_double("sampler.cfg_scale", s.cfg_scale);
    if (steps > 0) s.steps = steps;
    if (cfg_scale >= 0) s.cfg_scale = cfg_scale;
    s.rng_seed = g.seed;
    if (ae_path.empty() || dit_path.empty()) throw DataError("generate needs --ae and --dit weights");
    const auto model_ae = ae::Autoencoder::load(ae_path);
    const auto model_dit = dit::Dit::load(dit_path);
    const auto embedder = make_embedder(model_dit.config().text_dim, embeddings, strict);
    diffusion::GenerateOptions opt;
    opt.latent_frames = latent_frames;
    const auto w = diffusion::generate(prompt, seconds, s, {&model_ae, &model_dit, embedder.get()}, opt);
    audio::save_wav(w, out);
    note("wrote " + std::to_string(w.seconds()) + " s to " + out);
}

void run_encode(const std::string& ae_path, const std::string& in, const std::string& out, bool sample) {
    const auto model = ae::Autoencoder::load(ae_path);
    auto w = audio::load_wav(in);
    const int64_t padded = (w.frames() + ae::kTotalStride - 1) / ae::kTotalStride * ae::kTotalStride;
    if (padded != w.frames()) w = audio::extract_chunk(w, {0, padded});
    const auto params = model.encode(w);
    ae::LatentSeq z;
    if (sample) {
        z = ae::reparameterize(params, g.seed);
    } else {
        z.values = params.mean;
    }
    z.latent_rate = static_cast<double>(w.sample_rate) / ae::kTotalStride;
    ae::save_latents(z, out);
    note("encoded " + std::to_string(z.frames()) + " latent frames");
}

void run_decode(const std::string& ae_path, const std::string& latents, const std::string& out, int chunk, int overlap) {
    const auto model = ae::Autoencoder::load(ae_path);
    const auto z = ae::load_latents(latents);
    const auto w = chunk > 0 ? ae::chunked_decode(model, z, chunk, overlap) : model.decode(z);
    audio::save_wav(w, out);
    note("decoded " + std::to_string(w.frames()) + " frames");
}

void run_eval_recon(const std::string& ref_dir, const std::string& est_dir, const std::string& out) {
    auto csv = open_out(out);
    csv << "file,stft,mel,sisdr\n";
    double s_sum = 0, m_sum = 0, q_sum = 0;
    size_t n = 0;
    for (const auto& ref_path : wav_files(ref_dir)) {
        const fs::path est_path = fs::path(est_dir) / ref_path.filename();
        if (!fs::exists(est_path)) throw DataError("no estimate for " + ref_path.filename().string());
        const auto ref = audio::load_wav(ref_path), est = audio::load_wav(est_path);
        const double s = eval::stft_distance(ref, est), m = eval::mel_distance(ref, est), q = eval::si_sdr(ref, est);
        csv << ref_path.filename().string() << ',' << s << ',' << m << ',' << q << '\n';
        s_sum += s;
        m_sum += m;
        q_sum += q;
        ++n;
    }
    csv << "mean," << s_sum / n << ',' << m_sum / n << ',' << q_sum / n << '\n';
}

Matrix load_rows(const std::string& path, const std::string& name) {
    return to_matrix(io::TensorContainer::load(path).get(name));
}

void run_eval_gen(const std::string& ref_emb, const std::string& gen_emb, const std::string& probs_ref,
                  const std::string& probs_gen, const std::string& text_emb, const std::string& audio_emb,
                  const std::string& prompts_file, const std::string& mode, const std::string& out) {
    auto csv = open_out(out);
    csv << "metric,value,count\n";
    bool any = false;
    if (!ref_emb.empty() || !gen_emb.empty()) {
        if (ref_emb.empty() || gen_emb.empty()) throw DataError("Frechet distance needs --ref-emb and --gen-emb");
        const auto a = eval::EmbeddingStats::from_samples(load_rows(ref_emb, "embeddings"));
        const auto b = eval::EmbeddingStats::from_samples(load_rows(gen_emb, "embeddings"));
        csv << "frechet," << eval::frechet_distance(a, b) << ',' << b.count << '\n';
        any = true;
    }
    if (!probs_ref.empty() || !probs_gen.empty()) {
        if (probs_ref.empty() || probs_gen.empty()) throw DataError("KL needs --probs-ref and --probs-gen");
        const Matrix p = load_rows(probs_ref, "probs"), q = load_rows(probs_gen, "probs");
        if (p.rows() != q.rows() || p.cols() != q.cols()) throw DataError("probability sets differ in shape");
        std::vector<eval::ProbabilityPair> pairs;
        for (Eigen::Index r = 0; r < p.rows(); ++r) pairs.emplace_back(p.row(r).transpose(), q.row(r).transpose());
        csv << "mean_kl," << eval::mean_kl(pairs) << ',' << pairs.size() << '\n';
        any = true;
    }
    if (!text_emb.empty() || !audio_emb.empty()) {
        if (text_emb.empty() || audio_emb.empty()) throw DataError("CLAP score needs --text-emb and --audio-emb");
        const Matrix t = load_rows(text_emb, "embeddings"), a = load_rows(audio_emb, "embeddings");
        if (t.rows() != a.rows()) throw DataError("text and audio embedding counts differ");
        std::vector<std::string> prompts;
        if (!prompts_file.empty()) {
            std::ifstream in(prompts_file);
            if (!in) throw DataError("cannot open " + prompts_file);
            for (std::string line; std::getline(in, line);) prompts.push_back(line);
            if (prompts.size() != static_cast<size_t>(t.rows())) throw DataError("prompt count differs from embedding count");
        }
        const auto keep_mode = eval::parse_filter_mode(mode);
        const auto lists = eval::PromptFilterList::defaults();
        std::vector<eval::VectorPair> pairs;
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
            if (!prompts.empty() && eval::filter_prompts({prompts[static_cast<size_t>(r)]}, lists, keep_mode).empty()) continue;
            pairs.emplace_back(t.row(r).transpose(), a.row(r).transpose());
        }
        csv << "clap_score_" << mode << ',' << (pairs.empty() ? 0.0 : eval::clap_score(pairs)) << ',' << pairs.size() << '\n';
        any = true;
    }
    if (!any) throw DataError("eval-gen: no metric inputs given");
}

void run_dedup(const std::string& index, double threshold, const std::string& out) {
    const auto idx = data::EmbeddingIndex::load(index);
    const auto groups = data::dedup_scan(idx, threshold);
    auto csv = open_out(out);
    csv << "group,id\n";
    for (size_t gi = 0; gi < groups.size(); ++gi)
        for (size_t m : groups[gi]) csv << gi << ',' << idx.ids[m] << '\n';
    note(std::to_string(groups.size()) + " duplicate groups");
}

void run_mem_scan(const std::string& gen, const std::string& trn, size_t k, const std::string& out) {
    const auto cands = data::memorization_candidates(data::EmbeddingIndex::load(gen), data::EmbeddingIndex::load(trn), k);
    auto csv = open_out(out);
    csv << "rank,gen_id,train_id,cosine\n";
    for (size_t i = 0; i < cands.size(); ++i)
        csv << i + 1 << ',' << cands[i].gen_id << ',' << cands[i].train_id << ',' << cands[i].cosine << '\n';
}

void run_build_prompts(const std::string& metadata, const std::string& out, const std::string& form) {
    const auto records = data::load_metadata_jsonl(metadata);
    data::PromptOverrides ov;
    if (form == "keyed") ov.keyed = true;
    else if (form == "plain") ov.keyed = false;
    else if (form != "random") throw std::invalid_argument("--form must be random, keyed or plain");
    auto txt = open_out(out);
    for (size_t i = 0; i < records.size(); ++i) txt << data::build_prompt(records[i], Rng::mix(g.seed ^ Rng::mix(i)), ov) << '\n';
}

void run_detect_music(const std::string& timeline, double hop, const std::vector<std::string>& tags, double threshold,
                      double min_seconds, const std::string& out) {
    const auto tl = data::TagTimeline::load_csv(timeline, hop);
    const bool music = data::detect_music(tl, {tags.begin(), tags.end()}, threshold, min_seconds);
    if (out.empty()) {
        std::cout << (music ? "music" : "not_music") << '\n';
    } else {
        auto f = open_out(out);
        f << "file,music\n" << fs::path(timeline).filename().string() << ',' << (music ? 1 : 0) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent diffusion text-to-audio toolkit"};
    app.require_subcommand(1);
    app.add_option("--config", g.config_path, "Key-value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every random draw");
    app.add_option("--threads", g.threads, "Upper bound on internal parallelism")->check(CLI::PositiveNumber);
    app.add_flag("--verbose", g.verbose, "Progress messages on stderr");

    std::string data_dir, out_dir, out, ae_path, dit_path, in, latents, prompt, embeddings, ref, est, mode = "keep_all";
    std::string ref_emb, gen_emb, probs_ref, probs_gen, text_emb, audio_emb, prompts_file, index, gen, trn, metadata,
        timeline, form = "random";
    std::vector<std::string> tags;
    int toy = 0, steps = 0, chunk = 64, overlap = 16, latent_frames = diffusion::kGenerationLatentFrames;
    int64_t steps1 = 0, steps2 = 0, chunk_frames = 0, dit_steps = 0;
    double seconds = cond::kWindowSeconds, cfg_scale = -1, threshold = data::kDefaultDedupThreshold, hop = 1.0,
           music_threshold = 0.15, min_seconds = 30.0;
    size_t k = 50;
    bool sample = false, strict = false;

    auto* train_ae = app.add_subcommand("train-ae", "Two-phase autoencoder training");
    train_ae->add_option("--data", data_dir, "Directory of WAV recordings");
    train_ae->add_option("--toy", toy, "Use a synthetic corpus of this many clips instead of --data");
    train_ae->add_option("--out-dir", out_dir, "Checkpoint and log directory")->required();
    train_ae->add_option("--steps1", steps1, "Steps of full training");
    train_ae->add_option("--steps2", steps2, "Steps of decoder-only training");
    train_ae->add_option("--chunk", chunk_frames, "Training chunk length in frames");

    auto* train_dit = app.add_subcommand("train-dit", "Diffusion transformer training");
    train_dit->add_option("--ae", ae_path, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
    train_dit->add_option("--data", data_dir, "Directory with WAVs and prompts.tsv");
    train_dit->add_option("--toy", toy, "Use a synthetic corpus of this many clips instead of --data");
    train_dit->add_option("--out-dir", out_dir, "Checkpoint and log directory")->required();
    train_dit->add_option("--steps", dit_steps, "Training steps");
    train_dit->add_option("--embeddings", embeddings, "Imported text embeddings");
    train_dit->add_flag("--strict", strict, "Fail on prompts missing from --embeddings");

    auto* generate = app.add_subcommand("generate", "Text-to-audio generation");
    generate->add_option("--prompt", prompt, "Text prompt")->required();
    generate->add_option("--seconds", seconds, "Requested duration, (0, 47]");
    generate->add_option("--out", out, "Output WAV")->required();
    generate->add_option("--ae", ae_path, "Autoencoder checkpoint");
    generate->add_option("--dit", dit_path, "DiT checkpoint");
    generate->add_option("--steps", steps, "Sampler steps");
    generate->add_option("--cfg-scale", cfg_scale, "Classifier-free guidance scale");
    generate->add_option("--latent-frames", latent_frames, "Latent length to sample");
    generate->add_option("--embeddings", embeddings, "Imported text embeddings");
    generate->add_flag("--strict", strict, "Fail on prompts missing from --embeddings");

    auto* encode = app.add_subcommand("encode", "WAV to latent file");
    encode->add_option("--ae", ae_path, "Autoencoder checkpoint")->required();
    encode->add_option("--in", in, "Input WAV")->required();
    encode->add_option("--out", out, "Output latent file")->required();
    encode->add_flag("--sample", sample, "Draw from the posterior instead of taking its mean");

    auto* decode = app.add_subcommand("decode", "Latent file to WAV");
    decode->add_option("--ae", ae_path, "Autoencoder checkpoint")->required();
    decode->add_option("--latents", latents, "Latent file")->required();
    decode->add_option("--out", out, "Output WAV")->required();

    auto* chunk_decode = app.add_subcommand("chunk-decode", "Latent file to WAV in overlapping chunks");
    chunk_decode->add_option("--ae", ae_path, "Autoencoder checkpoint")->required();
    chunk_decode->add_option("--latents", latents, "Latent file")->required();
    chunk_decode->add_option("--out", out, "Output WAV")->required();
    chunk_decode->add_option("--chunk", chunk, "Chunk length in latent frames");
    chunk_decode->add_option("--overlap", overlap, "Context latents on each side");

    auto* eval_recon = app.add_subcommand("eval-recon", "STFT, MEL and SI-SDR over paired WAV directories");
    eval_recon->add_option("--ref", ref, "Reference directory")->required();
    eval_recon->add_option("--est", est, "Estimate directory")->required();
    eval_recon->add_option("--out", out, "CSV output")->required();

    auto* eval_gen = app.add_subcommand("eval-gen", "Frechet distance, mean KL and CLAP score from embeddings");
    eval_gen->add_option("--ref-emb", ref_emb, "Reference embeddings");
    eval_gen->add_option("--gen-emb", gen_emb, "Generated embeddings");
    eval_gen->add_option("--probs-ref", probs_ref, "Reference class probabilities");
    eval_gen->add_option("--probs-gen", probs_gen, "Generated class probabilities");
    eval_gen->add_option("--text-emb", text_emb, "Prompt embeddings");
    eval_gen->add_option("--audio-emb", audio_emb, "Audio embeddings, row-aligned with --text-emb");
    eval_gen->add_option("--prompts", prompts_file, "Prompts, one per line, row-aligned with --text-emb");
    eval_gen->add_option("--filter", mode, "keep_all, no_speech, no_connectors or neither");
    eval_gen->add_option("--out", out, "CSV output")->required();

    auto* dedup = app.add_subcommand("dedup", "Near-duplicate groups in an embedding index");
    dedup->add_option("--index", index, "Embedding index")->required();
    dedup->add_option("--threshold", threshold, "Cosine similarity threshold");
    dedup->add_option("--out", out, "CSV output")->required();

    auto* mem_scan = app.add_subcommand("mem-scan", "Generations closest to the training set");
    mem_scan->add_option("--gen", gen, "Generated embedding index")->required();
    mem_scan->add_option("--train", trn, "Training embedding index")->required();
    mem_scan->add_option("--k", k, "Number of candidates");
    mem_scan->add_option("--out", out, "CSV output")->required();

    auto* build_prompts = app.add_subcommand("build-prompts", "Prompts from JSON-lines metadata");
    build_prompts->add_option("--metadata", metadata, "JSON-lines metadata")->required();
    build_prompts->add_option("--out", out, "Text output, one prompt per line")->required();
    build_prompts->add_option("--form", form, "random, keyed or plain");

    auto* detect_music = app.add_subcommand("detect-music", "Music detection over a tag-probability timeline");
    detect_music->add_option("--timeline", timeline, "CSV: header of tag names, one row per frame")->required();
    detect_music->add_option("--hop", hop, "Seconds between rows");
    detect_music->add_option("--music-tags", tags, "Tags that count as music")->required()->delimiter(',');
    detect_music->add_option("--threshold", music_threshold, "Probability threshold");
    detect_music->add_option("--min-seconds", min_seconds, "Required active duration");
    detect_music->add_option("--out", out, "CSV output (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        Eigen::setNbThreads(g.threads);
        if (*train_ae) {
            if (toy <= 0 && data_dir.empty()) throw CLI::ValidationError("train-ae needs --data or --toy");
            run_train_ae(data_dir, toy, out_dir, steps1, steps2, chunk_frames);
        } else if (*train_dit) {
            if (toy <= 0 && data_dir.empty()) throw CLI::ValidationError("train-dit needs --data or --toy");
            run_train_dit(ae_path, data_dir, toy, out_dir, dit_steps, embeddings, strict);
        } else if (*generate) {
            run_generate(prompt, seconds, out, ae_path, dit_path, steps, cfg_scale, latent_frames, embeddings, strict);
        } else if (*encode) {
            run_encode(ae_path, in, out, sample);
        } else if (*decode) {
            run_decode(ae_path, latents, out, 0, 0);
        } else if (*chunk_decode) {
            run_decode(ae_path, latents, out, chunk, overlap);
        } else if (*eval_recon) {
            run_eval_recon(ref, est, out);
        } else if (*eval_gen) {
            run_eval_gen(ref_emb, gen_emb, probs_ref, probs_gen, text_emb, audio_emb, prompts_file, mode, out);
        } else if (*dedup) {
            run_dedup(index, threshold, out);
        } else if (*mem_scan) {
            run_mem_scan(gen, trn, k, out);
        } else if (*build_prompts) {
            run_build_prompts(metadata, out, form);
        } else if (*detect_music) {
            run_detect_music(timeline, hop, tags, music_threshold, min_seconds, out);
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
