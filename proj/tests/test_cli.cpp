#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "sao/audio.hpp"
#include "sao/autoencoder.hpp"
#include "sao/datapipe.hpp"
#include "support.hpp"

using namespace sao;
using sao::testing::random_matrix;
using sao::testing::TempDir;

namespace {

int run(const std::string& args, const std::filesystem::path& log = {}) {
    std::string cmd = std::string(SAO_CLI_PATH) + " " + args;
    cmd += log.empty() ? " >/dev/null 2>&1" : " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("cli: usage errors exit with 1") {
    CHECK(run("") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("--help") == 0);
    CHECK(run("generate --seconds 20") == 1);
    CHECK(run("train-ae --out-dir /tmp/never_used") == 1);
}

TEST_CASE("cli: data errors exit with 2") {
    TempDir dir("cli_data");
    CHECK(run("generate --prompt storm --seconds 20 --out " + q(dir / "s.wav")) == 2);
    CHECK(!std::filesystem::exists(dir / "s.wav"));
    std::ofstream(dir / "junk.saot") << "junk";
    CHECK(run("decode --ae " + q(dir / "junk.saot") + " --latents " + q(dir / "junk.saot") + " --out " + q(dir / "o.wav")) == 2);
}

TEST_CASE("cli: chunk-decode output equals decode output") {
    TempDir dir("cli_codec");
    ae::AutoencoderConfig cfg;
    cfg.block_channels = {2, 2, 4, 4, 4};
    cfg.resnet_layers_per_block = 1;
    ae::Autoencoder(cfg, 1).save(dir / "ae.saot");
    Rng rng(2);
    ae::LatentSeq z;
    z.values = random_matrix(ae::kLatentChannels, 100, rng);
    ae::save_latents(z, dir / "z.saot");

    const int rf = ae::receptive_field_latents(cfg);
    REQUIRE(rf <= 16);
    REQUIRE(run("decode --ae " + q(dir / "ae.saot") + " --latents " + q(dir / "z.saot") + " --out " + q(dir / "full.wav")) == 0);
    REQUIRE(run("chunk-decode --ae " + q(dir / "ae.saot") + " --latents " + q(dir / "z.saot") + " --chunk 64 --overlap 16 --out " +
                q(dir / "chunked.wav")) == 0);
    const auto a = audio::load_wav(dir / "full.wav"), b = audio::load_wav(dir / "chunked.wav");
    CHECK(a.frames() == 100 * ae::kTotalStride);
    CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() <= 1e-6f);

    // encode pads to whole latent frames and is reproducible
    audio::Waveform w = audio::Waveform::zeros(5000);
    for (int64_t n = 0; n < w.frames(); ++n) w.samples(0, n) = w.samples(1, n) = static_cast<float>(0.3 * std::sin(0.01 * n));
    audio::save_wav(w, dir / "in.wav");
    REQUIRE(run("encode --ae " + q(dir / "ae.saot") + " --in " + q(dir / "in.wav") + " --out " + q(dir / "e1.saot")) == 0);
    REQUIRE(run("encode --ae " + q(dir / "ae.saot") + " --in " + q(dir / "in.wav") + " --out " + q(dir / "e2.saot")) == 0);
    CHECK(ae::load_latents(dir / "e1.saot").frames() == 3);
    CHECK(slurp(dir / "e1.saot") == slurp(dir / "e2.saot"));
}

TEST_CASE("cli: evaluation and data tools") {
    TempDir dir("cli_tools");
    std::filesystem::create_directories(dir / "ref");
    std::filesystem::create_directories(dir / "est");
    audio::Waveform w = audio::Waveform::zeros(8192);
    for (int64_t n = 0; n < w.frames(); ++n) w.samples(0, n) = w.samples(1, n) = static_cast<float>(0.4 * std::sin(0.03 * n));
    audio::save_wav(w, dir / "ref" / "a.wav");
    audio::save_wav(w, dir / "est" / "a.wav");
    REQUIRE(run("eval-recon --ref " + q(dir / "ref") + " --est " + q(dir / "est") + " --out " + q(dir / "m.csv")) == 0);
    const std::string m = slurp(dir / "m.csv");
    CHECK(m.rfind("file,stft,mel,sisdr\na.wav,0,0,100\n", 0) == 0);

    std::ofstream(dir / "meta.jsonl") << R"({"source":"fma","year":"2021","artist":"dadabots","title":"pizza hangover"})" << "\n";
    REQUIRE(run("--seed 4 build-prompts --metadata " + q(dir / "meta.jsonl") + " --form keyed --out " + q(dir / "p1.txt")) == 0);
    REQUIRE(run("--seed 4 build-prompts --metadata " + q(dir / "meta.jsonl") + " --form keyed --out " + q(dir / "p2.txt")) == 0);
    CHECK(slurp(dir / "p1.txt") == slurp(dir / "p2.txt"));
    CHECK(slurp(dir / "p1.txt").find(": ") != std::string::npos);

    std::ofstream(dir / "tl.csv") << "Music,Speech\n0.9,0\n0.9,0\n0.1,0.8\n";
    CHECK(run("detect-music --timeline " + q(dir / "tl.csv") + " --music-tags Music --hop 15", dir / "out.txt") == 0);
    CHECK(slurp(dir / "out.txt") == "music\n");
    CHECK(run("detect-music --timeline " + q(dir / "tl.csv") + " --music-tags Music --hop 1", dir / "out.txt") == 0);
    CHECK(slurp(dir / "out.txt") == "not_music\n");

    Matrix v = Matrix::Identity(4, 3);
    v.row(3) = v.row(0);
    data::EmbeddingIndex::from_raw({"a", "b", "c", "d"}, v).save(dir / "idx.saot");
    REQUIRE(run("dedup --index " + q(dir / "idx.saot") + " --out " + q(dir / "d.csv")) == 0);
    CHECK(slurp(dir / "d.csv") == "group,id\n0,a\n0,d\n");
    REQUIRE(run("mem-scan --gen " + q(dir / "idx.saot") + " --train " + q(dir / "idx.saot") + " --k 1 --out " + q(dir / "ms.csv")) == 0);
    CHECK(slurp(dir / "ms.csv") == "rank,gen_id,train_id,cosine\n1,a,a,1\n");
}
