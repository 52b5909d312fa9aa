#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "sao/datapipe.hpp"
#include "sao/error.hpp"
#include "support.hpp"

using namespace sao;
using namespace sao::data;
using sao::testing::random_matrix;
using sao::testing::TempDir;

namespace {

RecordingMetadata fma_record() {
    RecordingMetadata md;
    md.source = Source::fma;
    md.year = "2021";
    md.artist = "dadabots";
    md.album = "can't play instruments";
    md.title = "pizza hangover";
    md.genres = {"metal", "noise"};
    return md;
}

RecordingMetadata freesound_record() {
    RecordingMetadata md;
    md.title = "Rain Loop";
    md.description = "light rain on a tin roof";
    md.tags = {"rain", "roof", "ambience"};
    return md;
}

// Brute-force connected components by repeated flood fill.
std::vector<std::vector<size_t>> reference_groups(const Matrix& v, double thr) {
    const size_t n = static_cast<size_t>(v.rows());
    std::vector<int> label(n, -1);
    int next = 0;
    for (size_t s = 0; s < n; ++s) {
        if (label[s] >= 0) continue;
        std::vector<size_t> stack{s};
        label[s] = next;
        while (!stack.empty()) {
            const size_t a = stack.back();
            stack.pop_back();
            for (size_t b = 0; b < n; ++b)
                if (label[b] < 0 && v.row(static_cast<Eigen::Index>(a)).dot(v.row(static_cast<Eigen::Index>(b))) >= thr) {
                    label[b] = next;
                    stack.push_back(b);
                }
        }
        ++next;
    }
    std::vector<std::vector<size_t>> groups(static_cast<size_t>(next));
    for (size_t i = 0; i < n; ++i) groups[static_cast<size_t>(label[i])].push_back(i);
    std::vector<std::vector<size_t>> out;
    for (auto& g : groups)
        if (g.size() > 1) out.push_back(g);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("prompt rendering in both formats") {
    const auto md = fma_record();
    PromptChoices keyed{{"year", "artist", "album", "title"}, {}, CaseMode::as_is, true};
    CHECK(render_prompt(md, keyed) == "year: 2021, artist: dadabots, album: can't play instruments, title: pizza hangover");
    PromptChoices plain{{"artist", "album", "title", "year"}, {}, CaseMode::as_is, false};
    CHECK(render_prompt(md, plain) == "dadabots, can't play instruments, pizza hangover, 2021");

    PromptChoices lists{{"genres", "title"}, {{"genres", {1, 0}}}, CaseMode::upper, false};
    CHECK(render_prompt(md, lists) == "NOISE, METAL, PIZZA HANGOVER");
    lists.keyed = true;
    lists.case_mode = CaseMode::lower;
    CHECK(render_prompt(md, lists) == "genres: noise, metal, title: pizza hangover");

    PromptChoices fs{{"tags", "title"}, {}, CaseMode::lower, false};
    CHECK(render_prompt(freesound_record(), fs) == "rain, roof, ambience, rain loop");
    fs.keyed = true;
    CHECK_THROWS_AS(render_prompt(freesound_record(), fs), DataError);
    CHECK_THROWS_AS(render_prompt(md, PromptChoices{{"description"}, {}, CaseMode::as_is, false}), DataError);
    CHECK_THROWS_AS(render_prompt(md, PromptChoices{}), DataError);
}

TEST_CASE("sampled prompts are deterministic and well formed") {
    const auto md = fma_record();
    bool saw_keyed = false, saw_plain = false;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const std::string p = build_prompt(md, seed);
        CHECK(p == build_prompt(md, seed));
        CHECK(!p.empty());
        Rng rng(seed);
        const auto c = sample_prompt_choices(md, rng);
        CHECK(!c.fields.empty());
        std::set<std::string> unique(c.fields.begin(), c.fields.end());
        CHECK(unique.size() == c.fields.size());
        (c.keyed ? saw_keyed : saw_plain) = true;
    }
    CHECK(saw_keyed);
    CHECK(saw_plain);

    for (uint64_t seed = 0; seed < 50; ++seed) {
        std::string k = build_prompt(md, seed, {.keyed = true});
        std::transform(k.begin(), k.end(), k.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        CHECK(k.find(": ") != std::string::npos);
        if (k.find("2021") != std::string::npos) CHECK(k.find("year: 2021") != std::string::npos);
        Rng rng(seed);
        CHECK(!sample_prompt_choices(freesound_record(), rng, {.keyed = true}).keyed);
        const std::string up = build_prompt(md, seed, {.case_mode = CaseMode::upper});
        CHECK(std::none_of(up.begin(), up.end(), [](unsigned char ch) { return std::islower(ch); }));
    }
}

TEST_CASE("metadata parsing") {
    const auto md = RecordingMetadata::from_json(R"({"source":"fma","year":2019,"genres":["jazz"],"title":"x"})");
    CHECK(md.source == Source::fma);
    CHECK(*md.year == "2019");
    CHECK(md.present_fields() == std::vector<std::string>{"year", "genres", "title"});
    CHECK_THROWS_AS(RecordingMetadata::from_json(R"({"source":"radio","title":"x"})"), DataError);
    CHECK_THROWS_AS(RecordingMetadata::from_json(R"({"source":"freesound"})"), DataError);
    CHECK_THROWS_AS(RecordingMetadata::from_json("{not json"), DataError);

    TempDir dir("meta");
    std::ofstream(dir / "m.jsonl") << R"({"title":"a"})" << "\n\n" << R"({"title":""})" << "\n";
    try {
        load_metadata_jsonl(dir / "m.jsonl");
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
}

TEST_CASE("music detection") {
    TagTimeline t;
    t.tags = {"Music", "Speech", "Guitar"};
    t.hop_seconds = 1.0;
    t.probs = Matrix::Zero(60, 3);
    const std::set<std::string> music{"Music", "Guitar"};
    CHECK(!detect_music(t, music));
    for (int r = 0; r < 30; ++r) t.probs(r * 2, r % 2 ? 0 : 2) = 0.15;
    CHECK(detect_music(t, music));
    t.probs(0, 2) = 0.149;
    CHECK(!detect_music(t, music));
    CHECK(!detect_music(t, {"Piano"}));
    CHECK(detect_music(t, music, 0.1, 29.0));

    TagTimeline fine = t;
    fine.hop_seconds = 0.1;
    fine.probs = Matrix::Constant(300, 3, 0.5);
    CHECK(detect_music(fine, music));
    fine.probs(0, 0) = 1.5;
    CHECK_THROWS_AS(detect_music(fine, music), DataError);

    TempDir dir("timeline");
    std::ofstream(dir / "t.csv") << "Music, Speech\n0.2,0.1\n0.9, 0\n";
    const auto loaded = TagTimeline::load_csv(dir / "t.csv", 15.0);
    CHECK(loaded.tags == std::vector<std::string>{"Music", "Speech"});
    CHECK(loaded.probs(1, 0) == 0.9);
    CHECK(detect_music(loaded, {"Music"}));
    std::ofstream(dir / "bad.csv") << "Music\nabc\n";
    CHECK_THROWS_AS(TagTimeline::load_csv(dir / "bad.csv", 1.0), DataError);
}

TEST_CASE("dedup agrees with brute-force components") {
    Rng rng(1);
    Matrix raw = random_matrix(200, 16, rng);
    // plant near-duplicates, including a chain a~b~c
    for (int i = 0; i < 30; ++i) raw.row(100 + i) = raw.row(i) + 0.01 * random_matrix(1, 16, rng);
    raw.row(150) = raw.row(100) + 0.01 * random_matrix(1, 16, rng);
    std::vector<std::string> ids(200);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = "rec" + std::to_string(i);
    const auto idx = EmbeddingIndex::from_raw(ids, raw);
    for (double thr : {0.99, 0.999, 0.5}) {
        auto got = dedup_scan(idx, thr);
        for (size_t g = 1; g < got.size(); ++g) CHECK(got[g - 1].front() < got[g].front());
        std::sort(got.begin(), got.end());
        CHECK(got == reference_groups(idx.vectors, thr));
    }
    CHECK(dedup_scan(idx, 1.01).empty());
}

TEST_CASE("memorization candidates agree with brute force") {
    Rng rng(2);
    const Matrix g = random_matrix(60, 8, rng), t = random_matrix(140, 8, rng);
    std::vector<std::string> gid(60), tid(140);
    for (size_t i = 0; i < gid.size(); ++i) gid[i] = "g" + std::to_string(i);
    for (size_t i = 0; i < tid.size(); ++i) tid[i] = "t" + std::to_string(i);
    const auto gen = EmbeddingIndex::from_raw(gid, g), train = EmbeddingIndex::from_raw(tid, t);

    std::vector<MemorizationCandidate> ref;
    for (size_t i = 0; i < gid.size(); ++i) {
        MemorizationCandidate best{gid[i], "", -2.0};
        for (size_t j = 0; j < tid.size(); ++j) {
            const double c = gen.vectors.row(static_cast<Eigen::Index>(i)).dot(train.vectors.row(static_cast<Eigen::Index>(j)));
            if (c > best.cosine) best = {gid[i], tid[j], c};
        }
        ref.push_back(best);
    }
    std::sort(ref.begin(), ref.end(), [](const auto& a, const auto& b) { return a.cosine > b.cosine; });
    const auto got = memorization_candidates(gen, train, 50);
    REQUIRE(got.size() == 50);
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].gen_id == ref[i].gen_id);
        CHECK(got[i].train_id == ref[i].train_id);
        CHECK(got[i].cosine == doctest::Approx(ref[i].cosine).epsilon(1e-12));
    }
    CHECK(memorization_candidates(gen, train, 500).size() == 60);

    const auto other = EmbeddingIndex::from_raw({"x"}, Matrix::Ones(1, 4));
    CHECK_THROWS_AS(memorization_candidates(gen, other), DataError);
}

TEST_CASE("embedding index storage and validation") {
    TempDir dir("emb_index");
    Rng rng(3);
    const auto idx = EmbeddingIndex::from_raw({"a", "b", "c"}, random_matrix(3, 5, rng));
    idx.save(dir / "e.saot");
    const auto back = EmbeddingIndex::load(dir / "e.saot");
    CHECK(back.ids == idx.ids);
    CHECK((back.vectors - idx.vectors).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(EmbeddingIndex::from_raw({"a", "a"}, random_matrix(2, 5, rng)), DataError);
    CHECK_THROWS_AS(EmbeddingIndex::from_raw({"a"}, Matrix::Zero(1, 5)), DataError);
    CHECK_THROWS_AS(EmbeddingIndex::from_raw({"a"}, random_matrix(2, 5, rng)), DataError);
}
