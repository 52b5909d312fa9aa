#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sao/conditioning.hpp"
#include "sao/container.hpp"
#include "sao/error.hpp"
#include "support.hpp"

using namespace sao;
using namespace sao::cond;
using sao::testing::TempDir;

TEST_CASE("toy text embedding") {
    const Matrix a = toy_text_embed("a quiet forest", 32);
    CHECK(a.rows() == 3);
    CHECK(a.cols() == 32);
    CHECK(a == toy_text_embed("a quiet forest", 32));
    for (Eigen::Index r = 0; r < a.rows(); ++r) CHECK(a.row(r).norm() == doctest::Approx(1.0).epsilon(1e-12));

    const Matrix ab = toy_text_embed("a b", 16), ba = toy_text_embed("b a", 16);
    CHECK(ab.row(0) == ba.row(1));
    CHECK(ab.row(1) == ba.row(0));
    CHECK(ab != ba);

    const Matrix empty = toy_text_embed("", 16);
    CHECK(empty.rows() == 1);
    CHECK(empty.cwiseAbs().maxCoeff() == 0.0);
    CHECK(toy_text_embed("   \t ", 16) == empty);

    std::string many;
    for (int i = 0; i < 300; ++i) many += "w" + std::to_string(i) + " ";
    CHECK(toy_text_embed(many, 8).rows() == kDefaultMaxTokens);
    CHECK(ToyTextEmbedder(8, 5).embed(many).count() == 5);
}

TEST_CASE("toy text embedding is pinned across platforms") {
    // The token vector depends only on FNV-1a, mt19937_64 and our normal draw.
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    Rng rng(fnv1a("rain"));
    std::vector<double> v(4);
    double n = 0;
    for (auto& x : v) {
        x = rng.normal();
        n += x * x;
    }
    const Matrix e = toy_text_embed("rain", 4);
    for (int i = 0; i < 4; ++i) CHECK(e(0, i) == v[static_cast<size_t>(i)] / std::sqrt(n));
}

TEST_CASE("imported embeddings: lookup, fallback and strict mode") {
    TempDir dir("cond_import");
    std::map<std::string, Matrix> table;
    table["storm at sea"] = Matrix::Constant(3, 8, 0.25);
    table["soft piano"] = Matrix::Constant(2, 8, -0.5);
    export_text_embeddings(table, dir / "emb.saot");

    const auto loaded = import_text_embeddings(dir / "emb.saot", 8);
    CHECK(loaded.size() == 2);
    CHECK(loaded.at("soft piano") == table["soft piano"]);

    auto toy = std::make_shared<ToyTextEmbedder>(8);
    const ImportedTextEmbedder lenient(dir / "emb.saot", 8, false, toy);
    CHECK(lenient.embed("storm at sea").tokens == table["storm at sea"]);
    CHECK(lenient.embed("unlisted prompt").tokens == toy_text_embed("unlisted prompt", 8));

    const ImportedTextEmbedder strict(dir / "emb.saot", 8, true, toy);
    CHECK_THROWS_AS(strict.embed("unlisted prompt"), DataError);
}

TEST_CASE("imported embeddings: validation errors") {
    TempDir dir("cond_import_bad");
    std::map<std::string, Matrix> table;
    table["wrong width"] = Matrix::Constant(1, 5, 1.0);
    export_text_embeddings(table, dir / "emb.saot");
    try {
        import_text_embeddings(dir / "emb.saot", 8);
        FAIL("expected a dim mismatch error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("wrong width") != std::string::npos);
    }

    io::TensorContainer c;
    c.save(dir / "empty.saot");
    CHECK(import_text_embeddings(dir / "empty.saot", 8).empty());

    std::ofstream(dir / "junk.saot") << "nope";
    CHECK_THROWS_AS(import_text_embeddings(dir / "junk.saot", 8), DataError);
}

TEST_CASE("timestep embedding") {
    const Vector z = timestep_embed(0.0, 16);
    for (int i = 0; i < 8; ++i) {
        CHECK(z[i] == 0.0);
        CHECK(z[8 + i] == 1.0);
    }
    CHECK(z.norm() == doctest::Approx(std::sqrt(8.0)));
    std::vector<Vector> vs;
    for (int i = 1; i <= 9; ++i) vs.push_back(timestep_embed(0.1 * i, 16));
    for (size_t i = 0; i < vs.size(); ++i)
        for (size_t j = i + 1; j < vs.size(); ++j) CHECK((vs[i] - vs[j]).norm() > 1e-3);
    CHECK_THROWS(timestep_embed(0.5, 7));
    // frequency ladder f_i = 10000^(-i/half) applied to 1000 t
    const Vector e = timestep_embed(0.3, 8);
    CHECK(e[1] == doctest::Approx(std::sin(300.0 * std::pow(10000.0, -0.25))));
}

TEST_CASE("timing embedding") {
    CHECK_NOTHROW(timing_embed({0.0, 47.0}, 16));
    CHECK_THROWS_AS(timing_embed({0.0, 0.0}, 16), DataError);
    CHECK_THROWS_AS(timing_embed({0.0, 47.5}, 16), DataError);
    CHECK_THROWS_AS(timing_embed({-1.0, 10.0}, 16), DataError);
    const auto a = timing_embed({0.0, 20.0}, 16), b = timing_embed({0.0, 30.0}, 16);
    CHECK((a.total - b.total).norm() > 1e-3);
    CHECK(a.start == b.start);
    CHECK(a.total == timestep_embed(20.0 / 47.0, 16));
}
