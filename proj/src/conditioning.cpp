#include "sao/conditioning.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sao/container.hpp"
#include "sao/error.hpp"
#include "sao/rng.hpp"

namespace sao::cond {

namespace {

std::vector<std::string> split_whitespace(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::filesystem::path index_path(const std::filesystem::path& p) {
    auto q = p;
    q += ".index";
    return q;
}

}  // namespace

Matrix toy_text_embed(const std::string& prompt, int dim, int max_tokens) {
    if (dim < 1) throw std::invalid_argument("embedding dim must be positive");
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be positive");
    auto words = split_whitespace(prompt);
    if (words.size() > static_cast<size_t>(max_tokens)) words.resize(static_cast<size_t>(max_tokens));
    if (words.empty()) return Matrix::Zero(1, dim);
    Matrix out(static_cast<Eigen::Index>(words.size()), dim);
    for (size_t i = 0; i < words.size(); ++i) {
        Rng rng(fnv1a(words[i]));
        double norm = 0.0;
        for (int d = 0; d < dim; ++d) {
            const double v = rng.normal();
            out(static_cast<Eigen::Index>(i), d) = v;
            norm += v * v;
        }
        out.row(static_cast<Eigen::Index>(i)) /= std::sqrt(norm);
    }
    return out;
}

ToyTextEmbedder::ToyTextEmbedder(int dim, int max_tokens) : dim_(dim), max_tokens_(max_tokens) {
    if (dim < 1 || max_tokens < 1) throw std::invalid_argument("toy embedder needs positive dim and max_tokens");
}

TokenEmbedding ToyTextEmbedder::embed(const std::string& prompt) const {
    TokenEmbedding e;
    e.tokens = toy_text_embed(prompt, dim_, max_tokens_);
    e.mask.assign(static_cast<size_t>(e.tokens.rows()), 1);
    return e;
}

std::string prompt_key(const std::string& prompt) { return io::sha256_hex(prompt).substr(0, 32); }

std::map<std::string, Matrix> import_text_embeddings(const std::filesystem::path& path, int expected_dim) {
    const auto container = io::TensorContainer::load(path);
    std::map<std::string, Matrix> table;
    std::ifstream idx(index_path(path));
    if (!idx) {
        if (container.size() == 0) {
            std::cerr << "warning: embedding file " << path.string() << " is empty\n";
            return table;
        }
        throw DataError("missing embedding index " + index_path(path).string());
    }
    for (std::string line; std::getline(idx, line);) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("malformed embedding index line: " + line);
        const std::string key = line.substr(0, tab), prompt = line.substr(tab + 1);
        if (key != prompt_key(prompt)) throw DataError("embedding index hash mismatch for prompt \"" + prompt + "\"");
        const std::string name = "prompt." + key;
        if (!container.contains(name)) throw DataError("embedding for prompt \"" + prompt + "\" missing from container");
        const Tensor& t = container.get(name);
        if (t.ndim() != 2) throw DataError("embedding for prompt \"" + prompt + "\" must be [tokens, dim]");
        if (expected_dim > 0 && t.dim(1) != expected_dim)
            throw DataError("embedding for prompt \"" + prompt + "\" has dim " + std::to_string(t.dim(1)) + ", expected " +
                            std::to_string(expected_dim));
        table[prompt] = to_matrix(t);
    }
    if (table.empty()) std::cerr << "warning: embedding file " << path.string() << " is empty\n";
    return table;
}

void export_text_embeddings(const std::map<std::string, Matrix>& table, const std::filesystem::path& path) {
    io::TensorContainer c;
    c.manifest = R"({"type":"text_embeddings"})";
    std::ofstream idx(index_path(path), std::ios::trunc);
    if (!idx) throw DataError("cannot write " + index_path(path).string());
    for (const auto& [prompt, m] : table) {
        if (prompt.find('\n') != std::string::npos) throw DataError("prompts must not contain newlines");
        const std::string key = prompt_key(prompt);
        c.put("prompt." + key, to_tensor(m));
        idx << key << '\t' << prompt << '\n';
    }
    c.save(path);
}

ImportedTextEmbedder::ImportedTextEmbedder(const std::filesystem::path& path, int dim, bool strict,
                                           std::shared_ptr<const TextEmbedder> fallback)
    : dim_(dim), strict_(strict), fallback_(std::move(fallback)), table_(import_text_embeddings(path, dim)) {
    if (fallback_ && fallback_->dim() != dim) throw std::invalid_argument("fallback embedder dim differs");
}

TokenEmbedding ImportedTextEmbedder::embed(const std::string& prompt) const {
    const auto it = table_.find(prompt);
    if (it != table_.end()) {
        TokenEmbedding e;
        e.tokens = it->second;
        e.mask.assign(static_cast<size_t>(e.tokens.rows()), 1);
        return e;
    }
    if (strict_ || !fallback_) throw DataError("no imported embedding for prompt \"" + prompt + "\"");
    return fallback_->embed(prompt);
}

Vector timestep_embed(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("sinusoidal embedding dim must be even, got " + std::to_string(dim));
    const int half = dim / 2;
    const double s = 1000.0 * t;
    Vector out(dim);
    for (int i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(10000.0) * i / half);
        out[i] = std::sin(s * f);
        out[half + i] = std::cos(s * f);
    }
    return out;
}

void TimingCondition::validate() const {
    if (!std::isfinite(seconds_start) || seconds_start < 0) throw DataError("seconds_start must be >= 0");
    if (!(seconds_total > 0) || seconds_total > kWindowSeconds)
        throw DataError("seconds_total must be in (0, 47], got " + std::to_string(seconds_total));
}

TimingFeatures timing_embed(const TimingCondition& tc, int dim) {
    tc.validate();
    return {timestep_embed(tc.seconds_start / kWindowSeconds, dim), timestep_embed(tc.seconds_total / kWindowSeconds, dim)};
}

}  // namespace sao::cond
