#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sao/types.hpp"

namespace sao::cond {

inline constexpr double kWindowSeconds = 47.0;
inline constexpr int kDefaultMaxTokens = 128;

// Text tokens [K_t, dim] plus a per-token attention mask (1 = attend).
struct TokenEmbedding {
    Matrix tokens;
    std::vector<uint8_t> mask;

    int64_t count() const { return tokens.rows(); }
    int64_t dim() const { return tokens.cols(); }
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual TokenEmbedding embed(const std::string& prompt) const = 0;
    virtual int dim() const = 0;
};

// Whitespace tokens, each mapped to a unit vector drawn from a generator
// seeded by the token's FNV-1a hash. The empty prompt yields one zero token.
Matrix toy_text_embed(const std::string& prompt, int dim, int max_tokens = kDefaultMaxTokens);

class ToyTextEmbedder : public TextEmbedder {
public:
    explicit ToyTextEmbedder(int dim, int max_tokens = kDefaultMaxTokens);
    TokenEmbedding embed(const std::string& prompt) const override;
    int dim() const override { return dim_; }

private:
    int dim_;
    int max_tokens_;
};

// Precomputed embeddings loaded from a tensor container. Tensor names are
// "prompt.<hash>" (see prompt_key); the sidecar "<file>.index" holds one
// "<hash>\t<prompt>" line per entry.
class ImportedTextEmbedder : public TextEmbedder {
public:
    ImportedTextEmbedder(const std::filesystem::path& path, int dim, bool strict,
                         std::shared_ptr<const TextEmbedder> fallback);

    TokenEmbedding embed(const std::string& prompt) const override;
    int dim() const override { return dim_; }
    bool contains(const std::string& prompt) const { return table_.count(prompt) > 0; }
    size_t size() const { return table_.size(); }

private:
    int dim_;
    bool strict_;
    std::shared_ptr<const TextEmbedder> fallback_;
    std::map<std::string, Matrix> table_;
};

std::string prompt_key(const std::string& prompt);
std::map<std::string, Matrix> import_text_embeddings(const std::filesystem::path& path, int expected_dim = -1);
void export_text_embeddings(const std::map<std::string, Matrix>& table, const std::filesystem::path& path);

// [sin(s*f_0..f_{h-1}), cos(s*f_0..f_{h-1})] with s = 1000*t and
// f_i = exp(-ln(10000) * i / h), h = dim / 2.
Vector timestep_embed(double t, int dim);

struct TimingCondition {
    double seconds_start = 0.0;
    double seconds_total = kWindowSeconds;

    void validate() const;
};

struct TimingFeatures {
    Vector start;
    Vector total;
};
// Sinusoidal features of seconds / kWindowSeconds; the learned projection
// lives with the model that consumes them.
TimingFeatures timing_embed(const TimingCondition& tc, int dim);

}  // namespace sao::cond
