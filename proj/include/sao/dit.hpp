#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sao/conditioning.hpp"
#include "sao/config.hpp"
#include "sao/nn.hpp"

// Transformer that predicts v for noised latent sequences.
namespace sao::dit {

struct DitConfig {
    int depth = 8;
    int embed_dim = 256;
    int heads = 8;
    double mlp_expansion = 4.0;
    int latent_channels = 64;
    double rope_fraction = 0.5;
    int text_dim = 768;
    int cond_feature_dim = 256;  // width of the sinusoidal timestep/timing features

    void validate() const;
    int head_dim() const { return embed_dim / heads; }
    int rotary_dims() const;
    int mlp_hidden() const;

    std::string to_json() const;
    static DitConfig from_json(const std::string& json);
    // Keys under "dit." (depth, embed_dim, heads, mlp_expansion, text_dim,
    // cond_feature_dim), falling back to the defaults above.
    static DitConfig from_config(const Config& c);
};

struct ConditioningBundle {
    Tensor crossattn_tokens;               // [K, embed_dim]
    std::vector<uint8_t> crossattn_mask;   // K entries, 1 = attend
    Tensor prepend_tokens;                 // [P, embed_dim]

    int64_t cross_count() const { return crossattn_tokens.dim(0); }
    int64_t prepend_count() const { return prepend_tokens.dim(0); }
};

// Rotates the first fraction*head_dim columns of qk [T, head_dim].
Tensor rope_half(const Tensor& qk, std::span<const Real> positions, double fraction = 0.5);

// [timing start ; timing total ; timestep], P = 3.
Tensor build_prepend(const Tensor& timing_tokens, const Tensor& timestep_token);
// [text tokens ; timing start ; timing total], K = K_t + 2. Text may be
// undefined (null conditioning).
Tensor build_crossattn(const Tensor& text_tokens, const Tensor& timing_tokens);

class Dit {
public:
    Dit(DitConfig cfg, uint64_t seed);

    const DitConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    Tensor project_text(const cond::TokenEmbedding& text) const;  // [K_t, embed_dim]
    Tensor timing_tokens_prepend(const cond::TimingCondition& tc) const;  // [2, embed_dim]
    Tensor timing_tokens_cross(const cond::TimingCondition& tc) const;    // [2, embed_dim]
    Tensor timestep_token(double t) const;                                // [1, embed_dim]

    ConditioningBundle condition(const cond::TokenEmbedding& text, const cond::TimingCondition& tc, double t) const;
    // Classifier-free guidance branch: no text tokens, timing only.
    ConditioningBundle null_condition(const cond::TimingCondition& tc, double t) const;

    // x [latent_channels, T] -> v [latent_channels, T].
    Tensor forward(const Tensor& x, const ConditioningBundle& cond) const;

    void save(const std::filesystem::path& path) const;
    static Dit load(const std::filesystem::path& path);

private:
    struct Block {
        Tensor norm_self, norm_cross, norm_mlp;  // gains only
        nn::Linear q, k, v, o;
        nn::Linear cq, ck, cv, co;
        nn::Linear up_a, up_b, down;
    };

    Tensor self_attention(const Block& b, const Tensor& h, std::span<const Real> positions) const;
    Tensor cross_attention(const Block& b, const Tensor& h, const ConditioningBundle& cond) const;
    Tensor timing_tokens(const nn::Linear& proj, const cond::TimingCondition& tc) const;

    DitConfig cfg_;
    nn::ParamStore params_;
    nn::Linear in_proj_, out_proj_;
    nn::Linear text_proj_;
    nn::Linear timing_prepend_, timing_cross_;
    nn::Linear timestep_1_, timestep_2_;
    std::vector<Block> blocks_;
};

}  // namespace sao::dit
