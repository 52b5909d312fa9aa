#include "sao/dit.hpp"

#include <cmath>
#include <json.hpp>

#include "sao/error.hpp"

namespace sao::dit {

using json = nlohmann::json;

void DitConfig::validate() const {
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
        throw std::invalid_argument("embed_dim must be a positive multiple of heads");
    if (!(mlp_expansion > 0)) throw std::invalid_argument("mlp_expansion must be positive");
    if (latent_channels != 64) throw std::invalid_argument("latent_channels is fixed at 64");
    if (rope_fraction != 0.5) throw std::invalid_argument("rope_fraction is fixed at 0.5");
    if (rotary_dims() % 2 != 0)
        throw std::invalid_argument("rotated width fraction*head_dim must be even, got " + std::to_string(rotary_dims()));
    if (text_dim < 1) throw std::invalid_argument("text_dim must be positive");
    if (cond_feature_dim < 2 || cond_feature_dim % 2 != 0) throw std::invalid_argument("cond_feature_dim must be even");
}

int DitConfig::rotary_dims() const { return static_cast<int>(std::lround(rope_fraction * head_dim())); }

int DitConfig::mlp_hidden() const { return std::max(1, static_cast<int>(std::lround(mlp_expansion * embed_dim))); }

std::string DitConfig::to_json() const {
    return json{{"depth", depth},         {"embed_dim", embed_dim},       {"heads", heads},
                {"mlp_expansion", mlp_expansion}, {"latent_channels", latent_channels},
                {"rope_fraction", rope_fraction}, {"text_dim", text_dim}, {"cond_feature_dim", cond_feature_dim}}
        .dump();
}

DitConfig DitConfig::from_json(const std::string& s) {
    DitConfig c;
    try {
        const auto j = json::parse(s);
        c.depth = j.at("depth").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.heads = j.at("heads").get<int>();
        c.mlp_expansion = j.at("mlp_expansion").get<double>();
        c.latent_channels = j.at("latent_channels").get<int>();
        c.rope_fraction = j.at("rope_fraction").get<double>();
        c.text_dim = j.at("text_dim").get<int>();
        c.cond_feature_dim = j.at("cond_feature_dim").get<int>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad DiT config manifest: ") + e.what());
    }
    c.validate();
    return c;
}

DitConfig DitConfig::from_config(const Config& cfg) {
    DitConfig c;
    c.depth = cfg.get_int("dit.depth", c.depth);
    c.embed_dim = cfg.get_int("dit.embed_dim", c.embed_dim);
    c.heads = cfg.get_int("dit.heads", c.heads);
    c.mlp_expansion = cfg.get_double("dit.mlp_expansion", c.mlp_expansion);
    c.text_dim = cfg.get_int("dit.text_dim", c.text_dim);
    c.cond_feature_dim = cfg.get_int("dit.cond_feature_dim", c.cond_feature_dim);
    c.validate();
    return c;
}

Tensor rope_half(const Tensor& qk, std::span<const Real> positions, double fraction) {
    if (qk.ndim() != 2) throw ShapeError("rope_half expects [T, head_dim]");
    const double width = fraction * static_cast<double>(qk.dim(1));
    const int rotated = static_cast<int>(std::lround(width));
    if (std::abs(width - rotated) > 1e-9 || rotated % 2 != 0)
        throw std::invalid_argument("rope_half: rotated width must be an even integer");
    return rope(qk, positions, rotated);
}

Tensor build_prepend(const Tensor& timing_tokens, const Tensor& timestep_token) {
    if (timing_tokens.ndim() != 2 || timing_tokens.dim(0) != 2) throw ShapeError("expected 2 timing tokens");
    if (timestep_token.ndim() != 2 || timestep_token.dim(0) != 1) throw ShapeError("expected 1 timestep token");
    return concat_rows({timing_tokens, timestep_token});
}

Tensor build_crossattn(const Tensor& text_tokens, const Tensor& timing_tokens) {
    if (timing_tokens.ndim() != 2 || timing_tokens.dim(0) != 2) throw ShapeError("expected 2 timing tokens");
    if (!text_tokens.defined() || text_tokens.dim(0) == 0) return timing_tokens;
    return concat_rows({text_tokens, timing_tokens});
}

Dit::Dit(DitConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const int d = cfg_.embed_dim, f = cfg_.cond_feature_dim, hidden = cfg_.mlp_hidden();
    in_proj_ = nn::Linear::create(params_, "in_proj", cfg_.latent_channels, d, true, rng);
    text_proj_ = nn::Linear::create(params_, "cond.text", cfg_.text_dim, d, false, rng);
    timing_prepend_ = nn::Linear::create(params_, "cond.timing_prepend", f, d, true, rng);
    timing_cross_ = nn::Linear::create(params_, "cond.timing_cross", f, d, true, rng);
    timestep_1_ = nn::Linear::create(params_, "cond.timestep1", f, d, true, rng);
    timestep_2_ = nn::Linear::create(params_, "cond.timestep2", d, d, true, rng);
    for (int i = 0; i < cfg_.depth; ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        Block b;
        b.norm_self = params_.constant(p + "norm_self.gain", {d}, 1.0);
        b.norm_cross = params_.constant(p + "norm_cross.gain", {d}, 1.0);
        b.norm_mlp = params_.constant(p + "norm_mlp.gain", {d}, 1.0);
        b.q = nn::Linear::create(params_, p + "self.q", d, d, false, rng);
        b.k = nn::Linear::create(params_, p + "self.k", d, d, false, rng);
        b.v = nn::Linear::create(params_, p + "self.v", d, d, false, rng);
        b.o = nn::Linear::create(params_, p + "self.o", d, d, false, rng);
        b.cq = nn::Linear::create(params_, p + "cross.q", d, d, false, rng);
        b.ck = nn::Linear::create(params_, p + "cross.k", d, d, false, rng);
        b.cv = nn::Linear::create(params_, p + "cross.v", d, d, false, rng);
        b.co = nn::Linear::create(params_, p + "cross.o", d, d, false, rng);
        b.up_a = nn::Linear::create(params_, p + "mlp.up_a", d, hidden, false, rng);
        b.up_b = nn::Linear::create(params_, p + "mlp.up_b", d, hidden, false, rng);
        b.down = nn::Linear::create(params_, p + "mlp.down", hidden, d, false, rng);
        blocks_.push_back(std::move(b));
    }
    out_proj_ = nn::Linear::create(params_, "out_proj", d, cfg_.latent_channels, true, rng);
}

Tensor Dit::project_text(const cond::TokenEmbedding& text) const {
    if (text.dim() != cfg_.text_dim)
        throw DataError("text embedding dim " + std::to_string(text.dim()) + " does not match model text_dim " +
                        std::to_string(cfg_.text_dim));
    return text_proj_.forward(to_tensor(text.tokens));
}

Tensor Dit::timing_tokens(const nn::Linear& proj, const cond::TimingCondition& tc) const {
    const auto feats = cond::timing_embed(tc, cfg_.cond_feature_dim);
    Matrix m(2, cfg_.cond_feature_dim);
    m.row(0) = feats.start.transpose();
    m.row(1) = feats.total.transpose();
    return proj.forward(to_tensor(m));
}

Tensor Dit::timing_tokens_prepend(const cond::TimingCondition& tc) const { return timing_tokens(timing_prepend_, tc); }

Tensor Dit::timing_tokens_cross(const cond::TimingCondition& tc) const { return timing_tokens(timing_cross_, tc); }

Tensor Dit::timestep_token(double t) const {
    const Vector f = cond::timestep_embed(t, cfg_.cond_feature_dim);
    Matrix m = f.transpose();
    return timestep_2_.forward(silu(timestep_1_.forward(to_tensor(m))));
}

ConditioningBundle Dit::condition(const cond::TokenEmbedding& text, const cond::TimingCondition& tc, double t) const {
    if (text.mask.size() != static_cast<size_t>(text.count())) throw DataError("text mask length differs from token count");
    ConditioningBundle b;
    b.crossattn_tokens = build_crossattn(project_text(text), timing_tokens_cross(tc));
    b.crossattn_mask = text.mask;
    b.crossattn_mask.push_back(1);
    b.crossattn_mask.push_back(1);
    b.prepend_tokens = build_prepend(timing_tokens_prepend(tc), timestep_token(t));
    return b;
}

ConditioningBundle Dit::null_condition(const cond::TimingCondition& tc, double t) const {
    ConditioningBundle b;
    b.crossattn_tokens = build_crossattn(Tensor(), timing_tokens_cross(tc));
    b.crossattn_mask = {1, 1};
    b.prepend_tokens = build_prepend(timing_tokens_prepend(tc), timestep_token(t));
    return b;
}

namespace {

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, int heads, std::span<const uint8_t> mask,
              std::span<const Real> q_pos, std::span<const Real> k_pos, int rotary) {
    const int64_t d = q.dim(1), hd = d / heads;
    const Real inv = 1.0 / std::sqrt(static_cast<Real>(hd));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
        Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
        const Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
        if (rotary > 0) {
            qh = rope(qh, q_pos, rotary);
            kh = rope(kh, k_pos, rotary);
        }
        const Tensor w = softmax_rows(scale(matmul_nt(qh, kh), inv), mask);
        outs.push_back(matmul(w, vh));
    }
    return heads == 1 ? outs.front() : concat_cols(outs);
}

}  // namespace

Tensor Dit::self_attention(const Block& b, const Tensor& h, std::span<const Real> positions) const {
    return b.o.forward(attend(b.q.forward(h), b.k.forward(h), b.v.forward(h), cfg_.heads, {}, positions, positions,
                              cfg_.rotary_dims()));
}

Tensor Dit::cross_attention(const Block& b, const Tensor& h, const ConditioningBundle& cond) const {
    const Tensor& c = cond.crossattn_tokens;
    return b.co.forward(attend(b.cq.forward(h), b.ck.forward(c), b.cv.forward(c), cfg_.heads, cond.crossattn_mask, {}, {}, 0));
}

Tensor Dit::forward(const Tensor& x, const ConditioningBundle& cond) const {
    if (x.ndim() != 2 || x.dim(0) != cfg_.latent_channels)
        throw ShapeError("DiT input must be [" + std::to_string(cfg_.latent_channels) + ", T], got " + shape_str(x.shape()));
    const int64_t d = cfg_.embed_dim;
    if (!cond.prepend_tokens.defined() || cond.prepend_tokens.ndim() != 2 || cond.prepend_tokens.dim(1) != d)
        throw ShapeError("prepend tokens must be [P, embed_dim]");
    if (!cond.crossattn_tokens.defined() || cond.crossattn_tokens.ndim() != 2 || cond.crossattn_tokens.dim(1) != d ||
        cond.crossattn_tokens.dim(0) < 1)
        throw ShapeError("cross-attention tokens must be [K >= 1, embed_dim]");
    if (cond.crossattn_mask.size() != static_cast<size_t>(cond.crossattn_tokens.dim(0)))
        throw ShapeError("cross-attention mask length differs from token count");

    const int64_t t_len = x.dim(1), p = cond.prepend_tokens.dim(0);
    Tensor h = concat_rows({cond.prepend_tokens, in_proj_.forward(transpose(x))});
    std::vector<Real> positions(static_cast<size_t>(p + t_len));
    for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<Real>(i);
    for (const auto& b : blocks_) {
        h = add(h, self_attention(b, layer_norm(h, b.norm_self), positions));
        h = add(h, cross_attention(b, layer_norm(h, b.norm_cross), cond));
        const Tensor n = layer_norm(h, b.norm_mlp);
        h = add(h, b.down.forward(mul(b.up_a.forward(n), silu(b.up_b.forward(n)))));
    }
    return transpose(out_proj_.forward(slice_rows(h, p, p + t_len)));
}

void Dit::save(const std::filesystem::path& path) const {
    io::TensorContainer c;
    c.manifest = json{{"type", "dit"}, {"config", json::parse(cfg_.to_json())}}.dump();
    params_.export_to(c);
    c.save(path);
}

Dit Dit::load(const std::filesystem::path& path) {
    const auto c = io::TensorContainer::load(path);
    json j;
    try {
        j = json::parse(c.manifest);
    } catch (const json::exception& e) {
        throw DataError("bad checkpoint manifest in " + path.string());
    }
    if (!j.contains("config") || j.value("type", "") != "dit") throw DataError(path.string() + " is not a DiT checkpoint");
    Dit model(DitConfig::from_json(j["config"].dump()), 0);
    model.params_.import_from(c);
    return model;
}

}  // namespace sao::dit
