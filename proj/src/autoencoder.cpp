#include "sao/autoencoder.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sao/error.hpp"

namespace sao::ae {

using json = nlohmann::json;

void AutoencoderConfig::validate() const {
    if (block_strides.size() != 5) throw std::invalid_argument("autoencoder needs exactly 5 blocks");
    if (block_channels.size() != block_strides.size())
        throw std::invalid_argument("block_channels must have one entry per block");
    for (int s : block_strides)
        if (s < 2 || s % 2 != 0) throw std::invalid_argument("block strides must be even and >= 2");
    if (total_stride() != kTotalStride)
        throw std::invalid_argument("product of block strides must be 2048, got " + std::to_string(total_stride()));
    for (int c : block_channels)
        if (c < 1) throw std::invalid_argument("block channels must be positive");
    if (resnet_layers_per_block < 0) throw std::invalid_argument("resnet_layers_per_block must be >= 0");
    if (resnet_layers_per_block > 0 && dilation_schedule.empty())
        throw std::invalid_argument("dilation_schedule must not be empty");
    for (int d : dilation_schedule)
        if (d < 1) throw std::invalid_argument("dilations must be >= 1");
    if (latent_channels != kLatentChannels) throw std::invalid_argument("latent_channels must be 64");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
}

int AutoencoderConfig::total_stride() const {
    return std::accumulate(block_strides.begin(), block_strides.end(), 1, std::multiplies<>());
}

std::string AutoencoderConfig::to_json() const {
    json j = {{"type", "autoencoder"},
              {"block_strides", block_strides},
              {"block_channels", block_channels},
              {"resnet_layers_per_block", resnet_layers_per_block},
              {"dilation_schedule", dilation_schedule},
              {"latent_channels", latent_channels},
              {"kernel_size", kernel_size}};
    return j.dump();
}

AutoencoderConfig AutoencoderConfig::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.value("type", "") != "autoencoder") throw DataError("manifest does not describe an autoencoder");
        AutoencoderConfig c;
        c.block_strides = j.at("block_strides").get<std::vector<int>>();
        c.block_channels = j.at("block_channels").get<std::vector<int>>();
        c.resnet_layers_per_block = j.at("resnet_layers_per_block").get<int>();
        c.dilation_schedule = j.at("dilation_schedule").get<std::vector<int>>();
        c.latent_channels = j.at("latent_channels").get<int>();
        c.kernel_size = j.at("kernel_size").get<int>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed autoencoder manifest: ") + e.what());
    }
}

AutoencoderConfig AutoencoderConfig::from_config(const Config& c) {
    AutoencoderConfig a;
    a.block_strides = c.get_ints("autoencoder.strides", a.block_strides);
    a.block_channels = c.get_ints("autoencoder.channels", a.block_channels);
    a.resnet_layers_per_block = static_cast<int>(c.get_int("autoencoder.resnet_layers", a.resnet_layers_per_block));
    a.dilation_schedule = c.get_ints("autoencoder.dilations", a.dilation_schedule);
    a.kernel_size = static_cast<int>(c.get_int("autoencoder.kernel_size", a.kernel_size));
    a.validate();
    return a;
}

void LatentSeq::validate() const {
    if (values.rows() != kLatentChannels) throw DataError("latent sequence must have 64 channels");
    if (values.cols() < 1) throw DataError("latent sequence is empty");
    if (!values.allFinite()) throw DataError("latent sequence contains non-finite values");
}

void GaussianLatentParams::validate() const {
    if (mean.rows() != log_variance.rows() || mean.cols() != log_variance.cols())
        throw DataError("latent mean and log-variance shapes differ");
    if (!log_variance.allFinite() || !mean.allFinite()) throw DataError("latent parameters contain non-finite values");
}

Autoencoder::ResUnit Autoencoder::make_unit(const std::string& name, int channels, int dilation, Rng& rng) {
    const int k = cfg_.kernel_size;
    ResUnit u;
    u.snake1 = params_.constant(name + ".snake1", {channels}, 1.0);
    u.dilated = nn::WNConv1d::create(params_, name + ".conv1", channels, channels, k, rng,
                                     {1, dilation, dilation * (k - 1) / 2, dilation * (k - 1) / 2});
    u.snake2 = params_.constant(name + ".snake2", {channels}, 1.0);
    u.pointwise = nn::WNConv1d::create(params_, name + ".conv2", channels, channels, 1, rng, {});
    return u;
}

Autoencoder::Autoencoder(AutoencoderConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const int k = cfg_.kernel_size;
    const int pad = (k - 1) / 2;
    const auto& ch = cfg_.block_channels;
    const int nblocks = static_cast<int>(ch.size());
    auto block_in = [&](int i) { return i == 0 ? ch[0] : ch[static_cast<size_t>(i - 1)]; };
    auto dilation = [&](int j) { return cfg_.dilation_schedule[static_cast<size_t>(j) % cfg_.dilation_schedule.size()]; };

    enc_in_ = nn::WNConv1d::create(params_, "encoder.in", 2, ch[0], k, rng, {1, 1, pad, pad});
    for (int i = 0; i < nblocks; ++i) {
        const std::string name = "encoder.block" + std::to_string(i);
        const int s = cfg_.block_strides[static_cast<size_t>(i)];
        EncoderBlock b;
        for (int j = 0; j < cfg_.resnet_layers_per_block; ++j)
            b.units.push_back(make_unit(name + ".res" + std::to_string(j), block_in(i), dilation(j), rng));
        b.snake = params_.constant(name + ".snake", {block_in(i)}, 1.0);
        b.down = nn::WNConv1d::create(params_, name + ".down", block_in(i), ch[static_cast<size_t>(i)], 2 * s, rng,
                                      {s, 1, s / 2, s / 2});
        enc_blocks_.push_back(std::move(b));
    }
    enc_out_snake_ = params_.constant("encoder.out.snake", {ch.back()}, 1.0);
    enc_out_ = nn::WNConv1d::create(params_, "encoder.out", ch.back(), 2 * cfg_.latent_channels, 3, rng, {1, 1, 1, 1});

    dec_in_ = nn::WNConv1d::create(params_, "decoder.in", cfg_.latent_channels, ch.back(), k, rng, {1, 1, pad, pad});
    for (int i = nblocks - 1; i >= 0; --i) {
        const std::string name = "decoder.block" + std::to_string(nblocks - 1 - i);
        const int s = cfg_.block_strides[static_cast<size_t>(i)];
        DecoderBlock b;
        b.snake = params_.constant(name + ".snake", {ch[static_cast<size_t>(i)]}, 1.0);
        b.up = nn::WNConvTranspose1d::create(params_, name + ".up", ch[static_cast<size_t>(i)], block_in(i), 2 * s, s,
                                             s / 2, rng);
        for (int j = 0; j < cfg_.resnet_layers_per_block; ++j)
            b.units.push_back(make_unit(name + ".res" + std::to_string(j), block_in(i), dilation(j), rng));
        dec_blocks_.push_back(std::move(b));
    }
    dec_out_snake_ = params_.constant("decoder.out.snake", {ch[0]}, 1.0);
    dec_out_ = nn::WNConv1d::create(params_, "decoder.out", ch[0], 2, k, rng, {1, 1, pad, pad});
}

namespace {

// Effective kernel g * v / ||v|| computed directly, outside the graph.
Tensor raw_effective_kernel(const Tensor& v, const Tensor& g) {
    const int64_t rows = v.dim(0), width = v.numel() / rows;
    Eigen::Map<const Matrix> vm(v.data().data(), rows, width);
    Matrix w = vm;
    for (int64_t r = 0; r < rows; ++r) w.row(r) *= g.data()[static_cast<size_t>(r)] / vm.row(r).norm();
    return Tensor::from(v.shape(), std::vector<Real>(w.data(), w.data() + w.size()));
}

}  // namespace

Tensor Autoencoder::conv(const nn::WNConv1d& c, const Tensor& x) const {
    if (reparameterized_forward) return c.forward(x);
    return conv1d(x, raw_effective_kernel(c.direction, c.magnitude), c.bias, c.options);
}

Tensor Autoencoder::conv_t(const nn::WNConvTranspose1d& c, const Tensor& x) const {
    if (reparameterized_forward) return c.forward(x);
    return conv_transpose1d(x, raw_effective_kernel(c.direction, c.magnitude), c.bias, c.stride, c.padding);
}

Tensor Autoencoder::res_unit(const ResUnit& u, const Tensor& x) const {
    Tensor h = conv(u.dilated, snake(x, u.snake1));
    h = conv(u.pointwise, snake(h, u.snake2));
    return add(x, h);
}

EncodedTensors Autoencoder::encode_tensor(const Tensor& audio) const {
    if (audio.ndim() != 2 || audio.dim(0) != 2) throw ShapeError("encoder input must be [2, frames]");
    if (audio.dim(1) == 0 || audio.dim(1) % kTotalStride != 0)
        throw DataError("encoder input length " + std::to_string(audio.dim(1)) + " is not a positive multiple of 2048");
    Tensor h = conv(enc_in_, audio);
    for (const auto& b : enc_blocks_) {
        for (const auto& u : b.units) h = res_unit(u, h);
        h = conv(b.down, snake(h, b.snake));
    }
    h = conv(enc_out_, snake(h, enc_out_snake_));
    const int64_t c = cfg_.latent_channels;
    return {slice_rows(h, 0, c), slice_rows(h, c, 2 * c)};
}

Tensor Autoencoder::decode_tensor(const Tensor& z) const {
    if (z.ndim() != 2 || z.dim(0) != cfg_.latent_channels) throw ShapeError("decoder input must be [64, T]");
    Tensor h = conv(dec_in_, z);
    for (const auto& b : dec_blocks_) {
        h = conv_t(b.up, snake(h, b.snake));
        for (const auto& u : b.units) h = res_unit(u, h);
    }
    return conv(dec_out_, snake(h, dec_out_snake_));
}

GaussianLatentParams Autoencoder::encode(const audio::Waveform& w) const {
    w.validate();
    NoGradGuard no_grad;
    auto enc = encode_tensor(w.to_tensor());
    return {to_matrix(enc.mean), to_matrix(enc.log_variance)};
}

audio::Waveform Autoencoder::decode(const LatentSeq& z) const {
    z.validate();
    NoGradGuard no_grad;
    return audio::Waveform::from_tensor(decode_tensor(to_tensor(z.values)));
}

std::string Autoencoder::encoder_hash() const { return io::sha256_hex(encoder_params()); }

void Autoencoder::save(const std::filesystem::path& path) const {
    io::TensorContainer c;
    c.manifest = cfg_.to_json();
    params_.export_to(c);
    c.save(path);
}

Autoencoder Autoencoder::load(const std::filesystem::path& path) {
    const auto c = io::TensorContainer::load(path);
    Autoencoder model(AutoencoderConfig::from_json(c.manifest), 0);
    model.params_.import_from(c);
    return model;
}

void save_latents(const LatentSeq& z, const std::filesystem::path& path) {
    z.validate();
    io::TensorContainer c;
    c.manifest = json{{"type", "latent"}, {"latent_rate", z.latent_rate}}.dump();
    c.put("latent", to_tensor(z.values));
    c.save(path);
}

LatentSeq load_latents(const std::filesystem::path& path) {
    const auto c = io::TensorContainer::load(path);
    LatentSeq z;
    z.values = to_matrix(c.get("latent"));
    try {
        z.latent_rate = json::parse(c.manifest).value("latent_rate", z.latent_rate);
    } catch (const json::exception&) {
        throw DataError("bad latent manifest in " + path.string());
    }
    z.validate();
    return z;
}

LatentSeq reparameterize(const GaussianLatentParams& p, uint64_t rng_seed) {
    p.validate();
    Rng rng(rng_seed);
    LatentSeq z;
    z.values.resize(p.mean.rows(), p.mean.cols());
    for (Eigen::Index i = 0; i < z.values.size(); ++i)
        z.values.data()[i] = p.mean.data()[i] + std::exp(0.5 * p.log_variance.data()[i]) * rng.normal();
    return z;
}

audio::Waveform chunked_decode(const Autoencoder& model, const LatentSeq& z, int chunk_len, int overlap) {
    z.validate();
    if (overlap < 0) throw std::invalid_argument("overlap must be non-negative");
    if (chunk_len <= 2 * overlap)
        throw std::invalid_argument("chunk_len (" + std::to_string(chunk_len) + ") must exceed 2 * overlap (" +
                                    std::to_string(2 * overlap) + ")");
    const int64_t total = z.frames();
    if (chunk_len >= total) return model.decode(z);

    const int64_t stride = kTotalStride;
    const int64_t hop = chunk_len - 2 * overlap;
    audio::Waveform out = audio::Waveform::zeros(total * stride);
    NoGradGuard no_grad;
    for (int64_t core = 0; core < total; core += hop) {
        const int64_t core_end = std::min(total, core + hop);
        const int64_t window = std::clamp<int64_t>(core - overlap, 0, total - chunk_len);
        Tensor piece = to_tensor(z.values.middleCols(window, chunk_len));
        const Matrix audio = to_matrix(model.decode_tensor(piece));
        out.samples.middleCols(core * stride, (core_end - core) * stride) =
            audio.middleCols((core - window) * stride, (core_end - core) * stride).cast<float>();
    }
    return out;
}

std::vector<LayerGeometry> decoder_geometry(const AutoencoderConfig& cfg) {
    cfg.validate();
    using K = LayerGeometry::Kind;
    const int k = cfg.kernel_size;
    std::vector<LayerGeometry> layers;
    layers.push_back({K::conv, k, 1, 1, (k - 1) / 2});
    for (int i = static_cast<int>(cfg.block_strides.size()) - 1; i >= 0; --i) {
        const int s = cfg.block_strides[static_cast<size_t>(i)];
        layers.push_back({K::conv_transpose, 2 * s, s, 1, s / 2});
        for (int j = 0; j < cfg.resnet_layers_per_block; ++j) {
            const int d = cfg.dilation_schedule[static_cast<size_t>(j) % cfg.dilation_schedule.size()];
            layers.push_back({K::conv, k, 1, d, d * (k - 1) / 2});
            layers.push_back({K::conv, 1, 1, 1, 0});
        }
    }
    layers.push_back({K::conv, k, 1, 1, (k - 1) / 2});
    return layers;
}

int receptive_field_latents(const std::vector<LayerGeometry>& layers, int total_stride) {
    auto floor_div = [](int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    auto ceil_div = [&](int64_t a, int64_t b) { return -floor_div(-a, b); };
    int64_t reach = 0;
    // Walk every output phase within one latent frame back to latent indices.
    for (int64_t phase = 0; phase < total_stride; ++phase) {
        int64_t lo = phase, hi = phase;
        bool empty = false;
        for (auto it = layers.rbegin(); it != layers.rend() && !empty; ++it) {
            const auto& l = *it;
            if (l.kind == LayerGeometry::Kind::conv) {
                lo = lo * l.stride - l.padding;
                hi = hi * l.stride - l.padding + static_cast<int64_t>(l.dilation) * (l.kernel - 1);
            } else {
                const int64_t nlo = ceil_div(lo + l.padding - (l.kernel - 1), l.stride);
                const int64_t nhi = floor_div(hi + l.padding, l.stride);
                lo = nlo;
                hi = nhi;
            }
            empty = lo > hi;
        }
        if (!empty) reach = std::max({reach, -lo, hi});
    }
    return static_cast<int>(reach);
}

int receptive_field_latents(const AutoencoderConfig& cfg) { return receptive_field_latents(decoder_geometry(cfg), cfg.total_stride()); }

}  // namespace sao::ae
