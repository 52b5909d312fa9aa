#include "sao/container.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "sao/error.hpp"

namespace sao::io {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'O', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(std::vector<char> bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

    template <typename T>
    T le() {
        need(sizeof(T));
        uint64_t v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string str(size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("truncated tensor container: " + origin_);
    }
    std::vector<char> bytes_;
    std::string origin_;
    size_t pos_ = 0;
};

void append_tensor_bytes(std::string& out, const std::string& name, const Tensor& t) {
    put_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_le<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
    for (auto d : t.shape()) put_le<int64_t>(out, d);
    for (float f : as_stored(t)) {
        uint32_t u;
        std::memcpy(&u, &f, sizeof u);
        put_le<uint32_t>(out, u);
    }
}

}  // namespace

std::vector<float> as_stored(const Tensor& t) {
    std::vector<float> v(static_cast<size_t>(t.numel()));
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t.data()[i]);
    return v;
}

void TensorContainer::put(const std::string& name, const Tensor& t) {
    if (name.empty()) throw std::invalid_argument("tensor name must not be empty");
    if (!index_.count(name)) order_.push_back(name);
    index_[name] = t.detach();
}

const Tensor& TensorContainer::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("tensor container has no entry '" + name + "'");
    return it->second;
}

void TensorContainer::save(const std::filesystem::path& path) const {
    std::string out(kMagic, 4);
    put_le<uint32_t>(out, kVersion);
    put_le<uint64_t>(out, manifest.size());
    out += manifest;
    put_le<uint32_t>(out, static_cast<uint32_t>(order_.size()));
    for (const auto& name : order_) append_tensor_bytes(out, name, index_.at(name));
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write tensor container: " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw DataError("write failed: " + path.string());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open tensor container: " + path.string());
    Reader r(std::vector<char>((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>()), path.string());
    if (r.str(4) != std::string(kMagic, 4)) throw DataError("not a tensor container (bad magic): " + path.string());
    const auto version = r.le<uint32_t>();
    if (version != kVersion) throw DataError("unsupported tensor container version " + std::to_string(version));
    TensorContainer c;
    c.manifest = r.str(static_cast<size_t>(r.le<uint64_t>()));
    const auto count = r.le<uint32_t>();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.le<uint32_t>());
        const auto ndim = r.le<uint32_t>();
        if (ndim > 8) throw DataError("tensor '" + name + "' has implausible rank " + std::to_string(ndim));
        Shape shape(ndim);
        for (auto& d : shape) {
            d = r.le<int64_t>();
            if (d < 0) throw DataError("tensor '" + name + "' has a negative dimension");
        }
        std::vector<Real> values(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : values) {
            const uint32_t u = r.le<uint32_t>();
            float f;
            std::memcpy(&f, &u, sizeof f);
            v = f;
        }
        if (c.contains(name)) throw DataError("duplicate tensor name '" + name + "' in " + path.string());
        c.put(name, Tensor::from(std::move(shape), std::move(values)));
    }
    if (!r.done()) throw DataError("trailing bytes in tensor container: " + path.string());
    return c;
}

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s.push_back(hex[digest[i] >> 4]);
        s.push_back(hex[digest[i] & 15]);
    }
    return s;
}

std::string sha256_hex(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::string bytes;
    for (const auto& [name, t] : tensors) {
        put_le<uint32_t>(bytes, static_cast<uint32_t>(name.size()));
        bytes += name;
        for (auto d : t.shape()) put_le<int64_t>(bytes, d);
        bytes.append(reinterpret_cast<const char*>(t.data().data()), t.data().size_bytes());
    }
    return sha256_hex(bytes);
}

}  // namespace sao::io
