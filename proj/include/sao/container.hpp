#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sao/tensor.hpp"

// Named-tensor file used for checkpoints, latents and embedding sets.
// Layout (all integers little-endian), documented in docs/tensor_container.md:
//   "SAOT" | u32 version=1 | u64 manifest_len | manifest (UTF-8 JSON)
//   | u32 count | count x { u32 name_len | name | u32 ndim | i64 dims[ndim]
//   | f32 payload[numel], row-major }
namespace sao::io {

class TensorContainer {
public:
    void put(const std::string& name, const Tensor& t);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    // Throws DataError naming the missing entry.
    const Tensor& get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

    std::string manifest = "{}";

    void save(const std::filesystem::path& path) const;
    static TensorContainer load(const std::filesystem::path& path);

private:
    std::vector<std::string> order_;
    std::map<std::string, Tensor> index_;
};

// Tensor values rounded to float32, exactly as they would be stored.
std::vector<float> as_stored(const Tensor& t);

// SHA-256 (hex) over names, shapes and in-memory values, in the given order.
std::string sha256_hex(const std::vector<std::pair<std::string, Tensor>>& tensors);
std::string sha256_hex(std::string_view bytes);

}  // namespace sao::io
