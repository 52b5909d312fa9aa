#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sao {

// Flat key-value configuration. File syntax:
//
//   # comment
//   [trainer]            -> following keys are prefixed "trainer."
//   base_lr = 1.5e-4
//   strides = 2, 4, 4, 8, 8
//
// Later set() calls override file values (command-line flags take precedence).
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace sao
