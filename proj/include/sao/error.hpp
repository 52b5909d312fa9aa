#pragma once

#include <stdexcept>
#include <string>

namespace sao {

// Bad or unreadable input data (files, metadata, shapes supplied by a user).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sao
