#pragma once

#include <stdexcept>
#include <string>

namespace kneeseg {

// Error categories map 1:1 onto CLI exit codes:
//   usage_error -> 1, format_error -> 2, numeric_error -> 3.

class usage_error : public std::runtime_error {
public:
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kneeseg
