#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmcap {

// Every failure surfaced by the library carries a short machine-readable
// code next to the human-readable message. The CLI maps these onto its
// diagnostics stream.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void raise(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

inline void require(bool cond, const char* code, const std::string& message) {
    if (!cond) {
        raise(code, message);
    }
}

inline int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        n *= e;
    }
    return n;
}

std::string shape_string(const std::vector<int64_t>& shape);

} // namespace mmcap
