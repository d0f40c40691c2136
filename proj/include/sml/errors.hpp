#pragma once

#include <stdexcept>
#include <string>

namespace sml {

// Bad user-supplied configuration or input files. The CLI maps this to exit
// code 2; everything else that escapes is a check failure (exit 1).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sml
