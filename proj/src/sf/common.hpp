#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sf {

using real = double;

// Error hierarchy. Every failure the pipeline can recover from is one of
// these; the C API maps them onto status codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    using Error::Error;
};
struct DivergedLoss : Error {
    using Error::Error;
};
struct MissingArtifact : Error {
    using Error::Error;
};
struct ProtocolError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

}  // namespace sf
