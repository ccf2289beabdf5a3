#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "sf/common.hpp"

// Little helpers shared by the binary checkpoint readers/writers.

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes little-endian host");

namespace sf::binio {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_write(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, "cannot open for write: " + path);
    return f;
}

inline FilePtr open_read(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact("file not found: " + path);
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw MissingArtifact("cannot open: " + path);
    return f;
}

inline void write_exact(std::FILE* f, const void* data, std::size_t bytes, const std::string& path) {
    require(std::fwrite(data, 1, bytes, f) == bytes, "short write to " + path);
}

inline void read_exact(std::FILE* f, void* data, std::size_t bytes, const std::string& path) {
    if (bytes && std::fread(data, 1, bytes, f) != bytes)
        throw ProtocolError("truncated file: " + path);
}

template <typename T>
void write_pod(std::FILE* f, const T& v, const std::string& path) {
    write_exact(f, &v, sizeof(T), path);
}

template <typename T>
T read_pod(std::FILE* f, const std::string& path) {
    T v{};
    read_exact(f, &v, sizeof(T), path);
    return v;
}

inline void check_magic(std::FILE* f, const char (&magic)[8], const std::string& path) {
    char got[8];
    read_exact(f, got, sizeof(got), path);
    if (std::memcmp(got, magic, sizeof(got)) != 0) throw ProtocolError("bad file magic: " + path);
}

}  // namespace sf::binio
