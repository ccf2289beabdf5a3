#pragma once

#include <cstdint>
#include <vector>

#include "sf/common.hpp"

namespace sf {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 as convenient.
struct Tensor {
    std::int64_t rows = 0, cols = 0;
    std::vector<real> v;

    Tensor() = default;
    Tensor(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0) {}

    static Tensor zeros(std::int64_t r, std::int64_t c) { return Tensor(r, c); }

    std::int64_t size() const { return rows * cols; }
    real& at(std::int64_t r, std::int64_t c) { return v[static_cast<std::size_t>(r * cols + c)]; }
    real at(std::int64_t r, std::int64_t c) const { return v[static_cast<std::size_t>(r * cols + c)]; }
    real* row_ptr(std::int64_t r) { return v.data() + r * cols; }
    const real* row_ptr(std::int64_t r) const { return v.data() + r * cols; }
    real* data() { return v.data(); }
    const real* data() const { return v.data(); }

    void fill(real x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace sf
