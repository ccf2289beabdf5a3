#include "sf/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace sf {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap emap(const Tensor& t) { return ECMap(t.data(), t.rows, t.cols); }
EMap emap(Tensor& t) { return EMap(t.data(), t.rows, t.cols); }

void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::leaf(Tensor t, bool requires_grad) {
    auto node = std::make_shared<VarNode>();
    node->val = std::move(t);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return Var(node);
}

Var Tape::scalar(real x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return leaf(std::move(t), false);
}

Var Tape::alloc(std::int64_t rows, std::int64_t cols, bool requires_grad) {
    auto node = std::make_shared<VarNode>();
    node->val = Tensor::zeros(rows, cols);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return Var(node);
}

void Tape::record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

Var Tape::add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Var out = alloc(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] + b.val().v[i];
    if (out.requires_grad())
        record([a, b, out] {
            if (a.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i) a.grad().v[i] += out.grad().v[i];
            if (b.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i) b.grad().v[i] += out.grad().v[i];
        });
    return out;
}

Var Tape::sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Var out = alloc(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] - b.val().v[i];
    if (out.requires_grad())
        record([a, b, out] {
            if (a.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i) a.grad().v[i] += out.grad().v[i];
            if (b.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i) b.grad().v[i] -= out.grad().v[i];
        });
    return out;
}

Var Tape::mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Var out = alloc(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] * b.val().v[i];
    if (out.requires_grad())
        record([a, b, out] {
            if (a.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i)
                    a.grad().v[i] += out.grad().v[i] * b.val().v[i];
            if (b.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i)
                    b.grad().v[i] += out.grad().v[i] * a.val().v[i];
        });
    return out;
}

Var Tape::scale(const Var& a, real s) {
    Var out = alloc(a.rows(), a.cols(), a.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] * s;
    if (out.requires_grad())
        record([a, out, s] {
            for (std::int64_t i = 0; i < out.grad().size(); ++i) a.grad().v[i] += out.grad().v[i] * s;
        });
    return out;
}

Var Tape::axpy(const Var& a, real s, const Var& b) {
    check_same_shape(a, b, "axpy");
    Var out = alloc(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] + s * b.val().v[i];
    if (out.requires_grad())
        record([a, b, out, s] {
            if (a.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i) a.grad().v[i] += out.grad().v[i];
            if (b.requires_grad())
                for (std::int64_t i = 0; i < out.grad().size(); ++i) b.grad().v[i] += out.grad().v[i] * s;
        });
    return out;
}

Var Tape::relu(const Var& a) {
    Var out = alloc(a.rows(), a.cols(), a.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] > 0 ? a.val().v[i] : 0;
    if (out.requires_grad())
        record([a, out] {
            for (std::int64_t i = 0; i < out.grad().size(); ++i)
                if (a.val().v[i] > 0) a.grad().v[i] += out.grad().v[i];
        });
    return out;
}

Var Tape::sigmoid(const Var& a) {
    Var out = alloc(a.rows(), a.cols(), a.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = 1.0 / (1.0 + std::exp(-a.val().v[i]));
    if (out.requires_grad())
        record([a, out] {
            for (std::int64_t i = 0; i < out.grad().size(); ++i) {
                real y = out.val().v[i];
                a.grad().v[i] += out.grad().v[i] * y * (1.0 - y);
            }
        });
    return out;
}

Var Tape::exp(const Var& a) {
    Var out = alloc(a.rows(), a.cols(), a.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = std::exp(a.val().v[i]);
    if (out.requires_grad())
        record([a, out] {
            for (std::int64_t i = 0; i < out.grad().size(); ++i)
                a.grad().v[i] += out.grad().v[i] * out.val().v[i];
        });
    return out;
}

Var Tape::clamp_min(const Var& a, real lo) {
    Var out = alloc(a.rows(), a.cols(), a.requires_grad());
    for (std::int64_t i = 0; i < a.val().size(); ++i) out.val().v[i] = a.val().v[i] < lo ? lo : a.val().v[i];
    if (out.requires_grad())
        record([a, out, lo] {
            for (std::int64_t i = 0; i < out.grad().size(); ++i)
                if (a.val().v[i] >= lo) a.grad().v[i] += out.grad().v[i];
        });
    return out;
}

Var Tape::concat_cols(const Var& a, const Var& b) {
    require(a.rows() == b.rows(), "concat_cols: row mismatch");
    std::int64_t n = a.rows(), ca = a.cols(), cb = b.cols();
    Var out = alloc(n, ca + cb, a.requires_grad() || b.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        real* dst = out.val().row_ptr(r);
        const real* pa = a.val().row_ptr(r);
        const real* pb = b.val().row_ptr(r);
        for (std::int64_t c = 0; c < ca; ++c) dst[c] = pa[c];
        for (std::int64_t c = 0; c < cb; ++c) dst[ca + c] = pb[c];
    }
    if (out.requires_grad())
        record([a, b, out, n, ca, cb] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* g = out.grad().row_ptr(r);
                if (a.requires_grad()) {
                    real* ga = a.grad().row_ptr(r);
                    for (std::int64_t c = 0; c < ca; ++c) ga[c] += g[c];
                }
                if (b.requires_grad()) {
                    real* gb = b.grad().row_ptr(r);
                    for (std::int64_t c = 0; c < cb; ++c) gb[c] += g[ca + c];
                }
            }
        });
    return out;
}

Var Tape::slice_cols(const Var& a, std::int64_t start, std::int64_t len) {
    require(start >= 0 && start + len <= a.cols(), "slice_cols: range out of bounds");
    std::int64_t n = a.rows();
    Var out = alloc(n, len, a.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        const real* src = a.val().row_ptr(r) + start;
        real* dst = out.val().row_ptr(r);
        for (std::int64_t j = 0; j < len; ++j) dst[j] = src[j];
    }
    if (out.requires_grad())
        record([a, out, start, len, n] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* g = out.grad().row_ptr(r);
                real* ga = a.grad().row_ptr(r) + start;
                for (std::int64_t j = 0; j < len; ++j) ga[j] += g[j];
            }
        });
    return out;
}

Var Tape::mul_colvec(const Var& a, const Var& s) {
    require(s.cols() == 1 && s.rows() == a.rows(), "mul_colvec: s must be Nx1");
    std::int64_t n = a.rows(), k = a.cols();
    Var out = alloc(n, k, a.requires_grad() || s.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        const real* pa = a.val().row_ptr(r);
        real* po = out.val().row_ptr(r);
        real f = s.val().at(r, 0);
        for (std::int64_t j = 0; j < k; ++j) po[j] = pa[j] * f;
    }
    if (out.requires_grad())
        record([a, s, out, n, k] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* g = out.grad().row_ptr(r);
                const real* pa = a.val().row_ptr(r);
                real f = s.val().at(r, 0);
                if (a.requires_grad()) {
                    real* ga = a.grad().row_ptr(r);
                    for (std::int64_t j = 0; j < k; ++j) ga[j] += g[j] * f;
                }
                if (s.requires_grad()) {
                    real acc = 0;
                    for (std::int64_t j = 0; j < k; ++j) acc += g[j] * pa[j];
                    s.grad().at(r, 0) += acc;
                }
            }
        });
    return out;
}

Var Tape::repeat_row(const Var& row, std::int64_t n) {
    require(row.rows() == 1, "repeat_row: input must be 1xC");
    std::int64_t c = row.cols();
    Var out = alloc(n, c, row.requires_grad());
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < c; ++j) out.val().at(r, j) = row.val().v[static_cast<std::size_t>(j)];
    if (out.requires_grad())
        record([row, out, n, c] {
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t j = 0; j < c; ++j) row.grad().v[static_cast<std::size_t>(j)] += out.grad().at(r, j);
        });
    return out;
}

Var Tape::gather_rows(const Var& a, std::vector<std::int64_t> idx) {
    std::int64_t c = a.cols();
    Var out = alloc(static_cast<std::int64_t>(idx.size()), c, a.requires_grad());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] >= 0 && idx[r] < a.rows(), "gather_rows: index out of range");
        const real* src = a.val().row_ptr(idx[r]);
        real* dst = out.val().row_ptr(static_cast<std::int64_t>(r));
        for (std::int64_t j = 0; j < c; ++j) dst[j] = src[j];
    }
    if (out.requires_grad())
        record([a, out, idx = std::move(idx), c] {
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const real* g = out.grad().row_ptr(static_cast<std::int64_t>(r));
                real* ga = a.grad().row_ptr(idx[r]);
                for (std::int64_t j = 0; j < c; ++j) ga[j] += g[j];
            }
        });
    return out;
}

Var Tape::rows_dot(const Var& a, const Var& b) {
    check_same_shape(a, b, "rows_dot");
    std::int64_t n = a.rows(), k = a.cols();
    Var out = alloc(n, 1, a.requires_grad() || b.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        real s = 0;
        const real* pa = a.val().row_ptr(r);
        const real* pb = b.val().row_ptr(r);
        for (std::int64_t j = 0; j < k; ++j) s += pa[j] * pb[j];
        out.val().at(r, 0) = s;
    }
    if (out.requires_grad())
        record([a, b, out, n, k] {
            for (std::int64_t r = 0; r < n; ++r) {
                real g = out.grad().at(r, 0);
                const real* pa = a.val().row_ptr(r);
                const real* pb = b.val().row_ptr(r);
                if (a.requires_grad()) {
                    real* ga = a.grad().row_ptr(r);
                    for (std::int64_t j = 0; j < k; ++j) ga[j] += g * pb[j];
                }
                if (b.requires_grad()) {
                    real* gb = b.grad().row_ptr(r);
                    for (std::int64_t j = 0; j < k; ++j) gb[j] += g * pa[j];
                }
            }
        });
    return out;
}

Var Tape::rows_cross(const Var& a, const Var& b) {
    check_same_shape(a, b, "rows_cross");
    require(a.cols() == 3, "rows_cross: need Nx3");
    std::int64_t n = a.rows();
    Var out = alloc(n, 3, a.requires_grad() || b.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        const real* pa = a.val().row_ptr(r);
        const real* pb = b.val().row_ptr(r);
        real* po = out.val().row_ptr(r);
        po[0] = pa[1] * pb[2] - pa[2] * pb[1];
        po[1] = pa[2] * pb[0] - pa[0] * pb[2];
        po[2] = pa[0] * pb[1] - pa[1] * pb[0];
    }
    if (out.requires_grad())
        record([a, b, out, n] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* g = out.grad().row_ptr(r);
                const real* pa = a.val().row_ptr(r);
                const real* pb = b.val().row_ptr(r);
                // d(a x b) w.r.t. a is g x b... expanded by components:
                if (a.requires_grad()) {
                    real* ga = a.grad().row_ptr(r);
                    ga[0] += pb[1] * g[2] - pb[2] * g[1];
                    ga[1] += pb[2] * g[0] - pb[0] * g[2];
                    ga[2] += pb[0] * g[1] - pb[1] * g[0];
                }
                if (b.requires_grad()) {
                    real* gb = b.grad().row_ptr(r);
                    gb[0] += pa[2] * g[1] - pa[1] * g[2];
                    gb[1] += pa[0] * g[2] - pa[2] * g[0];
                    gb[2] += pa[1] * g[0] - pa[0] * g[1];
                }
            }
        });
    return out;
}

Var Tape::normalize_rows(const Var& a) {
    std::int64_t n = a.rows(), k = a.cols();
    Var out = alloc(n, k, a.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        const real* pa = a.val().row_ptr(r);
        real* po = out.val().row_ptr(r);
        real s = 0;
        for (std::int64_t j = 0; j < k; ++j) s += pa[j] * pa[j];
        real inv = 1.0 / std::sqrt(s);
        for (std::int64_t j = 0; j < k; ++j) po[j] = pa[j] * inv;
    }
    if (out.requires_grad())
        record([a, out, n, k] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* pa = a.val().row_ptr(r);
                const real* py = out.val().row_ptr(r);
                const real* g = out.grad().row_ptr(r);
                real* ga = a.grad().row_ptr(r);
                real s = 0;
                for (std::int64_t j = 0; j < k; ++j) s += pa[j] * pa[j];
                real inv = 1.0 / std::sqrt(s);
                real gy = 0;
                for (std::int64_t j = 0; j < k; ++j) gy += g[j] * py[j];
                for (std::int64_t j = 0; j < k; ++j) ga[j] += (g[j] - gy * py[j]) * inv;
            }
        });
    return out;
}

Var Tape::quat_expmap(const Var& w) {
    require(w.cols() == 3, "quat_expmap: need Nx3");
    std::int64_t n = w.rows();
    Var out = alloc(n, 4, w.requires_grad());
    // q = [cos(t/2), sin(t/2)/t * w] with t=|w|; below 1e-8 use the series
    // expansions cos(t/2)=1-t^2/8, sin(t/2)/t=1/2-t^2/48.
    for (std::int64_t r = 0; r < n; ++r) {
        const real* pw = w.val().row_ptr(r);
        real* q = out.val().row_ptr(r);
        real t2 = pw[0] * pw[0] + pw[1] * pw[1] + pw[2] * pw[2];
        real t = std::sqrt(t2);
        real cw, k;
        if (t < 1e-8) {
            cw = 1.0 - t2 / 8.0;
            k = 0.5 - t2 / 48.0;
        } else {
            cw = std::cos(0.5 * t);
            k = std::sin(0.5 * t) / t;
        }
        q[0] = cw;
        q[1] = k * pw[0];
        q[2] = k * pw[1];
        q[3] = k * pw[2];
    }
    if (out.requires_grad())
        record([w, out, n] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* pw = w.val().row_ptr(r);
                const real* q = out.val().row_ptr(r);
                const real* g = out.grad().row_ptr(r);
                real* gw = w.grad().row_ptr(r);
                real t2 = pw[0] * pw[0] + pw[1] * pw[1] + pw[2] * pw[2];
                real t = std::sqrt(t2);
                real k, dkdt_over_t;
                if (t < 1e-8) {
                    k = 0.5 - t2 / 48.0;
                    dkdt_over_t = -1.0 / 24.0;
                } else {
                    k = std::sin(0.5 * t) / t;
                    // dk/dt = (cos(t/2)/2 - k) / t, and we need (dk/dt)/t
                    dkdt_over_t = (0.5 * q[0] - k) / t2;
                }
                real gdotw = g[1] * pw[0] + g[2] * pw[1] + g[3] * pw[2];
                for (int j = 0; j < 3; ++j)
                    gw[j] += -0.5 * k * g[0] * pw[j] + k * g[1 + j] + dkdt_over_t * gdotw * pw[j];
            }
        });
    return out;
}

Var Tape::quat_mul_rows(const Var& a, const Var& b) {
    check_same_shape(a, b, "quat_mul_rows");
    require(a.cols() == 4, "quat_mul_rows: need Nx4");
    std::int64_t n = a.rows();
    Var out = alloc(n, 4, a.requires_grad() || b.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        const real* p = a.val().row_ptr(r);
        const real* q = b.val().row_ptr(r);
        real* o = out.val().row_ptr(r);
        o[0] = p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3];
        o[1] = p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2];
        o[2] = p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1];
        o[3] = p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0];
    }
    if (out.requires_grad())
        record([a, b, out, n] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* p = a.val().row_ptr(r);
                const real* q = b.val().row_ptr(r);
                const real* g = out.grad().row_ptr(r);
                if (a.requires_grad()) {
                    real* ga = a.grad().row_ptr(r);
                    ga[0] += g[0] * q[0] + g[1] * q[1] + g[2] * q[2] + g[3] * q[3];
                    ga[1] += -g[0] * q[1] + g[1] * q[0] - g[2] * q[3] + g[3] * q[2];
                    ga[2] += -g[0] * q[2] + g[1] * q[3] + g[2] * q[0] - g[3] * q[1];
                    ga[3] += -g[0] * q[3] - g[1] * q[2] + g[2] * q[1] + g[3] * q[0];
                }
                if (b.requires_grad()) {
                    real* gb = b.grad().row_ptr(r);
                    gb[0] += g[0] * p[0] + g[1] * p[1] + g[2] * p[2] + g[3] * p[3];
                    gb[1] += -g[0] * p[1] + g[1] * p[0] + g[2] * p[3] - g[3] * p[2];
                    gb[2] += -g[0] * p[2] - g[1] * p[3] + g[2] * p[0] + g[3] * p[1];
                    gb[3] += -g[0] * p[3] + g[1] * p[2] - g[2] * p[1] + g[3] * p[0];
                }
            }
        });
    return out;
}

Var Tape::quat_axis(const Var& q, int k) {
    require(q.cols() == 4, "quat_axis: need Nx4");
    require(k >= 0 && k <= 2, "quat_axis: k in {0,1,2}");
    std::int64_t n = q.rows();
    Var out = alloc(n, 3, q.requires_grad());
    for (std::int64_t r = 0; r < n; ++r) {
        const real* p = q.val().row_ptr(r);
        real w = p[0], x = p[1], y = p[2], z = p[3];
        real* o = out.val().row_ptr(r);
        switch (k) {
            case 0: o[0] = 1 - 2 * (y * y + z * z); o[1] = 2 * (x * y + w * z); o[2] = 2 * (x * z - w * y); break;
            case 1: o[0] = 2 * (x * y - w * z); o[1] = 1 - 2 * (x * x + z * z); o[2] = 2 * (y * z + w * x); break;
            default: o[0] = 2 * (x * z + w * y); o[1] = 2 * (y * z - w * x); o[2] = 1 - 2 * (x * x + y * y); break;
        }
    }
    if (out.requires_grad())
        record([q, out, n, k] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* p = q.val().row_ptr(r);
                real w = p[0], x = p[1], y = p[2], z = p[3];
                const real* g = out.grad().row_ptr(r);
                real* gq = q.grad().row_ptr(r);
                switch (k) {
                    case 0:
                        gq[0] += 2 * (z * g[1] - y * g[2]);
                        gq[1] += 2 * (y * g[1] + z * g[2]);
                        gq[2] += -4 * y * g[0] + 2 * (x * g[1] - w * g[2]);
                        gq[3] += -4 * z * g[0] + 2 * (w * g[1] + x * g[2]);
                        break;
                    case 1:
                        gq[0] += 2 * (-z * g[0] + x * g[2]);
                        gq[1] += 2 * y * g[0] - 4 * x * g[1] + 2 * w * g[2];
                        gq[2] += 2 * (x * g[0] + z * g[2]);
                        gq[3] += -2 * w * g[0] - 4 * z * g[1] + 2 * y * g[2];
                        break;
                    default:
                        gq[0] += 2 * (y * g[0] - x * g[1]);
                        gq[1] += 2 * z * g[0] - 2 * w * g[1] - 4 * x * g[2];
                        gq[2] += 2 * w * g[0] + 2 * z * g[1] - 4 * y * g[2];
                        gq[3] += 2 * (x * g[0] + y * g[1]);
                        break;
                }
            }
        });
    return out;
}

Var Tape::posenc(const Var& a, int frequencies) {
    std::int64_t n = a.rows(), c = a.cols();
    std::int64_t per = 1 + 2 * frequencies;
    Var out = alloc(n, c * per, a.requires_grad());
    constexpr real pi = 3.14159265358979323846;
    for (std::int64_t r = 0; r < n; ++r) {
        const real* pa = a.val().row_ptr(r);
        real* po = out.val().row_ptr(r);
        for (std::int64_t j = 0; j < c; ++j) {
            real* blk = po + j * per;
            blk[0] = pa[j];
            real f = pi;
            for (int l = 0; l < frequencies; ++l) {
                blk[1 + 2 * l] = std::sin(f * pa[j]);
                blk[2 + 2 * l] = std::cos(f * pa[j]);
                f *= 2.0;
            }
        }
    }
    if (out.requires_grad())
        record([a, out, n, c, per, frequencies] {
            for (std::int64_t r = 0; r < n; ++r) {
                const real* po = out.val().row_ptr(r);
                const real* g = out.grad().row_ptr(r);
                real* ga = a.grad().row_ptr(r);
                for (std::int64_t j = 0; j < c; ++j) {
                    const real* blkv = po + j * per;
                    const real* blkg = g + j * per;
                    real acc = blkg[0];
                    real f = pi;
                    for (int l = 0; l < frequencies; ++l) {
                        // d sin(fv)/dv = f cos(fv); reuse stored values
                        acc += f * (blkg[1 + 2 * l] * blkv[2 + 2 * l] - blkg[2 + 2 * l] * blkv[1 + 2 * l]);
                        f *= 2.0;
                    }
                    ga[j] += acc;
                }
            }
        });
    return out;
}

Var Tape::linear(const Var& x, const Var& W, const Var& b) {
    require(W.cols() == x.cols(), "linear: W/x inner dim mismatch");
    require(b.rows() == 1 && b.cols() == W.rows(), "linear: bias shape");
    std::int64_t n = x.rows(), out_dim = W.rows();
    Var out = alloc(n, out_dim, x.requires_grad() || W.requires_grad() || b.requires_grad());
    emap(out.val()) = emap(x.val()) * emap(W.val()).transpose();
    for (std::int64_t r = 0; r < n; ++r) {
        real* po = out.val().row_ptr(r);
        const real* pb = b.val().data();
        for (std::int64_t j = 0; j < out_dim; ++j) po[j] += pb[j];
    }
    if (out.requires_grad())
        record([x, W, b, out] {
            auto gy = emap(out.grad());
            if (x.requires_grad()) emap(x.grad()) += gy * emap(W.val());
            if (W.requires_grad()) emap(W.grad()) += gy.transpose() * emap(x.val());
            if (b.requires_grad()) emap(b.grad()) += gy.colwise().sum();
        });
    return out;
}

Var Tape::linear_lora(const Var& x, const Var& W, const Var& b, const Var& A, const Var& B, real s) {
    require(W.cols() == x.cols(), "linear_lora: W/x inner dim mismatch");
    require(A.rows() == W.rows() && B.cols() == W.cols() && A.cols() == B.rows(),
            "linear_lora: adapter shapes");
    std::int64_t n = x.rows(), out_dim = W.rows();
    bool any = x.requires_grad() || W.requires_grad() || b.requires_grad() || A.requires_grad() ||
               B.requires_grad();
    Var out = alloc(n, out_dim, any);
    // u = x B^T gets reused in backward for dA
    Tensor u(n, A.cols());
    emap(u) = emap(x.val()) * emap(B.val()).transpose();
    emap(out.val()) = emap(x.val()) * emap(W.val()).transpose() + s * (emap(u) * emap(A.val()).transpose());
    for (std::int64_t r = 0; r < n; ++r) {
        real* po = out.val().row_ptr(r);
        const real* pb = b.val().data();
        for (std::int64_t j = 0; j < out_dim; ++j) po[j] += pb[j];
    }
    if (out.requires_grad())
        record([x, W, b, A, B, out, s, u = std::move(u)] {
            auto gy = emap(out.grad());
            if (x.requires_grad())
                emap(x.grad()) += gy * emap(W.val()) + s * ((gy * emap(A.val())) * emap(B.val()));
            if (W.requires_grad()) emap(W.grad()) += gy.transpose() * emap(x.val());
            if (b.requires_grad()) emap(b.grad()) += gy.colwise().sum();
            if (A.requires_grad()) emap(A.grad()) += s * (gy.transpose() * emap(u));
            if (B.requires_grad()) emap(B.grad()) += s * ((gy * emap(A.val())).transpose() * emap(x.val()));
        });
    return out;
}

Var Tape::sum(const Var& a) {
    Var out = alloc(1, 1, a.requires_grad());
    real s = 0;
    for (std::int64_t i = 0; i < a.val().size(); ++i) s += a.val().v[i];
    out.val().v[0] = s;
    if (out.requires_grad())
        record([a, out] {
            real g = out.grad().v[0];
            for (std::int64_t i = 0; i < a.grad().size(); ++i) a.grad().v[i] += g;
        });
    return out;
}

Var Tape::mean(const Var& a) {
    require(a.val().size() > 0, "mean: empty tensor");
    Var out = alloc(1, 1, a.requires_grad());
    real s = 0;
    for (std::int64_t i = 0; i < a.val().size(); ++i) s += a.val().v[i];
    real inv = 1.0 / static_cast<real>(a.val().size());
    out.val().v[0] = s * inv;
    if (out.requires_grad())
        record([a, out, inv] {
            real g = out.grad().v[0] * inv;
            for (std::int64_t i = 0; i < a.grad().size(); ++i) a.grad().v[i] += g;
        });
    return out;
}

Var Tape::mean_abs_diff(const Var& a, const Var& b) {
    check_same_shape(a, b, "mean_abs_diff");
    require(a.val().size() > 0, "mean_abs_diff: empty tensor");
    Var out = alloc(1, 1, a.requires_grad() || b.requires_grad());
    real s = 0;
    for (std::int64_t i = 0; i < a.val().size(); ++i) s += std::abs(a.val().v[i] - b.val().v[i]);
    real inv = 1.0 / static_cast<real>(a.val().size());
    out.val().v[0] = s * inv;
    if (out.requires_grad())
        record([a, b, out, inv] {
            real g = out.grad().v[0] * inv;
            for (std::int64_t i = 0; i < a.val().size(); ++i) {
                real d = a.val().v[i] - b.val().v[i];
                real sg = d > 0 ? g : (d < 0 ? -g : 0);
                if (a.requires_grad()) a.grad().v[i] += sg;
                if (b.requires_grad()) b.grad().v[i] -= sg;
            }
        });
    return out;
}

Var Tape::masked_mean_abs_diff(const Var& a, const Var& b, const Tensor& mask) {
    check_same_shape(a, b, "masked_mean_abs_diff");
    require(mask.rows == a.rows() && mask.cols == a.cols(), "masked_mean_abs_diff: mask shape");
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < mask.size(); ++i)
        if (mask.v[i] != 0) ++count;
    Var out = alloc(1, 1, a.requires_grad() || b.requires_grad());
    if (count == 0) return out;  // zero loss, no gradient
    real s = 0;
    for (std::int64_t i = 0; i < a.val().size(); ++i)
        if (mask.v[i] != 0) s += std::abs(a.val().v[i] - b.val().v[i]);
    real inv = 1.0 / static_cast<real>(count);
    out.val().v[0] = s * inv;
    if (out.requires_grad())
        record([a, b, out, inv, mask] {
            real g = out.grad().v[0] * inv;
            for (std::int64_t i = 0; i < a.val().size(); ++i) {
                if (mask.v[i] == 0) continue;
                real d = a.val().v[i] - b.val().v[i];
                real sg = d > 0 ? g : (d < 0 ? -g : 0);
                if (a.requires_grad()) a.grad().v[i] += sg;
                if (b.requires_grad()) b.grad().v[i] -= sg;
            }
        });
    return out;
}

Var Tape::weighted_sum(const std::vector<std::pair<real, Var>>& terms) {
    bool any = false;
    for (const auto& [c, v] : terms) {
        require(v.rows() == 1 && v.cols() == 1, "weighted_sum: terms must be scalars");
        any = any || v.requires_grad();
    }
    Var out = alloc(1, 1, any);
    real s = 0;
    for (const auto& [c, v] : terms) s += c * v.val().v[0];
    out.val().v[0] = s;
    if (out.requires_grad())
        record([terms, out] {
            real g = out.grad().v[0];
            for (const auto& [c, v] : terms)
                if (v.requires_grad()) v.grad().v[0] += g * c;
        });
    return out;
}

void Tape::backward(const Var& loss) {
    if (ops_.empty()) throw NoRecordedForward("backward called with no recorded forward ops");
    require(loss.defined() && loss.rows() == 1 && loss.cols() == 1, "backward: loss must be 1x1");
    if (loss.requires_grad()) loss.grad().v[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

}  // namespace sf
