#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sf/tensor.hpp"

namespace sf {

// Reverse-mode autodiff at tensor granularity. Ops execute eagerly and push a
// backward closure onto the tape; backward() replays closures in reverse.
//
// A Var is a shared handle to (value, grad, requires_grad). Gradients
// accumulate with +=, so one Var can feed several ops. Tapes are one-shot:
// build the graph, call backward once, then discard.

struct VarNode {
    Tensor val;
    Tensor grad;  // sized lazily, only for nodes that need it
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.rows != val.rows || grad.cols != val.cols) grad = Tensor::zeros(val.rows, val.cols);
    }
};

struct Var {
    std::shared_ptr<VarNode> n;

    Var() = default;
    explicit Var(std::shared_ptr<VarNode> node) : n(std::move(node)) {}

    bool defined() const { return n != nullptr; }
    // A Var is a handle to a shared node: handle constness does not freeze the
    // node, so closures holding Var copies can still accumulate gradients.
    Tensor& val() const { return n->val; }
    Tensor& grad() const { return n->grad; }
    bool requires_grad() const { return n->requires_grad; }
    std::int64_t rows() const { return n->val.rows; }
    std::int64_t cols() const { return n->val.cols; }
    real scalar() const { return n->val.v[0]; }
};

// backward() was invoked on a tape with no recorded forward ops (or one that
// has already been consumed).
struct NoRecordedForward : Error {
    using Error::Error;
};

class Tape {
  public:
    // --- graph construction -------------------------------------------------
    Var leaf(Tensor t, bool requires_grad);
    Var constant(Tensor t) { return leaf(std::move(t), false); }
    Var scalar(real x);

    // Hooks for ops implemented outside this file (renderer, projections...).
    // alloc() makes an output node; record() pushes its backward closure.
    Var alloc(std::int64_t rows, std::int64_t cols, bool requires_grad);
    void record(std::function<void()> fn);

    // --- elementwise / shape ------------------------------------------------
    Var add(const Var& a, const Var& b);           // same shape
    Var sub(const Var& a, const Var& b);           // same shape
    Var mul(const Var& a, const Var& b);           // same shape, Hadamard
    Var scale(const Var& a, real s);               // a * s
    Var axpy(const Var& a, real s, const Var& b);  // a + s*b, same shape
    Var relu(const Var& a);
    Var sigmoid(const Var& a);
    Var exp(const Var& a);
    Var clamp_min(const Var& a, real lo);
    Var concat_cols(const Var& a, const Var& b);   // same rows
    Var slice_cols(const Var& a, std::int64_t start, std::int64_t len);
    Var repeat_row(const Var& row, std::int64_t n);  // 1xC -> NxC
    Var gather_rows(const Var& a, std::vector<std::int64_t> idx);
    Var mul_colvec(const Var& a, const Var& s);    // NxK times Nx1, row-wise

    // --- rows of small vectors ----------------------------------------------
    Var rows_dot(const Var& a, const Var& b);    // NxK, NxK -> Nx1
    Var rows_cross(const Var& a, const Var& b);  // Nx3, Nx3 -> Nx3
    Var normalize_rows(const Var& a);            // rows scaled to unit length
    Var quat_expmap(const Var& w);               // Nx3 rotation vectors -> Nx4 [w x y z]
    Var quat_mul_rows(const Var& a, const Var& b);  // Nx4 x Nx4 Hamilton product
    // Column k (0=t_u, 1=t_v, 2=normal) of the rotation matrix of each unit
    // quaternion row. Input rows must already be normalized.
    Var quat_axis(const Var& q, int k);

    // Positional encoding [v, sin(2^l pi v), cos(2^l pi v)] per input column.
    Var posenc(const Var& a, int frequencies);

    // --- dense layers ---------------------------------------------------------
    // y = x W^T + b with x: NxI, W: OxI, b: 1xO.
    Var linear(const Var& x, const Var& W, const Var& b);
    // Same with a low-rank update: y = x (W + s A B)^T + b, A: OxR, B: RxI.
    Var linear_lora(const Var& x, const Var& W, const Var& b, const Var& A, const Var& B, real s);

    // --- reductions -----------------------------------------------------------
    Var sum(const Var& a);                            // 1x1
    Var mean(const Var& a);                           // 1x1
    Var mean_abs_diff(const Var& a, const Var& b);    // L1, 1x1
    // L1 over entries where mask!=0, averaged by mask count (mask is a plain
    // tensor, not a Var). Zero mask -> zero loss.
    Var masked_mean_abs_diff(const Var& a, const Var& b, const Tensor& mask);
    // sum_i coeff_i * scalar_i for 1x1 vars.
    Var weighted_sum(const std::vector<std::pair<real, Var>>& terms);

    // --- execution ------------------------------------------------------------
    // Seeds d(loss)=1 and runs all closures in reverse. loss must be 1x1.
    // Consumes the tape. Throws NoRecordedForward if nothing was recorded.
    void backward(const Var& loss);

    std::size_t num_ops() const { return ops_.size(); }

  private:
    std::vector<std::function<void()>> ops_;
};

}  // namespace sf
