#include <doctest.h>

#include <cmath>

#include "sf/tape.hpp"
#include "support.hpp"

using namespace sf;
using namespace sftest;

namespace {

// keep values away from the kinks of relu/abs/clamp so central differences
// with step 1e-4 stay on one side
Tensor random_away_from(std::int64_t rows, std::int64_t cols, Rng& rng, real kink, real margin) {
    Tensor t = random_tensor(rows, cols, rng);
    for (auto& v : t.v)
        if (std::abs(v - kink) < margin) v = kink + (v >= kink ? margin : -margin);
    return t;
}

Tensor random_unit_quats(std::int64_t n, Rng& rng) {
    Tensor t = random_tensor(n, 4, rng, -1, 1);
    for (std::int64_t r = 0; r < n; ++r) {
        real* q = t.row_ptr(r);
        real s = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        for (int j = 0; j < 4; ++j) q[j] /= s;
    }
    return t;
}

}  // namespace

TEST_CASE("tape forward values: elementwise and reductions") {
    Tape t;
    Tensor a(2, 2), b(2, 2);
    a.v = {1, -2, 3, 0.5};
    b.v = {2, 1, -1, 4};
    Var va = t.leaf(a, false), vb = t.leaf(b, false);
    CHECK(t.add(va, vb).val().v[0] == 3);
    CHECK(t.sub(va, vb).val().v[1] == -3);
    CHECK(t.mul(va, vb).val().v[2] == -3);
    CHECK(t.axpy(va, 2.0, vb).val().v[3] == 8.5);
    CHECK(t.relu(va).val().v[1] == 0);
    CHECK(t.exp(va).val().v[0] == doctest::Approx(std::exp(1.0)));
    CHECK(t.sigmoid(va).val().v[0] == doctest::Approx(1 / (1 + std::exp(-1.0))));
    CHECK(t.clamp_min(va, 0.6).val().v[3] == 0.6);
    CHECK(t.sum(va).scalar() == doctest::Approx(2.5));
    CHECK(t.mean(va).scalar() == doctest::Approx(0.625));
    CHECK(t.mean_abs_diff(va, vb).scalar() == doctest::Approx((1 + 3 + 4 + 3.5) / 4));
}

TEST_CASE("tape gradients: elementwise ops vs finite differences") {
    Rng rng(101);
    Tensor a = random_away_from(3, 4, rng, 0.0, 0.01);
    Tensor b = random_away_from(3, 4, rng, 0.0, 0.01);
    // keep |a-b| off the L1 kink too
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (std::abs(a.v[i] - b.v[i]) < 0.01) b.v[i] += 0.02;

    auto gc = grad_check({a, b}, [](Tape& t, std::vector<Var>& p) {
        Var x = p[0], y = p[1];
        Var h = t.mul(t.add(x, y), t.sub(x, t.scale(y, 0.7)));
        h = t.add(h, t.relu(x));
        h = t.add(h, t.exp(t.scale(y, 0.5)));
        h = t.add(h, t.sigmoid(x));
        h = t.axpy(h, 1.3, t.clamp_min(y, -0.5));
        Var l1 = t.mean_abs_diff(x, y);
        return t.weighted_sum({{1.0, t.mean(h)}, {0.5, l1}, {0.25, t.sum(t.mul(x, x))}});
    });
    CHECK_MESSAGE(gc.ok(), gc.report);
}

TEST_CASE("tape gradients: shape ops") {
    Rng rng(102);
    Tensor a = random_tensor(4, 3, rng);
    Tensor b = random_tensor(4, 2, rng);
    Tensor row = random_tensor(1, 3, rng);
    Tensor s = random_tensor(4, 1, rng);

    auto gc = grad_check({a, b, row, s}, [](Tape& t, std::vector<Var>& p) {
        Var cat = t.concat_cols(p[0], p[1]);          // 4x5
        Var sl = t.slice_cols(cat, 1, 3);             // 4x3
        Var rep = t.repeat_row(p[2], 4);              // 4x3
        Var g = t.gather_rows(sl, {2, 0, 2, 3, 1});   // 5x3
        Var m = t.mul_colvec(t.add(sl, rep), p[3]);   // 4x3
        return t.weighted_sum({{1.0, t.mean(g)}, {1.0, t.mean(m)}, {0.3, t.sum(cat)}});
    });
    CHECK_MESSAGE(gc.ok(), gc.report);
}

TEST_CASE("tape gradients: row-vector ops") {
    Rng rng(103);
    Tensor a = random_tensor(5, 3, rng);
    Tensor b = random_tensor(5, 3, rng);

    auto gc = grad_check({a, b}, [](Tape& t, std::vector<Var>& p) {
        Var d = t.rows_dot(p[0], p[1]);
        Var c = t.rows_cross(p[0], p[1]);
        Var n = t.normalize_rows(p[0]);
        return t.weighted_sum(
            {{1.0, t.mean(d)}, {1.0, t.mean(t.mul(c, c))}, {1.0, t.mean(t.rows_dot(n, p[1]))}});
    });
    CHECK_MESSAGE(gc.ok(), gc.report);
}

TEST_CASE("tape gradients: quaternion chain") {
    Rng rng(104);
    Tensor w = random_tensor(6, 3, rng, -2.0, 2.0);
    Tensor qraw = random_tensor(6, 4, rng);
    Tensor probe = random_tensor(6, 3, rng);

    auto gc = grad_check({w, qraw}, [probe](Tape& t, std::vector<Var>& p) {
        Var q = t.normalize_rows(p[1]);
        Var dq = t.quat_expmap(t.scale(p[0], 0.37));
        Var qt = t.quat_mul_rows(dq, q);
        Var pr = t.constant(probe);
        Var acc = t.mean(t.rows_dot(t.quat_axis(qt, 0), pr));
        acc = t.add(acc, t.mean(t.rows_dot(t.quat_axis(qt, 1), pr)));
        acc = t.add(acc, t.mean(t.rows_dot(t.quat_axis(qt, 2), pr)));
        return acc;
    });
    CHECK_MESSAGE(gc.ok(), gc.report);
}

TEST_CASE("quat_expmap handles the zero rotation smoothly") {
    Tensor w(2, 3);  // one exactly zero, one tiny
    w.v = {0, 0, 0, 1e-10, -2e-10, 5e-11};
    auto gc = grad_check({w}, [](Tape& t, std::vector<Var>& p) {
        Var q = t.quat_expmap(p[0]);
        return t.sum(t.mul(q, q));
    });
    CHECK_MESSAGE(gc.ok(), gc.report);

    Tape t;
    Var q = t.quat_expmap(t.leaf(w, false));
    CHECK(q.val().at(0, 0) == 1.0);
    CHECK(q.val().at(0, 1) == 0.0);
}

TEST_CASE("tape gradients: posenc") {
    Rng rng(105);
    Tensor x = random_tensor(4, 3, rng);
    auto gc = grad_check({x}, [](Tape& t, std::vector<Var>& p) {
        return t.mean(t.posenc(p[0], 4));
    });
    CHECK_MESSAGE(gc.ok(), gc.report);
}

TEST_CASE("tape gradients: linear and lora layers") {
    Rng rng(106);
    Tensor x = random_tensor(5, 7, rng);
    Tensor w = random_tensor(4, 7, rng);
    Tensor b = random_tensor(1, 4, rng);
    Tensor a2 = random_tensor(4, 2, rng);
    Tensor b2 = random_tensor(2, 7, rng);

    auto gc = grad_check({x, w, b, a2, b2}, [](Tape& t, std::vector<Var>& p) {
        Var y = t.linear(p[0], p[1], p[2]);
        Var z = t.linear_lora(p[0], p[1], p[2], p[3], p[4], 0.5);
        return t.add(t.mean(t.mul(y, y)), t.mean(t.mul(z, z)));
    });
    CHECK_MESSAGE(gc.ok(), gc.report);
}

TEST_CASE("linear_lora with zero A matches plain linear but still trains B->A") {
    Rng rng(107);
    Tensor x = random_tensor(3, 5, rng), w = random_tensor(4, 5, rng), b = random_tensor(1, 4, rng);
    Tensor a0(4, 2);  // zeros
    Tensor b0 = random_tensor(2, 5, rng);

    Tape t;
    Var vx = t.leaf(x, false), vw = t.leaf(w, false), vb = t.leaf(b, false);
    Var va = t.leaf(a0, true), vbb = t.leaf(b0, true);
    Var y_lora = t.linear_lora(vx, vw, vb, va, vbb, 0.5);
    Var y_plain = t.linear(vx, vw, vb);
    for (std::int64_t i = 0; i < y_plain.val().size(); ++i)
        CHECK(y_lora.val().v[i] == doctest::Approx(y_plain.val().v[i]).epsilon(1e-14));

    t.backward(t.sum(y_lora));
    real a_grad_norm = 0, b_grad_norm = 0;
    for (real g : va.grad().v) a_grad_norm += g * g;
    for (real g : vbb.grad().v) b_grad_norm += g * g;
    CHECK(a_grad_norm > 1e-8);   // gradient reaches A through the random B
    CHECK(b_grad_norm == 0.0);   // dB = s A^T gy^T x vanishes at A = 0
}

TEST_CASE("tape gradients: masked L1 and gather subsampling") {
    Rng rng(108);
    Tensor a = random_tensor(6, 2, rng), b = random_tensor(6, 2, rng);
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (std::abs(a.v[i] - b.v[i]) < 0.01) a.v[i] += 0.02;
    Tensor mask(6, 2);
    for (std::int64_t i = 0; i < mask.size(); ++i) mask.v[i] = (i % 3 == 0) ? 1.0 : 0.0;

    auto gc = grad_check({a, b}, [mask](Tape& t, std::vector<Var>& p) {
        return t.masked_mean_abs_diff(p[0], p[1], mask);
    });
    CHECK_MESSAGE(gc.ok(), gc.report);

    // all-zero mask: zero loss, zero grads, no crash
    Tape t;
    Tensor zero_mask(6, 2);
    Var va = t.leaf(a, true), vb = t.leaf(b, true);
    Var l = t.masked_mean_abs_diff(va, vb, zero_mask);
    CHECK(l.scalar() == 0.0);
}

TEST_CASE("gradient accumulates when a var feeds multiple ops") {
    Tensor x(1, 1);
    x.v = {3.0};
    Tape t;
    Var vx = t.leaf(x, true);
    Var y = t.add(vx, vx);  // dy/dx = 2
    t.backward(t.sum(y));
    CHECK(vx.grad().v[0] == 2.0);
}

TEST_CASE("backward without recorded ops raises NoRecordedForward") {
    Tape t;
    Var leaf = t.leaf(Tensor::zeros(1, 1), true);
    CHECK_THROWS_AS(t.backward(leaf), NoRecordedForward);
}

TEST_CASE("backward is one-shot and repeat runs are bitwise identical") {
    Rng rng(109);
    Tensor x = random_tensor(4, 4, rng);
    auto run = [&] {
        Tape t;
        Var vx = t.leaf(x, true);
        Var l = t.mean(t.mul(t.sigmoid(vx), t.exp(t.scale(vx, 0.3))));
        t.backward(l);
        return vx.grad().v;
    };
    auto g1 = run(), g2 = run();
    CHECK(g1 == g2);
}

TEST_CASE("zero upstream loss gradient leaves parameters untouched") {
    Rng rng(110);
    Tensor x = random_tensor(3, 3, rng);
    Tape t;
    Var vx = t.leaf(x, true);
    Var y = t.mul(vx, vx);
    Var loss = t.scale(t.sum(y), 0.0);  // d(loss)/dy = 0
    t.backward(loss);
    for (real g : vx.grad().v) CHECK(g == 0.0);
}

TEST_CASE("quaternion ops keep unit rows unit") {
    Rng rng(111);
    Tensor q1 = random_unit_quats(8, rng), q2 = random_unit_quats(8, rng);
    Tape t;
    Var prod = t.quat_mul_rows(t.leaf(q1, false), t.leaf(q2, false));
    for (std::int64_t r = 0; r < 8; ++r) {
        const real* q = prod.val().row_ptr(r);
        real n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
}
