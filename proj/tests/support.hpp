#pragma once

// Shared test utilities: randomized tensors and the central-finite-difference
// gradient checker used against every differentiable op and pipeline.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sf/geom.hpp"
#include "sf/rng.hpp"
#include "sf/tape.hpp"

namespace sftest {

using sf::real;
using sf::Rng;
using sf::Tape;
using sf::Tensor;
using sf::Var;

// Camera at `eye` looking at `target`, x right / y down / z forward.
inline sf::Camera look_at_camera(const sf::Vec3& eye, const sf::Vec3& target, real fx, int w,
                                 int h) {
    using sf::Vec3;
    Vec3 fwd = normalized(target - eye);
    Vec3 up{0, 1, 0};
    if (std::abs(dot(up, fwd)) > 0.99) up = {1, 0, 0};
    Vec3 right = normalized(cross(up, fwd));  // camera x
    Vec3 down = cross(fwd, right);            // camera y completes RH frame
    sf::Camera cam;
    cam.fx = cam.fy = fx;
    cam.cx = w / 2.0;
    cam.cy = h / 2.0;
    cam.width = w;
    cam.height = h;
    cam.rotation.m = {right.x, right.y, right.z, down.x, down.y, down.z, fwd.x, fwd.y, fwd.z};
    cam.translation = cam.rotation * (-eye);
    return cam;
}

inline Tensor random_tensor(std::int64_t rows, std::int64_t cols, Rng& rng, real lo = -1.0,
                            real hi = 1.0) {
    Tensor t(rows, cols);
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// Rebuilds the graph from scratch per evaluation. `build` gets leaves in the
// same order as `params` and must return a 1x1 loss.
using BuildFn = std::function<Var(Tape&, std::vector<Var>&)>;

struct GradCheck {
    int checked = 0;
    int failed = 0;
    std::string report;  // first few failures, for CHECK_MESSAGE

    bool ok() const { return failed == 0 && checked > 0; }
};

inline GradCheck grad_check(const std::vector<Tensor>& params, const BuildFn& build,
                            real step = 1e-4, real abs_tol = 1e-4, real rel_tol = 1e-3,
                            std::int64_t max_per_tensor = 64, std::uint64_t seed = 1234) {
    // analytic gradients
    std::vector<Tensor> grads;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
        Var loss = build(tape, leaves);
        tape.backward(loss);
        for (auto& l : leaves) grads.push_back(l.grad());
    }

    auto eval_at = [&](const std::vector<Tensor>& values) {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& p : values) leaves.push_back(tape.leaf(p, false));
        return build(tape, leaves).scalar();
    };

    GradCheck res;
    std::ostringstream msg;
    Rng pick(seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::int64_t n = params[pi].size();
        // exhaustive when small, deterministic random subset when large
        std::vector<std::int64_t> idx;
        if (n <= max_per_tensor)
            for (std::int64_t i = 0; i < n; ++i) idx.push_back(i);
        else {
            Rng r = pick.child("tensor", pi);
            for (std::int64_t i = 0; i < max_per_tensor; ++i)
                idx.push_back(static_cast<std::int64_t>(r.index(static_cast<std::uint64_t>(n))));
        }
        for (std::int64_t i : idx) {
            std::vector<Tensor> plus = params, minus = params;
            plus[pi].v[i] += step;
            minus[pi].v[i] -= step;
            real numeric = (eval_at(plus) - eval_at(minus)) / (2 * step);
            real analytic = grads[pi].v[i];
            real err = std::abs(analytic - numeric);
            real tol = std::max(abs_tol, rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
            ++res.checked;
            if (!(err <= tol)) {
                ++res.failed;
                if (res.failed <= 5)
                    msg << "param " << pi << " elem " << i << ": analytic " << analytic
                        << " numeric " << numeric << " err " << err << "\n";
            }
        }
    }
    res.report = msg.str();
    return res;
}

}  // namespace sftest
