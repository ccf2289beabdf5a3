#include "sf/losses.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <utility>

#include "sf/parallel.hpp"

namespace sf {

namespace {

constexpr int kWin = 11;       // SSIM window taps
constexpr int kHalf = kWin / 2;
constexpr real kSigma = 1.5;   // window Gaussian sigma
constexpr real kC1 = 1e-4;     // (0.01 * L)^2 with dynamic range L = 1
constexpr real kC2 = 9e-4;     // (0.03 * L)^2

const std::array<real, kWin>& window_taps() {
    static const std::array<real, kWin> taps = [] {
        std::array<real, kWin> t{};
        real s = 0;
        for (int i = 0; i < kWin; ++i) {
            real d = static_cast<real>(i - kHalf);
            t[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
            s += t[static_cast<std::size_t>(i)];
        }
        for (auto& x : t) x /= s;  // truncated Gaussian, renormalized
        return t;
    }();
    return taps;
}

constexpr std::int64_t kConvChunk = 1024;  // pixels per parallel chunk (pure map, disjoint writes)

// Separable 11-tap convolution of a (P x C) field over the (height x width)
// pixel grid, zero padding. The kernel is symmetric, so this is its own
// adjoint; the SSIM backward reuses it as the transpose.
Tensor conv_window(const Tensor& f, int width, int height) {
    const auto& g = window_taps();
    const std::int64_t C = f.cols;
    Tensor tmp(f.rows, C), out(f.rows, C);
    parallel_chunks(f.rows, kConvChunk, [&](std::int64_t, std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            std::int64_t y = p / width, x = p % width;
            for (std::int64_t c = 0; c < C; ++c) {
                real acc = 0;
                for (int t = 0; t < kWin; ++t) {
                    std::int64_t xs = x + t - kHalf;
                    if (xs < 0 || xs >= width) continue;
                    acc += g[static_cast<std::size_t>(t)] * f.at(y * width + xs, c);
                }
                tmp.at(p, c) = acc;
            }
        }
    });
    parallel_chunks(f.rows, kConvChunk, [&](std::int64_t, std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            std::int64_t y = p / width, x = p % width;
            for (std::int64_t c = 0; c < C; ++c) {
                real acc = 0;
                for (int t = 0; t < kWin; ++t) {
                    std::int64_t ys = y + t - kHalf;
                    if (ys < 0 || ys >= height) continue;
                    acc += g[static_cast<std::size_t>(t)] * tmp.at(ys * width + x, c);
                }
                out.at(p, c) = acc;
            }
        }
    });
    return out;
}

void require_image(const Var& a, const Tensor& b, int width, int height, const char* where) {
    if (width <= 0 || height <= 0 ||
        a.rows() != static_cast<std::int64_t>(width) * height ||
        b.rows != a.rows() || b.cols != a.cols())
        throw ResolutionMismatch(std::string(where) + ": buffer shape does not match the image size");
}

}  // namespace

Var ssim_mean(Tape& tape, const Var& x, const Tensor& y, int width, int height) {
    require_image(x, y, width, height, "ssim_mean");

    struct Stash {
        Tensor y, mu_x, mu_y, sxx, syy, sxy;
    };
    auto st = std::make_shared<Stash>();
    st->y = y;

    const Tensor& xv = x.val();
    const std::int64_t C = xv.cols, P = xv.rows;
    Tensor x2(P, C), y2(P, C), xy(P, C);
    for (std::int64_t i = 0; i < P * C; ++i) {
        x2.v[static_cast<std::size_t>(i)] = xv.v[static_cast<std::size_t>(i)] * xv.v[static_cast<std::size_t>(i)];
        y2.v[static_cast<std::size_t>(i)] = y.v[static_cast<std::size_t>(i)] * y.v[static_cast<std::size_t>(i)];
        xy.v[static_cast<std::size_t>(i)] = xv.v[static_cast<std::size_t>(i)] * y.v[static_cast<std::size_t>(i)];
    }
    st->mu_x = conv_window(xv, width, height);
    st->mu_y = conv_window(y, width, height);
    st->sxx = conv_window(x2, width, height);
    st->syy = conv_window(y2, width, height);
    st->sxy = conv_window(xy, width, height);
    // Turn the raw second moments into (co)variances in place.
    for (std::int64_t i = 0; i < P * C; ++i) {
        std::size_t k = static_cast<std::size_t>(i);
        st->sxx.v[k] -= st->mu_x.v[k] * st->mu_x.v[k];
        st->syy.v[k] -= st->mu_y.v[k] * st->mu_y.v[k];
        st->sxy.v[k] -= st->mu_x.v[k] * st->mu_y.v[k];
    }

    Var out = tape.alloc(1, 1, x.requires_grad());
    real total = 0;
    for (std::int64_t i = 0; i < P * C; ++i) {
        std::size_t k = static_cast<std::size_t>(i);
        real a1 = 2 * st->mu_x.v[k] * st->mu_y.v[k] + kC1;
        real a2 = 2 * st->sxy.v[k] + kC2;
        real b1 = st->mu_x.v[k] * st->mu_x.v[k] + st->mu_y.v[k] * st->mu_y.v[k] + kC1;
        real b2 = st->sxx.v[k] + st->syy.v[k] + kC2;
        total += (a1 * a2) / (b1 * b2);
    }
    out.val().v[0] = total / static_cast<real>(P * C);
    if (!out.requires_grad()) return out;

    tape.record([x, out, st, width, height, P, C] {
        real u = out.grad().v[0] / static_cast<real>(P * C);
        // Per-window derivatives of SSIM w.r.t. the window statistics, laid
        // out as fields so the adjoint convolution pushes them back to pixels:
        //   d(mu_x), d(raw second moment Sxx), d(raw cross moment Sxy).
        Tensor f_mu(P, C), f_sxx(P, C), f_sxy(P, C);
        for (std::int64_t i = 0; i < P * C; ++i) {
            std::size_t k = static_cast<std::size_t>(i);
            real mx = st->mu_x.v[k], my = st->mu_y.v[k];
            real a1 = 2 * mx * my + kC1;
            real a2 = 2 * st->sxy.v[k] + kC2;
            real b1 = mx * mx + my * my + kC1;
            real b2 = st->sxx.v[k] + st->syy.v[k] + kC2;
            real inv = 1.0 / (b1 * b2);
            real s = a1 * a2 * inv;
            real d_a1 = a2 * inv, d_a2 = a1 * inv;
            real d_b1 = -s / b1, d_b2 = -s / b2;
            // mu_x feeds a1 and b1 directly, and the variances through the
            // -mu^2 / -mu_x*mu_y corrections applied above.
            f_mu.v[k] = u * (d_a1 * 2 * my + d_b1 * 2 * mx - d_a2 * 2 * my - d_b2 * 2 * mx);
            f_sxx.v[k] = u * d_b2;
            f_sxy.v[k] = u * 2 * d_a2;
        }
        Tensor c_mu = conv_window(f_mu, width, height);
        Tensor c_sxx = conv_window(f_sxx, width, height);
        Tensor c_sxy = conv_window(f_sxy, width, height);
        for (std::int64_t i = 0; i < P * C; ++i) {
            std::size_t k = static_cast<std::size_t>(i);
            x.grad().v[k] += c_mu.v[k] + 2 * x.val().v[k] * c_sxx.v[k] + st->y.v[k] * c_sxy.v[k];
        }
    });
    return out;
}

Var image_loss(Tape& tape, const Var& render, const Tensor& gt, int width, int height) {
    require_image(render, gt, width, height, "image_loss");
    Var l1 = tape.mean_abs_diff(render, tape.constant(gt));
    Var s = ssim_mean(tape, render, gt, width, height);
    // 0.8 * L1 + 0.2 * (1 - SSIM)/2
    return tape.weighted_sum({{0.8, l1}, {-0.1, s}, {0.1, tape.scalar(1.0)}});
}

DepthNormals depth_normals(Tape& tape, const Camera& cam, const Var& depth,
                           const std::vector<std::uint8_t>& valid) {
    const std::int64_t P = static_cast<std::int64_t>(cam.width) * cam.height;
    if (depth.rows() != P || depth.cols() != 1 || static_cast<std::int64_t>(valid.size()) != P)
        throw ResolutionMismatch("depth_normals: depth/valid size does not match the camera");

    const int w = cam.width, h = cam.height;
    DepthNormals res{tape.alloc(P, 3, depth.requires_grad()), std::vector<std::uint8_t>(static_cast<std::size_t>(P), 0)};
    auto ok_rows = std::make_shared<std::vector<std::int64_t>>();

    // Geometry helper shared by forward and backward. The camera origin
    // cancels in the central differences, so points are just tau * ray.
    auto ray = [&cam](std::int64_t x, std::int64_t y) {
        return cam.ray_direction(static_cast<real>(x) + real(0.5), static_cast<real>(y) + real(0.5));
    };

    const Tensor& d = depth.val();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            std::int64_t p = y * w + x;
            if (x == 0 || x == w - 1 || y == 0 || y == h - 1) continue;
            if (!valid[static_cast<std::size_t>(p)] || !valid[static_cast<std::size_t>(p - 1)] ||
                !valid[static_cast<std::size_t>(p + 1)] || !valid[static_cast<std::size_t>(p - w)] ||
                !valid[static_cast<std::size_t>(p + w)])
                continue;
            Vec3 a = ray(x + 1, y) * d.at(p + 1, 0) - ray(x - 1, y) * d.at(p - 1, 0);
            Vec3 b = ray(x, y + 1) * d.at(p + w, 0) - ray(x, y - 1) * d.at(p - w, 0);
            Vec3 raw = cross(a, b);
            real n2 = norm(raw);
            if (n2 < 1e-12) continue;
            Vec3 nh = raw * (1.0 / n2);
            real s = dot(nh, ray(x, y)) > 0 ? real(-1) : real(1);
            res.normals.val().at(p, 0) = s * nh.x;
            res.normals.val().at(p, 1) = s * nh.y;
            res.normals.val().at(p, 2) = s * nh.z;
            res.ok[static_cast<std::size_t>(p)] = 1;
            ok_rows->push_back(p);
        }
    }

    if (res.normals.requires_grad()) {
        Var out = res.normals;
        tape.record([depth, out, cam, ok_rows, w] {
            // cam is a copy: the caller's Camera may be gone by backward time.
            auto ray = [&cam](std::int64_t px, std::int64_t py) {
                return cam.ray_direction(static_cast<real>(px) + real(0.5), static_cast<real>(py) + real(0.5));
            };
            const Tensor& dv = depth.val();
            for (std::int64_t p : *ok_rows) {
                std::int64_t x = p % w, y = p / w;
                Vec3 rr = ray(x + 1, y), rl = ray(x - 1, y);
                Vec3 rd = ray(x, y + 1), ru = ray(x, y - 1);
                Vec3 a = rr * dv.at(p + 1, 0) - rl * dv.at(p - 1, 0);
                Vec3 b = rd * dv.at(p + w, 0) - ru * dv.at(p - w, 0);
                Vec3 raw = cross(a, b);
                real n2 = norm(raw);
                Vec3 nh = raw * (1.0 / n2);
                real s = dot(nh, ray(x, y)) > 0 ? real(-1) : real(1);
                Vec3 g{out.grad().at(p, 0), out.grad().at(p, 1), out.grad().at(p, 2)};
                Vec3 gh = g * s;                                   // through the orientation flip
                Vec3 graw = (gh - nh * dot(gh, nh)) * (1.0 / n2);  // through the normalization
                Vec3 ga = cross(b, graw);                          // d(cross)/da
                Vec3 gb = cross(graw, a);                          // d(cross)/db
                depth.grad().at(p + 1, 0) += dot(ga, rr);
                depth.grad().at(p - 1, 0) -= dot(ga, rl);
                depth.grad().at(p + w, 0) += dot(gb, rd);
                depth.grad().at(p - w, 0) -= dot(gb, ru);
            }
        });
    }
    return res;
}

Var normal_consistency_loss(Tape& tape, const Var& alpha, const Var& blended_normal,
                            const DepthNormals& dn) {
    const std::int64_t P = dn.normals.rows();
    if (alpha.rows() != P || alpha.cols() != 1 || blended_normal.rows() != P || blended_normal.cols() != 3)
        throw ResolutionMismatch("normal_consistency_loss: buffer shapes disagree");
    Tensor ok(P, 1);
    for (std::int64_t p = 0; p < P; ++p) ok.at(p, 0) = dn.ok[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
    // alpha - dot(n_blend, N_depth) == sum_i w_i (1 - n_i . N) for unit N.
    Var agree = tape.rows_dot(blended_normal, dn.normals);
    Var per_pixel = tape.mul(tape.sub(alpha, agree), tape.constant(std::move(ok)));
    return tape.mean(per_pixel);
}

Var mask_loss(Tape& tape, const Var& alpha, const Tensor& gt_mask) {
    if (alpha.rows() != gt_mask.rows || alpha.cols() != 1 || gt_mask.cols != 1)
        throw ResolutionMismatch("mask_loss: alpha and mask shapes disagree");
    return tape.mean_abs_diff(alpha, tape.constant(gt_mask));
}

}  // namespace sf
