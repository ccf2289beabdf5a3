#pragma once

// Renderer-specific test helpers shared by the splat and loss suites: simple
// camera construction, randomized surfel sets, and the discontinuity audit
// that keeps finite-difference probes on smooth ground.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sf/render.hpp"
#include "sf/surfel.hpp"
#include "support.hpp"

namespace sftest {

// Camera at the origin looking down +z.
inline sf::Camera axis_cam(int w, int h, real f) {
    sf::Camera c;
    c.fx = c.fy = f;
    c.cx = w / 2.0;
    c.cy = h / 2.0;
    c.width = w;
    c.height = h;
    return c;
}

// Raw surfel parameters placed in front of an axis_cam: xi 0.12..0.30 and
// alpha 0.12..0.88, ranges that keep every in-cutoff splat response well
// above the renderer's contribution floor.
inline sf::SurfelSet random_raw_set(std::int64_t n, Rng& rng) {
    sf::SurfelSet s;
    s.resize(n);
    for (std::int64_t i = 0; i < n; ++i) {
        s.mu[3 * i + 0] = static_cast<float>(rng.uniform(-0.8, 0.8));
        s.mu[3 * i + 1] = static_cast<float>(rng.uniform(-0.8, 0.8));
        s.mu[3 * i + 2] = static_cast<float>(rng.uniform(1.5, 3.0));
        for (int k = 0; k < 4; ++k) s.quat[4 * i + k] = static_cast<float>(rng.normal());
        s.log_scale[2 * i + 0] = static_cast<float>(rng.uniform(-2.1, -1.2));
        s.log_scale[2 * i + 1] = static_cast<float>(rng.uniform(-2.1, -1.2));
        s.opacity_logit[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
        for (int k = 0; k < 3; ++k) s.color_logit[3 * i + k] = static_cast<float>(rng.normal());
    }
    return s;
}

// Finite-difference probes must not cross compositing discontinuities (the
// 3-sigma cutoff, the opacity clamp, the transmittance early-out, depth-sort
// ties, grazing-incidence sign flips). Rejects configurations that render
// within a safety margin of any of them.
inline bool fd_safe(const sf::Camera& cam, const sf::DeformedSnapshot& snap) {
    using sf::Vec3;
    const Vec3 origin = cam.center();
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            Vec3 dir = cam.ray_direction(x + 0.5, y + 0.5);
            real dn = norm(dir);
            struct H {
                real tau, g;
            };
            std::vector<H> hits;
            for (std::int64_t i = 0; i < snap.count; ++i) {
                sf::SplatGeom g = splat_geom(snap, i);
                real q = dot(dir, g.n);
                if (std::abs(q) < 1e-12) continue;
                real tau = dot(g.mu - origin, g.n) / q;
                if (tau <= 0.05) continue;
                Vec3 delta = origin + dir * tau - g.mu;
                real u = dot(delta, g.t_u) / g.xi.x;
                real v = dot(delta, g.t_v) / g.xi.y;
                real r2 = u * u + v * v;
                if (r2 > 9.1) continue;                       // safely outside
                if (std::abs(r2 - 9.0) < 0.02) return false;  // cutoff boundary
                if (std::abs(q) / dn < 0.1) return false;     // grazing incidence
                real gval = snap.opacity[i] * std::exp(-0.5 * r2);
                if (gval > 0.99) return false;                // opacity clamp region
                hits.push_back({tau, gval});
            }
            std::sort(hits.begin(), hits.end(), [](const H& a, const H& b) { return a.tau < b.tau; });
            real T = 1;
            for (std::size_t k = 0; k < hits.size(); ++k) {
                if (k > 0 && hits[k].tau - hits[k - 1].tau < 0.01) return false;  // sort tie
                T *= 1 - hits[k].g;
                if (T > 3e-5 && T < 3e-4) return false;  // early-termination boundary
            }
        }
    return true;
}

}  // namespace sftest
