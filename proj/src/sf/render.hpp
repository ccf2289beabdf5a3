#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sf/geom.hpp"
#include "sf/surfel.hpp"

namespace sf {

struct DegenerateSplat : Error {
    using Error::Error;
};
struct MissingHitRecords : Error {
    using Error::Error;
};

// One splat's intersection geometry.
struct SplatGeom {
    Vec3 mu, t_u, t_v, n;
    Vec2 xi;
};
SplatGeom splat_geom(const DeformedSnapshot& s, std::int64_t i);

struct RaySplatHit {
    real u = 0, v = 0;   // tangent-plane coordinates in sigma units
    real depth = 0;      // camera-z depth of the intersection
    real gaussian = 0;   // exp(-(u^2 + v^2)/2)
};

// Exact ray/plane intersection through continuous pixel coordinates (px, py),
// mapped into the splat frame. Miss when the plane is parallel to the ray
// within 1e-12, the hit is behind the camera, or u^2+v^2 exceeds the 3-sigma
// cutoff. Throws DegenerateSplat when a scale is below 1e-9.
std::optional<RaySplatHit> intersect(const Camera& cam, real px, real py, const SplatGeom& s);

// Forward render products. P = width*height pixels, row-major (y*width + x).
// depth is 0 wherever nothing was hit; consumers must gate on alpha.
struct RenderBuffers {
    int width = 0, height = 0;
    std::vector<real> color;    // 3P
    std::vector<real> depth;    // P
    std::vector<real> alpha;    // P
    std::vector<real> normal;   // 3P, weight-blended, oriented toward the camera
    std::vector<real> distort;  // P, sum_{i<j} w_i w_j (z_j - z_i) over sorted hits

    // Ray/splat records retained for the backward pass (keep_hits). Pixel p
    // owns hits[hit_offset[p] .. hit_offset[p] + hit_count[p]).
    struct Hit {
        std::int32_t splat = 0;
        real u = 0, v = 0, tau = 0;
    };
    std::vector<std::int64_t> hit_offset;  // P+1 (slot capacity layout)
    std::vector<std::int32_t> hit_count;   // P
    std::vector<Hit> hits;
    bool has_hits = false;
};

// Plain forward pass over a snapshot (no autodiff). keep_hits retains the
// per-pixel intersection records needed by the tape op's backward.
RenderBuffers render(const Camera& cam, const DeformedSnapshot& snap, bool keep_hits = false);

// Differentiable render; gradients flow to every snapshot field.
struct RenderOutputs {
    Var color;    // P x 3
    Var depth;    // P x 1
    Var alpha;    // P x 1
    Var normal;   // P x 3
    Var distort;  // P x 1
};
RenderOutputs render_splats(Tape& tape, const Camera& cam, const SnapshotVars& snap);

}  // namespace sf
