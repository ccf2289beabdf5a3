#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/geom.hpp"
#include "sf/tape.hpp"

namespace sf {

// Canonical 2D Gaussian surfels, struct-of-arrays. The trainable
// parameterization is stored: scale as log-scale (positivity), opacity and
// color as pre-sigmoid logits ([0,1] range). Arrays are float so checkpoints
// round-trip bit-exactly; all math upconverts to double.
struct SurfelSet {
    std::int64_t count = 0;
    std::vector<float> mu;             // 3N, xyz
    std::vector<float> quat;           // 4N, [w x y z]
    std::vector<float> log_scale;      // 2N, (log xi_u, log xi_v)
    std::vector<float> opacity_logit;  // N
    std::vector<float> color_logit;    // 3N, rgb

    void resize(std::int64_t n);

    // Exposed (constrained) values for one surfel.
    Vec3 center(std::int64_t i) const;
    Quat rotation(std::int64_t i) const;
    Vec2 scale(std::int64_t i) const;    // exp(log_scale)
    real opacity(std::int64_t i) const;  // sigmoid(logit)
    Vec3 color(std::int64_t i) const;    // sigmoid per channel
};

// Surfel state at a concrete time: constrained values in double precision,
// ready for rasterization. scale holds xi (not log), opacity/color in [0,1].
struct DeformedSnapshot {
    std::int64_t count = 0;
    std::vector<real> mu;       // 3N
    std::vector<real> quat;     // 4N, unit
    std::vector<real> scale;    // 2N, >= 1e-6
    std::vector<real> opacity;  // N
    std::vector<real> color;    // 3N
    std::vector<std::int64_t> source_index;  // canonical surfel per entry
};

// Tangent frame from a unit quaternion: t_u, t_v are the first two rotation
// matrix columns, n = t_u x t_v the third.
struct TangentFrame {
    Vec3 t_u, t_v, n;
};
TangentFrame tangent_frame(const Quat& q);

// P(u,v) = mu + xi_u t_u u + xi_v t_v v
Vec3 world_point(const Vec3& mu, const Quat& q, const Vec2& xi, real u, real v);

real gaussian_weight(real u, real v);

// The zero-motion snapshot: canonical parameters pushed through their
// constraints (exp / sigmoid / quat normalization), identity index map.
DeformedSnapshot snapshot_canonical(const SurfelSet& s);

// Tape leaves for the canonical parameter groups (float storage -> double).
struct SurfelVars {
    Var mu;             // Nx3
    Var quat;           // Nx4 (raw, normalize before use)
    Var log_scale;      // Nx2
    Var opacity_logit;  // Nx1
    Var color_logit;    // Nx3
};
SurfelVars make_surfel_vars(Tape& tape, const SurfelSet& s, bool requires_grad);

// Snapshot as tape nodes (constrained values), for differentiable rendering.
struct SnapshotVars {
    Var mu;       // Nx3
    Var quat;     // Nx4, unit rows
    Var scale;    // Nx2, clamped >= 1e-6
    Var opacity;  // Nx1
    Var color;    // Nx3
};
// Constraint mapping only (no motion): the t=0 state of any segment.
SnapshotVars constrain_surfels(Tape& tape, const SurfelVars& sv);

// Extract plain values from snapshot vars (for non-differentiated consumers).
DeformedSnapshot snapshot_values(const SnapshotVars& vars);

// Binary checkpoint: magic + version + count header, then the five parameter
// arrays in field order as little-endian float32.
void save_surfels(const SurfelSet& s, const std::string& path);
SurfelSet load_surfels(const std::string& path);  // MissingArtifact / ProtocolError

}  // namespace sf
