#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/rng.hpp"
#include "sf/surfel.hpp"
#include "sf/tape.hpp"

namespace sf {

// One dense layer, float32 storage (checkpoint precision).
struct DenseLayer {
    std::int64_t in = 0, out = 0;
    std::vector<float> w;  // out*in, row-major
    std::vector<float> b;  // out

    void resize(std::int64_t in_dim, std::int64_t out_dim);
};

// MLP mapping (encoded center, encoded time) -> (v, omega, e). hidden[0] maps
// the encoding to `width`; the remaining depth-1 layers are width x width.
// Heads are zero-initialized so a fresh field deforms nothing.
struct VelocityFieldParams {
    int l_pos = 10, l_time = 6;
    int width = 128, depth = 8;
    std::vector<DenseLayer> hidden;
    DenseLayer head_v, head_w, head_e;  // 3, 3, 2 outputs

    std::int64_t input_dim() const { return 3 * (1 + 2 * l_pos) + (1 + 2 * l_time); }
};

VelocityFieldParams init_field(int width, int depth, int l_pos, int l_time, Rng rng);

// Low-rank update for one segment: one (A, B) pair per square hidden layer
// (hidden[1..depth-1]; the input layer stays frozen so delta storage remains
// below a full field), plus this segment's fully-trainable head copies.
// Effective square weight = base + scaling * A * B.
struct LoraDelta {
    int rank = 0;
    real scaling = 0;  // 1/rank
    struct Pair {
        std::vector<float> a;  // out x rank, zero-initialized
        std::vector<float> b;  // rank x in, random-initialized
    };
    std::vector<Pair> pairs;
    DenseLayer head_v, head_w, head_e;
};

// rank >= 1; heads copied from `heads_from` (the previous segment's effective
// heads) so the delta starts as an exact no-op.
LoraDelta init_lora(const VelocityFieldParams& heads_from, int rank, Rng rng);

// A base field plus the ordered LoRA deltas of later segments.
struct SegmentField {
    VelocityFieldParams base;
    std::vector<LoraDelta> deltas;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

// Folds delta into base: square weights += scaling * A * B (double
// accumulation, float storage), heads replaced. Base argument unmodified.
VelocityFieldParams apply_lora(const VelocityFieldParams& base, const LoraDelta& delta);

// base with all recorded deltas folded in.
VelocityFieldParams materialize(const SegmentField& field);

// --- tape evaluation ---------------------------------------------------------

// Leaves for one segment's field. When a LoRA delta is active, hidden weights
// hold base (+ earlier deltas) frozen and lora_a/lora_b are the trainable
// adapters; otherwise the hidden layers themselves are the trainables.
struct FieldVars {
    int l_pos = 10, l_time = 6;
    std::vector<Var> hidden_w, hidden_b;
    Var head_v_w, head_v_b, head_w_w, head_w_b, head_e_w, head_e_b;
    bool lora_active = false;
    real lora_scaling = 0;
    std::vector<Var> lora_a, lora_b;  // per square hidden layer
};

// trainable=false freezes everything (pure evaluation). For training: segment
// 1 trains the whole MLP; with a delta present, only heads + adapters train.
FieldVars make_field_vars(Tape& tape, const SegmentField& field, bool trainable);

struct FieldOutput {
    Var v;  // Nx3
    Var w;  // Nx3
    Var e;  // Nx2
};

// F_theta(posenc(mu), posenc(t)) for all rows of mu at one shared time.
FieldOutput eval_field(Tape& tape, const FieldVars& fv, const Var& mu, real t);

// mu + v t; q <- phi(w t) (x) q; xi <- clamp(xi + e t, 1e-6). Exact identity
// at t=0 (bitwise), which segment handoff relies on.
SnapshotVars deform(Tape& tape, const SnapshotVars& canonical, const FieldOutput& f, real t);

// Convenience: constrain + eval + deform, without gradients.
DeformedSnapshot deform_surfels(const SurfelSet& s, const SegmentField& field, real t);

// --- serialization -------------------------------------------------------------

void save_field(const VelocityFieldParams& p, const std::string& path);
VelocityFieldParams load_field(const std::string& path);
void save_lora(const LoraDelta& d, const std::string& path);
LoraDelta load_lora(const std::string& path);

// Exact on-disk byte counts of the two file kinds (writers match these).
std::int64_t field_file_bytes(const VelocityFieldParams& p);
std::int64_t lora_file_bytes(const LoraDelta& d);

// Bytes that must be stored for a given segment (0-based): the full base for
// segment 0, the per-segment delta under IMT otherwise.
std::int64_t param_storage_bytes(const SegmentField& field, std::int64_t segment);

}  // namespace sf
