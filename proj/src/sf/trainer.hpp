#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/field.hpp"
#include "sf/image.hpp"
#include "sf/losses.hpp"
#include "sf/meshing.hpp"
#include "sf/render.hpp"
#include "sf/rng.hpp"
#include "sf/sdf_flow.hpp"
#include "sf/surfel.hpp"
#include "sf/tape.hpp"

namespace sf {

// Segment length below one interval (or a sequence too short to segment).
struct InvalidK : Error {
    using Error::Error;
};
// The mask intersection carved every voxel away.
struct EmptyHull : Error {
    using Error::Error;
};

// --- segment planning ---------------------------------------------------------

// One training window of consecutive global timesteps. When has_virtual is
// set the final entry is shared with the next segment: it is supervised here,
// so the deformation reaches it and the handoff state is trained, but the
// successor owns it for export (there it reappears as the first, non-virtual
// timestep).
struct Segment {
    std::vector<int> timesteps;
    bool has_virtual = false;

    int first() const { return timesteps.front(); }
    int last() const { return timesteps.back(); }
    bool contains(int t) const { return t >= first() && t <= last(); }
    bool is_virtual(int t) const { return has_virtual && t == last(); }
};

struct SegmentPlan {
    int num_timesteps = 0;
    int k = 0;  // intervals per full segment
    std::vector<Segment> segments;
};

// Cuts [0, num_timesteps) into overlapping windows spanning k intervals each.
// Consecutive windows share exactly one timestep (virtual in the earlier one)
// and every timestep is non-virtual in exactly one window; a final partial
// window absorbs the remainder and has no virtual endpoint. Throws InvalidK
// for k < 1 or fewer than two timesteps.
SegmentPlan plan_segments(int num_timesteps, int k);

// Index of the segment where t is non-virtual.
int owner_segment(const SegmentPlan& plan, int t);

// Segment-local field time (t - first)/k: a full window spans [0, 1], so the
// velocity field sees the same input range in every segment.
real segment_time(const Segment& seg, int k, real t);

// --- training data --------------------------------------------------------------

// Ground truth for one (timestep, camera) pair.
struct TrainView {
    Image color;  // 3 channels
    Image mask;   // 1 channel
};

// A full multi-view sequence held in memory, plus the world-space box the
// reconstruction lives in (used for hull carving, the prune threshold, and
// the meshing volume).
struct TrainData {
    std::vector<Camera> cams;
    std::vector<std::vector<TrainView>> views;  // [timestep][camera]
    Vec3 lo, hi;

    int num_timesteps() const { return static_cast<int>(views.size()); }
    real extent() const { return norm(hi - lo); }
};

// --- configuration ---------------------------------------------------------------

// Multipliers for the regularizers on top of the (unit-weight) image term.
// All must be finite and non-negative.
struct LossWeights {
    real normal = 0.05;
    real distort = 100.0;
    real flow = 0.1;
    real mask = 0.5;
};
void validate(const LossWeights& w);  // ConfigError

struct TrainConfig {
    int k = 5;          // intervals per segment
    int iters = 2000;   // optimizer steps per segment
    int lora_rank = 0;  // > 0: later segments train low-rank field updates
                        // 0: later segments keep training the full field
    LossWeights weights;

    // learning rates; positions decay exponentially from lr_mu to lr_mu_final
    // over the segment budget
    real lr_mu = 1.6e-4, lr_mu_final = 1.6e-6;
    real lr_quat = 1e-3;
    real lr_scale = 5e-3;
    real lr_opacity = 5e-2;
    real lr_color = 2.5e-3;
    real lr_field = 8e-4;
    real lr_lora = 8e-4;

    // velocity-field architecture (desk scale)
    int field_width = 128, field_depth = 4;
    int l_pos = 6, l_time = 4;

    // densify / prune: every densify_every iterations while the step count is
    // inside [densify_from, densify_until * iters]
    real tau_grad = 2e-4;     // mean positional-gradient norm that triggers a clone
    real tau_opacity = 0.01;  // prune below
    real tau_scale = 0.2;     // prune above this fraction of the scene extent
    int densify_every = 200;
    int densify_from = 100;
    real densify_until = 0.7;

    // flow supervision: surfels sampled per batch; offset mode adds the four
    // one-sigma tangent evaluation points per surfel (lever arms active)
    int flow_samples = 64;
    bool flow_offsets = false;
    // geometry targets (rendered depth at both interval endpoints) are reused
    // for this many iterations before they are re-rendered from the current
    // surfels; the motion side is rebuilt on the live tape every iteration
    int flow_refresh = 25;

    int hull_res = 40;  // visual-hull voxel resolution at init and handoff
    std::uint64_t seed = 1;
};
void validate(const TrainConfig& cfg);  // ConfigError / InvalidK

// --- optimizer --------------------------------------------------------------------

// Adam moments for one parameter tensor. Kept in double so the update math is
// independent of the float storage rounding.
struct AdamGroup {
    std::vector<double> m, v;
    std::int64_t step = 0;
};

// --- state ------------------------------------------------------------------------

struct TrainState {
    int segment = 0;             // index into the plan
    std::int64_t iteration = 0;  // completed steps inside the current segment
    SurfelSet canonical;         // this segment's t-zero surfels
    SegmentField field;          // base + one delta per handed-off segment
    std::uint64_t seed = 0;

    // per-segment optimizer state; rebuilt at segment boundaries and remapped
    // when densify/prune changes the surfel count
    AdamGroup opt_mu, opt_quat, opt_scale, opt_opacity, opt_color;
    std::vector<AdamGroup> opt_field;  // one per trainable field tensor

    // positional-gradient accumulators driving densification
    std::vector<double> grad_accum;       // sum of per-surfel center-gradient norms
    std::int64_t grad_count = 0;          // iterations accumulated
};

// Visual-hull initialization + a fresh (identity) velocity field.
TrainState init_state(const TrainData& data, const TrainConfig& cfg);

// --- component ops ------------------------------------------------------------------

// Surfels seeded on the surface of the voxel visual hull: a voxel survives
// when its center projects inside every view's mask, surface voxels are the
// survivors with an empty 6-neighbor, normals come from the local occupancy
// gradient, the scale from the voxel size, opacity and color start at 0.5.
// Throws EmptyHull when the intersection is empty.
SurfelSet visual_hull_init(const std::vector<Image>& masks, const std::vector<Camera>& cams,
                           const Vec3& lo, const Vec3& hi, int resolution);

// One camera's differentiable render paired with the view it came from.
struct RenderedView {
    Camera cam;
    RenderOutputs out;
};

struct TotalLoss {
    Var total;  // 1x1, image + weighted regularizers
    // unweighted term values, for logging
    real image = 0, normal = 0, distort = 0, flow = 0, mask = 0;
};

// Assembles the training loss over one or more rendered views (terms average
// across views with equal weight) plus an optional flow batch: motion-side
// rates (differentiable, from the velocity field) against detached geometric
// targets. Throws ResolutionMismatch when a render and its ground truth
// disagree about the image size.
TotalLoss total_loss(Tape& tape, const std::vector<RenderedView>& renders,
                     const std::vector<TrainView>& gt, const LossWeights& w,
                     const Var& flow_motion = {},
                     const std::vector<GeomFlowSample>& flow_geom = {});

// Clone surfels whose mean accumulated center-gradient norm exceeds tau_grad
// (the copy lands a fraction of a scale away in the tangent plane); prune
// surfels that went transparent or outgrew the scene. Optimizer moments
// follow the survivors, clones start with zero moments, and the gradient
// accumulators reset.
struct DensifyStats {
    std::int64_t cloned = 0, pruned = 0;
};
DensifyStats densify_prune(TrainState& state, const TrainConfig& cfg, real scene_extent, Rng rng);

// --- training ------------------------------------------------------------------------

// One row of the loss log (unweighted term values plus the weighted total).
struct LossRow {
    std::int64_t iteration = 0;
    real image = 0, normal = 0, distort = 0, flow = 0, mask = 0, total = 0;
};
void write_loss_csv(const std::vector<LossRow>& rows, const std::string& path);

// Runs the current segment to its iteration budget: sample a (timestep, view)
// pair, deform, render, assemble the loss, backpropagate, Adam-step each
// parameter group, densify/prune on schedule. Deterministic given the state
// seed. A non-finite loss restores the last 100-iteration checkpoint into
// `state` and throws DivergedLoss. Appends one LossRow per iteration to *log
// when given.
void train_segment(TrainState& state, const SegmentPlan& plan, const TrainData& data,
                   const TrainConfig& cfg, std::vector<LossRow>* log = nullptr);

// Re-bases the model onto the next segment: the canonical surfels become the
// deformed state at this segment's virtual timestep, uncovered mask-hull
// regions at the new start (farther than twice the median surfel scale from
// every existing surfel) are seeded with fresh surfels, and the field either
// gains a zero-initialized low-rank delta (lora_rank > 0) or keeps training
// in place. Optimizer state resets; segment index advances.
void handoff(TrainState& state, const SegmentPlan& plan, const TrainData& data,
             const TrainConfig& cfg);

// Deform to a segment-owned timestep and fuse/extract the surface. Virtual
// timesteps are refused (VirtualTimestep): the successor segment owns them.
TriangleMesh mesh_timestep(const SurfelSet& canonical, const SegmentField& field,
                           const Segment& seg, int k, int t, const std::vector<Camera>& cams,
                           const Vec3& lo, const Vec3& hi, int resolution);

// --- checkpoints -----------------------------------------------------------------------

// A checkpoint directory holds the canonical surfels, the field base, one
// file per recorded delta, and a text header with the bookkeeping. All float
// arrays round-trip bit-exactly. Optimizer moments are not persisted:
// checkpoints mark segment boundaries, where moments start fresh anyway.
void save_checkpoint(const TrainState& state, const std::string& dir);
TrainState load_checkpoint(const std::string& dir);  // MissingArtifact / ProtocolError

}  // namespace sf
