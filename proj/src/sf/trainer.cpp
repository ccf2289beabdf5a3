#include "sf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sf/eval.hpp"

namespace sf {

// --- validation -----------------------------------------------------------------

void validate(const LossWeights& w) {
    auto check = [](real v, const char* name) {
        if (!std::isfinite(v) || v < 0)
            throw ConfigError(std::string("loss weight '") + name +
                              "' must be finite and non-negative");
    };
    check(w.normal, "normal");
    check(w.distort, "distort");
    check(w.flow, "flow");
    check(w.mask, "mask");
}

void validate(const TrainConfig& cfg) {
    if (cfg.k < 1)
        throw InvalidK("segment size must cover at least one interval, got k=" +
                       std::to_string(cfg.k));
    validate(cfg.weights);
    auto positive = [](real v, const char* name) {
        if (!(v > 0) || !std::isfinite(v))
            throw ConfigError(std::string("'") + name + "' must be positive and finite");
    };
    positive(cfg.lr_mu, "lr_mu");
    positive(cfg.lr_mu_final, "lr_mu_final");
    positive(cfg.lr_quat, "lr_quat");
    positive(cfg.lr_scale, "lr_scale");
    positive(cfg.lr_opacity, "lr_opacity");
    positive(cfg.lr_color, "lr_color");
    positive(cfg.lr_field, "lr_field");
    positive(cfg.lr_lora, "lr_lora");
    positive(cfg.tau_grad, "tau_grad");
    positive(cfg.tau_scale, "tau_scale");
    if (cfg.iters < 0) throw ConfigError("'iters' must be non-negative");
    if (cfg.lora_rank < 0) throw ConfigError("'lora_rank' must be non-negative");
    if (cfg.field_width < 1 || cfg.field_depth < 1)
        throw ConfigError("field dimensions must be at least 1");
    if (cfg.l_pos < 0 || cfg.l_time < 0) throw ConfigError("encoding frequencies must be >= 0");
    if (!(cfg.tau_opacity >= 0) || !(cfg.tau_opacity <= 1))
        throw ConfigError("'tau_opacity' must lie in [0, 1]");
    if (cfg.densify_every < 1) throw ConfigError("'densify_every' must be >= 1");
    if (cfg.densify_from < 0) throw ConfigError("'densify_from' must be >= 0");
    if (!(cfg.densify_until >= 0) || !(cfg.densify_until <= 1))
        throw ConfigError("'densify_until' must lie in [0, 1]");
    if (cfg.flow_samples < 1) throw ConfigError("'flow_samples' must be >= 1");
    if (cfg.flow_refresh < 1) throw ConfigError("'flow_refresh' must be >= 1");
    if (cfg.hull_res < 2) throw ConfigError("'hull_res' must be >= 2");
}

// --- segment planning --------------------------------------------------------------

SegmentPlan plan_segments(int num_timesteps, int k) {
    if (k < 1)
        throw InvalidK("segment size must cover at least one interval, got k=" +
                       std::to_string(k));
    if (num_timesteps < 2)
        throw InvalidK("cannot segment a sequence of " + std::to_string(num_timesteps) +
                       " timesteps");
    SegmentPlan plan;
    plan.num_timesteps = num_timesteps;
    plan.k = k;
    const int last = num_timesteps - 1;
    int start = 0;
    while (true) {
        Segment seg;
        int end = std::min(start + k, last);
        for (int t = start; t <= end; ++t) seg.timesteps.push_back(t);
        seg.has_virtual = end < last;  // a successor window will re-own `end`
        plan.segments.push_back(std::move(seg));
        if (end == last) break;
        start = end;
    }
    return plan;
}

int owner_segment(const SegmentPlan& plan, int t) {
    require(t >= 0 && t < plan.num_timesteps,
            "owner_segment: timestep " + std::to_string(t) + " outside the plan");
    for (std::size_t i = 0; i < plan.segments.size(); ++i)
        if (plan.segments[i].contains(t) && !plan.segments[i].is_virtual(t))
            return static_cast<int>(i);
    // unreachable by construction
    throw Error("owner_segment: no segment owns timestep " + std::to_string(t));
}

real segment_time(const Segment& seg, int k, real t) {
    return (t - seg.first()) / static_cast<real>(k);
}

// --- canonical parameter storage helpers --------------------------------------------

namespace {

constexpr real kLogitClamp = 34.0;  // sigmoid is exactly invertible well inside this

real clamped_logit(real p) {
    if (p <= 0) return -kLogitClamp;
    if (p >= 1) return kLogitClamp;
    // single log so logit(0.5) is exactly 0 (a zero-motion handoff must
    // reproduce a fresh logit of 0 bitwise)
    real x = std::log(p / (1 - p));
    return std::min(std::max(x, -kLogitClamp), kLogitClamp);
}

// Stores a unit quaternion so the floats are a fixed point of
// normalize-then-round: re-constraining the stored values reproduces them
// bitwise, which is what makes a zero-motion handoff an exact no-op. The
// inner step mirrors the constraint path's arithmetic (inv = 1/sqrt, then
// multiply) so the fixed point is against that exact formula.
void store_unit_quat(float* out, const Quat& q) {
    float f[4] = {static_cast<float>(q.w), static_cast<float>(q.x), static_cast<float>(q.y),
                  static_cast<float>(q.z)};
    for (int pass = 0; pass < 8; ++pass) {
        double s = static_cast<double>(f[0]) * f[0] + static_cast<double>(f[1]) * f[1] +
                   static_cast<double>(f[2]) * f[2] + static_cast<double>(f[3]) * f[3];
        double inv = 1.0 / std::sqrt(s);
        float g[4];
        for (int c = 0; c < 4; ++c) g[c] = static_cast<float>(f[c] * inv);
        if (g[0] == f[0] && g[1] == f[1] && g[2] == f[2] && g[3] == f[3]) break;
        for (int c = 0; c < 4; ++c) f[c] = g[c];
    }
    for (int c = 0; c < 4; ++c) out[c] = f[c];
}

}  // namespace

// --- visual hull ----------------------------------------------------------------------

SurfelSet visual_hull_init(const std::vector<Image>& masks, const std::vector<Camera>& cams,
                           const Vec3& lo, const Vec3& hi, int resolution) {
    require(!cams.empty(), "visual_hull_init: need at least one view");
    require(masks.size() == cams.size(), "visual_hull_init: one mask per camera");
    for (std::size_t v = 0; v < masks.size(); ++v) {
        if (masks[v].channels != 1 || masks[v].width != cams[v].width ||
            masks[v].height != cams[v].height)
            throw ResolutionMismatch("visual_hull_init: mask " + std::to_string(v) +
                                     " does not match its camera");
    }

    TsdfVolume vol = make_volume(lo, hi, resolution);  // reuse the voxel lattice scheme
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(vol.nx) * vol.ny * vol.nz, 0);
    std::int64_t kept = 0;
    Vec3 centroid{0, 0, 0};
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                Vec3 p = vol.voxel_center(x, y, z);
                bool inside = true;
                for (std::size_t v = 0; v < cams.size(); ++v) {
                    Vec3 c = cams[v].to_camera(p);
                    if (c.z <= 0) {
                        inside = false;
                        break;
                    }
                    int ix = static_cast<int>(std::floor(cams[v].fx * c.x / c.z + cams[v].cx));
                    int iy = static_cast<int>(std::floor(cams[v].fy * c.y / c.z + cams[v].cy));
                    if (ix < 0 || iy < 0 || ix >= masks[v].width || iy >= masks[v].height ||
                        masks[v].at(ix, iy, 0) < 0.5) {
                        inside = false;
                        break;
                    }
                }
                if (inside) {
                    occ[vol.index(x, y, z)] = 1;
                    centroid += p;
                    ++kept;
                }
            }
    if (kept == 0) throw EmptyHull("no voxel projects inside every mask");
    centroid = centroid * (real(1) / static_cast<real>(kept));

    auto occ_at = [&](int x, int y, int z) -> int {
        if (x < 0 || y < 0 || z < 0 || x >= vol.nx || y >= vol.ny || z >= vol.nz) return 0;
        return occ[vol.index(x, y, z)];
    };

    struct HullSeed {
        Vec3 mu;
        Quat q;
    };
    std::vector<HullSeed> seeds;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                if (!occ[vol.index(x, y, z)]) continue;
                int nbr = occ_at(x - 1, y, z) + occ_at(x + 1, y, z) + occ_at(x, y - 1, z) +
                          occ_at(x, y + 1, z) + occ_at(x, y, z - 1) + occ_at(x, y, z + 1);
                if (nbr == 6) continue;  // interior
                // occupancy falls off outward, so this difference points out
                Vec3 g{static_cast<real>(occ_at(x - 1, y, z) - occ_at(x + 1, y, z)),
                       static_cast<real>(occ_at(x, y - 1, z) - occ_at(x, y + 1, z)),
                       static_cast<real>(occ_at(x, y, z - 1) - occ_at(x, y, z + 1))};
                Vec3 p = vol.voxel_center(x, y, z);
                Vec3 n = normalized(g);
                if (norm(n) == 0) n = normalized(p - centroid);  // flat neighborhood
                if (norm(n) == 0) n = {0, 0, 1};                 // the centroid itself
                seeds.push_back({p, quat_from_z_to(n)});
            }

    SurfelSet s;
    s.resize(static_cast<std::int64_t>(seeds.size()));
    const float log_scale = static_cast<float>(std::log(0.7 * vol.voxel));
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        s.mu[3 * i + 0] = static_cast<float>(seeds[i].mu.x);
        s.mu[3 * i + 1] = static_cast<float>(seeds[i].mu.y);
        s.mu[3 * i + 2] = static_cast<float>(seeds[i].mu.z);
        store_unit_quat(&s.quat[4 * i], seeds[i].q);
        s.log_scale[2 * i + 0] = log_scale;
        s.log_scale[2 * i + 1] = log_scale;
        s.opacity_logit[i] = 0.0f;                            // opacity 0.5
        for (int c = 0; c < 3; ++c) s.color_logit[3 * i + c] = 0.0f;  // mid gray
    }
    return s;
}

// --- loss assembly ----------------------------------------------------------------------

namespace {

Tensor color_tensor(const Image& img) {
    Tensor t(static_cast<std::int64_t>(img.width) * img.height, 3);
    std::size_t k = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) t.v[k++] = img.at(x, y, c);
    return t;
}

Tensor mask_tensor(const Image& img) {
    Tensor t(static_cast<std::int64_t>(img.width) * img.height, 1);
    std::size_t k = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) t.v[k++] = img.at(x, y, 0);
    return t;
}

}  // namespace

TotalLoss total_loss(Tape& tape, const std::vector<RenderedView>& renders,
                     const std::vector<TrainView>& gt, const LossWeights& w,
                     const Var& flow_motion, const std::vector<GeomFlowSample>& flow_geom) {
    validate(w);
    require(!renders.empty(), "total_loss: no rendered views");
    require(renders.size() == gt.size(), "total_loss: renders/ground-truth count mismatch");

    // zero-weight terms are skipped entirely (their log column reads 0), so
    // ablation runs do not pay for losses they disable
    std::vector<Var> imgs, norms, dists, masks;
    for (std::size_t i = 0; i < renders.size(); ++i) {
        const Camera& cam = renders[i].cam;
        const RenderOutputs& r = renders[i].out;
        const Image& gc = gt[i].color;
        const Image& gm = gt[i].mask;
        if (gc.width != cam.width || gc.height != cam.height || gc.channels != 3 ||
            gm.width != cam.width || gm.height != cam.height || gm.channels != 1) {
            std::ostringstream msg;
            msg << "total_loss: view " << i << ": camera " << cam.width << "x" << cam.height
                << " vs color " << gc.width << "x" << gc.height << "x" << gc.channels
                << ", mask " << gm.width << "x" << gm.height << "x" << gm.channels;
            throw ResolutionMismatch(msg.str());
        }
        const std::int64_t p = static_cast<std::int64_t>(cam.width) * cam.height;
        require(r.color.rows() == p, "total_loss: render does not match its camera size");

        imgs.push_back(image_loss(tape, r.color, color_tensor(gc), cam.width, cam.height));
        if (w.normal > 0) {
            std::vector<std::uint8_t> valid(static_cast<std::size_t>(p));
            for (std::int64_t q = 0; q < p; ++q)
                valid[static_cast<std::size_t>(q)] = r.alpha.val().v[static_cast<std::size_t>(q)] >= 0.5;
            DepthNormals dn = depth_normals(tape, cam, r.depth, valid);
            norms.push_back(normal_consistency_loss(tape, r.alpha, r.normal, dn));
        }
        if (w.distort > 0) dists.push_back(tape.mean(r.distort));
        if (w.mask > 0) masks.push_back(mask_loss(tape, r.alpha, mask_tensor(gm)));
    }

    auto average = [&](const std::vector<Var>& terms) -> Var {
        if (terms.empty()) return tape.scalar(0);
        std::vector<std::pair<real, Var>> parts;
        for (const Var& t : terms) parts.push_back({real(1) / static_cast<real>(terms.size()), t});
        return tape.weighted_sum(parts);
    };
    Var img = average(imgs);
    Var nrm = average(norms);
    Var dst = average(dists);
    Var msk = average(masks);
    Var flw = (w.flow > 0 && flow_motion.defined() && !flow_geom.empty())
                  ? flow_loss_var(tape, flow_motion, flow_geom)
                  : tape.scalar(0);

    TotalLoss out;
    out.total = tape.weighted_sum(
        {{1.0, img}, {w.normal, nrm}, {w.distort, dst}, {w.flow, flw}, {w.mask, msk}});
    out.image = img.scalar();
    out.normal = nrm.scalar();
    out.distort = dst.scalar();
    out.flow = flw.scalar();
    out.mask = msk.scalar();
    return out;
}

// --- optimizer ------------------------------------------------------------------------------

namespace {

constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
constexpr std::int64_t kGoodEvery = 100;  // divergence-recovery checkpoint cadence

void init_group(AdamGroup& g, std::size_t n) {
    g.m.assign(n, 0.0);
    g.v.assign(n, 0.0);
    g.step = 0;
}

// One Adam update of a float-stored array; moments and arithmetic in double.
// A missing gradient tensor counts as zero (momentum still decays).
void adam_step(AdamGroup& g, const Tensor* grad, float* p, std::size_t n, real lr) {
    require(g.m.size() == n, "adam_step: moment size mismatch");
    ++g.step;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(g.step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(g.step));
    const double* gv = grad ? grad->v.data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
        double gi = gv ? gv[i] : 0.0;
        double m = g.m[i] = kBeta1 * g.m[i] + (1.0 - kBeta1) * gi;
        double v = g.v[i] = kBeta2 * g.v[i] + (1.0 - kBeta2) * gi * gi;
        p[i] = static_cast<float>(static_cast<double>(p[i]) -
                                  lr * (m / c1) / (std::sqrt(v / c2) + kAdamEps));
    }
}

const Tensor* grad_or_null(const Var& v) {
    if (!v.defined()) return nullptr;
    const Tensor& g = v.grad();
    return g.size() > 0 ? &g : nullptr;
}

// The trainable field tensors in a fixed order, paired with their float
// storage. Must enumerate exactly the Vars field_var_list() yields.
struct ParamRef {
    float* data;
    std::size_t size;
    real lr;
};

std::vector<ParamRef> field_param_refs(SegmentField& f, const TrainConfig& cfg) {
    std::vector<ParamRef> out;
    auto layer = [&out](DenseLayer& l, real lr) {
        out.push_back({l.w.data(), l.w.size(), lr});
        out.push_back({l.b.data(), l.b.size(), lr});
    };
    if (f.deltas.empty()) {
        for (auto& h : f.base.hidden) layer(h, cfg.lr_field);
        layer(f.base.head_v, cfg.lr_field);
        layer(f.base.head_w, cfg.lr_field);
        layer(f.base.head_e, cfg.lr_field);
    } else {
        LoraDelta& d = f.deltas.back();
        for (auto& pr : d.pairs) {
            out.push_back({pr.a.data(), pr.a.size(), cfg.lr_lora});
            out.push_back({pr.b.data(), pr.b.size(), cfg.lr_lora});
        }
        layer(d.head_v, cfg.lr_field);
        layer(d.head_w, cfg.lr_field);
        layer(d.head_e, cfg.lr_field);
    }
    return out;
}

std::vector<Var> field_var_list(const FieldVars& fv) {
    std::vector<Var> out;
    if (!fv.lora_active) {
        for (std::size_t j = 0; j < fv.hidden_w.size(); ++j) {
            out.push_back(fv.hidden_w[j]);
            out.push_back(fv.hidden_b[j]);
        }
    } else {
        for (std::size_t j = 0; j < fv.lora_a.size(); ++j) {
            out.push_back(fv.lora_a[j]);
            out.push_back(fv.lora_b[j]);
        }
    }
    out.push_back(fv.head_v_w);
    out.push_back(fv.head_v_b);
    out.push_back(fv.head_w_w);
    out.push_back(fv.head_w_b);
    out.push_back(fv.head_e_w);
    out.push_back(fv.head_e_b);
    return out;
}

}  // namespace

// --- state ---------------------------------------------------------------------------------

TrainState init_state(const TrainData& data, const TrainConfig& cfg) {
    validate(cfg);
    require(data.num_timesteps() >= 1, "init_state: dataset has no timesteps");
    require(!data.cams.empty(), "init_state: dataset has no cameras");
    require(data.views[0].size() == data.cams.size(), "init_state: views/cameras mismatch");
    std::vector<Image> masks;
    for (std::size_t c = 0; c < data.cams.size(); ++c) masks.push_back(data.views[0][c].mask);
    TrainState s;
    s.canonical = visual_hull_init(masks, data.cams, data.lo, data.hi, cfg.hull_res);
    s.field.base = init_field(cfg.field_width, cfg.field_depth, cfg.l_pos, cfg.l_time,
                              Rng(cfg.seed).child("field-init"));
    s.seed = cfg.seed;
    return s;
}

// --- flow supervision ------------------------------------------------------------------------

namespace {

// Geometry-side flow targets for one timestep interval, plus everything the
// per-iteration motion side needs. Targets are rendered off-tape from the
// surfels as they stood when the cache was built and refreshed on a fixed
// cadence; the motion side is re-evaluated on the live tape every iteration.
struct FlowCache {
    int pair_t = -1;             // interval (pair_t, pair_t + 1); -1 = empty
    std::int64_t built_at = -1;
    real u_t = 0;                // segment-local time of the left endpoint
    std::vector<std::int64_t> surfels;  // sampled canonical indices
    std::vector<std::int64_t> row_of;   // flow row -> position inside `surfels`
    Tensor levers, normals;             // R x 3, detached
    std::vector<GeomFlowSample> geom;   // R aligned targets
};

void rebuild_flow(FlowCache& fc, const TrainState& state, const Segment& seg, int k,
                  const TrainData& data, const TrainConfig& cfg, int pair_t, std::int64_t it,
                  Rng rng) {
    fc = FlowCache{};
    fc.pair_t = pair_t;
    fc.built_at = it;
    const real u0 = segment_time(seg, k, pair_t);
    const real u1 = segment_time(seg, k, pair_t + 1);
    fc.u_t = u0;

    DeformedSnapshot a = deform_surfels(state.canonical, state.field, u0);
    DeformedSnapshot b = deform_surfels(state.canonical, state.field, u1);
    std::vector<FlowView> va, vb;
    va.reserve(data.cams.size());
    vb.reserve(data.cams.size());
    for (const Camera& cam : data.cams) {
        va.push_back({cam, render(cam, a)});
        vb.push_back({cam, render(cam, b)});
    }

    // sample surfels without replacement (partial Fisher-Yates)
    const std::int64_t n = state.canonical.count;
    const std::int64_t want = std::min<std::int64_t>(cfg.flow_samples, n);
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (std::int64_t i = 0; i < want; ++i)
        std::swap(pool[static_cast<std::size_t>(i)],
                  pool[static_cast<std::size_t>(i + static_cast<std::int64_t>(
                                                        rng.index(static_cast<std::uint64_t>(n - i))))]);
    fc.surfels.assign(pool.begin(), pool.begin() + want);
    std::sort(fc.surfels.begin(), fc.surfels.end());

    std::vector<Vec3> lever_rows, normal_rows;
    for (std::size_t si = 0; si < fc.surfels.size(); ++si) {
        const std::int64_t i = fc.surfels[si];
        Vec3 ca{a.mu[3 * i + 0], a.mu[3 * i + 1], a.mu[3 * i + 2]};
        Vec3 cb{b.mu[3 * i + 0], b.mu[3 * i + 1], b.mu[3 * i + 2]};
        Quat qa{a.quat[4 * i + 0], a.quat[4 * i + 1], a.quat[4 * i + 2], a.quat[4 * i + 3]};
        Vec3 nrm = tangent_frame(qa).n;
        // matching lever lists at both endpoints: the offsets ride the
        // co-moving tangent frame, so row j tracks one material point
        std::vector<Vec3> la = flow_levers(a, i, cfg.flow_offsets);
        std::vector<Vec3> lb = flow_levers(b, i, cfg.flow_offsets);
        for (std::size_t j = 0; j < la.size(); ++j) {
            GeomFlowSample gs;
            try {
                gs = geom_flow(i, u0, u1 - u0, ca + la[j], cb + lb[j], va, vb);
            } catch (const NoValidView&) {
                gs.surfel = i;
                gs.t = u0;
                gs.valid = false;
            }
            fc.geom.push_back(gs);
            fc.row_of.push_back(static_cast<std::int64_t>(si));
            lever_rows.push_back(la[j]);
            normal_rows.push_back(nrm);
        }
    }
    const std::int64_t rows = static_cast<std::int64_t>(lever_rows.size());
    fc.levers = Tensor(rows, 3);
    fc.normals = Tensor(rows, 3);
    for (std::int64_t r = 0; r < rows; ++r) {
        fc.levers.at(r, 0) = lever_rows[static_cast<std::size_t>(r)].x;
        fc.levers.at(r, 1) = lever_rows[static_cast<std::size_t>(r)].y;
        fc.levers.at(r, 2) = lever_rows[static_cast<std::size_t>(r)].z;
        fc.normals.at(r, 0) = normal_rows[static_cast<std::size_t>(r)].x;
        fc.normals.at(r, 1) = normal_rows[static_cast<std::size_t>(r)].y;
        fc.normals.at(r, 2) = normal_rows[static_cast<std::size_t>(r)].z;
    }
}

// Motion-side flow rows on the live tape; gradients reach the field (and the
// canonical centers it is queried at).
Var flow_motion_var(Tape& tape, const FlowCache& fc, const FieldVars& fv,
                    const SnapshotVars& snap0) {
    Var pts = tape.gather_rows(snap0.mu, fc.surfels);
    FieldOutput fo = eval_field(tape, fv, pts, fc.u_t);
    Var v = tape.gather_rows(fo.v, fc.row_of);
    Var w = tape.gather_rows(fo.w, fc.row_of);
    return motion_flow_values(tape, v, w, tape.constant(fc.levers), tape.constant(fc.normals));
}

}  // namespace

// --- training loop -----------------------------------------------------------------------------

void train_segment(TrainState& state, const SegmentPlan& plan, const TrainData& data,
                   const TrainConfig& cfg, std::vector<LossRow>* log) {
    validate(cfg);
    require(state.segment >= 0 && state.segment < static_cast<int>(plan.segments.size()),
            "train_segment: state segment index outside the plan");
    const Segment& seg = plan.segments[static_cast<std::size_t>(state.segment)];
    require(data.num_timesteps() > seg.last(), "train_segment: dataset shorter than the plan");
    require(!data.cams.empty(), "train_segment: no cameras");
    for (int t : seg.timesteps)
        require(data.views[static_cast<std::size_t>(t)].size() == data.cams.size(),
                "train_segment: views/cameras mismatch at timestep " + std::to_string(t));
    require(state.canonical.count > 0, "train_segment: empty canonical surfel set");

    auto reset_optimizer = [&]() {
        const std::size_t n = static_cast<std::size_t>(state.canonical.count);
        init_group(state.opt_mu, 3 * n);
        init_group(state.opt_quat, 4 * n);
        init_group(state.opt_scale, 2 * n);
        init_group(state.opt_opacity, n);
        init_group(state.opt_color, 3 * n);
        std::vector<ParamRef> refs = field_param_refs(state.field, cfg);
        state.opt_field.assign(refs.size(), AdamGroup{});
        for (std::size_t i = 0; i < refs.size(); ++i) init_group(state.opt_field[i], refs[i].size);
        state.grad_accum.assign(n, 0.0);
        state.grad_count = 0;
    };
    if (state.iteration == 0) reset_optimizer();
    require(state.opt_mu.m.size() == static_cast<std::size_t>(3 * state.canonical.count),
            "train_segment: optimizer state out of sync (resume only at segment boundaries)");

    const bool use_flow = cfg.weights.flow > 0 && seg.timesteps.size() >= 2;
    Rng seg_rng = Rng(state.seed).child("segment", static_cast<std::uint64_t>(state.segment));
    FlowCache fc;

    // divergence recovery point
    SurfelSet good_surfels = state.canonical;
    SegmentField good_field = state.field;
    std::int64_t good_iter = state.iteration;

    while (state.iteration < cfg.iters) {
        const std::int64_t it = state.iteration;
        Rng it_rng = seg_rng.child("iter", static_cast<std::uint64_t>(it));
        const int t = seg.timesteps[static_cast<std::size_t>(
            it_rng.index(static_cast<std::uint64_t>(seg.timesteps.size())))];
        const std::size_t ci = static_cast<std::size_t>(
            it_rng.index(static_cast<std::uint64_t>(data.cams.size())));

        if (use_flow) {
            const int pair_t = std::min(t, seg.last() - 1);
            if (fc.pair_t != pair_t || it - fc.built_at >= cfg.flow_refresh)
                rebuild_flow(fc, state, seg, plan.k, data, cfg, pair_t, it,
                             seg_rng.child("flow", static_cast<std::uint64_t>(it)));
        }

        Tape tape;
        SurfelVars sv = make_surfel_vars(tape, state.canonical, true);
        SnapshotVars snap0 = constrain_surfels(tape, sv);
        FieldVars fv = make_field_vars(tape, state.field, true);
        const real u = segment_time(seg, plan.k, t);
        // deform(t=0) is the identity regardless of the field, so the costly
        // full-set field evaluation is skipped at the segment start
        SnapshotVars snap =
            (u == 0) ? snap0 : deform(tape, snap0, eval_field(tape, fv, snap0.mu, u), u);
        RenderOutputs r = render_splats(tape, data.cams[ci], snap);

        Var motion;
        std::vector<GeomFlowSample> geom;
        if (use_flow) {
            motion = flow_motion_var(tape, fc, fv, snap0);
            geom = fc.geom;
        }
        TotalLoss loss = total_loss(tape, {{data.cams[ci], r}},
                                    {data.views[static_cast<std::size_t>(t)][ci]}, cfg.weights,
                                    motion, geom);
        if (!std::isfinite(loss.total.scalar())) {
            state.canonical = good_surfels;
            state.field = good_field;
            state.iteration = good_iter;
            throw DivergedLoss("segment " + std::to_string(state.segment) + ", iteration " +
                               std::to_string(it) + ": loss is not finite");
        }
        tape.backward(loss.total);

        // densification statistic: per-surfel world-space center-gradient norm
        const Tensor& gmu = sv.mu.grad();
        if (gmu.rows == state.canonical.count)
            for (std::int64_t i = 0; i < gmu.rows; ++i) {
                const real* row = gmu.row_ptr(i);
                state.grad_accum[static_cast<std::size_t>(i)] +=
                    std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
            }
        state.grad_count += 1;

        // optimizer step; position lr decays exponentially over the budget
        const real frac =
            cfg.iters > 1 ? static_cast<real>(it) / static_cast<real>(cfg.iters - 1) : real(0);
        const real lr_mu = cfg.lr_mu * std::pow(cfg.lr_mu_final / cfg.lr_mu, frac);
        const std::size_t n = static_cast<std::size_t>(state.canonical.count);
        adam_step(state.opt_mu, grad_or_null(sv.mu), state.canonical.mu.data(), 3 * n, lr_mu);
        adam_step(state.opt_quat, grad_or_null(sv.quat), state.canonical.quat.data(), 4 * n,
                  cfg.lr_quat);
        adam_step(state.opt_scale, grad_or_null(sv.log_scale), state.canonical.log_scale.data(),
                  2 * n, cfg.lr_scale);
        adam_step(state.opt_opacity, grad_or_null(sv.opacity_logit),
                  state.canonical.opacity_logit.data(), n, cfg.lr_opacity);
        adam_step(state.opt_color, grad_or_null(sv.color_logit),
                  state.canonical.color_logit.data(), 3 * n, cfg.lr_color);
        std::vector<ParamRef> refs = field_param_refs(state.field, cfg);
        std::vector<Var> fvars = field_var_list(fv);
        require(refs.size() == fvars.size() && refs.size() == state.opt_field.size(),
                "train_segment: field parameter enumeration out of sync");
        for (std::size_t i = 0; i < refs.size(); ++i)
            adam_step(state.opt_field[i], grad_or_null(fvars[i]), refs[i].data, refs[i].size,
                      refs[i].lr);

        if (log)
            log->push_back(
                {it, loss.image, loss.normal, loss.distort, loss.flow, loss.mask,
                 loss.total.scalar()});
        state.iteration = it + 1;

        const std::int64_t it1 = state.iteration;
        if (it1 >= cfg.densify_from && it1 % cfg.densify_every == 0 &&
            it1 <= static_cast<std::int64_t>(cfg.densify_until * cfg.iters)) {
            densify_prune(state, cfg, data.extent(),
                          seg_rng.child("densify", static_cast<std::uint64_t>(it1)));
            fc = FlowCache{};  // cached surfel indices went stale
        }
        if (it1 % kGoodEvery == 0) {
            good_surfels = state.canonical;
            good_field = state.field;
            good_iter = it1;
        }
    }
}

// --- densify / prune -------------------------------------------------------------------------

DensifyStats densify_prune(TrainState& state, const TrainConfig& cfg, real scene_extent,
                           Rng rng) {
    SurfelSet& s = state.canonical;
    const std::int64_t n = s.count;
    require(n > 0, "densify_prune: empty surfel set");
    const real denom = static_cast<real>(std::max<std::int64_t>(state.grad_count, 1));
    const bool have_grad = state.grad_accum.size() == static_cast<std::size_t>(n);

    std::vector<std::int64_t> keep, clones;
    for (std::int64_t i = 0; i < n; ++i) {
        const real alpha = s.opacity(i);
        const Vec2 xi = s.scale(i);
        if (alpha < cfg.tau_opacity || std::max(xi.x, xi.y) > cfg.tau_scale * scene_extent)
            continue;  // pruned
        keep.push_back(i);
        if (have_grad && state.grad_accum[static_cast<std::size_t>(i)] / denom > cfg.tau_grad)
            clones.push_back(i);
    }
    require(!keep.empty(), "densify_prune: every surfel was pruned");

    DensifyStats stats;
    stats.cloned = static_cast<std::int64_t>(clones.size());
    stats.pruned = n - static_cast<std::int64_t>(keep.size());
    if (stats.cloned == 0 && stats.pruned == 0) {
        state.grad_accum.assign(static_cast<std::size_t>(n), 0.0);
        state.grad_count = 0;
        return stats;
    }

    const std::int64_t m = static_cast<std::int64_t>(keep.size() + clones.size());
    SurfelSet out;
    out.resize(m);
    auto copy_row = [&](std::int64_t dst, std::int64_t src) {
        for (int c = 0; c < 3; ++c) out.mu[3 * dst + c] = s.mu[3 * src + c];
        for (int c = 0; c < 4; ++c) out.quat[4 * dst + c] = s.quat[4 * src + c];
        for (int c = 0; c < 2; ++c) out.log_scale[2 * dst + c] = s.log_scale[2 * src + c];
        out.opacity_logit[dst] = s.opacity_logit[src];
        for (int c = 0; c < 3; ++c) out.color_logit[3 * dst + c] = s.color_logit[3 * src + c];
    };
    for (std::size_t j = 0; j < keep.size(); ++j)
        copy_row(static_cast<std::int64_t>(j), keep[j]);
    for (std::size_t j = 0; j < clones.size(); ++j) {
        const std::int64_t dst = static_cast<std::int64_t>(keep.size() + j);
        const std::int64_t src = clones[j];
        copy_row(dst, src);
        // land the copy a fraction of a scale away inside the tangent plane,
        // so the pair can separate under subsequent gradients
        TangentFrame f = tangent_frame(s.rotation(src));
        Vec2 xi = s.scale(src);
        Vec3 d = f.t_u * (0.3 * xi.x * rng.normal()) + f.t_v * (0.3 * xi.y * rng.normal());
        out.mu[3 * dst + 0] = static_cast<float>(static_cast<double>(out.mu[3 * dst + 0]) + d.x);
        out.mu[3 * dst + 1] = static_cast<float>(static_cast<double>(out.mu[3 * dst + 1]) + d.y);
        out.mu[3 * dst + 2] = static_cast<float>(static_cast<double>(out.mu[3 * dst + 2]) + d.z);
    }

    // survivors keep their moments, clones start cold
    auto remap = [&](AdamGroup& g, std::int64_t stride) {
        std::vector<double> nm(static_cast<std::size_t>(m * stride), 0.0);
        std::vector<double> nv(static_cast<std::size_t>(m * stride), 0.0);
        if (g.m.size() == static_cast<std::size_t>(n * stride)) {
            for (std::size_t j = 0; j < keep.size(); ++j)
                for (std::int64_t c = 0; c < stride; ++c) {
                    nm[static_cast<std::size_t>(static_cast<std::int64_t>(j) * stride + c)] =
                        g.m[static_cast<std::size_t>(keep[j] * stride + c)];
                    nv[static_cast<std::size_t>(static_cast<std::int64_t>(j) * stride + c)] =
                        g.v[static_cast<std::size_t>(keep[j] * stride + c)];
                }
        }
        g.m = std::move(nm);
        g.v = std::move(nv);
    };
    remap(state.opt_mu, 3);
    remap(state.opt_quat, 4);
    remap(state.opt_scale, 2);
    remap(state.opt_opacity, 1);
    remap(state.opt_color, 3);

    s = std::move(out);
    state.grad_accum.assign(static_cast<std::size_t>(m), 0.0);
    state.grad_count = 0;
    return stats;
}

// --- handoff ----------------------------------------------------------------------------------

void handoff(TrainState& state, const SegmentPlan& plan, const TrainData& data,
             const TrainConfig& cfg) {
    require(state.segment >= 0 && state.segment + 1 < static_cast<int>(plan.segments.size()),
            "handoff: no successor segment");
    const Segment& seg = plan.segments[static_cast<std::size_t>(state.segment)];
    require(seg.has_virtual, "handoff: segment has no virtual endpoint");

    const real u_end = segment_time(seg, plan.k, seg.last());
    DeformedSnapshot snap = deform_surfels(state.canonical, state.field, u_end);

    SurfelSet next;
    next.resize(snap.count);
    for (std::int64_t i = 0; i < snap.count; ++i) {
        for (int c = 0; c < 3; ++c)
            next.mu[3 * i + c] = static_cast<float>(snap.mu[3 * i + c]);
        store_unit_quat(&next.quat[4 * i],
                        Quat{snap.quat[4 * i + 0], snap.quat[4 * i + 1], snap.quat[4 * i + 2],
                             snap.quat[4 * i + 3]});
        for (int c = 0; c < 2; ++c)
            next.log_scale[2 * i + c] = static_cast<float>(std::log(snap.scale[2 * i + c]));
        next.opacity_logit[i] = static_cast<float>(clamped_logit(snap.opacity[i]));
        for (int c = 0; c < 3; ++c)
            next.color_logit[3 * i + c] = static_cast<float>(clamped_logit(snap.color[3 * i + c]));
    }

    // seed surfels where the next segment's masks carve space that no current
    // surfel covers (e.g. an object entering the frame)
    const int t0 = plan.segments[static_cast<std::size_t>(state.segment) + 1].first();
    require(t0 == seg.last(), "handoff: plan windows do not overlap as expected");
    require(data.views[static_cast<std::size_t>(t0)].size() == data.cams.size(),
            "handoff: views/cameras mismatch at the shared timestep");
    bool have_hull = true;
    SurfelSet hull;
    try {
        std::vector<Image> masks;
        for (std::size_t c = 0; c < data.cams.size(); ++c)
            masks.push_back(data.views[static_cast<std::size_t>(t0)][c].mask);
        hull = visual_hull_init(masks, data.cams, data.lo, data.hi, cfg.hull_res);
    } catch (const EmptyHull&) {
        have_hull = false;  // nothing visible at the new start; nothing to seed
    }
    if (have_hull) {
        std::vector<real> scales(static_cast<std::size_t>(snap.count));
        for (std::int64_t i = 0; i < snap.count; ++i)
            scales[static_cast<std::size_t>(i)] =
                0.5 * (snap.scale[2 * i + 0] + snap.scale[2 * i + 1]);
        std::nth_element(scales.begin(), scales.begin() + scales.size() / 2, scales.end());
        const real rho = 2.0 * scales[scales.size() / 2];

        std::vector<Vec3> centers(static_cast<std::size_t>(snap.count));
        for (std::int64_t i = 0; i < snap.count; ++i)
            centers[static_cast<std::size_t>(i)] = Vec3{snap.mu[3 * i + 0], snap.mu[3 * i + 1],
                                                        snap.mu[3 * i + 2]};
        PointIndex covered(std::move(centers));

        std::vector<std::int64_t> fresh;
        for (std::int64_t i = 0; i < hull.count; ++i) {
            Vec3 p{hull.mu[3 * i + 0], hull.mu[3 * i + 1], hull.mu[3 * i + 2]};
            if (covered.nearest_distance(p) > rho) fresh.push_back(i);
        }
        if (!fresh.empty()) {
            const std::int64_t base = next.count;
            next.resize(base + static_cast<std::int64_t>(fresh.size()));
            for (std::size_t j = 0; j < fresh.size(); ++j) {
                const std::int64_t dst = base + static_cast<std::int64_t>(j);
                const std::int64_t src = fresh[j];
                for (int c = 0; c < 3; ++c) next.mu[3 * dst + c] = hull.mu[3 * src + c];
                for (int c = 0; c < 4; ++c) next.quat[4 * dst + c] = hull.quat[4 * src + c];
                for (int c = 0; c < 2; ++c)
                    next.log_scale[2 * dst + c] = hull.log_scale[2 * src + c];
                next.opacity_logit[dst] = hull.opacity_logit[src];
                for (int c = 0; c < 3; ++c)
                    next.color_logit[3 * dst + c] = hull.color_logit[3 * src + c];
            }
        }
    }

    state.canonical = std::move(next);
    if (cfg.lora_rank > 0)
        state.field.deltas.push_back(
            init_lora(materialize(state.field), cfg.lora_rank,
                      Rng(state.seed).child("lora", static_cast<std::uint64_t>(state.segment + 1))));
    state.segment += 1;
    state.iteration = 0;
    state.opt_mu = AdamGroup{};
    state.opt_quat = AdamGroup{};
    state.opt_scale = AdamGroup{};
    state.opt_opacity = AdamGroup{};
    state.opt_color = AdamGroup{};
    state.opt_field.clear();
    state.grad_accum.clear();
    state.grad_count = 0;
}

// --- meshing ------------------------------------------------------------------------------------

TriangleMesh mesh_timestep(const SurfelSet& canonical, const SegmentField& field,
                           const Segment& seg, int k, int t, const std::vector<Camera>& cams,
                           const Vec3& lo, const Vec3& hi, int resolution) {
    require(seg.contains(t),
            "mesh_timestep: timestep " + std::to_string(t) + " is outside the segment");
    if (seg.is_virtual(t))
        throw VirtualTimestep("timestep " + std::to_string(t) +
                              " is this segment's virtual endpoint; the successor owns it");
    return mesh_snapshot(deform_surfels(canonical, field, segment_time(seg, k, t)), cams, lo, hi,
                         resolution);
}

// --- logs and checkpoints -------------------------------------------------------------------------

void write_loss_csv(const std::vector<LossRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifact("cannot open loss log for writing: " + path);
    out << std::setprecision(17);
    out << "iteration,image,normal,distort,flow,mask,total\n";
    for (const LossRow& r : rows)
        out << r.iteration << ',' << r.image << ',' << r.normal << ',' << r.distort << ','
            << r.flow << ',' << r.mask << ',' << r.total << '\n';
    require(out.good(), "short write: " + path);
}

namespace {

std::string delta_path(const std::string& dir, std::size_t i) {
    std::ostringstream name;
    name << dir << "/delta_" << std::setw(3) << std::setfill('0') << i << ".bin";
    return name.str();
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw MissingArtifact("cannot create checkpoint directory " + dir + ": " + ec.message());
    {
        std::ofstream out(dir + "/state.txt");
        if (!out) throw MissingArtifact("cannot write " + dir + "/state.txt");
        out << "segment " << state.segment << "\n"
            << "iteration " << state.iteration << "\n"
            << "seed " << state.seed << "\n"
            << "surfels " << state.canonical.count << "\n"
            << "deltas " << state.field.deltas.size() << "\n";
        require(out.good(), "short write: " + dir + "/state.txt");
    }
    save_surfels(state.canonical, dir + "/surfels.bin");
    save_field(state.field.base, dir + "/field.bin");
    for (std::size_t i = 0; i < state.field.deltas.size(); ++i)
        save_lora(state.field.deltas[i], delta_path(dir, i));
}

TrainState load_checkpoint(const std::string& dir) {
    std::ifstream in(dir + "/state.txt");
    if (!in) throw MissingArtifact("checkpoint header not found: " + dir + "/state.txt");
    auto read_kv = [&](const char* key) -> long long {
        std::string k;
        long long v;
        if (!(in >> k >> v) || k != key)
            throw ProtocolError("checkpoint header " + dir + "/state.txt: expected '" + key + "'");
        return v;
    };
    TrainState s;
    s.segment = static_cast<int>(read_kv("segment"));
    s.iteration = read_kv("iteration");
    s.seed = static_cast<std::uint64_t>(read_kv("seed"));
    const long long surfels = read_kv("surfels");
    const long long deltas = read_kv("deltas");
    if (s.segment < 0 || s.iteration < 0 || surfels < 0 || deltas < 0)
        throw ProtocolError("checkpoint header " + dir + "/state.txt: negative field");

    s.canonical = load_surfels(dir + "/surfels.bin");
    if (s.canonical.count != surfels)
        throw ProtocolError("checkpoint " + dir + ": surfel count disagrees with the header");
    s.field.base = load_field(dir + "/field.bin");
    for (long long i = 0; i < deltas; ++i)
        s.field.deltas.push_back(load_lora(delta_path(dir, static_cast<std::size_t>(i))));
    return s;
}

}  // namespace sf
