#include "sf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "sf/parallel.hpp"

namespace sf {

namespace {

constexpr real kHitEps = 1e-4;    // sphere-tracing hit threshold (world units)
constexpr int kMaxSteps = 256;    // sphere-tracing step budget
constexpr real kFarClip = 50.0;   // give up beyond this ray depth
constexpr real kSpatialStep = 1e-5;   // SDF gradient central difference
constexpr real kTemporalStep = 1e-5;  // SDF-flow central difference
constexpr real kOnSurface = 1e-6;     // |sdf| tolerance for flow queries

// Light direction (toward the light); world y points down, so the light sits
// above the desk.
const Vec3 kLightTo = normalized({0.3, -0.75, 0.35});

// --- splines -----------------------------------------------------------------

// Uniform Catmull-Rom evaluation shared by the scalar and Vec3 cases. Works
// for any T with +, scalar *. Extrapolates the boundary cubics instead of
// clamping so central differences stay valid at t = 0 and t = t1.
template <class T>
T cr_eval(const std::vector<T>& k, real t0, real t1, real t, bool deriv) {
    std::size_t m = k.size();
    if (m == 1 || t1 <= t0) return deriv ? k[0] * real(0) : k[0];
    real dt = (t1 - t0) / static_cast<real>(m - 1);
    real s = (t - t0) / dt;
    std::int64_t i = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(s)), 0,
                                              static_cast<std::int64_t>(m) - 2);
    real u = s - static_cast<real>(i);
    auto key = [&](std::int64_t j) { return k[static_cast<std::size_t>(j)]; };
    // Tangents per unit time: one-sided at the ends, centered inside.
    T tan_a = i == 0 ? (key(1) - key(0)) * (1 / dt)
                     : (key(i + 1) - key(i - 1)) * (1 / (2 * dt));
    std::int64_t last = static_cast<std::int64_t>(m) - 1;
    T tan_b = i + 1 == last ? (key(last) - key(last - 1)) * (1 / dt)
                            : (key(i + 2) - key(i)) * (1 / (2 * dt));
    real u2 = u * u, u3 = u2 * u;
    if (!deriv) {
        real h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
        real h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
        return key(i) * h00 + tan_a * (h10 * dt) + key(i + 1) * h01 + tan_b * (h11 * dt);
    }
    real g00 = 6 * u2 - 6 * u, g10 = 3 * u2 - 4 * u + 1;
    real g01 = -6 * u2 + 6 * u, g11 = 3 * u2 - 2 * u;
    return key(i) * (g00 / dt) + tan_a * g10 + key(i + 1) * (g01 / dt) + tan_b * g11;
}

Mat3 axis_angle(const Vec3& axis, real angle) {
    Vec3 a = normalized(axis);
    real h = angle / 2;
    Quat q{std::cos(h), a.x * std::sin(h), a.y * std::sin(h), a.z * std::sin(h)};
    return q.to_matrix();
}

// --- local signed distances ---------------------------------------------------

real sdf_sphere_local(const Vec3& p, real r) { return norm(p) - r; }

real sdf_box_local(const Vec3& p, const Vec3& h) {
    Vec3 q{std::abs(p.x) - h.x, std::abs(p.y) - h.y, std::abs(p.z) - h.z};
    Vec3 outside{std::max(q.x, real(0)), std::max(q.y, real(0)), std::max(q.z, real(0))};
    real inside = std::min(std::max(q.x, std::max(q.y, q.z)), real(0));
    return norm(outside) + inside;
}

real sdf_capsule(const Vec3& p, const Vec3& a, const Vec3& b, real r) {
    Vec3 ab = b - a, ap = p - a;
    real h = std::clamp(dot(ap, ab) / dot(ab, ab), real(0), real(1));
    return norm(ap - ab * h) - r;
}

real t_end(const AnalyticScene& scene) { return static_cast<real>(scene.duration - 1); }

Vec3 capsule_tip(const Primitive& pr, real t, real te) {
    real beta = cr_eval(pr.bend_keys, 0, te, t, false);
    return pr.joint + axis_angle(pr.hinge_axis, beta) * (pr.tip - pr.joint);
}

real prim_sdf(const Primitive& pr, const Vec3& x, real t, real te) {
    switch (pr.kind) {
        case PrimitiveKind::Sphere: {
            Vec3 p = x - pr.traj.center(t, te);
            return sdf_sphere_local(p, pr.radius);
        }
        case PrimitiveKind::Box: {
            Mat3 r = pr.traj.rotation(t, te);
            Vec3 p = r.transposed() * (x - pr.traj.center(t, te));
            return sdf_box_local(p, pr.half_extents);
        }
        case PrimitiveKind::HingedCapsule: {
            real root = sdf_capsule(x, pr.root, pr.joint, pr.radius);
            real distal = sdf_capsule(x, pr.joint, capsule_tip(pr, t, te), pr.radius);
            return std::min(root, distal);
        }
    }
    throw Error("prim_sdf: unreachable primitive kind");
}

std::size_t owning_primitive(const AnalyticScene& scene, const Vec3& x, real t) {
    std::size_t best = 0;
    real best_d = prim_sdf(scene.prims[0], x, t, t_end(scene));
    for (std::size_t i = 1; i < scene.prims.size(); ++i) {
        real d = prim_sdf(scene.prims[i], x, t, t_end(scene));
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

Vec3 prim_flow(const Primitive& pr, const Vec3& x, real t, real te) {
    switch (pr.kind) {
        case PrimitiveKind::Sphere:
        case PrimitiveKind::Box: {
            Vec3 omega = pr.traj.angular_velocity(t, te);
            return cross(omega, x - pr.traj.center(t, te)) + pr.traj.center_velocity(t, te);
        }
        case PrimitiveKind::HingedCapsule: {
            // Piecewise-rigid: the root segment is static, the distal one
            // swings about the joint. The seam circle takes the distal side.
            real root = sdf_capsule(x, pr.root, pr.joint, pr.radius);
            real distal = sdf_capsule(x, pr.joint, capsule_tip(pr, t, te), pr.radius);
            if (root < distal) return {0, 0, 0};
            Vec3 omega = normalized(pr.hinge_axis) * cr_eval(pr.bend_keys, 0, te, t, true);
            return cross(omega, x - pr.joint);
        }
    }
    throw Error("prim_flow: unreachable primitive kind");
}

}  // namespace

// --- spline / trajectory public API -------------------------------------------

real Spline::eval(real t) const {
    require(!keys.empty(), "Spline: no keys");
    return cr_eval(keys, t0, t1, t, false);
}

real Spline::deriv(real t) const {
    require(!keys.empty(), "Spline: no keys");
    return cr_eval(keys, t0, t1, t, true);
}

Vec3 Trajectory::center(real t, real te) const { return cr_eval(trans_keys, 0, te, t, false); }
Vec3 Trajectory::center_velocity(real t, real te) const { return cr_eval(trans_keys, 0, te, t, true); }
Mat3 Trajectory::rotation(real t, real te) const {
    return axis_angle(rot_axis, cr_eval(angle_keys, 0, te, t, false));
}
Vec3 Trajectory::angular_velocity(real t, real te) const {
    return normalized(rot_axis) * cr_eval(angle_keys, 0, te, t, true);
}

// --- ground-truth queries ------------------------------------------------------

real gt_sdf(const AnalyticScene& scene, const Vec3& x, real t) {
    require(!scene.prims.empty(), "gt_sdf: scene has no primitives");
    real d = prim_sdf(scene.prims[0], x, t, t_end(scene));
    for (std::size_t i = 1; i < scene.prims.size(); ++i)
        d = std::min(d, prim_sdf(scene.prims[i], x, t, t_end(scene)));
    return d;
}

real gt_sdf_primitive(const AnalyticScene& scene, std::size_t i, const Vec3& x, real t) {
    require(i < scene.prims.size(), "gt_sdf_primitive: index out of range");
    return prim_sdf(scene.prims[i], x, t, t_end(scene));
}

Vec3 gt_sdf_grad(const AnalyticScene& scene, const Vec3& x, real t) {
    const real h = kSpatialStep;
    return {(gt_sdf(scene, {x.x + h, x.y, x.z}, t) - gt_sdf(scene, {x.x - h, x.y, x.z}, t)) / (2 * h),
            (gt_sdf(scene, {x.x, x.y + h, x.z}, t) - gt_sdf(scene, {x.x, x.y - h, x.z}, t)) / (2 * h),
            (gt_sdf(scene, {x.x, x.y, x.z + h}, t) - gt_sdf(scene, {x.x, x.y, x.z - h}, t)) / (2 * h)};
}

Vec3 gt_scene_flow(const AnalyticScene& scene, const Vec3& x, real t) {
    require(!scene.prims.empty(), "gt_scene_flow: scene has no primitives");
    if (std::abs(gt_sdf(scene, x, t)) > kOnSurface)
        throw NotOnSurface("gt_scene_flow: query point is not on the zero level set");
    return prim_flow(scene.prims[owning_primitive(scene, x, t)], x, t, t_end(scene));
}

real gt_sdf_flow(const AnalyticScene& scene, const Vec3& x, real t) {
    Vec3 flow = gt_scene_flow(scene, x, t);  // also enforces the surface pre
    Vec3 n = normalized(gt_sdf_grad(scene, x, t));
    return -dot(flow, n);
}

real gt_sdf_flow_fd(const AnalyticScene& scene, const Vec3& x, real t) {
    if (std::abs(gt_sdf(scene, x, t)) > kOnSurface)
        throw NotOnSurface("gt_sdf_flow_fd: query point is not on the zero level set");
    const real d = kTemporalStep;
    return (gt_sdf(scene, x, t + d) - gt_sdf(scene, x, t - d)) / (2 * d);
}

// --- standard scenes ------------------------------------------------------------

std::vector<AnalyticScene> standard_scenes() {
    std::vector<AnalyticScene> out;

    {  // S1 "drift": one sphere translating along x.
        AnalyticScene s;
        s.name = "drift";
        s.duration = 12;
        Primitive p;
        p.kind = PrimitiveKind::Sphere;
        p.radius = 0.35;
        p.albedo = {0.85, 0.35, 0.3};
        p.traj.trans_keys = {{-0.45, 0, 0}, {0.45, 0, 0}};
        s.prims.push_back(p);
        out.push_back(std::move(s));
    }
    {  // S2 "tumble": one box rotating while translating.
        AnalyticScene s;
        s.name = "tumble";
        s.duration = 12;
        Primitive p;
        p.kind = PrimitiveKind::Box;
        p.half_extents = {0.3, 0.2, 0.25};
        p.albedo = {0.3, 0.6, 0.85};
        p.traj.trans_keys = {{-0.3, -0.1, 0}, {0.35, 0.15, 0.1}};
        p.traj.rot_axis = normalized({0.2, 1.0, 0.15});
        p.traj.angle_keys = {0.0, 2.2};
        s.prims.push_back(p);
        out.push_back(std::move(s));
    }
    {  // S3 "bend": hinged capsule articulating back and forth; long enough
        // to span several training segments.
        AnalyticScene s;
        s.name = "bend";
        s.duration = 24;
        Primitive p;
        p.kind = PrimitiveKind::HingedCapsule;
        p.radius = 0.16;
        p.albedo = {0.4, 0.8, 0.4};
        p.root = {-0.55, 0, 0};
        p.joint = {0, 0, 0};
        p.tip = {0.55, 0, 0};
        p.hinge_axis = {0, 0, 1};
        p.bend_keys = {0.0, 0.9, 0.2, 1.1};
        s.prims.push_back(p);
        out.push_back(std::move(s));
    }
    {  // S4 "duet": sphere and box crossing paths without touching.
        AnalyticScene s;
        s.name = "duet";
        s.duration = 24;
        Primitive a;
        a.kind = PrimitiveKind::Sphere;
        a.radius = 0.26;
        a.albedo = {0.9, 0.7, 0.25};
        a.traj.trans_keys = {{-0.5, -0.32, 0}, {0.5, -0.32, 0}};
        s.prims.push_back(a);
        Primitive b;
        b.kind = PrimitiveKind::Box;
        b.half_extents = {0.2, 0.16, 0.2};
        b.albedo = {0.55, 0.4, 0.85};
        b.traj.trans_keys = {{0.5, 0.36, 0.05}, {-0.5, 0.36, 0.05}};
        b.traj.rot_axis = {0, 1, 0};
        b.traj.angle_keys = {0.0, 1.2};
        s.prims.push_back(b);
        out.push_back(std::move(s));
    }
    return out;
}

AnalyticScene standard_scene(std::string_view name) {
    for (auto& s : standard_scenes())
        if (s.name == name) return s;
    throw ConfigError("unknown scene name: " + std::string(name));
}

// --- bounds and rigs --------------------------------------------------------------

BoundingSphere scene_bounds(const AnalyticScene& scene) {
    require(!scene.prims.empty(), "scene_bounds: scene has no primitives");
    struct Support {
        Vec3 c;
        real r;
    };
    std::vector<Support> samples;
    const int kSteps = 64;
    for (int k = 0; k <= kSteps; ++k) {
        real t = t_end(scene) * static_cast<real>(k) / kSteps;
        for (const auto& p : scene.prims) {
            switch (p.kind) {
                case PrimitiveKind::Sphere:
                    samples.push_back({p.traj.center(t, t_end(scene)), p.radius});
                    break;
                case PrimitiveKind::Box:
                    samples.push_back({p.traj.center(t, t_end(scene)), norm(p.half_extents)});
                    break;
                case PrimitiveKind::HingedCapsule: {
                    real reach = std::max(norm(p.root - p.joint), norm(p.tip - p.joint));
                    samples.push_back({p.joint, reach + p.radius});
                    break;
                }
            }
        }
    }
    Vec3 lo = samples[0].c, hi = samples[0].c;
    for (const auto& s : samples) {
        lo = {std::min(lo.x, s.c.x - s.r), std::min(lo.y, s.c.y - s.r), std::min(lo.z, s.c.z - s.r)};
        hi = {std::max(hi.x, s.c.x + s.r), std::max(hi.y, s.c.y + s.r), std::max(hi.z, s.c.z + s.r)};
    }
    BoundingSphere b;
    b.center = (lo + hi) * 0.5;
    for (const auto& s : samples) b.radius = std::max(b.radius, norm(s.c - b.center) + s.r);
    return b;
}

std::vector<Camera> camera_rig(const AnalyticScene& scene, int n_cam, real radius, real height,
                               int width, int height_px) {
    if (n_cam < 2) throw ConfigError("camera_rig: need at least 2 cameras");
    if (radius <= 0 || width <= 0 || height_px <= 0)
        throw ConfigError("camera_rig: radius and image size must be positive");
    BoundingSphere b = scene_bounds(scene);
    real dist = std::sqrt(radius * radius + height * height);
    require(dist > b.radius, "camera_rig: rig circle is inside the scene bounds");
    // Frame the bounding sphere at 80% of the half-extent of the image.
    real fx = b.radius > 0 ? 0.8 * (std::min(width, height_px) / 2.0) * dist / b.radius
                           : 0.5 * width;

    std::vector<Camera> cams;
    for (int k = 0; k < n_cam; ++k) {
        real phi = 2 * std::numbers::pi * static_cast<real>(k) / n_cam;
        // world y points down: "height above the desk" means y = -height.
        Vec3 eye = b.center + Vec3{radius * std::cos(phi), -height, radius * std::sin(phi)};
        Vec3 fwd = normalized(b.center - eye);
        Vec3 up{0, 1, 0};
        if (std::abs(dot(up, fwd)) > 0.99) up = {1, 0, 0};
        Vec3 right = normalized(cross(up, fwd));
        Vec3 down = cross(fwd, right);
        Camera c;
        c.fx = c.fy = fx;
        c.cx = width / 2.0;
        c.cy = height_px / 2.0;
        c.width = width;
        c.height = height_px;
        c.rotation.m = {right.x, right.y, right.z, down.x, down.y, down.z, fwd.x, fwd.y, fwd.z};
        c.translation = c.rotation * (-eye);
        cams.push_back(c);
    }
    return cams;
}

// --- rendering -------------------------------------------------------------------

GtView render_gt(const AnalyticScene& scene, const Camera& cam, real t) {
    GtView out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1),
               Image(cam.width, cam.height, 1)};
    const Vec3 origin = cam.center();
    const std::int64_t pixels = static_cast<std::int64_t>(cam.width) * cam.height;
    parallel_chunks(pixels, 256, [&](std::int64_t, std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            int px = static_cast<int>(p % cam.width), py = static_cast<int>(p / cam.width);
            Vec3 dir = cam.ray_direction(px + 0.5, py + 0.5);
            real step_scale = norm(dir);
            real tr = 0;
            bool hit = false;
            for (int i = 0; i < kMaxSteps; ++i) {
                real d = gt_sdf(scene, origin + dir * tr, t);
                if (d < kHitEps) {
                    hit = true;
                    break;
                }
                tr += d / step_scale;
                if (tr > kFarClip) break;
            }
            if (!hit) continue;
            Vec3 xw = origin + dir * tr;
            Vec3 n = normalized(gt_sdf_grad(scene, xw, t));
            real shade = 0.2 + 0.8 * std::max(real(0), dot(n, kLightTo));
            Vec3 albedo = scene.prims[owning_primitive(scene, xw, t)].albedo;
            out.color.at(px, py, 0) = albedo.x * shade;
            out.color.at(px, py, 1) = albedo.y * shade;
            out.color.at(px, py, 2) = albedo.z * shade;
            // ray_direction has unit z in the camera frame, so the ray
            // parameter is the camera-z depth.
            out.depth.at(px, py, 0) = tr;
            out.mask.at(px, py, 0) = 1.0;
        }
    });
    return out;
}

// --- serialization -----------------------------------------------------------------

namespace {

using nlohmann::json;

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError(std::string("scene json: ") + what + " must be an array of 3 numbers");
    return {j[0].get<real>(), j[1].get<real>(), j[2].get<real>()};
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* what) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok)
            throw ConfigError(std::string("scene json: unknown key '") + it.key() + "' in " + what);
    }
}

}  // namespace

std::string scene_to_json(const AnalyticScene& scene) {
    json j;
    j["name"] = scene.name;
    j["duration"] = scene.duration;
    j["primitives"] = json::array();
    for (const auto& p : scene.prims) {
        json pj;
        pj["albedo"] = vec3_json(p.albedo);
        switch (p.kind) {
            case PrimitiveKind::Sphere:
                pj["kind"] = "sphere";
                pj["radius"] = p.radius;
                break;
            case PrimitiveKind::Box:
                pj["kind"] = "box";
                pj["half_extents"] = vec3_json(p.half_extents);
                break;
            case PrimitiveKind::HingedCapsule:
                pj["kind"] = "capsule_hinged";
                pj["radius"] = p.radius;
                pj["root"] = vec3_json(p.root);
                pj["joint"] = vec3_json(p.joint);
                pj["tip"] = vec3_json(p.tip);
                pj["hinge_axis"] = vec3_json(p.hinge_axis);
                pj["bend_keys"] = p.bend_keys;
                break;
        }
        if (p.kind != PrimitiveKind::HingedCapsule) {
            json tj;
            tj["translation_keys"] = json::array();
            for (const auto& k : p.traj.trans_keys) tj["translation_keys"].push_back(vec3_json(k));
            tj["rotation_axis"] = vec3_json(p.traj.rot_axis);
            tj["angle_keys"] = p.traj.angle_keys;
            pj["trajectory"] = tj;
        }
        j["primitives"].push_back(pj);
    }
    return j.dump(2);
}

AnalyticScene scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("scene json: parse failed: ") + e.what());
    }
    try {
        if (!j.is_object()) throw ConfigError("scene json: top level must be an object");
        check_keys(j, {"name", "duration", "primitives"}, "scene");
        AnalyticScene s;
        s.name = j.at("name").get<std::string>();
        s.duration = j.at("duration").get<int>();
        if (s.duration < 1) throw ConfigError("scene json: duration must be >= 1");
        for (const auto& pj : j.at("primitives")) {
            Primitive p;
            std::string kind = pj.at("kind").get<std::string>();
            p.albedo = vec3_from(pj.at("albedo"), "albedo");
            if (kind == "sphere" || kind == "box") {
                check_keys(pj, {"kind", "albedo", "radius", "half_extents", "trajectory"},
                           "primitive");
                if (kind == "sphere") {
                    p.kind = PrimitiveKind::Sphere;
                    p.radius = pj.at("radius").get<real>();
                    if (p.radius <= 0) throw ConfigError("scene json: radius must be positive");
                } else {
                    p.kind = PrimitiveKind::Box;
                    p.half_extents = vec3_from(pj.at("half_extents"), "half_extents");
                    if (p.half_extents.x <= 0 || p.half_extents.y <= 0 || p.half_extents.z <= 0)
                        throw ConfigError("scene json: half_extents must be positive");
                }
                const json& tj = pj.at("trajectory");
                check_keys(tj, {"translation_keys", "rotation_axis", "angle_keys"}, "trajectory");
                p.traj.trans_keys.clear();
                for (const auto& k : tj.at("translation_keys"))
                    p.traj.trans_keys.push_back(vec3_from(k, "translation key"));
                if (p.traj.trans_keys.empty())
                    throw ConfigError("scene json: trajectory needs at least one translation key");
                p.traj.rot_axis = vec3_from(tj.at("rotation_axis"), "rotation_axis");
                if (norm(p.traj.rot_axis) < 1e-9)
                    throw ConfigError("scene json: rotation_axis must be nonzero");
                p.traj.angle_keys = tj.at("angle_keys").get<std::vector<real>>();
                if (p.traj.angle_keys.empty())
                    throw ConfigError("scene json: trajectory needs at least one angle key");
            } else if (kind == "capsule_hinged") {
                check_keys(pj,
                           {"kind", "albedo", "radius", "root", "joint", "tip", "hinge_axis",
                            "bend_keys"},
                           "primitive");
                p.kind = PrimitiveKind::HingedCapsule;
                p.radius = pj.at("radius").get<real>();
                if (p.radius <= 0) throw ConfigError("scene json: radius must be positive");
                p.root = vec3_from(pj.at("root"), "root");
                p.joint = vec3_from(pj.at("joint"), "joint");
                p.tip = vec3_from(pj.at("tip"), "tip");
                p.hinge_axis = vec3_from(pj.at("hinge_axis"), "hinge_axis");
                if (norm(p.hinge_axis) < 1e-9)
                    throw ConfigError("scene json: hinge_axis must be nonzero");
                p.bend_keys = pj.at("bend_keys").get<std::vector<real>>();
                if (p.bend_keys.empty())
                    throw ConfigError("scene json: capsule needs at least one bend key");
            } else {
                throw ConfigError("scene json: unknown primitive kind '" + kind + "'");
            }
            s.prims.push_back(std::move(p));
        }
        if (s.prims.empty()) throw ConfigError("scene json: scene needs at least one primitive");
        return s;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("scene json: bad structure: ") + e.what());
    }
}

// --- dataset writing -----------------------------------------------------------------

void write_dataset(const AnalyticScene& scene, const std::vector<Camera>& cams,
                   const std::string& dir) {
    require(!cams.empty(), "write_dataset: no cameras");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw MissingArtifact("write_dataset: cannot create " + dir + ": " + ec.message());

    json manifest;
    manifest["scene"] = scene.name;
    manifest["duration"] = scene.duration;
    manifest["width"] = cams[0].width;
    manifest["height"] = cams[0].height;
    manifest["cameras"] = json::array();
    for (const auto& c : cams) {
        json cj;
        cj["fx"] = c.fx;
        cj["fy"] = c.fy;
        cj["cx"] = c.cx;
        cj["cy"] = c.cy;
        cj["width"] = c.width;
        cj["height"] = c.height;
        cj["rotation"] = c.rotation.m;
        cj["translation"] = vec3_json(c.translation);
        manifest["cameras"].push_back(cj);
    }
    manifest["frames"] = json::array();

    char name[64];
    for (std::size_t k = 0; k < cams.size(); ++k) {
        std::string cam_dir = dir + "/cam" + std::to_string(k);
        fs::create_directories(cam_dir, ec);
        if (ec)
            throw MissingArtifact("write_dataset: cannot create " + cam_dir + ": " + ec.message());
        for (int t = 0; t < scene.duration; ++t) {
            GtView v = render_gt(scene, cams[k], static_cast<real>(t));
            json fj;
            fj["camera"] = k;
            fj["timestep"] = t;
            std::snprintf(name, sizeof name, "cam%zu/color_%04d.png", k, t);
            fj["color"] = name;
            write_png(v.color, dir + "/" + name);
            std::snprintf(name, sizeof name, "cam%zu/depth_%04d.pfm", k, t);
            fj["depth"] = name;
            write_pfm(v.depth, dir + "/" + name);
            std::snprintf(name, sizeof name, "cam%zu/mask_%04d.png", k, t);
            fj["mask"] = name;
            write_png(v.mask, dir + "/" + name);
            manifest["frames"].push_back(fj);
        }
    }
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw MissingArtifact("write_dataset: cannot open manifest for writing");
    mf << manifest.dump(2) << "\n";
    if (!mf.good()) throw MissingArtifact("write_dataset: manifest write failed");
}

}  // namespace sf
