#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sf/geom.hpp"
#include "sf/image.hpp"

namespace sf {

// A flow/SDF query was made at a point that is not on the zero level set.
struct NotOnSurface : Error {
    using Error::Error;
};

// Uniform cubic Hermite spline (Catmull-Rom tangents, one-sided at the ends)
// over [t0, t1]. One key means a constant; two keys reduce to a line. C1 by
// construction, which keeps trajectory velocities continuous.
struct Spline {
    std::vector<real> keys;
    real t0 = 0, t1 = 1;

    real eval(real t) const;
    real deriv(real t) const;
};

// Rigid motion: splined translation plus a fixed-axis rotation with splined
// angle. The angular velocity is axis * angle'(t) in world coordinates.
struct Trajectory {
    std::vector<Vec3> trans_keys{Vec3{0, 0, 0}};
    Vec3 rot_axis{0, 0, 1};
    std::vector<real> angle_keys{0};

    Vec3 center(real t, real t_end) const;
    Vec3 center_velocity(real t, real t_end) const;
    Mat3 rotation(real t, real t_end) const;
    Vec3 angular_velocity(real t, real t_end) const;
};

enum class PrimitiveKind { Sphere, Box, HingedCapsule };

// One analytic solid. Sphere and box ride a rigid Trajectory; the hinged
// capsule is a static root segment (root->joint) plus a distal segment
// (joint->tip) swinging about hinge_axis by the splined bend angle.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Sphere;
    Vec3 albedo{0.8, 0.8, 0.8};

    real radius = 0.5;             // sphere and capsule
    Vec3 half_extents{0.5, 0.5, 0.5};  // box
    Trajectory traj;               // sphere and box

    Vec3 root{-0.5, 0, 0}, joint{0, 0, 0}, tip{0.5, 0, 0};  // capsule rest pose
    Vec3 hinge_axis{0, 0, 1};
    std::vector<real> bend_keys{0};
};

// Scene SDF is the min over primitives; the standard scenes keep primitives
// disjoint so the composition is exact everywhere it is queried.
struct AnalyticScene {
    std::string name;
    int duration = 1;  // timesteps; continuous time runs over [0, duration-1]
    std::vector<Primitive> prims;
};

// --- ground-truth queries ---------------------------------------------------

real gt_sdf(const AnalyticScene& scene, const Vec3& x, real t);
real gt_sdf_primitive(const AnalyticScene& scene, std::size_t i, const Vec3& x, real t);

// Central-difference spatial gradient of gt_sdf (step 1e-5); unit-length away
// from medial axes and surface creases.
Vec3 gt_sdf_grad(const AnalyticScene& scene, const Vec3& x, real t);

// Velocity of the surface point x under the owning primitive's motion.
// Throws NotOnSurface when |gt_sdf| > 1e-6.
Vec3 gt_scene_flow(const AnalyticScene& scene, const Vec3& x, real t);

// Rate of change of the SDF at a fixed point riding the surface, two ways:
// the analytic path -flow . normal, and a brute-force temporal central
// difference (step 1e-5). They agree within 1e-4 and everything downstream
// is validated against them.
real gt_sdf_flow(const AnalyticScene& scene, const Vec3& x, real t);
real gt_sdf_flow_fd(const AnalyticScene& scene, const Vec3& x, real t);

// --- scenes and rigs --------------------------------------------------------

std::vector<AnalyticScene> standard_scenes();
// Lookup by name; throws ConfigError for unknown names.
AnalyticScene standard_scene(std::string_view name);

struct BoundingSphere {
    Vec3 center;
    real radius = 0;
};
// Conservative bound over the whole duration (trajectories sampled densely).
BoundingSphere scene_bounds(const AnalyticScene& scene);

// n_cam cameras on a circle of the given radius in the desk plane, height
// above it (world y points down, so the eyes sit at y = -height), all aimed
// at the scene bound's center with intrinsics chosen to frame it.
std::vector<Camera> camera_rig(const AnalyticScene& scene, int n_cam, real radius, real height,
                               int width, int height_px);

// --- ground-truth rendering -------------------------------------------------

struct GtView {
    Image color;  // 3 channels, Lambertian, zero background
    Image depth;  // 1 channel, camera-z depth, zero where no hit
    Image mask;   // 1 channel, hit indicator
};
// Sphere-traced against the analytic SDF: max 256 steps, hit at |sdf| < 1e-4.
GtView render_gt(const AnalyticScene& scene, const Camera& cam, real t);

// --- serialization and datasets ----------------------------------------------

std::string scene_to_json(const AnalyticScene& scene);
// Throws ProtocolError on malformed input, ConfigError on bad field values.
AnalyticScene scene_from_json(const std::string& text);

// Renders every (camera, integer timestep) pair into dir: color PNG, depth
// PFM, mask PNG, plus manifest.json listing the files and camera parameters.
void write_dataset(const AnalyticScene& scene, const std::vector<Camera>& cams,
                   const std::string& dir);

}  // namespace sf
