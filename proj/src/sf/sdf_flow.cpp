#include "sf/sdf_flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

namespace sf {

namespace {

constexpr real kAlphaThreshold = 0.5;

// Bilinear read on the pixel-center lattice (centers at +0.5), clamped to the
// edge so projections inside the image rectangle but past the outermost
// centers stay usable.
real bilinear(const std::vector<real>& buf, int width, int height, real px, real py) {
    real gx = std::clamp(px - real(0.5), real(0), real(width - 1));
    real gy = std::clamp(py - real(0.5), real(0), real(height - 1));
    int x0 = std::min(static_cast<int>(gx), width - 1);
    int y0 = std::min(static_cast<int>(gy), height - 1);
    int x1 = std::min(x0 + 1, width - 1);
    int y1 = std::min(y0 + 1, height - 1);
    real fx = gx - x0, fy = gy - y0;
    real top = (1 - fx) * buf[static_cast<std::size_t>(y0) * width + x0] +
               fx * buf[static_cast<std::size_t>(y0) * width + x1];
    real bot = (1 - fx) * buf[static_cast<std::size_t>(y1) * width + x0] +
               fx * buf[static_cast<std::size_t>(y1) * width + x1];
    return (1 - fy) * top + fy * bot;
}

}  // namespace

MotionFlowSample motion_flow(std::int64_t surfel, real t, const Vec3& v, const Vec3& omega,
                             const Vec3& lever, const Vec3& n) {
    require(std::abs(norm(n) - 1) <= 1e-6, "motion_flow: normal must be unit length");
    MotionFlowSample s;
    s.surfel = surfel;
    s.t = t;
    s.v = v;
    s.omega = omega;
    s.lever = lever;
    s.n = n;
    s.f = -dot(cross(omega, lever) + v, n);
    require(std::isfinite(s.f), "motion_flow: non-finite flow value");
    return s;
}

std::vector<Vec3> flow_levers(const DeformedSnapshot& snap, std::int64_t i, bool tangent_offsets) {
    require(i >= 0 && i < snap.count, "flow_levers: surfel index out of range");
    if (!tangent_offsets) return {Vec3{0, 0, 0}};
    Quat q{snap.quat[4 * i + 0], snap.quat[4 * i + 1], snap.quat[4 * i + 2], snap.quat[4 * i + 3]};
    TangentFrame f = tangent_frame(q);
    real xu = snap.scale[2 * i + 0], xv = snap.scale[2 * i + 1];
    return {f.t_u * xu, f.t_u * -xu, f.t_v * xv, f.t_v * -xv};
}

Var motion_flow_values(Tape& tape, const Var& v, const Var& omega, const Var& lever,
                       const Var& n) {
    require(v.cols() == 3 && omega.cols() == 3 && lever.cols() == 3 && n.cols() == 3 &&
                omega.rows() == v.rows() && lever.rows() == v.rows() && n.rows() == v.rows(),
            "motion_flow_values: expected four Nx3 inputs of matching row count");
    return tape.scale(tape.rows_dot(tape.add(tape.rows_cross(omega, lever), v), n), -1);
}

real approx_sdf(const Camera& cam, const RenderBuffers& buf, const Vec3& center) {
    std::size_t pixels = static_cast<std::size_t>(buf.width) * static_cast<std::size_t>(buf.height);
    require(buf.width > 0 && buf.height > 0 && buf.depth.size() == pixels &&
                buf.alpha.size() == pixels,
            "approx_sdf: depth/alpha buffers do not match their dimensions");
    Projection pr;
    try {
        pr = project(cam, center);
    } catch (const BehindCamera&) {
        throw OutOfView("approx_sdf: point behind the camera");
    }
    if (pr.pixel.x < 0 || pr.pixel.x > buf.width || pr.pixel.y < 0 || pr.pixel.y > buf.height)
        throw OutOfView("approx_sdf: point projects outside the image");
    if (bilinear(buf.alpha, buf.width, buf.height, pr.pixel.x, pr.pixel.y) < kAlphaThreshold)
        throw NoSurface("approx_sdf: no rendered surface at the projected pixel");
    return bilinear(buf.depth, buf.width, buf.height, pr.pixel.x, pr.pixel.y) - pr.depth;
}

GeomFlowSample geom_flow(std::int64_t surfel, real t, real dt, const Vec3& center_t,
                         const Vec3& center_t1, const std::vector<FlowView>& views_t,
                         const std::vector<FlowView>& views_t1) {
    require(dt > 0, "geom_flow: timestep interval must be positive");
    require(views_t.size() == views_t1.size(),
            "geom_flow: camera lists differ between timesteps");
    GeomFlowSample s;
    s.surfel = surfel;
    s.t = t;
    for (std::size_t k = 0; k < views_t.size(); ++k) {
        real s0, s1;
        try {
            s0 = approx_sdf(views_t[k].cam, views_t[k].buf, center_t);
            s1 = approx_sdf(views_t1[k].cam, views_t1[k].buf, center_t1);
        } catch (const OutOfView&) {
            continue;
        } catch (const NoSurface&) {
            continue;
        }
        s.views.push_back(k);
        s.per_view.push_back((s1 - s0) / dt);
    }
    if (s.views.empty())
        throw NoValidView("geom_flow: no camera sees the surfel at both timesteps");
    real sum = 0;
    for (real c : s.per_view) sum += c;
    s.f_tilde = sum / static_cast<real>(s.per_view.size());
    return s;
}

real flow_loss(const std::vector<MotionFlowSample>& motion,
               const std::vector<GeomFlowSample>& geom) {
    require(motion.size() == geom.size(), "flow_loss: sample lists differ in length");
    real sum = 0;
    std::int64_t valid = 0;
    for (std::size_t i = 0; i < motion.size(); ++i) {
        require(motion[i].surfel == geom[i].surfel && motion[i].t == geom[i].t,
                "flow_loss: motion/geometry samples are misaligned");
        if (!geom[i].valid) continue;
        sum += std::abs(motion[i].f - geom[i].f_tilde);
        ++valid;
    }
    if (valid == 0) {
        std::cerr << "flow_loss: no valid flow pairs, loss is 0\n";
        return 0;
    }
    return sum / static_cast<real>(valid);
}

Var flow_loss_var(Tape& tape, const Var& motion_f, const std::vector<GeomFlowSample>& geom) {
    require(motion_f.cols() == 1 &&
                motion_f.rows() == static_cast<std::int64_t>(geom.size()),
            "flow_loss_var: motion flows must be Nx1 matching the geometry samples");
    Tensor target = Tensor::zeros(motion_f.rows(), 1);
    Tensor mask = Tensor::zeros(motion_f.rows(), 1);
    bool any = false;
    for (std::size_t i = 0; i < geom.size(); ++i) {
        if (!geom[i].valid) continue;
        target.v[i] = geom[i].f_tilde;
        mask.v[i] = 1;
        any = true;
    }
    if (!any) std::cerr << "flow_loss_var: no valid flow pairs, loss is 0\n";
    return tape.masked_mean_abs_diff(motion_f, tape.constant(std::move(target)), mask);
}

void dump_flow_csv(const std::string& path, int segment,
                   const std::vector<MotionFlowSample>& motion,
                   const std::vector<GeomFlowSample>& geom) {
    require(motion.size() == geom.size(), "dump_flow_csv: sample lists differ in length");
    std::ofstream out(path);
    if (!out) throw MissingArtifact("dump_flow_csv: cannot open " + path);
    out.precision(17);
    out << "segment,t,surfel,f,f_tilde\n";
    for (std::size_t i = 0; i < motion.size(); ++i) {
        out << segment << ',' << motion[i].t << ',' << motion[i].surfel << ',' << motion[i].f
            << ',';
        if (geom[i].valid) out << geom[i].f_tilde;
        out << '\n';
    }
}

}  // namespace sf
