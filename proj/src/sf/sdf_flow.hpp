#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/render.hpp"
#include "sf/surfel.hpp"
#include "sf/tape.hpp"

namespace sf {

// The queried point projects behind the camera or outside the image.
struct OutOfView : Error {
    using Error::Error;
};
// Rendered alpha at the projected pixel is below the surface threshold.
struct NoSurface : Error {
    using Error::Error;
};
// Every camera failed (OutOfView/NoSurface) at one of the two timesteps.
struct NoValidView : Error {
    using Error::Error;
};

// SDF change rate predicted by one surfel's rigid motion: the negative
// projection of the local velocity onto the surface normal. Inputs are kept
// on the sample for debug dumps and residual inspection.
struct MotionFlowSample {
    std::int64_t surfel = 0;
    real t = 0;
    real f = 0;
    Vec3 v, omega, lever, n;
};

// f = -(omega x lever + v) . n. lever is the world-space offset of the
// evaluation point from the surfel center; zero when evaluating at the center
// itself (the default mode), where the angular term drops out.
MotionFlowSample motion_flow(std::int64_t surfel, real t, const Vec3& v, const Vec3& omega,
                             const Vec3& lever, const Vec3& n);

// Lever arms for one surfel's flow evaluation points. Centers-only mode is
// the single zero lever; the tangent mode adds nothing at the center but
// instead returns the four one-sigma offsets +-xi_u t_u and +-xi_v t_v,
// where the omega x lever term is active.
std::vector<Vec3> flow_levers(const DeformedSnapshot& snap, std::int64_t i, bool tangent_offsets);

// Batched tape variant: all inputs Nx3, result Nx1 of -(omega x lever + v).n.
// lever and n are typically constants; gradients reach v and omega.
Var motion_flow_values(Tape& tape, const Var& v, const Var& omega, const Var& lever, const Var& n);

// Signed distance proxy of a point against a rendered view: bilinear depth at
// the projected pixel minus the point's optical-axis depth. Positive in front
// of (nearer to the camera than) the rendered surface, negative behind it.
// The projection must land inside the image (else OutOfView) on a pixel whose
// bilinear alpha reaches 0.5 (else NoSurface).
real approx_sdf(const Camera& cam, const RenderBuffers& buf, const Vec3& center);

// One camera's rendered products at a fixed timestep. Only depth, alpha and
// the dimensions are consulted; a slim hand-assembled RenderBuffers works.
struct FlowView {
    Camera cam;
    RenderBuffers buf;
};

// SDF change rate measured from the rendered geometry. per_view holds each
// contributing camera's difference quotient in `views` order; a sample with
// no usable view never leaves geom_flow, but callers that must keep their
// lists aligned can record the failure as a valid=false placeholder.
struct GeomFlowSample {
    std::int64_t surfel = 0;
    real t = 0;
    real f_tilde = 0;
    bool valid = true;
    std::vector<std::size_t> views;
    std::vector<real> per_view;
};

// Forward difference of the depth-map SDF proxy across one timestep interval,
// tracking the (possibly moved) center, averaged with equal weight over every
// camera where both endpoint terms are valid. views_t and views_t1 list the
// same physical cameras in the same order. Throws NoValidView when no camera
// survives both endpoints.
GeomFlowSample geom_flow(std::int64_t surfel, real t, real dt, const Vec3& center_t,
                         const Vec3& center_t1, const std::vector<FlowView>& views_t,
                         const std::vector<FlowView>& views_t1);

// Mean |f - f_tilde| over aligned valid pairs. The lists must pair up by
// (surfel, t); geometry samples marked invalid are skipped. An empty valid
// set yields 0 with a warning on stderr.
real flow_loss(const std::vector<MotionFlowSample>& motion,
               const std::vector<GeomFlowSample>& geom);

// Tape variant: motion-side flows (Nx1, row i pairing with geom[i]) against
// detached geometry targets. The geometry side is the supervision signal, so
// gradients reach only the motion side.
Var flow_loss_var(Tape& tape, const Var& motion_f, const std::vector<GeomFlowSample>& geom);

// Debug dump for flow-residual inspection: header plus one row per aligned
// pair, columns segment,t,surfel,f,f_tilde. Invalid geometry samples leave
// f_tilde empty.
void dump_flow_csv(const std::string& path, int segment,
                   const std::vector<MotionFlowSample>& motion,
                   const std::vector<GeomFlowSample>& geom);

}  // namespace sf
