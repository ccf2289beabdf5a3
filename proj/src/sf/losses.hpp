#pragma once

#include <cstdint>
#include <vector>

#include "sf/geom.hpp"
#include "sf/tape.hpp"

namespace sf {

struct ResolutionMismatch : Error {
    using Error::Error;
};

// Mean SSIM between x (P x C, P = width*height pixels) and a constant
// reference, 11x11 Gaussian window (sigma 1.5), zero padding, dynamic range 1.
// Differentiable w.r.t. x only.
Var ssim_mean(Tape& tape, const Var& x, const Tensor& y, int width, int height);

// 0.8 * L1 + 0.2 * (1 - SSIM)/2; zero when the images match.
Var image_loss(Tape& tape, const Var& render, const Tensor& gt, int width, int height);

// World-space normals from a rendered depth map: back-project the 4-neighbor
// pixels, central differences, cross product, unit-normalize, orient toward
// the camera. Rows where the stencil leaves `valid` (or the image) are zero.
struct DepthNormals {
    Var normals;                    // P x 3
    std::vector<std::uint8_t> ok;   // P, 1 where the output row is usable
};
DepthNormals depth_normals(Tape& tape, const Camera& cam, const Var& depth,
                           const std::vector<std::uint8_t>& valid);

// Splat/depth normal agreement: mean over all pixels of
// ok * (alpha - dot(blended_normal, depth_normal)). With unit depth normals
// this equals the per-splat sum w_i (1 - n_i . N) restricted to usable pixels.
Var normal_consistency_loss(Tape& tape, const Var& alpha, const Var& blended_normal,
                            const DepthNormals& dn);

// L1 between rendered alpha and the ground-truth mask.
Var mask_loss(Tape& tape, const Var& alpha, const Tensor& gt_mask);

}  // namespace sf
