#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sf/image.hpp"
#include "sf/render.hpp"

namespace sf {

// The volume holds no zero crossing, so there is no surface to extract.
struct EmptySurface : Error {
    using Error::Error;
};
// Meshes are not produced for virtual (segment-handoff) timesteps; the owning
// segment's non-virtual copy of the same timestep is the one to export.
struct VirtualTimestep : Error {
    using Error::Error;
};

// Truncated signed distance volume fused from rendered RGB-D views.
// tsdf is normalized by the truncation band (so it lives in [-1, 1], +1 far
// in front / unobserved, negative behind the surface); weight counts the
// integrated observations per voxel and never decreases; rgb holds the
// running mean color of the observations.
struct TsdfVolume {
    Vec3 origin;        // world position of the center of voxel (0,0,0)
    real voxel = 0;     // cubic voxel edge length
    real trunc = 0;     // truncation band in world units (4 voxels)
    int nx = 0, ny = 0, nz = 0;
    std::vector<real> tsdf;    // nx*ny*nz
    std::vector<real> weight;  // nx*ny*nz
    std::vector<real> rgb;     // 3 * nx*ny*nz

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    Vec3 voxel_center(int x, int y, int z) const {
        return origin + Vec3{x * voxel, y * voxel, z * voxel};
    }
};

// Volume covering [lo, hi]: the voxel edge comes from the largest extent
// divided by `resolution`, the grid is sized per axis to span the box, and
// the truncation band is 4 voxels. tsdf starts at +1 with zero weight.
TsdfVolume make_volume(const Vec3& lo, const Vec3& hi, int resolution);

// Weighted TSDF fusion of one view. Each voxel projects into the camera and
// compares its optical-axis depth with the depth sample at its pixel
// (front-positive); updates are skipped outside the image, where alpha < 0.5,
// where depth is empty, or deeper than one truncation band behind the
// surface. depth/alpha are single-channel, color three-channel.
void integrate(TsdfVolume& vol, const Camera& cam, const Image& depth, const Image& color,
               const Image& alpha);
// Same, reading straight from forward-render products.
void integrate(TsdfVolume& vol, const Camera& cam, const RenderBuffers& buf);

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> colors;  // per-vertex rgb in [0, 1]
    std::vector<std::array<std::int32_t, 3>> triangles;
};

// Marching cubes over the volume at iso-level 0 with linear interpolation on
// cell edges; vertices are shared across cells (keyed by grid edge), colors
// interpolate the voxel means, and zero-area triangles are dropped. Cells
// with any unobserved (zero-weight) corner are skipped. Throws EmptySurface
// when nothing crosses the level set.
TriangleMesh extract(const TsdfVolume& vol);

// Render the snapshot from every camera, fuse the views into a fresh volume
// over [lo, hi], and extract the surface.
TriangleMesh mesh_snapshot(const DeformedSnapshot& snap, const std::vector<Camera>& cams,
                           const Vec3& lo, const Vec3& hi, int resolution);

// ASCII PLY with per-vertex position + uchar color and triangle faces.
void write_ply(const TriangleMesh& mesh, const std::string& path);
// Reads the layout write_ply produces. MissingArtifact when the file is
// absent, ProtocolError on malformed content.
TriangleMesh read_ply(const std::string& path);

}  // namespace sf
