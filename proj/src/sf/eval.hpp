#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/meshing.hpp"
#include "sf/rng.hpp"
#include "sf/synth.hpp"

namespace sf {

// A metric was asked of an empty mesh or point set.
struct EmptyInput : Error {
    using Error::Error;
};
// Sequence statistics need at least two (non-virtual) timesteps.
struct TooFewTimesteps : Error {
    using Error::Error;
};

// Static spatial index for exact nearest-neighbor queries: a kd-tree with
// median splits on the widest axis. The tree never changes after
// construction, so queries are safe to run from many threads at once.
class PointIndex {
  public:
    explicit PointIndex(std::vector<Vec3> points);  // EmptyInput when empty

    // Euclidean distance from q to the closest indexed point.
    real nearest_distance(const Vec3& q) const;
    std::size_t size() const { return pts_.size(); }

  private:
    struct Node {
        real split = 0;
        std::int32_t axis = -1;  // -1 marks a leaf
        std::int32_t a = 0, b = 0;  // leaf: point range [a, b); else child ids
    };
    std::vector<Vec3> pts_;
    std::vector<Node> nodes_;

    std::int32_t build(std::int32_t begin, std::int32_t end,
                       std::vector<std::int32_t>& order);
    void query(std::int32_t node, const Vec3& q, real& best_sq) const;
};

// Acc: mean distance from predicted surface points to their nearest ground
// truth point. Comp: the reverse. Overall: their average. World units.
struct ChamferMetrics {
    real acc = 0, comp = 0, overall = 0;
};

// Point-set form; both directions use exact nearest neighbors.
ChamferMetrics chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);
// Mesh form: the mesh is first sampled uniformly by area (n_samples points).
ChamferMetrics chamfer(const TriangleMesh& pred, const std::vector<Vec3>& gt, Rng& rng,
                       std::int64_t n_samples = 100000);

// n points uniform by area over the mesh surface (cumulative-area triangle
// pick + uniform barycentric point). EmptyInput when the mesh has no area.
std::vector<Vec3> sample_mesh(const TriangleMesh& mesh, std::int64_t n, Rng& rng);

// n points uniform by area on the scene's zero level set at time t:
// candidates drawn in the scene bounds are kept when they land in a thin
// shell around the surface, then Newton-projected along the SDF gradient
// until |sdf| < 1e-6. The shell is thin enough that the curvature bias is
// far below the Monte-Carlo noise at any n used here.
std::vector<Vec3> gt_samples(const AnalyticScene& scene, real t, std::int64_t n, Rng& rng);

// Per-metric arithmetic mean over the sequence. EmptyInput when empty.
ChamferMetrics sequence_mean(const std::vector<ChamferMetrics>& rows);
// Per-metric population standard deviation over the sequence.
ChamferMetrics temporal_std(const std::vector<ChamferMetrics>& rows);

// Per-timestep metric rows plus their sequence mean and population STD.
// Rows must cover real (non-virtual) timesteps only; overall is recomputed
// from acc/comp so the invariant overall = (acc + comp)/2 holds by
// construction.
struct ChamferReport {
    std::vector<real> timesteps;
    std::vector<ChamferMetrics> rows;
    ChamferMetrics mean, std;
};
ChamferReport make_report(const std::vector<real>& timesteps,
                          const std::vector<ChamferMetrics>& rows);

// CSV with one row per timestep and trailing mean/std rows; full precision.
void write_report_csv(const ChamferReport& rep, const std::string& path);
// Fixed-width Acc/Comp/Overall table for logs.
std::string format_report(const ChamferReport& rep);

}  // namespace sf
