#include "sf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "sf/parallel.hpp"

namespace sf {

namespace {

constexpr std::int32_t kLeafSize = 8;

real coord(const Vec3& v, int axis) { return axis == 0 ? v.x : axis == 1 ? v.y : v.z; }

// Deterministic mean of nearest-neighbor distances: fixed-size chunks with
// per-chunk partial sums combined in chunk order, so the result is identical
// at any thread count.
real mean_nearest(const std::vector<Vec3>& queries, const PointIndex& index) {
    const std::int64_t n = static_cast<std::int64_t>(queries.size());
    const std::int64_t chunk = 1024;
    std::vector<real> partial((n + chunk - 1) / chunk, 0.0);
    parallel_chunks(n, chunk, [&](std::int64_t c, std::int64_t b, std::int64_t e) {
        real s = 0;
        for (std::int64_t i = b; i < e; ++i) s += index.nearest_distance(queries[i]);
        partial[c] = s;
    });
    real total = 0;
    for (real s : partial) total += s;
    return total / n;
}

}  // namespace

PointIndex::PointIndex(std::vector<Vec3> points) : pts_(std::move(points)) {
    if (pts_.empty()) throw EmptyInput("PointIndex: empty point set");
    std::vector<std::int32_t> order(pts_.size());
    std::iota(order.begin(), order.end(), 0);
    nodes_.reserve(pts_.size() / kLeafSize * 2 + 2);
    build(0, static_cast<std::int32_t>(pts_.size()), order);
    std::vector<Vec3> reordered(pts_.size());
    for (std::size_t i = 0; i < pts_.size(); ++i) reordered[i] = pts_[order[i]];
    pts_ = std::move(reordered);
}

std::int32_t PointIndex::build(std::int32_t begin, std::int32_t end,
                               std::vector<std::int32_t>& order) {
    std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    if (end - begin <= kLeafSize) {
        nodes_[id] = {0, -1, begin, end};
        return id;
    }
    Vec3 lo = pts_[order[begin]], hi = lo;
    for (std::int32_t i = begin + 1; i < end; ++i) {
        const Vec3& p = pts_[order[i]];
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    Vec3 ext = hi - lo;
    int axis = ext.x >= ext.y ? (ext.x >= ext.z ? 0 : 2) : (ext.y >= ext.z ? 1 : 2);
    std::int32_t mid = begin + (end - begin) / 2;
    // Total order (coordinate, then original id) keeps the tree reproducible
    // even when many points share a coordinate.
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::int32_t ia, std::int32_t ib) {
                         real ca = coord(pts_[ia], axis), cb = coord(pts_[ib], axis);
                         return ca < cb || (ca == cb && ia < ib);
                     });
    real split = coord(pts_[order[mid]], axis);
    std::int32_t left = build(begin, mid, order);
    std::int32_t right = build(mid, end, order);
    nodes_[id] = {split, axis, left, right};
    return id;
}

void PointIndex::query(std::int32_t ni, const Vec3& q, real& best_sq) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
        for (std::int32_t i = n.a; i < n.b; ++i) {
            Vec3 d = pts_[i] - q;
            best_sq = std::min(best_sq, dot(d, d));
        }
        return;
    }
    real d = coord(q, n.axis) - n.split;
    std::int32_t near_child = d < 0 ? n.a : n.b;
    std::int32_t far_child = d < 0 ? n.b : n.a;
    query(near_child, q, best_sq);
    if (d * d < best_sq) query(far_child, q, best_sq);
}

real PointIndex::nearest_distance(const Vec3& q) const {
    real best_sq = std::numeric_limits<real>::infinity();
    query(0, q, best_sq);
    return std::sqrt(best_sq);
}

ChamferMetrics chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    if (pred.empty()) throw EmptyInput("chamfer: empty prediction point set");
    if (gt.empty()) throw EmptyInput("chamfer: empty ground-truth point set");
    PointIndex gt_index(gt);
    PointIndex pred_index(pred);
    ChamferMetrics m;
    m.acc = mean_nearest(pred, gt_index);
    m.comp = mean_nearest(gt, pred_index);
    m.overall = (m.acc + m.comp) / 2;
    return m;
}

ChamferMetrics chamfer(const TriangleMesh& pred, const std::vector<Vec3>& gt, Rng& rng,
                       std::int64_t n_samples) {
    return chamfer(sample_mesh(pred, n_samples, rng), gt);
}

std::vector<Vec3> sample_mesh(const TriangleMesh& mesh, std::int64_t n, Rng& rng) {
    if (mesh.triangles.empty() || n < 1) throw EmptyInput("sample_mesh: nothing to sample");
    std::vector<real> cum(mesh.triangles.size());
    real total = 0;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& tri = mesh.triangles[i];
        Vec3 ab = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
        Vec3 ac = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
        Vec3 c = cross(ab, ac);
        total += 0.5 * std::sqrt(dot(c, c));
        cum[i] = total;
    }
    if (!(total > 0)) throw EmptyInput("sample_mesh: mesh has zero area");

    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        real u = rng.uniform() * total;
        std::size_t ti = static_cast<std::size_t>(
            std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (ti >= cum.size()) ti = cum.size() - 1;
        const auto& tri = mesh.triangles[ti];
        real r1 = rng.uniform(), r2 = rng.uniform();
        if (r1 + r2 > 1) {  // fold back into the triangle half of the square
            r1 = 1 - r1;
            r2 = 1 - r2;
        }
        const Vec3& a = mesh.vertices[tri[0]];
        out.push_back(a + (mesh.vertices[tri[1]] - a) * r1 + (mesh.vertices[tri[2]] - a) * r2);
    }
    return out;
}

std::vector<Vec3> gt_samples(const AnalyticScene& scene, real t, std::int64_t n, Rng& rng) {
    require(n >= 1, "gt_samples: need a positive sample count");
    BoundingSphere b = scene_bounds(scene);
    const real h = 0.005 * b.radius;  // shell half-width
    Vec3 lo = b.center - Vec3{b.radius, b.radius, b.radius};
    Vec3 hi = b.center + Vec3{b.radius, b.radius, b.radius};

    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(n));
    std::int64_t draws = 0;
    const std::int64_t max_draws = 200000 * n + 1000000;
    while (static_cast<std::int64_t>(out.size()) < n) {
        require(draws++ < max_draws, "gt_samples: rejection sampling stalled");
        Vec3 x{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)};
        real s = gt_sdf(scene, x, t);
        if (std::abs(s) >= h) continue;
        // Newton projection onto the level set; candidates that wander more
        // than a few shell widths sit near a crease or medial axis and are
        // dropped to keep the area density clean.
        Vec3 x0 = x;
        bool ok = false;
        for (int it = 0; it < 25; ++it) {
            if (std::abs(s) < 1e-6) {
                ok = true;
                break;
            }
            x = x - gt_sdf_grad(scene, x, t) * s;
            Vec3 d = x - x0;
            if (dot(d, d) > 16 * h * h) break;
            s = gt_sdf(scene, x, t);
        }
        if (ok) out.push_back(x);
    }
    return out;
}

ChamferMetrics sequence_mean(const std::vector<ChamferMetrics>& rows) {
    if (rows.empty()) throw EmptyInput("sequence_mean: no rows");
    ChamferMetrics m;
    for (const ChamferMetrics& r : rows) {
        m.acc += r.acc;
        m.comp += r.comp;
        m.overall += r.overall;
    }
    m.acc /= static_cast<real>(rows.size());
    m.comp /= static_cast<real>(rows.size());
    m.overall /= static_cast<real>(rows.size());
    return m;
}

ChamferMetrics temporal_std(const std::vector<ChamferMetrics>& rows) {
    if (rows.size() < 2)
        throw TooFewTimesteps("temporal_std: need at least two timesteps, got " +
                              std::to_string(rows.size()));
    ChamferMetrics mean = sequence_mean(rows);
    ChamferMetrics v;
    for (const ChamferMetrics& r : rows) {
        v.acc += (r.acc - mean.acc) * (r.acc - mean.acc);
        v.comp += (r.comp - mean.comp) * (r.comp - mean.comp);
        v.overall += (r.overall - mean.overall) * (r.overall - mean.overall);
    }
    real n = static_cast<real>(rows.size());  // population: divide by n
    return {std::sqrt(v.acc / n), std::sqrt(v.comp / n), std::sqrt(v.overall / n)};
}

ChamferReport make_report(const std::vector<real>& timesteps,
                          const std::vector<ChamferMetrics>& rows) {
    require(timesteps.size() == rows.size(), "make_report: timestep/row count mismatch");
    if (rows.size() < 2)
        throw TooFewTimesteps("make_report: need at least two timesteps");
    ChamferReport rep;
    rep.timesteps = timesteps;
    rep.rows = rows;
    for (ChamferMetrics& r : rep.rows) r.overall = (r.acc + r.comp) / 2;
    rep.mean = sequence_mean(rep.rows);
    rep.std = temporal_std(rep.rows);
    return rep;
}

void write_report_csv(const ChamferReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifact("write_report_csv: cannot open " + path);
    out.precision(17);
    out << "t,acc,comp,overall\n";
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
        out << rep.timesteps[i] << ',' << rep.rows[i].acc << ',' << rep.rows[i].comp << ','
            << rep.rows[i].overall << '\n';
    out << "mean," << rep.mean.acc << ',' << rep.mean.comp << ',' << rep.mean.overall << '\n';
    out << "std," << rep.std.acc << ',' << rep.std.comp << ',' << rep.std.overall << '\n';
    require(out.good(), "write_report_csv: write failed for " + path);
}

std::string format_report(const ChamferReport& rep) {
    std::ostringstream out;
    out << std::setw(9) << "t" << std::setw(11) << "Acc" << std::setw(11) << "Comp"
        << std::setw(11) << "Overall" << '\n';
    auto row = [&](const std::string& label, const ChamferMetrics& m) {
        out << std::setw(9) << label << std::fixed << std::setprecision(6) << std::setw(11)
            << m.acc << std::setw(11) << m.comp << std::setw(11) << m.overall << '\n';
        out.unsetf(std::ios_base::floatfield);
    };
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        std::ostringstream label;
        label << std::fixed << std::setprecision(1) << rep.timesteps[i];
        row(label.str(), rep.rows[i]);
    }
    row("mean", rep.mean);
    row("std", rep.std);
    return out.str();
}

}  // namespace sf
