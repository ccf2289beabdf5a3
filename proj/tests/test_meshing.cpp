#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sf/meshing.hpp"
#include "sf/synth.hpp"
#include "render_support.hpp"
#include "support.hpp"

using namespace sf;
using namespace sftest;

namespace {

// Same-size depth/color/alpha triple with constant values everywhere.
struct ConstViews {
    Image depth, color, alpha;
};
ConstViews const_views(const Camera& cam, real depth, const Vec3& color, real alpha) {
    ConstViews v{Image(cam.width, cam.height, 1), Image(cam.width, cam.height, 3),
                 Image(cam.width, cam.height, 1)};
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            v.depth.at(x, y, 0) = depth;
            v.alpha.at(x, y, 0) = alpha;
            v.color.at(x, y, 0) = color.x;
            v.color.at(x, y, 1) = color.y;
            v.color.at(x, y, 2) = color.z;
        }
    return v;
}

// Overwrite the volume with an analytic field sample: tsdf from the given
// signed distance (normalized by the truncation band), weight 1, fixed color.
template <class Sdf>
void fill_volume(TsdfVolume& vol, const Sdf& sdf, const Vec3& color) {
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                std::size_t i = vol.index(x, y, z);
                vol.tsdf[i] = std::clamp(sdf(vol.voxel_center(x, y, z)) / vol.trunc, real(-1),
                                         real(1));
                vol.weight[i] = 1.0;
                vol.rgb[3 * i + 0] = color.x;
                vol.rgb[3 * i + 1] = color.y;
                vol.rgb[3 * i + 2] = color.z;
            }
}

struct MeshStats {
    std::int64_t v = 0, e = 0, f = 0;
    int min_faces_per_edge = 0, max_faces_per_edge = 0;
    bool oriented = true;  // every directed edge used exactly once
};
MeshStats mesh_stats(const TriangleMesh& m) {
    MeshStats s;
    s.v = static_cast<std::int64_t>(m.vertices.size());
    s.f = static_cast<std::int64_t>(m.triangles.size());
    std::map<std::pair<int, int>, int> undirected;
    std::set<std::pair<int, int>> directed;
    for (const auto& tri : m.triangles)
        for (int k = 0; k < 3; ++k) {
            int a = tri[k], b = tri[(k + 1) % 3];
            if (!directed.insert({a, b}).second) s.oriented = false;
            undirected[{std::min(a, b), std::max(a, b)}]++;
        }
    s.e = static_cast<std::int64_t>(undirected.size());
    s.min_faces_per_edge = 1 << 30;
    for (const auto& [edge, n] : undirected) {
        s.min_faces_per_edge = std::min(s.min_faces_per_edge, n);
        s.max_faces_per_edge = std::max(s.max_faces_per_edge, n);
    }
    // A closed orientable surface also needs the two directions of every
    // undirected edge to both be present; the directed set covers that when
    // every edge has two faces and no directed edge repeats.
    if (s.max_faces_per_edge == 2 && s.min_faces_per_edge == 2 &&
        directed.size() != 2 * undirected.size())
        s.oriented = false;
    return s;
}

real torus_sdf(const Vec3& p, real ring, real tube) {
    real q = std::sqrt(p.x * p.x + p.z * p.z) - ring;
    return std::sqrt(q * q + p.y * p.y) - tube;
}

// Single-surfel snapshot: an axis-aligned disc facing +z at (0, 0, 2).
DeformedSnapshot disc_snapshot() {
    DeformedSnapshot snap;
    snap.count = 1;
    snap.mu = {0, 0, 2};
    snap.quat = {1, 0, 0, 0};
    snap.scale = {0.4, 0.4};
    snap.opacity = {0.95};
    snap.color = {0.8, 0.3, 0.1};
    snap.source_index = {0};
    return snap;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("make_volume sizes the grid from the largest extent") {
    TsdfVolume v = make_volume({-0.3, -0.3, 1.5}, {0.3, 0.3, 2.5}, 32);
    CHECK(v.voxel == 1.0 / 32);       // largest extent is z: 1.0 / 32
    CHECK(v.trunc == 4.0 / 32);
    CHECK(v.nx == 21);                // ceil(0.6 / 0.03125) + 1
    CHECK(v.ny == 21);
    CHECK(v.nz == 33);
    CHECK(v.tsdf.size() == 21u * 21u * 33u);
    CHECK(v.weight.size() == v.tsdf.size());
    CHECK(v.rgb.size() == 3 * v.tsdf.size());
    CHECK(v.index(1, 2, 3) == (3u * 21 + 2) * 21 + 1);

    Vec3 o = v.voxel_center(0, 0, 0);
    CHECK(o.x == -0.3);
    CHECK(o.y == -0.3);
    CHECK(o.z == 1.5);
    Vec3 c = v.voxel_center(4, 0, 16);
    CHECK(std::abs(c.x - (-0.3 + 4 * v.voxel)) < 1e-15);
    CHECK(std::abs(c.z - 2.0) < 1e-15);

    CHECK(std::all_of(v.tsdf.begin(), v.tsdf.end(), [](real t) { return t == 1.0; }));
    CHECK(std::all_of(v.weight.begin(), v.weight.end(), [](real w) { return w == 0.0; }));
}

TEST_CASE("make_volume rejects degenerate inputs") {
    CHECK_THROWS_AS(make_volume({0, 0, 0}, {1, 1, 1}, 1), Error);
    CHECK_THROWS_AS(make_volume({0, 0, 0}, {1, 0, 1}, 16), Error);   // empty y extent
    CHECK_THROWS_AS(make_volume({1, 0, 0}, {0, 1, 1}, 16), Error);   // inverted x
}

TEST_CASE("integrating a fronto-parallel plane lays the truncation band along the axis") {
    // Wall at z = 2 seen head-on: the normalized tsdf along z must ramp from
    // +1 (in front) through 0 at the wall to -1, and stop one truncation band
    // behind it. The z lattice is exact here (voxel = 2^-5), so the expected
    // values are exact too.
    TsdfVolume vol = make_volume({-0.3, -0.3, 1.5}, {0.3, 0.3, 2.5}, 32);
    Camera cam = axis_cam(64, 64, 80.0);
    ConstViews v = const_views(cam, 2.0, {0.25, 0.5, 0.75}, 1.0);
    integrate(vol, cam, v.depth, v.color, v.alpha);

    auto at = [&](int k) { return vol.tsdf[vol.index(10, 10, k)]; };
    auto wt = [&](int k) { return vol.weight[vol.index(10, 10, k)]; };
    CHECK(at(16) == 0.0);   // z = 2.0, on the wall
    CHECK(at(14) == 0.5);   // z = 1.9375, half a band in front
    CHECK(at(18) == -0.5);  // z = 2.0625, half a band behind
    CHECK(at(20) == -1.0);  // z = 2.125, exactly one band behind
    CHECK(wt(20) == 1.0);
    CHECK(at(21) == 1.0);   // deeper than the band: never touched
    CHECK(wt(21) == 0.0);
    CHECK(at(0) == 1.0);    // far in front: clamped but observed
    CHECK(wt(0) == 1.0);

    std::size_t i = vol.index(10, 10, 16);
    CHECK(vol.rgb[3 * i + 0] == 0.25);
    CHECK(vol.rgb[3 * i + 1] == 0.5);
    CHECK(vol.rgb[3 * i + 2] == 0.75);
}

TEST_CASE("integration gates on alpha, depth, and input shape") {
    TsdfVolume vol = make_volume({-0.3, -0.3, 1.5}, {0.3, 0.3, 2.5}, 32);
    Camera cam = axis_cam(64, 64, 80.0);

    ConstViews faint = const_views(cam, 2.0, {1, 1, 1}, 0.2);
    integrate(vol, cam, faint.depth, faint.color, faint.alpha);
    CHECK(std::all_of(vol.weight.begin(), vol.weight.end(), [](real w) { return w == 0.0; }));

    ConstViews hole = const_views(cam, 0.0, {1, 1, 1}, 1.0);  // no depth anywhere
    integrate(vol, cam, hole.depth, hole.color, hole.alpha);
    CHECK(std::all_of(vol.weight.begin(), vol.weight.end(), [](real w) { return w == 0.0; }));

    ConstViews ok = const_views(cam, 2.0, {1, 1, 1}, 1.0);
    Image small(32, 32, 1);
    CHECK_THROWS_AS(integrate(vol, cam, small, ok.color, ok.alpha), Error);
    CHECK_THROWS_AS(integrate(vol, cam, ok.depth, ok.alpha, ok.alpha), Error);  // 1ch color
}

TEST_CASE("repeat observations keep the mean and bump the weight") {
    TsdfVolume once = make_volume({-0.3, -0.3, 1.5}, {0.3, 0.3, 2.5}, 32);
    TsdfVolume twice = make_volume({-0.3, -0.3, 1.5}, {0.3, 0.3, 2.5}, 32);
    Camera cam = axis_cam(64, 64, 80.0);
    ConstViews v = const_views(cam, 2.0, {0.25, 0.5, 0.75}, 1.0);

    integrate(once, cam, v.depth, v.color, v.alpha);
    integrate(twice, cam, v.depth, v.color, v.alpha);
    integrate(twice, cam, v.depth, v.color, v.alpha);

    // Averaging an identical observation is exact in floating point, so the
    // second pass must change nothing but the weights.
    CHECK(once.tsdf == twice.tsdf);
    CHECK(once.rgb == twice.rgb);
    for (std::size_t i = 0; i < once.weight.size(); ++i)
        CHECK(twice.weight[i] == 2 * once.weight[i]);

    ConstViews v2 = const_views(cam, 2.0, {0.75, 0.1, 0.25}, 1.0);
    integrate(once, cam, v2.depth, v2.color, v2.alpha);
    std::size_t i = once.index(10, 10, 16);
    CHECK(once.weight[i] == 2.0);
    CHECK(std::abs(once.rgb[3 * i + 0] - 0.5) < 1e-12);
    CHECK(std::abs(once.rgb[3 * i + 1] - 0.3) < 1e-12);
    CHECK(std::abs(once.rgb[3 * i + 2] - 0.5) < 1e-12);
}

TEST_CASE("fusion barely depends on view order") {
    // Running means are re-associated when views arrive in a different
    // order, so demand agreement to ~1e-7 rather than bitwise equality.
    AnalyticScene scene = standard_scene("drift");
    std::vector<Camera> rig = camera_rig(scene, 3, 2.2, 1.0, 96, 96);
    real t = 2.0;
    std::vector<GtView> views;
    for (const Camera& cam : rig) views.push_back(render_gt(scene, cam, t));

    BoundingSphere b = scene_bounds(scene);
    Vec3 lo = b.center - Vec3{b.radius, b.radius, b.radius};
    Vec3 hi = b.center + Vec3{b.radius, b.radius, b.radius};
    TsdfVolume a = make_volume(lo, hi, 40);
    TsdfVolume c = make_volume(lo, hi, 40);
    for (int k : {0, 1, 2}) integrate(a, rig[k], views[k].depth, views[k].color, views[k].mask);
    for (int k : {2, 0, 1}) integrate(c, rig[k], views[k].depth, views[k].color, views[k].mask);

    CHECK(a.weight == c.weight);
    real dmax = 0, cmax = 0;
    for (std::size_t i = 0; i < a.tsdf.size(); ++i)
        dmax = std::max(dmax, std::abs(a.tsdf[i] - c.tsdf[i]));
    for (std::size_t i = 0; i < a.rgb.size(); ++i)
        cmax = std::max(cmax, std::abs(a.rgb[i] - c.rgb[i]));
    CHECK(dmax < 1e-7);
    CHECK(cmax < 1e-7);
    CHECK(*std::max_element(a.weight.begin(), a.weight.end()) == 3.0);
}

TEST_CASE("each corner-sign case triangulates exactly its sign-change edges") {
    // One-cell volume with corner values +-0.5: interpolated vertices land on
    // edge midpoints, which identifies the edge each vertex came from. For
    // all 256 sign patterns the extracted vertex set must match the set of
    // edges whose endpoints straddle the level set -- this pins down the
    // whole triangulation table up to orientation.
    constexpr int off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    constexpr int edge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                 {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    for (int config = 0; config < 256; ++config) {
        TsdfVolume v;
        v.voxel = 1.0;
        v.trunc = 4.0;
        v.nx = v.ny = v.nz = 2;
        v.tsdf.assign(8, 0.0);
        v.weight.assign(8, 1.0);
        v.rgb.assign(24, 0.0);
        for (int k = 0; k < 8; ++k)
            v.tsdf[v.index(off[k][0], off[k][1], off[k][2])] =
                (config >> k) & 1 ? -0.5 : 0.5;

        std::vector<Vec3> expected;  // midpoints of the sign-change edges
        for (const auto& e : edge) {
            bool ina = (config >> e[0]) & 1, inb = (config >> e[1]) & 1;
            if (ina != inb)
                expected.push_back(Vec3{(off[e[0]][0] + off[e[1]][0]) * 0.5,
                                        (off[e[0]][1] + off[e[1]][1]) * 0.5,
                                        (off[e[0]][2] + off[e[1]][2]) * 0.5});
        }
        if (config == 0 || config == 255) {
            CHECK_THROWS_AS(extract(v), EmptySurface);
            continue;
        }
        TriangleMesh m = extract(v);
        REQUIRE(!m.triangles.empty());
        REQUIRE(m.vertices.size() == expected.size());
        for (const Vec3& p : expected) {
            int hits = 0;
            for (const Vec3& q : m.vertices) {
                Vec3 d = q - p;
                if (dot(d, d) < 1e-24) ++hits;
            }
            CHECK(hits == 1);
        }
        // Within one cell the patch must already be edge-consistent.
        MeshStats s = mesh_stats(m);
        CHECK(s.oriented);
        CHECK(s.max_faces_per_edge <= 2);
    }
}

TEST_CASE("a filled sphere extracts as a closed oriented ball") {
    TsdfVolume vol = make_volume({-1, -1, -1}, {1, 1, 1}, 64);
    const real r = 0.8;
    fill_volume(
        vol, [&](const Vec3& p) { return std::sqrt(dot(p, p)) - r; }, {0.2, 0.7, 0.4});

    TriangleMesh m = extract(vol);
    REQUIRE(m.vertices.size() > 1000);
    REQUIRE(m.colors.size() == m.vertices.size());

    for (const auto& tri : m.triangles) {
        CHECK(tri[0] != tri[1]);
        CHECK(tri[1] != tri[2]);
        CHECK(tri[0] != tri[2]);
        for (int k = 0; k < 3; ++k) {
            CHECK(tri[k] >= 0);
            CHECK(tri[k] < static_cast<std::int32_t>(m.vertices.size()));
        }
    }
    for (const Vec3& p : m.vertices)
        CHECK(std::abs(std::sqrt(dot(p, p)) - r) < 0.5 * vol.voxel);
    for (const Vec3& c : m.colors) {
        CHECK(c.x == 0.2);
        CHECK(c.y == 0.7);
        CHECK(c.z == 0.4);
    }

    MeshStats s = mesh_stats(m);
    CHECK(s.v - s.e + s.f == 2);  // sphere topology
    CHECK(s.min_faces_per_edge == 2);
    CHECK(s.max_faces_per_edge == 2);
    CHECK(s.oriented);

    // Consistent orientation globally: with inside = negative, every facet
    // normal points into the ball.
    std::int64_t inward = 0;
    for (const auto& tri : m.triangles) {
        Vec3 a = m.vertices[tri[0]];
        Vec3 n = cross(m.vertices[tri[1]] - a, m.vertices[tri[2]] - a);
        Vec3 centroid = (a + m.vertices[tri[1]] + m.vertices[tri[2]]) * (1.0 / 3);
        if (dot(n, centroid) < 0) ++inward;
    }
    CHECK(inward == static_cast<std::int64_t>(m.triangles.size()));
}

TEST_CASE("a filled torus keeps its genus") {
    TsdfVolume vol = make_volume({-1, -1, -1}, {1, 1, 1}, 64);
    fill_volume(
        vol, [&](const Vec3& p) { return torus_sdf(p, 0.55, 0.22); }, {1, 1, 1});
    TriangleMesh m = extract(vol);
    MeshStats s = mesh_stats(m);
    CHECK(s.v - s.e + s.f == 0);  // genus one
    CHECK(s.min_faces_per_edge == 2);
    CHECK(s.max_faces_per_edge == 2);
    CHECK(s.oriented);
    for (const Vec3& p : m.vertices) CHECK(std::abs(torus_sdf(p, 0.55, 0.22)) < 0.5 * vol.voxel);
}

TEST_CASE("cells with unobserved corners are left out of the surface") {
    TsdfVolume vol = make_volume({-1, -1, -1}, {1, 1, 1}, 64);
    const real r = 0.8;
    fill_volume(
        vol, [&](const Vec3& p) { return std::sqrt(dot(p, p)) - r; }, {1, 1, 1});
    std::size_t full_faces = extract(vol).triangles.size();

    // Mark the +++ octant (indices >= 33 on every axis, i.e. coordinates
    // beyond voxel center 0.03125) unobserved.
    for (int z = 33; z < vol.nz; ++z)
        for (int y = 33; y < vol.ny; ++y)
            for (int x = 33; x < vol.nx; ++x) vol.weight[vol.index(x, y, z)] = 0.0;

    TriangleMesh m = extract(vol);
    CHECK(m.triangles.size() < full_faces);
    MeshStats s = mesh_stats(m);
    CHECK(s.max_faces_per_edge <= 2);
    CHECK(s.min_faces_per_edge == 1);  // the bite leaves an open boundary
    CHECK(s.oriented);

    // No vertex can sit past the last fully-observed corner plane (index 32,
    // coordinate 0.0) on all three axes at once.
    for (const Vec3& p : m.vertices) CHECK(std::min({p.x, p.y, p.z}) <= 1e-12);
}

TEST_CASE("featureless volumes have no surface to extract") {
    TsdfVolume fresh = make_volume({0, 0, 0}, {1, 1, 1}, 8);
    CHECK_THROWS_AS(extract(fresh), EmptySurface);  // nothing observed

    TsdfVolume outside = make_volume({0, 0, 0}, {1, 1, 1}, 8);
    outside.weight.assign(outside.weight.size(), 1.0);
    CHECK_THROWS_AS(extract(outside), EmptySurface);  // observed, all +1

    TsdfVolume inside = make_volume({0, 0, 0}, {1, 1, 1}, 8);
    inside.weight.assign(inside.weight.size(), 1.0);
    inside.tsdf.assign(inside.tsdf.size(), -1.0);
    CHECK_THROWS_AS(extract(inside), EmptySurface);
}

TEST_CASE("a rendered splat disc fuses into a flat sheet") {
    // One disc surfel at z = 2 seen from three near-frontal cameras. All the
    // fused per-view fields vanish on the disc plane, so every extracted
    // vertex must lie within a voxel of it.
    DeformedSnapshot snap = disc_snapshot();
    std::vector<Camera> cams = {look_at_camera({0, 0, 0.6}, {0, 0, 2}, 100.0, 128, 128),
                                look_at_camera({0.35, 0.1, 0.65}, {0, 0, 2}, 100.0, 128, 128),
                                look_at_camera({-0.2, -0.3, 0.7}, {0, 0, 2}, 100.0, 128, 128)};
    TriangleMesh m = mesh_snapshot(snap, cams, {-0.35, -0.35, 1.7}, {0.35, 0.35, 2.3}, 48);
    real voxel = 0.7 / 48;

    REQUIRE(m.triangles.size() > 500);
    for (const Vec3& p : m.vertices) {
        CHECK(std::abs(p.z - 2.0) <= voxel);
        // The alpha >= 0.5 footprint of the splat ends at radius ~0.453.
        CHECK(std::sqrt(p.x * p.x + p.y * p.y) < 0.47);
    }
    // Fused colors are per-pixel-coverage multiples of the surfel color, so
    // they must all stay proportional to it.
    for (const Vec3& c : m.colors) {
        CHECK(std::abs(c.x * 0.3 - c.y * 0.8) < 1e-9);
        CHECK(std::abs(c.y * 0.1 - c.z * 0.3) < 1e-9);
        CHECK(c.x / 0.8 > 0.4);
        CHECK(c.x / 0.8 < 1.0);
    }
}

TEST_CASE("mesh_snapshot validates cameras and empty regions") {
    DeformedSnapshot snap = disc_snapshot();
    CHECK_THROWS_AS(mesh_snapshot(snap, {}, {0, 0, 0}, {1, 1, 1}, 8), Error);

    // A box strictly in front of the disc sees only free space.
    std::vector<Camera> cams = {look_at_camera({0, 0, 0.6}, {0, 0, 2}, 100.0, 128, 128)};
    CHECK_THROWS_AS(mesh_snapshot(snap, cams, {-0.35, -0.35, 1.0}, {0.35, 0.35, 1.2}, 16),
                    EmptySurface);
}

TEST_CASE("meshes survive a PLY round trip") {
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.123456789, -0.75, 2.5}};
    m.colors = {{0, 0, 0}, {1, 1, 1}, {0.25, 0.5, 0.75}, {0.2, 0.4, 0.6}};
    m.triangles = {{0, 1, 2}, {1, 3, 2}};

    std::string path = temp_path("sf_mesh_roundtrip.ply");
    write_ply(m, path);
    TriangleMesh r = read_ply(path);
    std::filesystem::remove(path);

    REQUIRE(r.vertices.size() == m.vertices.size());
    REQUIRE(r.colors.size() == m.colors.size());
    REQUIRE(r.triangles == m.triangles);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        Vec3 dp = r.vertices[i] - m.vertices[i];
        CHECK(std::sqrt(dot(dp, dp)) < 1e-6);
        Vec3 dc = r.colors[i] - m.colors[i];
        // Colors are quantized to bytes on the way out.
        CHECK(std::abs(dc.x) <= 0.5 / 255 + 1e-12);
        CHECK(std::abs(dc.y) <= 0.5 / 255 + 1e-12);
        CHECK(std::abs(dc.z) <= 0.5 / 255 + 1e-12);
    }
}

TEST_CASE("the PLY reader accepts comments and rejects everything malformed") {
    std::string path = temp_path("sf_mesh_parse.ply");

    write_text(path,
               "ply\ncomment made elsewhere\nformat ascii 1.0\n"
               "element vertex 3\ncomment colors are bytes\n"
               "property float x\nproperty float y\nproperty float z\n"
               "property uchar red\nproperty uchar green\nproperty uchar blue\n"
               "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
               "0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 255\n3 0 1 2\n");
    TriangleMesh ok = read_ply(path);
    CHECK(ok.vertices.size() == 3);
    CHECK(ok.triangles.size() == 1);
    CHECK(ok.colors[0].x == 1.0);

    CHECK_THROWS_AS(read_ply(temp_path("sf_mesh_does_not_exist.ply")), MissingArtifact);

    write_text(path, "hello\nworld\n");
    CHECK_THROWS_AS(read_ply(path), ProtocolError);

    write_text(path, "ply\nformat binary_little_endian 1.0\nend_header\n");
    CHECK_THROWS_AS(read_ply(path), ProtocolError);

    write_text(path,
               "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property float y\nproperty float x\nproperty float z\n"  // swapped
               "property uchar red\nproperty uchar green\nproperty uchar blue\n"
               "element face 0\nproperty list uchar int vertex_indices\nend_header\n"
               "0 0 0 0 0 0\n");
    CHECK_THROWS_AS(read_ply(path), ProtocolError);

    std::string header =
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0 1 2 3\n1 0 0 4 5 6\n0 1 0 7 8 9\n";
    write_text(path, header + "4 0 1 2 0\n");  // quad face
    CHECK_THROWS_AS(read_ply(path), ProtocolError);
    write_text(path, header + "3 0 1 9\n");  // index out of range
    CHECK_THROWS_AS(read_ply(path), ProtocolError);
    write_text(path, header.substr(0, header.size() - 20));  // vertex list cut short
    CHECK_THROWS_AS(read_ply(path), ProtocolError);

    std::filesystem::remove(path);
}

TEST_CASE("the PLY writer validates the mesh and the path") {
    TriangleMesh bad;
    bad.vertices = {{0, 0, 0}, {1, 0, 0}};
    bad.colors = {{0, 0, 0}, {1, 1, 1}};
    bad.triangles = {{0, 1, 5}};
    CHECK_THROWS_AS(write_ply(bad, temp_path("sf_mesh_bad.ply")), Error);

    TriangleMesh skewed;
    skewed.vertices = {{0, 0, 0}};
    skewed.colors = {};
    CHECK_THROWS_AS(write_ply(skewed, temp_path("sf_mesh_bad.ply")), Error);

    TriangleMesh okm;
    okm.vertices = {{0, 0, 0}};
    okm.colors = {{0, 0, 0}};
    CHECK_THROWS_AS(write_ply(okm, "/no_such_dir_anywhere/mesh.ply"), MissingArtifact);
}
