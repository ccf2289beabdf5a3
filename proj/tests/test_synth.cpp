#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "sf/losses.hpp"
#include "sf/synth.hpp"
#include "support.hpp"
#include "synth_support.hpp"

using namespace sf;
using namespace sftest;

namespace {

// Static unit sphere at the origin.
AnalyticScene unit_sphere_scene() {
    AnalyticScene s;
    s.name = "unit";
    s.duration = 2;
    Primitive p;
    p.kind = PrimitiveKind::Sphere;
    p.radius = 1.0;
    s.prims.push_back(p);
    return s;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("gt_sdf: unit sphere distances and sign convention") {
    AnalyticScene s = unit_sphere_scene();
    CHECK(gt_sdf(s, {2, 0, 0}, 0) == 1.0);
    CHECK(gt_sdf(s, {0, 0.25, 0}, 1) < 0.0);
    CHECK(gt_sdf(s, {0, -1, 0}, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gt_sdf: never exceeds the distance to sampled surface points") {
    AnalyticScene s = standard_scene("drift");
    real t = 3.7;
    Rng rng(11);
    std::vector<Vec3> surf;
    while (surf.size() < 4000) {
        Vec3 x{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
        if (auto p = project_surface(s, x, t)) surf.push_back(*p);
    }
    for (int i = 0; i < 200; ++i) {
        Vec3 x{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
        real nearest = 1e18;
        for (const auto& p : surf) nearest = std::min(nearest, norm(x - p));
        real d = std::abs(gt_sdf(s, x, t));
        CHECK(d <= nearest + 1e-6);        // a true SDF cannot overestimate
        CHECK(d >= nearest - 0.05);        // and the dense sampling bounds it below
    }
}

TEST_CASE("gt_sdf: Lipschitz-1 over random pairs in every standard scene") {
    Rng rng(12);
    for (const auto& s : standard_scenes()) {
        real te = static_cast<real>(s.duration - 1);
        for (int i = 0; i < 300; ++i) {
            real t = rng.uniform(0.0, te);
            Vec3 a{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
            Vec3 b{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
            CHECK(std::abs(gt_sdf(s, a, t) - gt_sdf(s, b, t)) <= norm(a - b) * (1 + 1e-12) + 1e-12);
        }
    }
}

TEST_CASE("gt_scene_flow: static scene is zero, translation passes through") {
    AnalyticScene s = unit_sphere_scene();
    Vec3 f = gt_scene_flow(s, {0, 0, 1}, 0.5);
    CHECK(f.x == 0.0);
    CHECK(f.y == 0.0);
    CHECK(f.z == 0.0);

    AnalyticScene m = unit_sphere_scene();
    m.prims[0].traj.trans_keys = {{0, 0, 0}, {1, 0, 0}};  // v = (1,0,0) per timestep
    Vec3 on = *project_surface(m, {0.3, 0.9, 0.4}, 0.5);
    Vec3 fm = gt_scene_flow(m, on, 0.5);
    CHECK(fm.x == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fm.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(fm.z == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("gt_scene_flow: rotating box point moves at omega cross lever arm") {
    AnalyticScene s;
    s.name = "spin";
    s.duration = 3;
    Primitive p;
    p.kind = PrimitiveKind::Box;
    p.half_extents = {0.4, 0.3, 0.2};
    p.traj.rot_axis = {0, 0, 1};
    p.traj.angle_keys = {0.0, 0.5, 1.0};  // theta' = 0.5 rad per timestep
    s.prims.push_back(p);
    // At t=0 the box is axis-aligned; pick the face point (0.4, 0.1, 0.05).
    Vec3 x{0.4, 0.1, 0.05};
    REQUIRE(std::abs(gt_sdf(s, x, 0)) < 1e-9);
    Vec3 f = gt_scene_flow(s, x, 0);
    // omega x r with omega = (0,0,0.5): (-0.5*y, 0.5*x, 0)
    CHECK(f.x == doctest::Approx(-0.05).epsilon(1e-9));
    CHECK(f.y == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(f.z == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(norm(f) == doctest::Approx(0.5 * std::hypot(0.4, 0.1)).epsilon(1e-9));
}

TEST_CASE("gt_scene_flow: off-surface queries are rejected") {
    AnalyticScene s = unit_sphere_scene();
    CHECK_THROWS_AS(gt_scene_flow(s, {0, 0, 1.01}, 0.5), NotOnSurface);
    CHECK_THROWS_AS(gt_sdf_flow(s, {0, 0, 1.01}, 0.5), NotOnSurface);
    CHECK_THROWS_AS(gt_sdf_flow_fd(s, {0, 0, 1.01}, 0.5), NotOnSurface);
}

TEST_CASE("gt_sdf_flow: analytic and finite-difference paths on known motions") {
    // Static scene: zero by both paths.
    AnalyticScene s = unit_sphere_scene();
    CHECK(gt_sdf_flow(s, {1, 0, 0}, 0.5) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(gt_sdf_flow_fd(s, {1, 0, 0}, 0.5) == doctest::Approx(0.0).epsilon(1e-10));

    // Sphere translating at (0,0,-1): at the surface point with outward
    // normal (0,0,1) the surface recedes, so the SDF grows at rate +1.
    AnalyticScene m = unit_sphere_scene();
    m.prims[0].traj.trans_keys = {{0, 0, 0}, {0, 0, -1}};
    Vec3 x{0, 0, 1};
    REQUIRE(std::abs(gt_sdf(m, x, 0.5)) > 1e-6);  // center moved by t=0.5
    Vec3 on = *project_surface(m, {0, 0, 1}, 0.5);
    REQUIRE(std::abs(norm(on - Vec3{0, 0, -0.5}) - 1.0) < 1e-9);
    real analytic = gt_sdf_flow(m, on, 0.5);
    real fd = gt_sdf_flow_fd(m, on, 0.5);
    CHECK(analytic == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(analytic - fd) < 1e-4);

    // Sphere spinning about its own center: zero everywhere by both paths.
    AnalyticScene r = unit_sphere_scene();
    r.prims[0].traj.rot_axis = {0, 1, 0};
    r.prims[0].traj.angle_keys = {0.0, 2.0};
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        Vec3 q{rng.normal(), rng.normal(), rng.normal()};
        Vec3 p = normalized(q);
        CHECK(std::abs(gt_sdf_flow(r, p, 0.5)) < 1e-8);
        CHECK(std::abs(gt_sdf_flow_fd(r, p, 0.5)) < 1e-8);
    }
}

TEST_CASE("gt_sdf_flow: both paths agree on every standard scene") {
    Rng rng(77);
    for (const auto& s : standard_scenes()) {
        real te = static_cast<real>(s.duration - 1);
        BoundingSphere b = scene_bounds(s);
        int checked = 0;
        int guard = 0;
        while (checked < 40 && ++guard < 4000) {
            real t = rng.uniform(0.3, te - 0.3);
            Vec3 x = b.center + Vec3{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                     rng.uniform(-1.0, 1.0)} * b.radius;
            auto on = project_surface(s, x, t);
            if (!on || near_crease(s, *on, t)) continue;
            ++checked;
            real analytic = gt_sdf_flow(s, *on, t);
            real fd = gt_sdf_flow_fd(s, *on, t);
            CHECK(std::abs(analytic - fd) <= 1e-4);
            // Eikonal property of a true SDF at smooth surface points.
            CHECK(std::abs(norm(gt_sdf_grad(s, *on, t)) - 1.0) <= 1e-5);
        }
        CHECK(checked == 40);
    }
}

TEST_CASE("standard scenes: configured shapes and spans") {
    auto scenes = standard_scenes();
    REQUIRE(scenes.size() == 4);
    CHECK(scenes[0].name == "drift");
    CHECK(scenes[1].name == "tumble");
    CHECK(scenes[2].name == "bend");
    CHECK(scenes[3].name == "duet");
    CHECK_THROWS_AS(standard_scene("nope"), ConfigError);

    // Drift: centroid displacement equals the configured translation.
    const AnalyticScene& s1 = scenes[0];
    real te1 = static_cast<real>(s1.duration - 1);
    Vec3 d = s1.prims[0].traj.center(te1, te1) - s1.prims[0].traj.center(0, te1);
    CHECK(d.x == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(d.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.z == doctest::Approx(0.0).epsilon(1e-12));

    // Bend: long enough to span at least 4 full segments at K=5.
    CHECK((scenes[2].duration - 1) / 5 >= 4);
    CHECK(scenes[2].prims[0].kind == PrimitiveKind::HingedCapsule);

    // Duet is the multi-object scene.
    CHECK(scenes[3].prims.size() == 2);
}

TEST_CASE("standard scenes: duet primitives never interpenetrate") {
    AnalyticScene s = standard_scene("duet");
    real te = static_cast<real>(s.duration - 1);
    Rng rng(31);
    real min_gap = 1e18;
    for (real t = 0; t <= te; t += 0.5) {
        // Sphere surface against the box SDF.
        Vec3 c = s.prims[0].traj.center(t, te);
        for (int i = 0; i < 200; ++i) {
            Vec3 q{rng.normal(), rng.normal(), rng.normal()};
            Vec3 x = c + normalized(q) * s.prims[0].radius;
            min_gap = std::min(min_gap, gt_sdf_primitive(s, 1, x, t));
        }
        // Box surface against the sphere SDF.
        Mat3 r = s.prims[1].traj.rotation(t, te);
        Vec3 bc = s.prims[1].traj.center(t, te);
        Vec3 h = s.prims[1].half_extents;
        for (int i = 0; i < 200; ++i) {
            Vec3 p{rng.uniform(-h.x, h.x), rng.uniform(-h.y, h.y), rng.uniform(-h.z, h.z)};
            int axis = static_cast<int>(rng.index(3));
            real* comp = axis == 0 ? &p.x : axis == 1 ? &p.y : &p.z;
            real side = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
            *comp = side * (axis == 0 ? h.x : axis == 1 ? h.y : h.z);
            min_gap = std::min(min_gap, gt_sdf_primitive(s, 0, r * p + bc, t));
        }
    }
    CHECK(min_gap > 0.0);
}

TEST_CASE("camera rig: frames the scene from every station") {
    AnalyticScene s = standard_scene("drift");
    auto cams = camera_rig(s, 6, 2.2, 0.9, 128, 128);
    REQUIRE(cams.size() == 6);
    BoundingSphere b = scene_bounds(s);
    Rng rng(3);
    for (const auto& cam : cams) {
        for (int i = 0; i < 40; ++i) {
            Vec3 q{rng.normal(), rng.normal(), rng.normal()};
            Vec3 x = b.center + normalized(q) * b.radius;
            Projection pr = project(cam, x);
            CHECK(pr.depth > 0.0);
            CHECK(pr.pixel.x >= 0.0);
            CHECK(pr.pixel.x <= 128.0);
            CHECK(pr.pixel.y >= 0.0);
            CHECK(pr.pixel.y <= 128.0);
        }
    }
    CHECK_THROWS_AS(camera_rig(s, 1, 2.2, 0.9, 128, 128), ConfigError);
    CHECK_THROWS_AS(camera_rig(s, 6, -1.0, 0.9, 128, 128), ConfigError);
}

TEST_CASE("render_gt: sphere on the optical axis") {
    AnalyticScene s = unit_sphere_scene();
    Camera cam = look_at_camera({0, 0, -3}, {0, 0, 0}, 40, 33, 33);
    GtView v = render_gt(s, cam, 0.5);

    // Center pixel: head-on hit at distance 2.
    CHECK(v.mask.at(16, 16, 0) == 1.0);
    CHECK(v.depth.at(16, 16, 0) == doctest::Approx(2.0).epsilon(1e-3));

    // Hit pixels back-project onto the zero level set; miss pixels are zeroed.
    int hits = 0;
    for (int y = 0; y < 33; ++y)
        for (int x = 0; x < 33; ++x) {
            if (v.mask.at(x, y, 0) == 0.0) {
                CHECK(v.depth.at(x, y, 0) == 0.0);
                CHECK(v.color.at(x, y, 0) == 0.0);
                continue;
            }
            ++hits;
            Vec3 dir = cam.ray_direction(x + 0.5, y + 0.5);
            Vec3 p = cam.center() + dir * v.depth.at(x, y, 0);
            CHECK(std::abs(gt_sdf(s, p, 0.5)) < 1e-3);
        }
    CHECK(hits > 200);  // the sphere fills a decent part of the frame

    // Depth-gradient normal at the center pixel faces the camera.
    Tape tape;
    Tensor depth(33 * 33, 1);
    std::vector<std::uint8_t> valid(33 * 33, 0);
    for (int y = 0; y < 33; ++y)
        for (int x = 0; x < 33; ++x) {
            depth.at(y * 33 + x, 0) = v.depth.at(x, y, 0);
            valid[static_cast<std::size_t>(y * 33 + x)] = v.mask.at(x, y, 0) > 0.5 ? 1 : 0;
        }
    DepthNormals dn = depth_normals(tape, cam, tape.constant(depth), valid);
    std::int64_t center = 16 * 33 + 16;
    REQUIRE(dn.ok[static_cast<std::size_t>(center)] == 1);
    CHECK(dn.normals.val().at(center, 0) == doctest::Approx(0.0).epsilon(5e-3));
    CHECK(dn.normals.val().at(center, 1) == doctest::Approx(0.0).epsilon(5e-3));
    CHECK(dn.normals.val().at(center, 2) == doctest::Approx(-1.0).epsilon(5e-3));

    // Lambertian shading stays within the unit range on hit pixels.
    for (int y = 0; y < 33; ++y)
        for (int x = 0; x < 33; ++x)
            for (int c = 0; c < 3; ++c) {
                CHECK(v.color.at(x, y, c) >= 0.0);
                CHECK(v.color.at(x, y, c) <= 1.0);
            }
}

TEST_CASE("render_gt: empty view yields an all-zero mask") {
    AnalyticScene s = unit_sphere_scene();
    Camera cam = look_at_camera({0, 0, -3}, {0, 0, -9}, 40, 17, 17);
    GtView v = render_gt(s, cam, 0.5);
    for (int y = 0; y < 17; ++y)
        for (int x = 0; x < 17; ++x) CHECK(v.mask.at(x, y, 0) == 0.0);
}

TEST_CASE("scene json: standard scenes round-trip exactly") {
    Rng rng(9);
    for (const auto& s : standard_scenes()) {
        AnalyticScene back = scene_from_json(scene_to_json(s));
        CHECK(back.name == s.name);
        CHECK(back.duration == s.duration);
        REQUIRE(back.prims.size() == s.prims.size());
        real te = static_cast<real>(s.duration - 1);
        for (int i = 0; i < 25; ++i) {
            Vec3 x{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
            real t = rng.uniform(0.0, te);
            CHECK(gt_sdf(back, x, t) == gt_sdf(s, x, t));
        }
    }
}

TEST_CASE("scene json: malformed and invalid inputs are rejected") {
    CHECK_THROWS_AS(scene_from_json("{nonsense"), ProtocolError);
    CHECK_THROWS_AS(scene_from_json("[1,2,3]"), ConfigError);
    // Unknown keys are rejected rather than silently ignored.
    CHECK_THROWS_AS(scene_from_json(R"({"name":"x","duration":2,"primitives":[],"extra":1})"),
                    ConfigError);
    CHECK_THROWS_AS(scene_from_json(R"({"name":"x","duration":0,"primitives":[]})"), ConfigError);
    CHECK_THROWS_AS(scene_from_json(R"({"name":"x","duration":2,"primitives":[]})"), ConfigError);
    // Structurally valid JSON with a missing required field.
    CHECK_THROWS_AS(
        scene_from_json(R"({"name":"x","duration":2,"primitives":[{"kind":"sphere"}]})"),
        ProtocolError);
    // Bad values.
    CHECK_THROWS_AS(scene_from_json(R"({"name":"x","duration":2,"primitives":[
        {"kind":"sphere","albedo":[1,1,1],"radius":-1,
         "trajectory":{"translation_keys":[[0,0,0]],"rotation_axis":[0,0,1],"angle_keys":[0]}}]})"),
                    ConfigError);
}

TEST_CASE("write_dataset: files, manifest, and reload fidelity") {
    namespace fs = std::filesystem;
    AnalyticScene s;
    s.name = "tiny";
    s.duration = 2;
    Primitive p;
    p.kind = PrimitiveKind::Sphere;
    p.radius = 0.3;
    p.albedo = {0.7, 0.5, 0.3};
    p.traj.trans_keys = {{0, 0, 0}, {0.2, 0, 0}};
    s.prims.push_back(p);
    auto cams = camera_rig(s, 2, 1.5, 0.6, 24, 20);

    fs::path dir = fs::temp_directory_path() / "sf_synth_dataset_test";
    fs::remove_all(dir);
    write_dataset(s, cams, dir.string());

    std::ifstream mf(dir / "manifest.json");
    REQUIRE(mf.good());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    CHECK(manifest.at("scene") == "tiny");
    CHECK(manifest.at("duration") == 2);
    CHECK(manifest.at("width") == 24);
    CHECK(manifest.at("height") == 20);
    REQUIRE(manifest.at("cameras").size() == 2);
    CHECK(manifest.at("cameras")[0].at("fx").get<real>() == cams[0].fx);
    CHECK(manifest.at("cameras")[1].at("rotation").get<std::vector<real>>() ==
          std::vector<real>(cams[1].rotation.m.begin(), cams[1].rotation.m.end()));
    REQUIRE(manifest.at("frames").size() == 4);

    for (const auto& fj : manifest.at("frames")) {
        CHECK(fs::exists(dir / fj.at("color").get<std::string>()));
        CHECK(fs::exists(dir / fj.at("depth").get<std::string>()));
        CHECK(fs::exists(dir / fj.at("mask").get<std::string>()));
    }

    // Reload fidelity for camera 1, timestep 1.
    GtView v = render_gt(s, cams[1], 1.0);
    Image depth = read_pfm((dir / "cam1/depth_0001.pfm").string());
    Image mask = read_png((dir / "cam1/mask_0001.png").string());
    Image color = read_png((dir / "cam1/color_0001.png").string());
    REQUIRE(depth.width == 24);
    REQUIRE(mask.channels == 1);
    REQUIRE(color.channels == 3);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 24; ++x) {
            CHECK(depth.at(x, y, 0) ==
                  doctest::Approx(v.depth.at(x, y, 0)).epsilon(1e-6));  // float32 storage
            CHECK(mask.at(x, y, 0) == v.mask.at(x, y, 0));              // 0/1 survives 8-bit
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(color.at(x, y, c) - v.color.at(x, y, c)) <= 0.5 / 255 + 1e-12);
        }
    fs::remove_all(dir);
}

}  // TEST_SUITE
