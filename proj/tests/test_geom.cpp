#include <doctest.h>

#include <cmath>

#include "sf/geom.hpp"
#include "sf/rng.hpp"
#include "support.hpp"

using namespace sf;
using sftest::look_at_camera;

namespace {

constexpr real kPi = 3.14159265358979323846;

// Rodrigues rotation matrix for axis*angle r: the independent oracle for the
// quaternion exponential map.
Mat3 rodrigues(const Vec3& r) {
    real theta = norm(r);
    Mat3 eye;
    if (theta < 1e-14) return eye;
    Vec3 k = r * (1.0 / theta);
    Mat3 kx;
    kx.m = {0, -k.z, k.y, k.z, 0, -k.x, -k.y, k.x, 0};
    Mat3 kx2 = kx * kx;
    Mat3 out;
    real s = std::sin(theta), c = 1 - std::cos(theta);
    for (int i = 0; i < 9; ++i) out.m[i] = eye.m[i] + s * kx.m[i] + c * kx2.m[i];
    return out;
}

real mat_max_diff(const Mat3& a, const Mat3& b) {
    real m = 0;
    for (int i = 0; i < 9; ++i) m = std::max(m, std::abs(a.m[i] - b.m[i]));
    return m;
}

Quat random_unit_quat(Rng& rng) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return q.normalized_canonical();
}

}  // namespace

TEST_CASE("rotvec_to_quat identity and half-turn") {
    Quat id = rotvec_to_quat({Vec3{0, 0, 0}});
    CHECK(id.w == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(id.x == 0.0);

    Quat hz = rotvec_to_quat({Vec3{0, 0, kPi}});
    CHECK(std::abs(hz.w) < 1e-15);
    CHECK(hz.z == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rotvec_to_quat matches Rodrigues matrix oracle") {
    Vec3 r{0.3, -0.2, 0.1};
    CHECK(mat_max_diff(rotvec_to_quat({r}).to_matrix(), rodrigues(r)) < 1e-10);

    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        Vec3 axis = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
        real angle = rng.uniform(0.0, kPi);
        Vec3 rv = axis * angle;
        CHECK(mat_max_diff(rotvec_to_quat({rv}).to_matrix(), rodrigues(rv)) < 1e-9);
    }
}

TEST_CASE("rotvec_to_quat small-angle branch stays unit and accurate") {
    Vec3 r{3e-9, -2e-9, 1e-9};
    Quat q = rotvec_to_quat({r});
    CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-15));
    // below the threshold the vector part is r/2 to first order
    CHECK(q.x == doctest::Approx(r.x / 2).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(r.y / 2).epsilon(1e-12));
    CHECK(mat_max_diff(q.to_matrix(), rodrigues(r)) < 1e-12);
}

TEST_CASE("quat_mul identity, double half-turn, matrix oracle") {
    Rng rng(7);
    Quat a = random_unit_quat(rng);
    Quat ai = quat_mul(a, Quat::identity());
    CHECK(std::abs(ai.w - a.w) < 1e-15);
    CHECK(std::abs(ai.x - a.x) < 1e-15);

    Quat hz{0, 0, 0, 1};
    Quat two = quat_mul(hz, hz);
    // (-1,0,0,0) canonicalizes to identity
    CHECK(two.w == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(two.z) < 1e-15);

    for (int trial = 0; trial < 200; ++trial) {
        Quat p = random_unit_quat(rng), q = random_unit_quat(rng);
        CHECK(mat_max_diff(quat_mul(p, q).to_matrix(), p.to_matrix() * q.to_matrix()) < 1e-10);
    }
}

TEST_CASE("quat_mul associativity") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Quat a = random_unit_quat(rng), b = random_unit_quat(rng), c = random_unit_quat(rng);
        Quat l = quat_mul(quat_mul(a, b), c);
        Quat r = quat_mul(a, quat_mul(b, c));
        CHECK(std::abs(l.w - r.w) < 1e-12);
        CHECK(std::abs(l.x - r.x) < 1e-12);
        CHECK(std::abs(l.y - r.y) < 1e-12);
        CHECK(std::abs(l.z - r.z) < 1e-12);
    }
}

TEST_CASE("quat_from_z_to maps the z axis onto the target direction") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        Vec3 d = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
        Vec3 got = quat_from_z_to(d).rotate({0, 0, 1});
        CHECK(norm(got - d) < 1e-9);
    }
    // antipodal special case
    Vec3 got = quat_from_z_to({0, 0, -1}).rotate({0, 0, 1});
    CHECK(norm(got - Vec3{0, 0, -1}) < 1e-12);
}

TEST_CASE("project pinhole examples") {
    Camera cam;
    cam.fx = cam.fy = 100;
    cam.cx = cam.cy = 50;
    cam.width = cam.height = 100;

    Projection p = project(cam, {0, 0, 2});
    CHECK(p.pixel.x == doctest::Approx(50.0));
    CHECK(p.pixel.y == doctest::Approx(50.0));
    CHECK(p.depth == doctest::Approx(2.0));

    Projection q = project(cam, {0.1, 0, 1});
    CHECK(q.pixel.x == doctest::Approx(60.0));
    CHECK(q.pixel.y == doctest::Approx(50.0));
    CHECK(q.depth == doctest::Approx(1.0));

    CHECK_THROWS_AS(project(cam, {0, 0, -1}), BehindCamera);
    CHECK_THROWS_AS(project(cam, {0, 0, 0}), BehindCamera);
}

TEST_CASE("project/back-project round trip across depths") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        Vec3 eye{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        Camera cam = look_at_camera(eye, {0, 0, 0}, 150, 128, 128);
        REQUIRE(cam.valid());
        real z = rng.uniform(0.1, 100.0);
        Vec3 dir_cam{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 1.0};
        Vec3 x = cam.center() + cam.rotation.transposed() * (dir_cam * z);
        Projection p = project(cam, x);
        CHECK(p.depth == doctest::Approx(z).epsilon(1e-12));
        Vec3 back = cam.center() + cam.ray_direction(p.pixel.x, p.pixel.y) * p.depth;
        CHECK(norm(back - x) < 1e-9);
    }
}

TEST_CASE("positional encoding examples") {
    PosEncoding enc{2};
    CHECK(enc.output_dim(1) == 5);
    CHECK(enc.output_dim(3) == 15);

    real out[5];
    enc.encode_scalar(0.0, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 1.0);
    CHECK(out[3] == 0.0);
    CHECK(out[4] == 1.0);

    enc.encode_scalar(0.5, out);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(std::sin(kPi * 0.5)));
    CHECK(out[2] == doctest::Approx(std::cos(kPi * 0.5)));
    CHECK(out[3] == doctest::Approx(std::sin(2 * kPi * 0.5)));
    CHECK(out[4] == doctest::Approx(std::cos(2 * kPi * 0.5)));

    PosEncoding none{0};
    CHECK(none.output_dim(4) == 4);
    real just[1];
    none.encode_scalar(0.7, just);
    CHECK(just[0] == doctest::Approx(0.7));
}
