#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sf/surfel.hpp"
#include "support.hpp"

using namespace sf;

namespace {

SurfelSet random_set(std::int64_t n, Rng& rng) {
    SurfelSet s;
    s.resize(n);
    for (auto& v : s.mu) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : s.quat) v = static_cast<float>(rng.normal());
    for (auto& v : s.log_scale) v = static_cast<float>(rng.uniform(-3, 0));
    for (auto& v : s.opacity_logit) v = static_cast<float>(rng.uniform(-2, 2));
    for (auto& v : s.color_logit) v = static_cast<float>(rng.uniform(-2, 2));
    return s;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tangent_frame basics") {
    TangentFrame f = tangent_frame(Quat::identity());
    CHECK(norm(f.t_u - Vec3{1, 0, 0}) < 1e-15);
    CHECK(norm(f.t_v - Vec3{0, 1, 0}) < 1e-15);
    CHECK(norm(f.n - Vec3{0, 0, 1}) < 1e-15);

    // half-turn about x flips the normal
    TangentFrame g = tangent_frame(Quat{0, 1, 0, 0});
    CHECK(norm(g.n - Vec3{0, 0, -1}) < 1e-15);
}

TEST_CASE("tangent_frame is orthonormal with n = t_u x t_v") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        q = q.normalized_canonical();
        TangentFrame f = tangent_frame(q);
        CHECK(std::abs(norm(f.t_u) - 1) < 1e-10);
        CHECK(std::abs(norm(f.t_v) - 1) < 1e-10);
        CHECK(std::abs(norm(f.n) - 1) < 1e-10);
        CHECK(std::abs(dot(f.t_u, f.t_v)) < 1e-10);
        CHECK(std::abs(dot(f.t_u, f.n)) < 1e-10);
        CHECK(std::abs(dot(f.t_v, f.n)) < 1e-10);
        CHECK(norm(cross(f.t_u, f.t_v) - f.n) < 1e-10);
    }
}

TEST_CASE("world_point parameterization") {
    Vec3 mu{0, 0, 0};
    CHECK(norm(world_point(mu, Quat::identity(), {1, 1}, 0, 0) - mu) < 1e-15);
    CHECK(norm(world_point(mu, Quat::identity(), {1, 1}, 1, 0) - Vec3{1, 0, 0}) < 1e-15);

    Rng rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        Vec3 c{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        q = q.normalized_canonical();
        Vec2 xi{std::exp(rng.uniform(-2, 1)), std::exp(rng.uniform(-2, 1))};
        Vec3 p = world_point(c, q, xi, rng.uniform(-3, 3), rng.uniform(-3, 3));
        // point lies on the splat plane
        CHECK(std::abs(dot(tangent_frame(q).n, p - c)) < 1e-10);
    }
}

TEST_CASE("gaussian_weight peaks at the center and decays monotonically") {
    CHECK(gaussian_weight(0, 0) == 1.0);
    real prev = 2;
    for (real r = 0; r < 3.5; r += 0.25) {
        real g = gaussian_weight(r, 0);
        CHECK(g < prev);
        prev = g;
        CHECK(gaussian_weight(r, 0) == doctest::Approx(gaussian_weight(0, r)));
    }
}

TEST_CASE("zero-motion snapshot equals constrained canonical exactly") {
    Rng rng(23);
    SurfelSet s = random_set(17, rng);
    DeformedSnapshot direct = snapshot_canonical(s);

    Tape tape;
    SurfelVars sv = make_surfel_vars(tape, s, false);
    DeformedSnapshot via_tape = snapshot_values(constrain_surfels(tape, sv));

    CHECK(direct.mu == via_tape.mu);
    CHECK(direct.quat == via_tape.quat);
    CHECK(direct.scale == via_tape.scale);
    CHECK(direct.opacity == via_tape.opacity);
    CHECK(direct.color == via_tape.color);
    for (std::int64_t i = 0; i < direct.count; ++i) CHECK(direct.source_index[i] == i);
}

TEST_CASE("surfel checkpoint round-trips bitwise") {
    Rng rng(24);
    SurfelSet s = random_set(33, rng);
    std::string path = temp_path("sf_test_surfels.bin");
    save_surfels(s, path);
    SurfelSet r = load_surfels(path);
    CHECK(r.count == s.count);
    CHECK(r.mu == s.mu);
    CHECK(r.quat == s.quat);
    CHECK(r.log_scale == s.log_scale);
    CHECK(r.opacity_logit == s.opacity_logit);
    CHECK(r.color_logit == s.color_logit);
    std::filesystem::remove(path);
}

TEST_CASE("surfel checkpoint error paths") {
    CHECK_THROWS_AS(load_surfels("/nonexistent/nowhere.bin"), MissingArtifact);

    std::string bad = temp_path("sf_test_badmagic.bin");
    {
        std::ofstream f(bad, std::ios::binary);
        f << "NOTMAGIC-and-some-padding-bytes-to-get-past-the-header";
    }
    CHECK_THROWS_AS(load_surfels(bad), ProtocolError);
    std::filesystem::remove(bad);

    // valid header but truncated payload
    Rng rng(25);
    SurfelSet s = random_set(8, rng);
    std::string trunc = temp_path("sf_test_trunc.bin");
    save_surfels(s, trunc);
    auto full = std::filesystem::file_size(trunc);
    std::filesystem::resize_file(trunc, full - 16);
    CHECK_THROWS_AS(load_surfels(trunc), ProtocolError);
    std::filesystem::remove(trunc);
}
