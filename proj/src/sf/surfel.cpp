#include "sf/surfel.hpp"

#include <cmath>

#include "sf/binio.hpp"

namespace sf {

namespace {

real sigmoid(real x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr char kMagic[8] = {'S', 'F', 'S', 'U', 'R', 'F', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void SurfelSet::resize(std::int64_t n) {
    count = n;
    mu.resize(static_cast<std::size_t>(3 * n), 0.0f);
    quat.resize(static_cast<std::size_t>(4 * n), 0.0f);
    log_scale.resize(static_cast<std::size_t>(2 * n), 0.0f);
    opacity_logit.resize(static_cast<std::size_t>(n), 0.0f);
    color_logit.resize(static_cast<std::size_t>(3 * n), 0.0f);
}

Vec3 SurfelSet::center(std::int64_t i) const {
    return {mu[3 * i + 0], mu[3 * i + 1], mu[3 * i + 2]};
}

Quat SurfelSet::rotation(std::int64_t i) const {
    Quat q{quat[4 * i + 0], quat[4 * i + 1], quat[4 * i + 2], quat[4 * i + 3]};
    return q.normalized_canonical();
}

Vec2 SurfelSet::scale(std::int64_t i) const {
    return {std::exp(static_cast<real>(log_scale[2 * i + 0])),
            std::exp(static_cast<real>(log_scale[2 * i + 1]))};
}

real SurfelSet::opacity(std::int64_t i) const { return sigmoid(opacity_logit[i]); }

Vec3 SurfelSet::color(std::int64_t i) const {
    return {sigmoid(color_logit[3 * i + 0]), sigmoid(color_logit[3 * i + 1]),
            sigmoid(color_logit[3 * i + 2])};
}

TangentFrame tangent_frame(const Quat& q) {
    Mat3 r = q.to_matrix();
    return {r.col(0), r.col(1), r.col(2)};
}

Vec3 world_point(const Vec3& mu, const Quat& q, const Vec2& xi, real u, real v) {
    TangentFrame f = tangent_frame(q);
    return mu + f.t_u * (xi.x * u) + f.t_v * (xi.y * v);
}

real gaussian_weight(real u, real v) { return std::exp(-0.5 * (u * u + v * v)); }

DeformedSnapshot snapshot_canonical(const SurfelSet& s) {
    DeformedSnapshot d;
    d.count = s.count;
    d.mu.resize(3 * s.count);
    d.quat.resize(4 * s.count);
    d.scale.resize(2 * s.count);
    d.opacity.resize(s.count);
    d.color.resize(3 * s.count);
    d.source_index.resize(s.count);
    for (std::int64_t i = 0; i < s.count; ++i) {
        Vec3 c = s.center(i);
        d.mu[3 * i + 0] = c.x;
        d.mu[3 * i + 1] = c.y;
        d.mu[3 * i + 2] = c.z;
        // normalized but not canonicalized: must match the tape path, which
        // has no sign flip
        real qw = s.quat[4 * i + 0], qx = s.quat[4 * i + 1], qy = s.quat[4 * i + 2],
             qz = s.quat[4 * i + 3];
        real inv = 1.0 / std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
        d.quat[4 * i + 0] = qw * inv;
        d.quat[4 * i + 1] = qx * inv;
        d.quat[4 * i + 2] = qy * inv;
        d.quat[4 * i + 3] = qz * inv;
        Vec2 xi = s.scale(i);
        d.scale[2 * i + 0] = std::max(xi.x, 1e-6);
        d.scale[2 * i + 1] = std::max(xi.y, 1e-6);
        d.opacity[i] = s.opacity(i);
        Vec3 col = s.color(i);
        d.color[3 * i + 0] = col.x;
        d.color[3 * i + 1] = col.y;
        d.color[3 * i + 2] = col.z;
        d.source_index[i] = i;
    }
    return d;
}

SurfelVars make_surfel_vars(Tape& tape, const SurfelSet& s, bool requires_grad) {
    std::int64_t n = s.count;
    auto to_tensor = [](const std::vector<float>& src, std::int64_t rows, std::int64_t cols) {
        Tensor t(rows, cols);
        for (std::int64_t i = 0; i < rows * cols; ++i) t.v[i] = src[static_cast<std::size_t>(i)];
        return t;
    };
    SurfelVars v;
    v.mu = tape.leaf(to_tensor(s.mu, n, 3), requires_grad);
    v.quat = tape.leaf(to_tensor(s.quat, n, 4), requires_grad);
    v.log_scale = tape.leaf(to_tensor(s.log_scale, n, 2), requires_grad);
    v.opacity_logit = tape.leaf(to_tensor(s.opacity_logit, n, 1), requires_grad);
    v.color_logit = tape.leaf(to_tensor(s.color_logit, n, 3), requires_grad);
    return v;
}

SnapshotVars constrain_surfels(Tape& tape, const SurfelVars& sv) {
    SnapshotVars out;
    out.mu = sv.mu;
    out.quat = tape.normalize_rows(sv.quat);
    out.scale = tape.clamp_min(tape.exp(sv.log_scale), 1e-6);
    out.opacity = tape.sigmoid(sv.opacity_logit);
    out.color = tape.sigmoid(sv.color_logit);
    return out;
}

DeformedSnapshot snapshot_values(const SnapshotVars& vars) {
    DeformedSnapshot d;
    d.count = vars.mu.rows();
    d.mu = vars.mu.val().v;
    d.quat = vars.quat.val().v;
    d.scale = vars.scale.val().v;
    d.opacity = vars.opacity.val().v;
    d.color = vars.color.val().v;
    d.source_index.resize(d.count);
    for (std::int64_t i = 0; i < d.count; ++i) d.source_index[i] = i;
    return d;
}

void save_surfels(const SurfelSet& s, const std::string& path) {
    auto f = binio::open_write(path);
    binio::write_exact(f.get(), kMagic, sizeof(kMagic), path);
    binio::write_pod(f.get(), kVersion, path);
    binio::write_pod(f.get(), static_cast<std::uint64_t>(s.count), path);
    auto arr = [&](const std::vector<float>& a) {
        binio::write_exact(f.get(), a.data(), a.size() * sizeof(float), path);
    };
    arr(s.mu);
    arr(s.quat);
    arr(s.log_scale);
    arr(s.opacity_logit);
    arr(s.color_logit);
}

SurfelSet load_surfels(const std::string& path) {
    auto f = binio::open_read(path);
    binio::check_magic(f.get(), kMagic, path);
    if (binio::read_pod<std::uint32_t>(f.get(), path) != kVersion)
        throw ProtocolError("unsupported surfel checkpoint version in " + path);
    auto n = binio::read_pod<std::uint64_t>(f.get(), path);
    if (n > (1ull << 32)) throw ProtocolError("implausible surfel count in " + path);
    SurfelSet s;
    s.resize(static_cast<std::int64_t>(n));
    auto arr = [&](std::vector<float>& a) {
        binio::read_exact(f.get(), a.data(), a.size() * sizeof(float), path);
    };
    arr(s.mu);
    arr(s.quat);
    arr(s.log_scale);
    arr(s.opacity_logit);
    arr(s.color_logit);
    return s;
}

}  // namespace sf
