#include "sf/render.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sf/parallel.hpp"

namespace sf {

namespace {

constexpr real kCutoffSq = 9.0;      // 3 sigma extent
constexpr real kParallelEps = 1e-12; // ray nearly in the splat plane
constexpr real kNear = 1e-6;         // intersections closer than this are misses
constexpr real kGMax = 0.999;        // clamp on alpha * gaussian
constexpr real kGMin = 1e-4;         // contributions below this are skipped
constexpr real kTermT = 1e-4;        // stop once transmittance falls below
constexpr real kDepthEps = 1e-8;     // depth normalization epsilon
constexpr std::int64_t kPixelChunk = 256;

// Packed views over the snapshot arrays (or tape tensors; same layout).
struct SplatArrays {
    std::int64_t n = 0;
    const real* mu = nullptr;     // 3N
    const real* tu = nullptr;     // 3N
    const real* tv = nullptr;     // 3N
    const real* nrm = nullptr;    // 3N
    const real* xi = nullptr;     // 2N
    const real* alpha = nullptr;  // N
    const real* color = nullptr;  // 3N
};

Vec3 load3(const real* p, std::int64_t i) { return {p[3 * i], p[3 * i + 1], p[3 * i + 2]}; }

void check_scales(const SplatArrays& in) {
    for (std::int64_t i = 0; i < 2 * in.n; ++i)
        if (!(in.xi[i] >= 1e-9)) throw DegenerateSplat("splat scale below 1e-9");
}

// Raw hit math shared by intersect() and the compositor. Returns false on
// miss; no degenerate-scale validation here (hot path).
bool hit_splat(const Vec3& origin, const Vec3& dir, const Vec3& mu, const Vec3& tu,
               const Vec3& tv, const Vec3& nrm, real xi_u, real xi_v, real& u, real& v,
               real& tau) {
    real q = dot(dir, nrm);
    if (std::abs(q) < kParallelEps) return false;
    tau = dot(mu - origin, nrm) / q;
    if (tau <= kNear) return false;
    Vec3 delta = origin + dir * tau - mu;
    u = dot(delta, tu) / xi_u;
    v = dot(delta, tv) / xi_v;
    return u * u + v * v <= kCutoffSq;
}

// Conservative pixel bounds of a splat: it lies inside the sphere of radius
// 3*max(xi) around mu, whose projection is bounded per axis by
// R f sqrt(1 + ((p - c)/f)^2) / (z - R) around the projected center.
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty when x1 < x0
};

PixelRect splat_rect(const Camera& cam, const Vec3& mu, real radius) {
    PixelRect r;
    Vec3 c = cam.to_camera(mu);
    if (c.z + radius <= kNear) return r;  // entirely behind the camera
    if (c.z - radius <= kNear) {          // straddles the near plane: no safe bound
        r.x0 = 0;
        r.y0 = 0;
        r.x1 = cam.width - 1;
        r.y1 = cam.height - 1;
        return r;
    }
    real px = cam.fx * c.x / c.z + cam.cx;
    real py = cam.fy * c.y / c.z + cam.cy;
    real bx = radius * cam.fx * std::sqrt(1 + (c.x / c.z) * (c.x / c.z)) / (c.z - radius) + 1;
    real by = radius * cam.fy * std::sqrt(1 + (c.y / c.z) * (c.y / c.z)) / (c.z - radius) + 1;
    r.x0 = std::max(0, static_cast<int>(std::floor(px - bx)));
    r.y0 = std::max(0, static_cast<int>(std::floor(py - by)));
    r.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(px + bx)));
    r.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(py + by)));
    return r;
}

// Per-pixel candidate lists (CSR). Built serially in splat-index order so each
// pixel's list is already sorted by index.
struct Candidates {
    std::vector<std::int64_t> offset;  // P+1
    std::vector<std::int32_t> splat;
};

Candidates bin_candidates(const Camera& cam, const SplatArrays& in) {
    const std::int64_t P = static_cast<std::int64_t>(cam.width) * cam.height;
    std::vector<PixelRect> rects(static_cast<std::size_t>(in.n));
    for (std::int64_t i = 0; i < in.n; ++i) {
        real radius = 3 * std::max(in.xi[2 * i], in.xi[2 * i + 1]);
        rects[static_cast<std::size_t>(i)] = splat_rect(cam, load3(in.mu, i), radius);
    }
    Candidates cs;
    cs.offset.assign(static_cast<std::size_t>(P + 1), 0);
    for (const auto& r : rects)
        for (int y = r.y0; y <= r.y1; ++y)
            for (int x = r.x0; x <= r.x1; ++x)
                ++cs.offset[static_cast<std::size_t>(y) * cam.width + x + 1];
    for (std::int64_t p = 0; p < P; ++p)
        cs.offset[static_cast<std::size_t>(p + 1)] += cs.offset[static_cast<std::size_t>(p)];
    cs.splat.resize(static_cast<std::size_t>(cs.offset[static_cast<std::size_t>(P)]));
    std::vector<std::int64_t> cursor(cs.offset.begin(), cs.offset.end() - 1);
    for (std::int64_t i = 0; i < in.n; ++i) {
        const auto& r = rects[static_cast<std::size_t>(i)];
        for (int y = r.y0; y <= r.y1; ++y)
            for (int x = r.x0; x <= r.x1; ++x) {
                std::int64_t p = static_cast<std::int64_t>(y) * cam.width + x;
                cs.splat[static_cast<std::size_t>(cursor[static_cast<std::size_t>(p)]++)] =
                    static_cast<std::int32_t>(i);
            }
    }
    return cs;
}

struct PixelHit {
    std::int32_t splat;
    real u, v, tau;
};

RenderBuffers forward_core(const Camera& cam, const SplatArrays& in, bool keep_hits) {
    require(cam.width > 0 && cam.height > 0, "render: camera has no image size");
    check_scales(in);
    const std::int64_t P = static_cast<std::int64_t>(cam.width) * cam.height;

    RenderBuffers buf;
    buf.width = cam.width;
    buf.height = cam.height;
    buf.color.assign(static_cast<std::size_t>(3 * P), 0);
    buf.depth.assign(static_cast<std::size_t>(P), 0);
    buf.alpha.assign(static_cast<std::size_t>(P), 0);
    buf.normal.assign(static_cast<std::size_t>(3 * P), 0);
    buf.distort.assign(static_cast<std::size_t>(P), 0);

    Candidates cs = bin_candidates(cam, in);
    if (keep_hits) {
        buf.hit_offset = cs.offset;  // capacity layout: hits are a subset of candidates
        buf.hit_count.assign(static_cast<std::size_t>(P), 0);
        buf.hits.resize(cs.splat.size());
        buf.has_hits = true;
    }

    const Vec3 origin = cam.center();
    parallel_chunks(P, kPixelChunk, [&](std::int64_t, std::int64_t begin, std::int64_t end) {
        std::vector<PixelHit> local;
        for (std::int64_t p = begin; p < end; ++p) {
            std::int64_t c0 = cs.offset[static_cast<std::size_t>(p)];
            std::int64_t c1 = cs.offset[static_cast<std::size_t>(p + 1)];
            if (c0 == c1) continue;
            real px = static_cast<real>(p % cam.width) + real(0.5);
            real py = static_cast<real>(p / cam.width) + real(0.5);
            Vec3 dir = cam.ray_direction(px, py);

            local.clear();
            for (std::int64_t k = c0; k < c1; ++k) {
                std::int32_t i = cs.splat[static_cast<std::size_t>(k)];
                real u, v, tau;
                if (hit_splat(origin, dir, load3(in.mu, i), load3(in.tu, i), load3(in.tv, i),
                              load3(in.nrm, i), in.xi[2 * i], in.xi[2 * i + 1], u, v, tau))
                    local.push_back({i, u, v, tau});
            }
            std::sort(local.begin(), local.end(), [](const PixelHit& a, const PixelHit& b) {
                return a.tau != b.tau ? a.tau < b.tau : a.splat < b.splat;
            });

            real T = 1, A = 0, Sz = 0, dist = 0, Aw = 0, Awz = 0;
            real C[3] = {0, 0, 0}, N[3] = {0, 0, 0};
            std::int32_t recorded = 0;
            for (const PixelHit& h : local) {
                if (T < kTermT) break;
                real G = std::exp(-real(0.5) * (h.u * h.u + h.v * h.v));
                real g = std::min(in.alpha[h.splat] * G, kGMax);
                if (g < kGMin) continue;
                real w = g * T;
                Vec3 nr = load3(in.nrm, h.splat);
                real facing = dot(nr, dir) < 0 ? real(1) : real(-1);
                C[0] += w * in.color[3 * h.splat + 0];
                C[1] += w * in.color[3 * h.splat + 1];
                C[2] += w * in.color[3 * h.splat + 2];
                N[0] += w * facing * nr.x;
                N[1] += w * facing * nr.y;
                N[2] += w * facing * nr.z;
                A += w;
                Sz += w * h.tau;
                dist += w * (h.tau * Aw - Awz);
                Aw += w;
                Awz += w * h.tau;
                T *= 1 - g;
                if (keep_hits)
                    buf.hits[static_cast<std::size_t>(c0 + recorded)] = {h.splat, h.u, h.v, h.tau};
                ++recorded;
            }
            buf.color[static_cast<std::size_t>(3 * p) + 0] = C[0];
            buf.color[static_cast<std::size_t>(3 * p) + 1] = C[1];
            buf.color[static_cast<std::size_t>(3 * p) + 2] = C[2];
            buf.normal[static_cast<std::size_t>(3 * p) + 0] = N[0];
            buf.normal[static_cast<std::size_t>(3 * p) + 1] = N[1];
            buf.normal[static_cast<std::size_t>(3 * p) + 2] = N[2];
            buf.alpha[static_cast<std::size_t>(p)] = A;
            buf.depth[static_cast<std::size_t>(p)] = Sz / (A + kDepthEps);
            buf.distort[static_cast<std::size_t>(p)] = dist;
            if (keep_hits) buf.hit_count[static_cast<std::size_t>(p)] = recorded;
        }
    });
    return buf;
}

// Gradients of every buffer w.r.t. every splat field, recomputing the
// per-pixel blend from the stored hit records. Upstream pointers may be null
// (treated as zero).
struct UpstreamGrads {
    const real* color = nullptr;    // 3P
    const real* depth = nullptr;    // P
    const real* alpha = nullptr;    // P
    const real* normal = nullptr;   // 3P
    const real* distort = nullptr;  // P
};

struct ParamGrads {
    real* mu = nullptr;     // 3N (nullable: caller skips frozen groups)
    real* tu = nullptr;     // 3N
    real* tv = nullptr;     // 3N
    real* nrm = nullptr;    // 3N
    real* xi = nullptr;     // 2N
    real* alpha = nullptr;  // N
    real* color = nullptr;  // 3N
};

void backward_core(const Camera& cam, const SplatArrays& in, const RenderBuffers& buf,
                   const UpstreamGrads& up, const ParamGrads& out) {
    if (!buf.has_hits) throw MissingHitRecords("render backward without retained hit records");
    const std::int64_t P = static_cast<std::int64_t>(cam.width) * cam.height;
    const Vec3 origin = cam.center();

    // per-chunk dense partials reduced in chunk order: bit-identical at any
    // thread count
    const std::int64_t n_chunks = chunk_count(P, kPixelChunk);
    const std::int64_t stride = 18 * in.n;  // mu3 tu3 tv3 n3 xi2 alpha1 color3
    std::vector<real> partial(static_cast<std::size_t>(n_chunks * stride), 0);

    parallel_chunks(P, kPixelChunk, [&](std::int64_t chunk, std::int64_t begin, std::int64_t end) {
        real* acc = partial.data() + chunk * stride;
        std::vector<real> w_buf, dLdw_buf, g_buf;
        for (std::int64_t p = begin; p < end; ++p) {
            std::int32_t nh = buf.hit_count[static_cast<std::size_t>(p)];
            if (nh == 0) continue;
            const RenderBuffers::Hit* hits = buf.hits.data() + buf.hit_offset[static_cast<std::size_t>(p)];

            real gC[3] = {0, 0, 0}, gN[3] = {0, 0, 0};
            if (up.color)
                for (int c = 0; c < 3; ++c) gC[c] = up.color[3 * p + c];
            if (up.normal)
                for (int c = 0; c < 3; ++c) gN[c] = up.normal[3 * p + c];
            real gD = up.depth ? up.depth[p] : 0;
            real gA = up.alpha ? up.alpha[p] : 0;
            real gdist = up.distort ? up.distort[p] : 0;
            if (gC[0] == 0 && gC[1] == 0 && gC[2] == 0 && gN[0] == 0 && gN[1] == 0 &&
                gN[2] == 0 && gD == 0 && gA == 0 && gdist == 0)
                continue;

            real px = static_cast<real>(p % cam.width) + real(0.5);
            real py = static_cast<real>(p / cam.width) + real(0.5);
            Vec3 dir = cam.ray_direction(px, py);

            // replay the blend to recover w_i and the prefix/suffix sums
            w_buf.assign(static_cast<std::size_t>(nh), 0);
            g_buf.assign(static_cast<std::size_t>(nh), 0);
            dLdw_buf.assign(static_cast<std::size_t>(nh), 0);
            real T = 1, A = 0, Sz = 0, Aw_tot = 0, Awz_tot = 0;
            for (std::int32_t k = 0; k < nh; ++k) {
                const auto& h = hits[k];
                real G = std::exp(-real(0.5) * (h.u * h.u + h.v * h.v));
                real g = std::min(in.alpha[h.splat] * G, kGMax);
                real w = g * T;
                g_buf[static_cast<std::size_t>(k)] = g;
                w_buf[static_cast<std::size_t>(k)] = w;
                A += w;
                Sz += w * h.tau;
                Aw_tot += w;
                Awz_tot += w * h.tau;
                T *= 1 - g;
            }
            real W = A + kDepthEps;
            real Dhat = Sz / W;

            // dL/dw_k for every recorded hit
            real Aw_pre = 0, Awz_pre = 0;
            for (std::int32_t k = 0; k < nh; ++k) {
                const auto& h = hits[k];
                real w = w_buf[static_cast<std::size_t>(k)];
                real Aw_suf = Aw_tot - Aw_pre - w;
                real Awz_suf = Awz_tot - Awz_pre - w * h.tau;
                Vec3 nr = load3(in.nrm, h.splat);
                real facing = dot(nr, dir) < 0 ? real(1) : real(-1);
                real d = gC[0] * in.color[3 * h.splat + 0] + gC[1] * in.color[3 * h.splat + 1] +
                         gC[2] * in.color[3 * h.splat + 2];
                d += gA;
                d += gD * (h.tau - Dhat) / W;
                d += facing * (gN[0] * nr.x + gN[1] * nr.y + gN[2] * nr.z);
                d += gdist * (h.tau * Aw_pre - Awz_pre + Awz_suf - h.tau * Aw_suf);
                dLdw_buf[static_cast<std::size_t>(k)] = d;
                Aw_pre += w;
                Awz_pre += w * h.tau;
            }

            // chain w -> g with suffix sums, then g -> per-splat parameters
            real suffix = 0;  // sum_{l>k} w_l dL/dw_l
            std::vector<real>& dLdg = g_buf;  // reuse in place: g read before overwrite
            for (std::int32_t k = nh - 1; k >= 0; --k) {
                real g = g_buf[static_cast<std::size_t>(k)];
                real w = w_buf[static_cast<std::size_t>(k)];
                real Tk = w / g;  // recorded hits always have g >= kGMin
                real dg = Tk * dLdw_buf[static_cast<std::size_t>(k)] - suffix / (1 - g);
                suffix += w * dLdw_buf[static_cast<std::size_t>(k)];
                dLdg[static_cast<std::size_t>(k)] = dg;
            }

            Aw_pre = 0;
            Awz_pre = 0;
            for (std::int32_t k = 0; k < nh; ++k) {
                const auto& h = hits[k];
                std::int32_t i = h.splat;
                real w = w_buf[static_cast<std::size_t>(k)];
                real Aw_suf = Aw_tot - Aw_pre - w;
                real Awz_suf = Awz_tot - Awz_pre - w * h.tau;

                Vec3 mu = load3(in.mu, i), tu = load3(in.tu, i), tv = load3(in.tv, i),
                     nr = load3(in.nrm, i);
                real xi_u = in.xi[2 * i], xi_v = in.xi[2 * i + 1];
                real G = std::exp(-real(0.5) * (h.u * h.u + h.v * h.v));
                real alpha_i = in.alpha[i];
                bool clamped = alpha_i * G >= kGMax;
                real dLdg_k = dLdg[static_cast<std::size_t>(k)];

                // dL/dtau from depth and distortion outputs
                real dLdtau = gD * w / W + gdist * w * (Aw_pre - Aw_suf);

                real dgdG = clamped ? 0 : alpha_i;
                real dgdalpha = clamped ? 0 : G;
                real dLdG = dLdg_k * dgdG;
                real dLdu = dLdG * (-h.u * G);
                real dLdv = dLdG * (-h.v * G);

                real q = dot(dir, nr);
                Vec3 delta = origin + dir * h.tau - mu;
                // u,v depend on tau; fold their tau-sensitivity into dLdtau
                dLdtau += dLdu * dot(dir, tu) / xi_u + dLdv * dot(dir, tv) / xi_v;

                real facing = dot(nr, dir) < 0 ? real(1) : real(-1);
                real* amu = acc + 18 * i;
                real* atu = amu + 3;
                real* atv = atu + 3;
                real* anr = atv + 3;
                real* axi = anr + 3;
                real* aal = axi + 2;
                real* acl = aal + 1;

                Vec3 dmu = tu * (-dLdu / xi_u) + tv * (-dLdv / xi_v) + nr * (dLdtau / q);
                Vec3 dnr = delta * (-dLdtau / q);
                dnr += Vec3{gN[0], gN[1], gN[2]} * (facing * w);
                amu[0] += dmu.x;
                amu[1] += dmu.y;
                amu[2] += dmu.z;
                atu[0] += dLdu / xi_u * delta.x;
                atu[1] += dLdu / xi_u * delta.y;
                atu[2] += dLdu / xi_u * delta.z;
                atv[0] += dLdv / xi_v * delta.x;
                atv[1] += dLdv / xi_v * delta.y;
                atv[2] += dLdv / xi_v * delta.z;
                anr[0] += dnr.x;
                anr[1] += dnr.y;
                anr[2] += dnr.z;
                axi[0] += dLdu * (-h.u / xi_u);
                axi[1] += dLdv * (-h.v / xi_v);
                aal[0] += dLdg_k * dgdalpha;
                acl[0] += w * gC[0];
                acl[1] += w * gC[1];
                acl[2] += w * gC[2];

                Aw_pre += w;
                Awz_pre += w * h.tau;
            }
        }
    });

    // fixed-order reduction over chunks
    for (std::int64_t c = 0; c < n_chunks; ++c) {
        const real* acc = partial.data() + c * stride;
        for (std::int64_t i = 0; i < in.n; ++i) {
            const real* a = acc + 18 * i;
            if (out.mu)
                for (int k = 0; k < 3; ++k) out.mu[3 * i + k] += a[k];
            if (out.tu)
                for (int k = 0; k < 3; ++k) out.tu[3 * i + k] += a[3 + k];
            if (out.tv)
                for (int k = 0; k < 3; ++k) out.tv[3 * i + k] += a[6 + k];
            if (out.nrm)
                for (int k = 0; k < 3; ++k) out.nrm[3 * i + k] += a[9 + k];
            if (out.xi)
                for (int k = 0; k < 2; ++k) out.xi[2 * i + k] += a[12 + k];
            if (out.alpha) out.alpha[i] += a[14];
            if (out.color)
                for (int k = 0; k < 3; ++k) out.color[3 * i + k] += a[15 + k];
        }
    }
}

}  // namespace

SplatGeom splat_geom(const DeformedSnapshot& s, std::int64_t i) {
    SplatGeom g;
    g.mu = {s.mu[3 * i], s.mu[3 * i + 1], s.mu[3 * i + 2]};
    Quat q{s.quat[4 * i], s.quat[4 * i + 1], s.quat[4 * i + 2], s.quat[4 * i + 3]};
    TangentFrame f = tangent_frame(q);
    g.t_u = f.t_u;
    g.t_v = f.t_v;
    g.n = f.n;
    g.xi = {s.scale[2 * i], s.scale[2 * i + 1]};
    return g;
}

std::optional<RaySplatHit> intersect(const Camera& cam, real px, real py, const SplatGeom& s) {
    if (!(s.xi.x >= 1e-9 && s.xi.y >= 1e-9)) throw DegenerateSplat("splat scale below 1e-9");
    real u, v, tau;
    if (!hit_splat(cam.center(), cam.ray_direction(px, py), s.mu, s.t_u, s.t_v, s.n, s.xi.x,
                   s.xi.y, u, v, tau))
        return std::nullopt;
    RaySplatHit h;
    h.u = u;
    h.v = v;
    h.depth = tau;
    h.gaussian = std::exp(-real(0.5) * (u * u + v * v));
    return h;
}

RenderBuffers render(const Camera& cam, const DeformedSnapshot& snap, bool keep_hits) {
    SplatArrays in;
    in.n = snap.count;
    in.mu = snap.mu.data();
    in.xi = snap.scale.data();
    in.alpha = snap.opacity.data();
    in.color = snap.color.data();
    // expand quaternions once into frame arrays
    std::vector<real> tu(static_cast<std::size_t>(3 * snap.count)),
        tv(static_cast<std::size_t>(3 * snap.count)), nr(static_cast<std::size_t>(3 * snap.count));
    for (std::int64_t i = 0; i < snap.count; ++i) {
        Quat q{snap.quat[4 * i], snap.quat[4 * i + 1], snap.quat[4 * i + 2], snap.quat[4 * i + 3]};
        TangentFrame f = tangent_frame(q);
        tu[static_cast<std::size_t>(3 * i)] = f.t_u.x;
        tu[static_cast<std::size_t>(3 * i + 1)] = f.t_u.y;
        tu[static_cast<std::size_t>(3 * i + 2)] = f.t_u.z;
        tv[static_cast<std::size_t>(3 * i)] = f.t_v.x;
        tv[static_cast<std::size_t>(3 * i + 1)] = f.t_v.y;
        tv[static_cast<std::size_t>(3 * i + 2)] = f.t_v.z;
        nr[static_cast<std::size_t>(3 * i)] = f.n.x;
        nr[static_cast<std::size_t>(3 * i + 1)] = f.n.y;
        nr[static_cast<std::size_t>(3 * i + 2)] = f.n.z;
    }
    in.tu = tu.data();
    in.tv = tv.data();
    in.nrm = nr.data();
    return forward_core(cam, in, keep_hits);
}

RenderOutputs render_splats(Tape& tape, const Camera& cam, const SnapshotVars& snap) {
    Var tu = tape.quat_axis(snap.quat, 0);
    Var tv = tape.quat_axis(snap.quat, 1);
    Var nr = tape.quat_axis(snap.quat, 2);

    SplatArrays in;
    in.n = snap.mu.rows();
    in.mu = snap.mu.val().data();
    in.tu = tu.val().data();
    in.tv = tv.val().data();
    in.nrm = nr.val().data();
    in.xi = snap.scale.val().data();
    in.alpha = snap.opacity.val().data();
    in.color = snap.color.val().data();

    bool rg = snap.mu.requires_grad() || tu.requires_grad() || snap.scale.requires_grad() ||
              snap.opacity.requires_grad() || snap.color.requires_grad();
    auto buf = std::make_shared<RenderBuffers>(forward_core(cam, in, rg));

    const std::int64_t P = static_cast<std::int64_t>(cam.width) * cam.height;
    RenderOutputs out;
    out.color = tape.alloc(P, 3, rg);
    out.depth = tape.alloc(P, 1, rg);
    out.alpha = tape.alloc(P, 1, rg);
    out.normal = tape.alloc(P, 3, rg);
    out.distort = tape.alloc(P, 1, rg);
    out.color.val().v = buf->color;
    out.depth.val().v = buf->depth;
    out.alpha.val().v = buf->alpha;
    out.normal.val().v = buf->normal;
    out.distort.val().v = buf->distort;

    if (rg) {
        Var mu = snap.mu, xi = snap.scale, al = snap.opacity, cl = snap.color;
        RenderOutputs o = out;
        tape.record([cam, mu, tu, tv, nr, xi, al, cl, o, buf] {
            SplatArrays rin;
            rin.n = mu.rows();
            rin.mu = mu.val().data();
            rin.tu = tu.val().data();
            rin.tv = tv.val().data();
            rin.nrm = nr.val().data();
            rin.xi = xi.val().data();
            rin.alpha = al.val().data();
            rin.color = cl.val().data();
            UpstreamGrads up;
            up.color = o.color.grad().data();
            up.depth = o.depth.grad().data();
            up.alpha = o.alpha.grad().data();
            up.normal = o.normal.grad().data();
            up.distort = o.distort.grad().data();
            ParamGrads pg;
            if (mu.requires_grad()) pg.mu = mu.grad().data();
            if (tu.requires_grad()) {
                pg.tu = tu.grad().data();
                pg.tv = tv.grad().data();
                pg.nrm = nr.grad().data();
            }
            if (xi.requires_grad()) pg.xi = xi.grad().data();
            if (al.requires_grad()) pg.alpha = al.grad().data();
            if (cl.requires_grad()) pg.color = cl.grad().data();
            backward_core(cam, rin, *buf, up, pg);
        });
    }
    return out;
}

}  // namespace sf
