#pragma once

#include <array>
#include <cmath>

#include "sf/common.hpp"

namespace sf {

struct Vec2 {
    real x = 0, y = 0;
};

struct Vec3 {
    real x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(real s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
};

inline real dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline real norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    real n = norm(a);
    return n > 0 ? a * (real(1) / n) : Vec3{0, 0, 0};
}

// Row-major 3x3.
struct Mat3 {
    std::array<real, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    real operator()(int r, int c) const { return m[3 * r + c]; }
    real& operator()(int r, int c) { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                real s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    Vec3 row(int r) const { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }
    Vec3 col(int c) const { return {m[c], m[c + 3], m[c + 6]}; }
};

// Unit quaternion, canonicalized to w >= 0 so q and -q collapse to one
// representative for regression comparisons.
struct Quat {
    real w = 1, x = 0, y = 0, z = 0;

    static Quat identity() { return {1, 0, 0, 0}; }

    Quat normalized_canonical() const {
        real n = std::sqrt(w * w + x * x + y * y + z * z);
        real s = (n > 0) ? real(1) / n : real(0);
        if (w < 0) s = -s;
        return {w * s, x * s, y * s, z * s};
    }

    real norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat conjugate() const { return {w, -x, -y, -z}; }

    Mat3 to_matrix() const {
        Mat3 r;
        const real xx = x * x, yy = y * y, zz = z * z;
        const real xy = x * y, xz = x * z, yz = y * z;
        const real wx = w * x, wy = w * y, wz = w * z;
        r.m = {1 - 2 * (yy + zz), 2 * (xy - wz),     2 * (xz + wy),
               2 * (xy + wz),     1 - 2 * (xx + zz), 2 * (yz - wx),
               2 * (xz - wy),     2 * (yz + wx),     1 - 2 * (xx + yy)};
        return r;
    }

    Vec3 rotate(const Vec3& v) const { return to_matrix() * v; }
};

struct RotationVector {
    Vec3 r;  // axis * angle, radians
};

// Exponential map. Angles below 1e-8 take a 2nd-order Taylor branch to avoid
// cancellation in sin(theta/2)/theta.
Quat rotvec_to_quat(const RotationVector& rv);

// Hamilton product, renormalized and canonicalized.
Quat quat_mul(const Quat& a, const Quat& b);

// Shortest-arc rotation taking (0,0,1) onto the given unit direction.
Quat quat_from_z_to(const Vec3& dir);

struct BehindCamera : Error {
    using Error::Error;
};

// Pinhole camera; extrinsics map world -> camera as x_c = R x + t.
struct Camera {
    real fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 rotation;
    Vec3 translation;
    int width = 0, height = 0;

    Vec3 to_camera(const Vec3& xw) const { return rotation * xw + translation; }
    Vec3 center() const { return rotation.transposed() * (-translation); }

    // World-space unit-less ray direction through continuous pixel (u, v).
    Vec3 ray_direction(real u, real v) const {
        Vec3 d{(u - cx) / fx, (v - cy) / fy, 1};
        return rotation.transposed() * d;
    }

    // Orthonormality of the extrinsic rotation within 1e-9.
    bool valid() const;
};

// Projects a world point; depth is the camera-frame z (optical-axis depth).
// Throws BehindCamera when z <= 0.
struct Projection {
    Vec2 pixel;
    real depth;
};
Projection project(const Camera& cam, const Vec3& x);

// NeRF-style frequency encoding with raw-input passthrough:
// [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^{L-1} pi v), cos(2^{L-1} pi v)]
struct PosEncoding {
    int frequencies = 0;  // L

    int output_dim(int input_dim) const { return input_dim * (1 + 2 * frequencies); }

    // Appends the encoding of one scalar component to out (1 + 2L values).
    void encode_scalar(real v, real* out) const {
        out[0] = v;
        real f = real(3.14159265358979323846);
        for (int l = 0; l < frequencies; ++l) {
            out[1 + 2 * l] = std::sin(f * v);
            out[2 + 2 * l] = std::cos(f * v);
            f *= 2;
        }
    }
};

}  // namespace sf
