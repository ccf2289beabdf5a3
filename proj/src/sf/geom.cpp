#include "sf/geom.hpp"

namespace sf {

Quat rotvec_to_quat(const RotationVector& rv) {
    const Vec3& r = rv.r;
    real theta2 = dot(r, r);
    real theta = std::sqrt(theta2);
    real w, k;
    if (theta < 1e-8) {
        // sin(t/2)/t = 1/2 - t^2/48 + O(t^4), cos(t/2) = 1 - t^2/8 + O(t^4)
        w = 1 - theta2 / 8;
        k = real(0.5) - theta2 / 48;
    } else {
        w = std::cos(theta / 2);
        k = std::sin(theta / 2) / theta;
    }
    return Quat{w, k * r.x, k * r.y, k * r.z}.normalized_canonical();
}

Quat quat_mul(const Quat& a, const Quat& b) {
    Quat q{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
           a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
           a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
           a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
    return q.normalized_canonical();
}

Quat quat_from_z_to(const Vec3& dir) {
    Vec3 d = normalized(dir);
    real c = d.z;  // dot with +z
    if (c < -1 + 1e-12) return Quat{0, 1, 0, 0};  // opposite: half-turn about x
    Vec3 axis = cross(Vec3{0, 0, 1}, d);
    Quat q{1 + c, axis.x, axis.y, axis.z};
    return q.normalized_canonical();
}

bool Camera::valid() const {
    if (!(fx > 0) || !(fy > 0) || width <= 0 || height <= 0) return false;
    Mat3 rtr = rotation.transposed() * rotation;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (std::abs(rtr(i, j) - (i == j ? 1 : 0)) > 1e-9) return false;
    return true;
}

Projection project(const Camera& cam, const Vec3& x) {
    Vec3 c = cam.to_camera(x);
    if (!(c.z > 0)) throw BehindCamera("point is behind the camera (z <= 0)");
    return {{cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy}, c.z};
}

}  // namespace sf
