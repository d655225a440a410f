#include "spooflab/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace spooflab {

Pose Pose::from_yaw(double yaw, const Vec3& t) {
    return {Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), t};
}

double Pose::yaw() const {
    const Vec3 x = rotation * Vec3::UnitX();
    return std::atan2(x.y(), x.x());
}

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = a.rotation * b.rotation;
    // Renormalize only when rounding has actually moved the norm, so composing
    // with the identity returns the other operand bit for bit.
    if (std::abs(out.rotation.squaredNorm() - 1.0) > 4 * std::numeric_limits<double>::epsilon())
        out.rotation.normalize();
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

Pose inverse(const Pose& p) {
    Pose out;
    out.rotation = p.rotation.conjugate().normalized();
    out.translation = -(out.rotation * p.translation);
    return out;
}

Point3 transform_point(const Pose& p, const Point3& pt) { return p.rotation * pt + p.translation; }

double rotation_angle(const Pose& p) {
    // |w| folds q and -q onto the same angle.
    const double w = std::min(1.0, std::abs(p.rotation.w()));
    const double v = p.rotation.vec().norm();
    return 2.0 * std::atan2(v, w);
}

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    return w - std::numbers::pi;
}

Vec3 beam_direction(double azimuth, double elevation) {
    const double ce = std::cos(elevation);
    return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

Point3 beam_to_point(const PolarBeam& b) {
    if (!b.range) throw std::domain_error("beam_to_point: no-return beam has no Cartesian position");
    return *b.range * beam_direction(b.azimuth, b.elevation);
}

PolarBeam point_to_beam(const Point3& pt) {
    PolarBeam b;
    const double horiz = std::hypot(pt.x(), pt.y());
    b.azimuth = wrap_angle(std::atan2(pt.y(), pt.x()));
    b.elevation = std::atan2(pt.z(), horiz);
    b.range = pt.norm();
    return b;
}

}  // namespace spooflab
