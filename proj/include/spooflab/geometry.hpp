#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <numbers>
#include <optional>

namespace spooflab {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;

/// Rigid SE(3) transform. Rotation is kept as a unit quaternion and
/// renormalized after every composition.
struct Pose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }
    static Pose from_translation(const Vec3& t) { return {Eigen::Quaterniond::Identity(), t}; }
    static Pose from_yaw(double yaw, const Vec3& t = Vec3::Zero());

    /// Heading about +z extracted from the rotation.
    double yaw() const;
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
Point3 transform_point(const Pose& p, const Point3& pt);

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Rotation angle of `p` in radians, in [0, pi].
double rotation_angle(const Pose& p);

/// Wraps to [-pi, pi).
double wrap_angle(double a);

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct PolarBeam {
    double azimuth = 0.0;
    double elevation = 0.0;
    /// Empty means no return.
    std::optional<double> range;
};

/// Throws std::domain_error for a no-return beam.
Point3 beam_to_point(const PolarBeam& b);
/// Direction-only variant used by the raycaster.
Vec3 beam_direction(double azimuth, double elevation);
PolarBeam point_to_beam(const Point3& pt);

}  // namespace spooflab
