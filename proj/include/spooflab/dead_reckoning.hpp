#pragma once

#include "spooflab/geometry.hpp"
#include "spooflab/world.hpp"

#include <span>
#include <vector>

namespace spooflab {

struct VelocityEstimate {
    Vec3 linear_velocity = Vec3::Zero();  // m/s, world frame
    bool valid = false;
};

/// pose_i = initial * rel_1 * ... * rel_i; the result has one more pose than increments.
std::vector<Pose> integrate(std::span<const Pose> increments, const Pose& initial);
inline std::vector<Pose> integrate(const DeadReckoningStream& stream, const Pose& initial) {
    return integrate(stream.relative_poses, initial);
}

struct TimedPose {
    double t;
    Pose pose;
};

/// Finite-difference velocity over [t - window, t]. Invalid when no sample
/// sits at or before t - window. Samples must be time-ordered.
VelocityEstimate windowed_velocity(std::span<const TimedPose> trajectory, double t, double window);

/// Yaw change per second over the same window as windowed_velocity.
double windowed_yaw_rate(std::span<const TimedPose> trajectory, double t, double window);

}  // namespace spooflab
