#include "spooflab/dead_reckoning.hpp"

#include <algorithm>
#include <stdexcept>

namespace spooflab {

std::vector<Pose> integrate(std::span<const Pose> increments, const Pose& initial) {
    std::vector<Pose> out;
    out.reserve(increments.size() + 1);
    out.push_back(initial);
    for (const auto& rel : increments) out.push_back(compose(out.back(), rel));
    return out;
}

namespace {

// Frame timestamps are sums of a float interval, so lookups allow a small slack.
constexpr double kTimeSlack = 1e-6;

const TimedPose* sample_at_or_before(std::span<const TimedPose> traj, double t) {
    auto it = std::upper_bound(traj.begin(), traj.end(), t + kTimeSlack,
                               [](double v, const TimedPose& p) { return v < p.t; });
    if (it == traj.begin()) return nullptr;
    return &*std::prev(it);
}

}  // namespace

VelocityEstimate windowed_velocity(std::span<const TimedPose> trajectory, double t, double window) {
    if (!(window > 0.0)) throw std::invalid_argument("windowed_velocity: window must be positive");
    const TimedPose* now = sample_at_or_before(trajectory, t);
    const TimedPose* then = sample_at_or_before(trajectory, t - window);
    if (!now || !then || now->t - then->t <= 0.0) return {};
    return {(now->pose.translation - then->pose.translation) / (now->t - then->t), true};
}

double windowed_yaw_rate(std::span<const TimedPose> trajectory, double t, double window) {
    if (!(window > 0.0)) throw std::invalid_argument("windowed_yaw_rate: window must be positive");
    const TimedPose* now = sample_at_or_before(trajectory, t);
    const TimedPose* then = sample_at_or_before(trajectory, t - window);
    if (!now || !then || now->t - then->t <= 0.0) return 0.0;
    return wrap_angle(now->pose.yaw() - then->pose.yaw()) / (now->t - then->t);
}

}  // namespace spooflab
