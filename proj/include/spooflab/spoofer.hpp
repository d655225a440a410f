#pragma once

#include "spooflab/geometry.hpp"
#include "spooflab/world.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spooflab {

enum class ShapeKind { cylinder, corner, plane };

std::string_view to_string(ShapeKind s);
ShapeKind shape_from_string(std::string_view s);

enum class InjectionPattern {
    fixed,        // wall held at d_max (the static baseline)
    oscillating,  // sawtooth ramp d_min -> d_max every t_cycle
};

std::string_view to_string(InjectionPattern p);
InjectionPattern pattern_from_string(std::string_view s);

struct AttackConfig {
    Point3 spoofer_position = Point3::Zero();
    double window_width = deg2rad(80.0);
    ShapeKind shape = ShapeKind::corner;
    InjectionPattern pattern = InjectionPattern::oscillating;
    double d_min = 1.0;
    double d_max = 50.0;
    /// Empty: derive from the correspondence gate so each frame moves the wall by exactly one gate.
    std::optional<double> t_cycle;
    double t_start = 0.0;
    double t_end = 0.0;

    bool active_at(double t) const { return t >= t_start && t <= t_end; }
    /// Copy with t_cycle filled in when it was left to be derived.
    AttackConfig resolved(double m_corr, double frame_interval) const;
};

/// Cycle length that moves the wall by exactly one gate per frame.
double derive_cycle(double d_min, double d_max, double m_corr, double dt);

/// Sawtooth boresight distance; empty while the attack is inactive.
/// Requires a resolved t_cycle for the oscillating pattern.
std::optional<double> injection_distance(double t, const AttackConfig& cfg);

/// Horizontal range of the injected shape at `theta_rel` from the boresight.
double fake_range(double theta_rel, ShapeKind shape, double boresight_distance);

/// Scale constant of the square-boundary curve for a given boresight distance.
double shape_scale(ShapeKind shape, double boresight_distance);

double per_frame_displacement(const AttackConfig& resolved_cfg, double frame_interval);

/// Replaces every in-window beam with the injected shape. Out-of-window beams
/// are copied untouched; returns beyond max_range become no-returns.
RangeScan tamper_scan(const RangeScan& clean, const Pose& sensor_pose, const AttackConfig& cfg, double m_corr);

struct ScheduleFinding {
    enum class Kind {
        invalid_parameters,
        exceeds_max_range,   // d_max beyond the sensor's ranging distance
        exceeds_gate,        // per-frame displacement larger than the correspondence gate
    };
    Kind kind;
    std::string message;
};

std::string_view to_string(ScheduleFinding::Kind k);

struct ScheduleReport {
    std::vector<ScheduleFinding> findings;
    double per_frame_displacement = 0.0;
    double t_cycle = 0.0;

    bool ok() const { return findings.empty(); }
    bool has(ScheduleFinding::Kind k) const;
};

ScheduleReport validate_schedule(const AttackConfig& cfg, const LidarSpec& spec, double m_corr);

}  // namespace spooflab
