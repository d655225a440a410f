#include "spooflab/spoofer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spooflab {

std::string_view to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::cylinder: return "cylinder";
        case ShapeKind::corner: return "corner";
        case ShapeKind::plane: return "plane";
    }
    return "?";
}

ShapeKind shape_from_string(std::string_view s) {
    if (s == "cylinder") return ShapeKind::cylinder;
    if (s == "corner") return ShapeKind::corner;
    if (s == "plane") return ShapeKind::plane;
    throw std::invalid_argument("unknown shape '" + std::string(s) + "'");
}

std::string_view to_string(InjectionPattern p) {
    return p == InjectionPattern::fixed ? "static" : "oscillating";
}

InjectionPattern pattern_from_string(std::string_view s) {
    if (s == "static") return InjectionPattern::fixed;
    if (s == "oscillating") return InjectionPattern::oscillating;
    throw std::invalid_argument("unknown injection pattern '" + std::string(s) + "'");
}

double derive_cycle(double d_min, double d_max, double m_corr, double dt) {
    if (!(d_min > 0.0) || !(d_max > d_min) || !(m_corr > 0.0) || !(dt > 0.0))
        throw std::invalid_argument("derive_cycle: need 0 < d_min < d_max and positive gate and frame interval");
    return (d_max - d_min) * dt / m_corr;
}

AttackConfig AttackConfig::resolved(double m_corr, double frame_interval) const {
    AttackConfig out = *this;
    if (!out.t_cycle) out.t_cycle = derive_cycle(d_min, d_max, m_corr, frame_interval);
    return out;
}

std::optional<double> injection_distance(double t, const AttackConfig& cfg) {
    if (!cfg.active_at(t)) return std::nullopt;
    if (cfg.pattern == InjectionPattern::fixed) return cfg.d_max;
    if (!cfg.t_cycle || !(*cfg.t_cycle > 0.0))
        throw std::invalid_argument("injection_distance: t_cycle must be resolved and positive");
    const double phase = (t - cfg.t_start) / *cfg.t_cycle;
    // The epsilon keeps frame times that land on a cycle boundary from rounding to the previous cycle.
    const double frac = std::max(0.0, phase - std::floor(phase + 1e-9));
    return cfg.d_min + (cfg.d_max - cfg.d_min) * frac;
}

double shape_scale(ShapeKind shape, double boresight_distance) {
    return shape == ShapeKind::plane ? std::numbers::sqrt2 * boresight_distance : boresight_distance;
}

double fake_range(double theta_rel, ShapeKind shape, double boresight_distance) {
    if (!(boresight_distance > 0.0)) throw std::invalid_argument("fake_range: boresight distance must be positive");
    const double s = shape_scale(shape, boresight_distance);
    switch (shape) {
        case ShapeKind::cylinder: return boresight_distance;
        case ShapeKind::corner: return s / (std::abs(std::sin(theta_rel)) + std::abs(std::cos(theta_rel)));
        case ShapeKind::plane: {
            const double th = theta_rel + std::numbers::pi / 4.0;
            return s / (std::abs(std::sin(th)) + std::abs(std::cos(th)));
        }
    }
    return boresight_distance;
}

double per_frame_displacement(const AttackConfig& cfg, double frame_interval) {
    if (cfg.pattern == InjectionPattern::fixed) return 0.0;
    return (cfg.d_max - cfg.d_min) * frame_interval / cfg.t_cycle.value();
}

RangeScan tamper_scan(const RangeScan& clean, const Pose& sensor_pose, const AttackConfig& cfg, double m_corr) {
    const AttackConfig rc = cfg.resolved(m_corr, clean.spec.frame_interval);
    const auto distance = injection_distance(clean.timestamp, rc);
    if (!distance) return clean;

    RangeScan out = clean;
    const Point3 local = transform_point(inverse(sensor_pose), cfg.spoofer_position);
    const double bearing = std::atan2(local.y(), local.x());
    const double half = 0.5 * cfg.window_width;
    const auto& spec = clean.spec;
    const int bins = spec.azimuth_bins();
    for (int j = 0; j < bins; ++j) {
        const double theta_rel = wrap_angle(spec.azimuth_of(j) - bearing);
        if (!(std::abs(theta_rel) < half)) continue;
        const double horizontal = fake_range(theta_rel, cfg.shape, *distance);
        for (int c = 0; c < spec.channel_count(); ++c) {
            // Vertical prism: every channel sees the same horizontal footprint.
            const double r = horizontal / std::cos(spec.elevation_angles[c]);
            out.at(c, j) = r <= spec.max_range ? std::optional<double>(r) : std::nullopt;
        }
    }
    return out;
}

std::string_view to_string(ScheduleFinding::Kind k) {
    switch (k) {
        case ScheduleFinding::Kind::invalid_parameters: return "invalid_parameters";
        case ScheduleFinding::Kind::exceeds_max_range: return "exceeds_max_range";
        case ScheduleFinding::Kind::exceeds_gate: return "exceeds_gate";
    }
    return "?";
}

bool ScheduleReport::has(ScheduleFinding::Kind k) const {
    for (const auto& f : findings) {
        if (f.kind == k) return true;
    }
    return false;
}

ScheduleReport validate_schedule(const AttackConfig& cfg, const LidarSpec& spec, double m_corr) {
    ScheduleReport report;
    auto add = [&](ScheduleFinding::Kind kind, const std::string& msg) { report.findings.push_back({kind, msg}); };

    if (!(cfg.d_min > 0.0) || !(cfg.d_max > cfg.d_min)) {
        add(ScheduleFinding::Kind::invalid_parameters, "need 0 < d_min < d_max");
        return report;
    }
    if (!(cfg.window_width > 0.0) || !(cfg.window_width < 2.0 * std::numbers::pi))
        add(ScheduleFinding::Kind::invalid_parameters, "window width must lie in (0, 360) degrees");
    if (cfg.t_end < cfg.t_start) add(ScheduleFinding::Kind::invalid_parameters, "active interval ends before it starts");
    if (!(m_corr > 0.0)) {
        add(ScheduleFinding::Kind::invalid_parameters, "correspondence gate must be positive");
        return report;
    }
    if (cfg.t_cycle && !(*cfg.t_cycle > 0.0)) {
        add(ScheduleFinding::Kind::invalid_parameters, "t_cycle must be positive");
        return report;
    }

    if (cfg.d_max > spec.max_range) {
        std::ostringstream os;
        os << "d_max " << cfg.d_max << " m exceeds sensor max range " << spec.max_range << " m";
        add(ScheduleFinding::Kind::exceeds_max_range, os.str());
    }

    const AttackConfig rc = cfg.resolved(m_corr, spec.frame_interval);
    report.t_cycle = *rc.t_cycle;
    report.per_frame_displacement = per_frame_displacement(rc, spec.frame_interval);
    if (report.per_frame_displacement > m_corr + 1e-9) {
        std::ostringstream os;
        os << "per-frame displacement " << report.per_frame_displacement << " m exceeds correspondence gate " << m_corr
           << " m";
        add(ScheduleFinding::Kind::exceeds_gate, os.str());
    }
    return report;
}

}  // namespace spooflab
