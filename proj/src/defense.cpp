#include "spooflab/defense.hpp"

#include "spooflab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace spooflab {

std::string_view to_string(GapModel g) {
    return g == GapModel::constant_velocity ? "constant_velocity" : "dead_reckoning";
}

GapModel gap_model_from_string(std::string_view s) {
    if (s == "constant_velocity") return GapModel::constant_velocity;
    if (s == "dead_reckoning") return GapModel::dead_reckoning;
    throw std::invalid_argument("unknown gap model '" + std::string(s) + "'");
}

std::string_view to_string(Phase p) { return p == Phase::normal ? "NORMAL" : "ATTACK"; }
std::string_view to_string(PoseSource s) { return s == PoseSource::slam ? "slam" : "dead_reckoning"; }

void DetectorConfig::validate() const {
    if (!(w_ori >= 0.0) || !(w_speed >= 0.0)) throw std::invalid_argument("DetectorConfig: weights must be >= 0");
    if (std::abs(w_ori + w_speed - 1.0) > 1e-9) throw std::invalid_argument("DetectorConfig: weights must sum to 1");
    if (!(threshold > 0.0)) throw std::invalid_argument("DetectorConfig: threshold must be positive");
    if (k_on < 1 || k_off < 1) throw std::invalid_argument("DetectorConfig: k_on and k_off must be >= 1");
    if (!(velocity_window > 0.0)) throw std::invalid_argument("DetectorConfig: velocity_window must be positive");
}

double orientation_error(const Vec3& v_slam, const Vec3& v_dr, double eps) {
    const double a = v_slam.norm(), b = v_dr.norm();
    if (a < eps || b < eps) return 0.0;
    return std::clamp(1.0 - v_slam.dot(v_dr) / (a * b), 0.0, 2.0);
}

double speed_error(const Vec3& v_slam, const Vec3& v_dr) { return (v_slam - v_dr).norm(); }

double detection_metric(double e_ori, double e_speed, const DetectorConfig& cfg) {
    return cfg.w_ori * e_ori + cfg.w_speed * e_speed;
}

Pose predict_gap_transform(const Vec3& velocity_at_det, double yaw_rate_at_det, double gap) {
    if (!(gap >= 0.0)) throw std::invalid_argument("predict_gap_transform: gap must be >= 0");
    return Pose::from_yaw(yaw_rate_at_det * gap, velocity_at_det * gap);
}

Pose reconcile(const Pose& world_T_det, const Pose& det_T_restart, const Pose& restart_T_current) {
    return compose(compose(world_T_det, det_T_restart), restart_T_current);
}

DefenseState DefenseState::start(const Pose& initial) {
    DefenseState s;
    s.dr_pose = initial;
    s.last_good = {0.0, initial};
    return s;
}

namespace {

void push_window(std::deque<TimedPose>& h, const TimedPose& p, double window) {
    h.push_back(p);
    // One sample at or before t - window must survive for the finite difference.
    while (h.size() > 2 && h[1].t <= p.t - window - 1e-6) h.pop_front();
}

}  // namespace

DetectorInputs observe(DefenseState& state, double t, const Pose& shadow_slam_pose, const Pose& dr_increment,
                       const DetectorConfig& cfg) {
    if (state.last_observed_t && !(t > *state.last_observed_t))
        throw std::invalid_argument("defense_step: timestamps must increase");
    if (state.last_observed_t) state.dr_pose = compose(state.dr_pose, dr_increment);
    state.last_observed_t = t;
    push_window(state.shadow_world, {t, compose(state.slam_anchor, shadow_slam_pose)}, cfg.velocity_window);
    push_window(state.dr_world, {t, state.dr_pose}, cfg.velocity_window);

    const std::vector<TimedPose> sh(state.shadow_world.begin(), state.shadow_world.end());
    const std::vector<TimedPose> dr(state.dr_world.begin(), state.dr_world.end());
    const auto vs = windowed_velocity(sh, t, cfg.velocity_window);
    const auto vd = windowed_velocity(dr, t, cfg.velocity_window);
    if (!vs.valid || !vd.valid) return {};
    return {orientation_error(vs.linear_velocity, vd.linear_velocity), speed_error(vs.linear_velocity, vd.linear_velocity),
            true};
}

DefendedPoseRecord decide(DefenseState& state, double t, const Pose& shadow_slam_pose, const Pose& dr_increment,
                          const DetectorInputs& inputs, const DetectorConfig& cfg) {
    DefendedPoseRecord rec;
    rec.t = t;
    rec.e_ori = inputs.e_ori;
    rec.e_speed = inputs.e_speed;
    rec.D = inputs.valid ? detection_metric(inputs.e_ori, inputs.e_speed, cfg) : 0.0;
    rec.flagged = inputs.valid && rec.D >= cfg.threshold;
    if (state.last_t && !(t > *state.last_t)) throw std::invalid_argument("defense_step: timestamps must increase");
    const bool first = !state.last_t;
    state.last_t = t;
    if (!first) state.dr_since_good = compose(state.dr_since_good, dr_increment);

    if (state.phase == Phase::normal) {
        rec.pose = compose(state.slam_anchor, shadow_slam_pose);
        state.consecutive_over = rec.flagged ? state.consecutive_over + 1 : 0;
        if (!rec.flagged) {
            state.last_good = {t, rec.pose};
            state.dr_since_good = Pose::identity();
            // SLAM velocity here may already carry sub-threshold attack drift; dead reckoning does not.
            const std::vector<TimedPose> dr(state.dr_world.begin(), state.dr_world.end());
            const auto vd = windowed_velocity(dr, t, cfg.velocity_window);
            if (vd.valid) state.last_good_velocity = vd.linear_velocity;
            state.last_good_yaw_rate = windowed_yaw_rate(dr, t, cfg.velocity_window);
        }
        if (state.consecutive_over >= cfg.k_on) {
            state.phase = Phase::attack;
            state.anchor_world_T_det = state.last_good.pose;
            state.t_det = state.last_good.t;
            state.velocity_at_det = state.last_good.pose.rotation.conjugate() * state.last_good_velocity;
            state.yaw_rate_at_det = state.last_good_yaw_rate;
            state.consecutive_over = 0;
            state.consecutive_under = 0;
        }
    } else {
        state.consecutive_under = rec.flagged ? 0 : state.consecutive_under + 1;
    }

    if (state.phase == Phase::attack) {
        const Pose& det = *state.anchor_world_T_det;
        if (state.consecutive_under >= cfg.k_off) {
            const Pose gap = cfg.gap_model == GapModel::constant_velocity
                                 ? predict_gap_transform(state.velocity_at_det, state.yaw_rate_at_det, t - state.t_det)
                                 : state.dr_since_good;
            state.slam_anchor = reconcile(det, gap, Pose::identity());
            state.phase = Phase::normal;
            state.anchor_world_T_det.reset();
            state.consecutive_under = 0;
            state.shadow_world.clear();
            state.last_good = {t, state.slam_anchor};
            state.dr_since_good = Pose::identity();
            rec.pose = state.slam_anchor;
            rec.restart = true;
        } else {
            rec.pose = compose(det, state.dr_since_good);
            rec.source = PoseSource::dead_reckoning;
        }
    }
    rec.phase = state.phase;
    return rec;
}

DefendedPoseRecord defense_step(DefenseState& state, double t, const Pose& shadow_slam_pose,
                                const Pose& dr_increment, const DetectorConfig& cfg) {
    const auto inputs = observe(state, t, shadow_slam_pose, dr_increment, cfg);
    return decide(state, t, shadow_slam_pose, dr_increment, inputs, cfg);
}

DefendedOdometry::DefendedOdometry(const IcpConfig& icp, const DetectorConfig& cfg, const Pose& initial,
                                   const Pose& initial_motion)
    : cfg_(cfg), shadow_(icp, initial, initial_motion), state_(DefenseState::start(initial)) {
    cfg_.validate();
}

DefendedPoseRecord DefendedOdometry::process(std::span<const Point3> sensor_points, double t,
                                             const Pose& dr_increment) {
    const Pose inc = first_ ? Pose::identity() : dr_increment;
    // Under attack the shadow predicts with dead reckoning, so a shadow that has
    // lost the map coasts at the true speed instead of its last drifted one.
    std::optional<Pose> prior;
    if (state_.phase == Phase::attack) prior = inc;
    last_shadow_ = shadow_.process(sensor_points, t, prior);
    first_ = false;
    auto rec = defense_step(state_, t, last_shadow_.pose, inc, cfg_);
    if (rec.restart) {
        ++restarts_;
        shadow_.reset(Pose::identity(), inc);
        last_shadow_ = shadow_.process(sensor_points, t);
        state_.shadow_world.clear();
        state_.shadow_world.push_back({t, state_.slam_anchor});
    }
    return rec;
}

double frame_f1(std::span<const TrainingRun> runs, double w_ori, double threshold, double boundary_margin) {
    long tp = 0, fp = 0, fn = 0;
    for (const auto& r : runs) {
        for (std::size_t i = 0; i < r.t.size(); ++i) {
            if (near_boundary(r.t[i], r.attacks, boundary_margin)) continue;
            const bool truth = in_intervals(r.t[i], r.attacks);
            const bool flag = w_ori * r.e_ori[i] + (1.0 - w_ori) * r.e_speed[i] >= threshold;
            tp += flag && truth;
            fp += flag && !truth;
            fn += !flag && truth;
        }
    }
    if (tp == 0) return 0.0;
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

TunedDetector tune_weights(std::span<const TrainingRun> runs, const TunerOptions& opts, const DetectorConfig& base) {
    if (opts.trials < 1) throw std::invalid_argument("tune_weights: trials must be >= 1");
    if (!(opts.threshold_min > 0.0) || !(opts.threshold_max > opts.threshold_min))
        throw std::invalid_argument("tune_weights: bad threshold range");
    long pos = 0, neg = 0;
    for (const auto& r : runs) {
        if (r.e_ori.size() != r.t.size() || r.e_speed.size() != r.t.size())
            throw std::invalid_argument("tune_weights: run columns differ in length");
        for (double t : r.t) {
            if (near_boundary(t, r.attacks, opts.boundary_margin)) continue;
            (in_intervals(t, r.attacks) ? pos : neg) += 1;
        }
    }
    if (pos == 0 || neg == 0) throw std::invalid_argument("tune_weights: training data needs attacked and clean frames");

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lo = std::log(opts.threshold_min), hi = std::log(opts.threshold_max);
    TunedDetector best{base, -1.0};
    for (int i = 0; i < opts.trials; ++i) {
        const double w = unit(rng);
        const double thr = std::exp(lo + (hi - lo) * unit(rng));
        const double f1 = frame_f1(runs, w, thr, opts.boundary_margin);
        if (f1 > best.f1) {
            best.f1 = f1;
            best.config.w_ori = w;
            best.config.w_speed = 1.0 - w;
            best.config.threshold = thr;
        }
    }
    return best;
}

}  // namespace spooflab
