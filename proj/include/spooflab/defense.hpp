#pragma once

#include "spooflab/dead_reckoning.hpp"
#include "spooflab/geometry.hpp"
#include "spooflab/odometry.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace spooflab {

/// Below this speed (m/s) a velocity has no usable direction.
inline constexpr double kStationarySpeed = 0.05;

enum class GapModel {
    constant_velocity,  // velocity at detection held over the gap
    dead_reckoning,     // increments integrated over the gap
};

std::string_view to_string(GapModel g);
GapModel gap_model_from_string(std::string_view s);

struct DetectorConfig {
    double w_ori = 0.5;
    double w_speed = 0.5;
    double threshold = 1.0;
    int k_on = 3;
    int k_off = 10;
    double velocity_window = 1.0;  // s
    GapModel gap_model = GapModel::constant_velocity;

    void validate() const;
};

/// 1 - cosine similarity; 0 when either speed is below `eps`.
double orientation_error(const Vec3& v_slam, const Vec3& v_dr, double eps = kStationarySpeed);
double speed_error(const Vec3& v_slam, const Vec3& v_dr);
double detection_metric(double e_ori, double e_speed, const DetectorConfig& cfg);

/// Body-frame motion over `gap` seconds at constant velocity and yaw rate.
Pose predict_gap_transform(const Vec3& velocity_at_det, double yaw_rate_at_det, double gap);
Pose reconcile(const Pose& world_T_det, const Pose& det_T_restart, const Pose& restart_T_current);

enum class Phase { normal, attack };
enum class PoseSource { slam, dead_reckoning };

std::string_view to_string(Phase p);
std::string_view to_string(PoseSource s);

struct DefenseState {
    Phase phase = Phase::normal;
    /// Maps the shadow SLAM's frame into the world; replaced at every restart.
    Pose slam_anchor = Pose::identity();
    /// Set iff phase == attack.
    std::optional<Pose> anchor_world_T_det;
    Vec3 velocity_at_det = Vec3::Zero();  // det body frame
    double yaw_rate_at_det = 0.0;
    double t_det = 0.0;
    int consecutive_over = 0;
    int consecutive_under = 0;

    /// Dead-reckoning motion since the last un-flagged defended pose.
    Pose dr_since_good = Pose::identity();
    TimedPose last_good{0.0, Pose::identity()};
    Vec3 last_good_velocity = Vec3::Zero();  // dead reckoning, world frame
    double last_good_yaw_rate = 0.0;

    Pose dr_pose = Pose::identity();
    std::deque<TimedPose> shadow_world;
    std::deque<TimedPose> dr_world;
    std::optional<double> last_observed_t;
    std::optional<double> last_t;

    /// Fresh state with the shadow SLAM and dead reckoning both anchored at `initial`.
    static DefenseState start(const Pose& initial);
};

struct DetectorInputs {
    double e_ori = 0.0;
    double e_speed = 0.0;
    /// False until both velocity windows have filled.
    bool valid = false;
};

struct DefendedPoseRecord {
    double t = 0.0;
    Pose pose;
    PoseSource source = PoseSource::slam;
    double e_ori = 0.0;
    double e_speed = 0.0;
    double D = 0.0;
    bool flagged = false;
    Phase phase = Phase::normal;
    /// The shadow SLAM must be reset to identity at this frame.
    bool restart = false;
};

/// Appends this frame to the velocity histories and measures the two errors.
/// `shadow_slam_pose` is in the shadow's own frame.
DetectorInputs observe(DefenseState& state, double t, const Pose& shadow_slam_pose, const Pose& dr_increment,
                       const DetectorConfig& cfg);

/// Advances the state machine by one frame with already measured inputs.
DefendedPoseRecord decide(DefenseState& state, double t, const Pose& shadow_slam_pose, const Pose& dr_increment,
                          const DetectorInputs& inputs, const DetectorConfig& cfg);

/// observe + decide. Timestamps must strictly increase.
DefendedPoseRecord defense_step(DefenseState& state, double t, const Pose& shadow_slam_pose,
                                const Pose& dr_increment, const DetectorConfig& cfg);

/// Victim odometry wrapped in the detect / switch / restart / re-anchor loop.
class DefendedOdometry {
public:
    DefendedOdometry(const IcpConfig& icp, const DetectorConfig& cfg, const Pose& initial,
                     const Pose& initial_motion = Pose::identity());

    /// `dr_increment` is the dead-reckoning motion since the previous frame
    /// (ignored on the first frame).
    DefendedPoseRecord process(std::span<const Point3> sensor_points, double t, const Pose& dr_increment);

    const DefenseState& state() const { return state_; }
    const Odometry& shadow() const { return shadow_; }
    /// Shadow estimate of the latest frame, mapped into the world.
    Pose shadow_world_pose() const { return compose(state_.slam_anchor, shadow_.state().current_pose); }
    const FrameEstimate& last_shadow_estimate() const { return last_shadow_; }
    long restarts() const { return restarts_; }

private:
    DetectorConfig cfg_;
    Odometry shadow_;
    DefenseState state_;
    FrameEstimate last_shadow_;
    bool first_ = true;
    long restarts_ = 0;
};

struct TrainingRun {
    std::vector<double> t;
    std::vector<double> e_ori;
    std::vector<double> e_speed;
    /// Attack intervals; frames inside are positives.
    std::vector<std::pair<double, double>> attacks;
};

struct TunerOptions {
    int trials = 300;
    std::uint64_t seed = 0;
    double threshold_min = 1e-3;
    double threshold_max = 10.0;
    double boundary_margin = 0.5;  // s
};

struct TunedDetector {
    DetectorConfig config;
    double f1 = 0.0;
};

/// Frame-level F1 of (D >= threshold) against the labels, edges excluded.
double frame_f1(std::span<const TrainingRun> runs, double w_ori, double threshold, double boundary_margin);

/// Seeded random search over w_ori in [0, 1] and a log-uniform threshold.
/// `base` supplies the fields that are not tuned.
TunedDetector tune_weights(std::span<const TrainingRun> runs, const TunerOptions& opts,
                           const DetectorConfig& base = {});

}  // namespace spooflab
