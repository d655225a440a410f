#pragma once

#include "spooflab/geometry.hpp"
#include "spooflab/world.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace spooflab {

struct IcpConfig {
    /// Correspondence gate: pairs farther apart are dropped.
    double max_correspondence_distance = 1.0;
    int max_iterations = 30;
    double convergence_translation = 1e-4;  // m
    double convergence_rotation = 1e-5;     // rad
    /// Voxel for the map-insertion cloud.
    double downsample_voxel = 0.2;
    /// Every k-th raw return (scan order) is registered, so each surface
    /// contributes in proportion to the beams it occupies.
    int registration_stride = 23;
    double map_voxel = 1.0;
    /// Voxels keep their first points up to this cap.
    int map_max_points_per_voxel = 200;
    /// Solve only x, y and yaw; z, roll and pitch stay at the prior.
    bool planar = true;

    void validate() const;
};

struct VoxelKey {
    std::int32_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const noexcept {
        // Spatial-hash primes as used by most voxel-hash odometry front ends.
        return static_cast<std::size_t>(static_cast<std::uint64_t>(k.x) * 73856093u ^
                                        static_cast<std::uint64_t>(k.y) * 19349669u ^
                                        static_cast<std::uint64_t>(k.z) * 83492791u);
    }
};

inline VoxelKey voxel_of(const Point3& p, double voxel) {
    return {static_cast<std::int32_t>(std::floor(p.x() / voxel)), static_cast<std::int32_t>(std::floor(p.y() / voxel)),
            static_cast<std::int32_t>(std::floor(p.z() / voxel))};
}

struct Neighbor {
    Point3 point;
    double distance;
};

class VoxelMap {
public:
    explicit VoxelMap(double voxel = 1.0, int max_points_per_voxel = 200);

    /// World-frame insertion; points landing in a full voxel are dropped.
    void insert(std::span<const Point3> points);
    /// Exact nearest neighbour within `max_distance` as long as max_distance <= voxel size.
    std::optional<Neighbor> nearest(const Point3& query, double max_distance) const;

    std::size_t size() const { return point_count_; }
    std::size_t voxel_count() const { return voxels_.size(); }
    bool empty() const { return point_count_ == 0; }
    double voxel_size() const { return voxel_; }
    int max_points_per_voxel() const { return max_per_voxel_; }
    void clear();

    /// Voxel contents (insertion order); empty span for unknown keys.
    std::span<const Point3> voxel(const VoxelKey& key) const;
    std::vector<VoxelKey> keys() const;

private:
    double voxel_;
    int max_per_voxel_;
    std::size_t point_count_ = 0;
    std::unordered_map<VoxelKey, std::vector<Point3>, VoxelKeyHash> voxels_;
    // Finer index over the same points; most queries resolve inside it.
    double cell_;
    std::unordered_map<VoxelKey, std::vector<Point3>, VoxelKeyHash> cells_;
};

/// One centroid per occupied voxel, in order of first appearance.
std::vector<Point3> voxel_downsample(std::span<const Point3> points, double voxel);
/// Every k-th point, starting with the first.
std::vector<Point3> stride_sample(std::span<const Point3> points, int stride);

struct OdometryState {
    static constexpr std::size_t kHistory = 2;

    Pose current_pose;
    std::deque<Pose> pose_history;
    VoxelMap map;
    long frame_index = -1;
};

/// Constant-velocity prior from the last two poses.
Pose predict_initial_guess(const OdometryState& state);

struct RegistrationDiagnostics {
    int inliers = 0;
    double residual = 0.0;
    int iterations = 0;
    bool diverged = false;
};

struct Registration {
    Pose pose;
    RegistrationDiagnostics diagnostics;
};

/// Gated correspondence search: for each source point, the nearest map point
/// within `gate`, or nothing. Independent per point, so parallel over points.
std::vector<std::optional<Neighbor>> find_correspondences(const VoxelMap& map, std::span<const Point3> world_points,
                                                          double gate);

/// Closed-form rigid alignment (least squares) mapping `source` onto `target`.
Pose solve_rigid(std::span<const Point3> source, std::span<const Point3> target);
/// Same, restricted to a rotation about +z and a horizontal translation.
Pose solve_rigid_planar(std::span<const Point3> source, std::span<const Point3> target);

Registration register_scan(const VoxelMap& map, std::span<const Point3> scan_points, const Pose& guess,
                           const IcpConfig& cfg);

void update_map(VoxelMap& map, std::span<const Point3> scan_points, const Pose& pose);

struct FrameEstimate {
    double t = 0.0;
    Pose pose;
    RegistrationDiagnostics diagnostics;
};

/// Scan-to-map odometry. Frame 0 seeds the map at the initial pose.
class Odometry {
public:
    /// `initial_motion` seeds the constant-velocity prior as if the previous
    /// frame had been tracked at initial * inverse(initial_motion).
    explicit Odometry(IcpConfig cfg, const Pose& initial = Pose::identity(),
                      const Pose& initial_motion = Pose::identity());

    FrameEstimate process(const RangeScan& scan);
    /// `motion_prior`, when given, replaces the constant-velocity prediction
    /// as the relative motion since the previous frame.
    FrameEstimate process(std::span<const Point3> sensor_points, double t,
                          const std::optional<Pose>& motion_prior = std::nullopt);

    void reset(const Pose& initial = Pose::identity(), const Pose& initial_motion = Pose::identity());
    const OdometryState& state() const { return state_; }
    const IcpConfig& config() const { return cfg_; }

private:
    IcpConfig cfg_;
    Pose initial_;
    Pose initial_motion_;
    OdometryState state_;
};

struct OdometryRun {
    std::vector<double> times;
    std::vector<Pose> poses;
    std::vector<RegistrationDiagnostics> diagnostics;
};

OdometryRun run_odometry(std::span<const RangeScan> scans, const IcpConfig& cfg, const Pose& initial,
                         const Pose& initial_motion = Pose::identity());

namespace serial {
std::vector<std::optional<Neighbor>> find_correspondences(const VoxelMap& map, std::span<const Point3> world_points,
                                                          double gate);
}

}  // namespace spooflab
