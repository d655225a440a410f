#pragma once

#include "spooflab/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spooflab {

struct LidarSpec {
    std::vector<double> elevation_angles;  // radians, one per channel
    double azimuth_step = deg2rad(0.2);
    double max_range = 100.0;
    double frame_interval = 0.1;

    int channel_count() const { return static_cast<int>(elevation_angles.size()); }
    int azimuth_bins() const;
    /// Azimuth of bin `j`; bin 0 sits at -pi.
    double azimuth_of(int bin) const;
    /// Nearest bin for an azimuth in any range.
    int bin_of(double azimuth) const;

    /// Throws std::invalid_argument when an invariant does not hold.
    void validate() const;

    /// 16 channels over +-15 degrees, 0.2 degree azimuth step, 100 m, 10 Hz.
    static LidarSpec vlp16();
    static LidarSpec uniform(int channels, double min_elev, double max_elev, double azimuth_step,
                             double max_range, double frame_interval);
};

/// Finite planar patch: corner + two edge vectors.
struct Rect {
    Point3 corner;
    Vec3 edge_u;
    Vec3 edge_v;
};

struct Box {
    Point3 min;
    Point3 max;
};

struct World {
    std::string name;
    std::vector<Rect> rects;
    std::vector<Box> boxes;

    void validate() const;
    bool empty() const { return rects.empty() && boxes.empty(); }
};

/// 20 m corridor: side walls, pillars every 4 m per side, scattered crates.
World feature_rich_world();
/// 50 m hall: two long walls with sparse pilasters.
World sparse_world();
/// Looks up a fixture by name ("feature_rich" or "sparse").
World fixture_world(const std::string& name);

/// Per-beam range image, channel-major.
struct RangeScan {
    double timestamp = 0.0;
    LidarSpec spec;
    std::vector<std::optional<double>> ranges;

    RangeScan() = default;
    RangeScan(const LidarSpec& s, double t);

    std::optional<double>& at(int channel, int bin) { return ranges[index(channel, bin)]; }
    const std::optional<double>& at(int channel, int bin) const { return ranges[index(channel, bin)]; }
    std::size_t index(int channel, int bin) const {
        return static_cast<std::size_t>(channel) * spec.azimuth_bins() + bin;
    }

    std::size_t return_count() const;
};

/// Returns of a scan as sensor-frame points.
std::vector<Point3> scan_to_points(const RangeScan& scan);

struct GroundTruth {
    std::vector<double> times;
    std::vector<Pose> poses;
    double frame_interval = 0.1;

    std::size_t size() const { return poses.size(); }
};

struct NoiseParams {
    double translation_sigma = 0.01;  // m per frame, per axis
    double yaw_sigma = 0.0005;        // rad per frame
};

struct DeadReckoningStream {
    std::vector<Pose> relative_poses;
    NoiseParams noise;
    std::uint64_t seed = 0;
};

/// Constant-speed walk along a polyline, yaw along the current segment.
GroundTruth sample_trajectory(const std::vector<Point3>& waypoints, double speed, const LidarSpec& spec);

/// Noise-free raycast; OpenMP-parallel over beams.
RangeScan raycast_scan(const World& world, const Pose& sensor_pose, const LidarSpec& spec, double timestamp);

/// Distance along a unit ray to the nearest surface, if any within `max_range`.
std::optional<double> cast_ray(const World& world, const Point3& origin, const Vec3& dir, double max_range);

/// Additive Gaussian range noise; results stay in [0, max_range].
void add_range_noise(RangeScan& scan, double sigma, std::mt19937_64& rng);

DeadReckoningStream synth_dead_reckoning(const GroundTruth& gt, const NoiseParams& noise, std::uint64_t seed);

struct ScanReplay {
    std::vector<RangeScan> scans;
    GroundTruth ground_truth;
};

/// Reads `<dir>/groundtruth.csv` ("t,x,y,z,qx,qy,qz,qw") and one scan file per
/// row from `<dir>/scans/`, taken in lexicographic order. Each scan line is
/// "channel azimuth_rad range_m".
ScanReplay load_scan_replay(const std::filesystem::path& dir, const LidarSpec& spec);

namespace serial {
RangeScan raycast_scan(const World& world, const Pose& sensor_pose, const LidarSpec& spec, double timestamp);
}

}  // namespace spooflab
