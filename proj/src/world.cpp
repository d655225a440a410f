#include "spooflab/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>

namespace spooflab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::optional<double> intersect_rect(const Rect& r, const Point3& o, const Vec3& d) {
    const Vec3 n = r.edge_u.cross(r.edge_v);
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = n.dot(r.corner - o) / denom;
    if (t <= 0.0) return std::nullopt;
    const Vec3 rel = o + t * d - r.corner;
    const double a = rel.dot(r.edge_u) / r.edge_u.squaredNorm();
    const double b = rel.dot(r.edge_v) / r.edge_v.squaredNorm();
    if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) return std::nullopt;
    return t;
}

std::optional<double> intersect_box(const Box& box, const Point3& o, const Vec3& d) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        if (std::abs(d[k]) < 1e-15) {
            if (o[k] < box.min[k] || o[k] > box.max[k]) return std::nullopt;
            continue;
        }
        double t0 = (box.min[k] - o[k]) / d[k];
        double t1 = (box.max[k] - o[k]) / d[k];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return std::nullopt;
    }
    if (t_far <= 0.0) return std::nullopt;
    // Origin inside the box: the exit face is the visible surface.
    return t_near > 0.0 ? t_near : t_far;
}

}  // namespace

int LidarSpec::azimuth_bins() const { return static_cast<int>(std::lround(kTwoPi / azimuth_step)); }

double LidarSpec::azimuth_of(int bin) const { return -std::numbers::pi + bin * azimuth_step; }

int LidarSpec::bin_of(double azimuth) const {
    const int n = azimuth_bins();
    const long b = std::lround((wrap_angle(azimuth) + std::numbers::pi) / azimuth_step);
    return static_cast<int>(((b % n) + n) % n);
}

void LidarSpec::validate() const {
    if (elevation_angles.empty()) throw std::invalid_argument("LidarSpec: channel_count must be >= 1");
    if (!(azimuth_step > 0.0)) throw std::invalid_argument("LidarSpec: azimuth_step must be positive");
    const double bins = kTwoPi / azimuth_step;
    if (std::abs(bins - std::round(bins)) * azimuth_step > 1e-9)
        throw std::invalid_argument("LidarSpec: azimuth_step must divide 2*pi");
    if (!(max_range > 0.0)) throw std::invalid_argument("LidarSpec: max_range must be positive");
    if (!(frame_interval > 0.0)) throw std::invalid_argument("LidarSpec: frame_interval must be positive");
}

LidarSpec LidarSpec::uniform(int channels, double min_elev, double max_elev, double azimuth_step,
                             double max_range, double frame_interval) {
    LidarSpec s;
    s.elevation_angles.resize(static_cast<std::size_t>(std::max(channels, 0)));
    for (int c = 0; c < channels; ++c) {
        s.elevation_angles[c] =
            channels == 1 ? 0.5 * (min_elev + max_elev) : min_elev + (max_elev - min_elev) * c / (channels - 1);
    }
    s.azimuth_step = azimuth_step;
    s.max_range = max_range;
    s.frame_interval = frame_interval;
    return s;
}

LidarSpec LidarSpec::vlp16() { return uniform(16, deg2rad(-15.0), deg2rad(15.0), deg2rad(0.2), 100.0, 0.1); }

void World::validate() const {
    for (const auto& r : rects) {
        if (r.edge_u.cross(r.edge_v).norm() <= 0.0)
            throw std::invalid_argument("World '" + name + "': rectangle with zero area");
    }
    for (const auto& b : boxes) {
        const Vec3 ext = b.max - b.min;
        const int positive = (ext.array() > 0.0).count();
        if ((ext.array() < 0.0).any() || positive < 2)
            throw std::invalid_argument("World '" + name + "': degenerate box");
    }
}

World feature_rich_world() {
    World w;
    w.name = "feature_rich";
    constexpr double x0 = -60.0, x1 = 200.0;
    w.rects.push_back({{x0, -10.0, 0.0}, {x1 - x0, 0.0, 0.0}, {0.0, 0.0, 6.0}});
    w.rects.push_back({{x0, 10.0, 0.0}, {x1 - x0, 0.0, 0.0}, {0.0, 0.0, 6.0}});
    // Pillars stand against the walls, staggered by half a bay between sides.
    for (double x = x0 + 4.0; x < x1; x += 4.0) {
        w.boxes.push_back({{x - 0.4, -10.2, 0.0}, {x + 0.4, -9.0, 4.0}});
        w.boxes.push_back({{x + 1.6, 9.0, 0.0}, {x + 2.4, 10.2, 4.0}});
    }
    // Irregular crates break the pillar periodicity.
    for (double x = x0 + 7.0; x < x1; x += 23.0) {
        w.boxes.push_back({{x, -9.5, 0.0}, {x + 2.0, -8.0, 1.5}});
        w.boxes.push_back({{x + 11.0, 8.2, 0.0}, {x + 12.2, 9.5, 2.5}});
    }
    return w;
}

World sparse_world() {
    World w;
    w.name = "sparse";
    constexpr double x0 = -60.0, x1 = 200.0;
    w.rects.push_back({{x0, -25.0, 0.0}, {x1 - x0, 0.0, 0.0}, {0.0, 0.0, 8.0}});
    w.rects.push_back({{x0, 25.0, 0.0}, {x1 - x0, 0.0, 0.0}, {0.0, 0.0, 8.0}});
    // Thin pilasters give the otherwise featureless walls a weak along-track anchor.
    for (double x = x0 + 4.0; x < x1; x += 6.0) {
        w.boxes.push_back({{x - 0.4, -25.2, 0.0}, {x + 0.4, -24.0, 8.0}});
        w.boxes.push_back({{x + 2.6, 24.0, 0.0}, {x + 3.4, 25.2, 8.0}});
    }
    return w;
}

World fixture_world(const std::string& name) {
    if (name == "feature_rich") return feature_rich_world();
    if (name == "sparse") return sparse_world();
    throw std::invalid_argument("unknown world fixture '" + name + "'");
}

RangeScan::RangeScan(const LidarSpec& s, double t)
    : timestamp(t), spec(s), ranges(static_cast<std::size_t>(s.channel_count()) * s.azimuth_bins()) {}

std::size_t RangeScan::return_count() const {
    return static_cast<std::size_t>(std::count_if(ranges.begin(), ranges.end(), [](const auto& r) { return r.has_value(); }));
}

std::vector<Point3> scan_to_points(const RangeScan& scan) {
    std::vector<Point3> pts;
    pts.reserve(scan.return_count());
    const int bins = scan.spec.azimuth_bins();
    for (int c = 0; c < scan.spec.channel_count(); ++c) {
        const double elev = scan.spec.elevation_angles[c];
        for (int j = 0; j < bins; ++j) {
            if (const auto& r = scan.at(c, j)) pts.push_back(*r * beam_direction(scan.spec.azimuth_of(j), elev));
        }
    }
    return pts;
}

std::optional<double> cast_ray(const World& world, const Point3& origin, const Vec3& dir, double max_range) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : world.rects) {
        if (auto t = intersect_rect(r, origin, dir); t && *t < best) best = *t;
    }
    for (const auto& b : world.boxes) {
        if (auto t = intersect_box(b, origin, dir); t && *t < best) best = *t;
    }
    if (best > max_range) return std::nullopt;
    return best;
}

namespace {

void raycast_beam(const World& world, const Pose& sensor_pose, RangeScan& scan, int c, int j) {
    const Vec3 dir = sensor_pose.rotation * beam_direction(scan.spec.azimuth_of(j), scan.spec.elevation_angles[c]);
    scan.at(c, j) = cast_ray(world, sensor_pose.translation, dir, scan.spec.max_range);
}

// Horizontal angular span of a surface as seen from the sensor, relative to
// the sensor heading. `full` when the sensor lies within the footprint's
// bounding circle, where the span is not a proper interval.
struct AngularSpan {
    bool full = true;
    double center = 0.0;
    double half_width = 0.0;
    double min_distance = 0.0;

    bool contains(double azimuth) const {
        return full || std::abs(wrap_angle(azimuth - center)) <= half_width;
    }
};

AngularSpan span_of(std::span<const Point3> corners, const Point3& origin, double heading) {
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : corners) centroid += p.head<2>();
    centroid /= static_cast<double>(corners.size());
    double radius = 0.0;
    for (const auto& p : corners) radius = std::max(radius, (p.head<2>() - centroid).norm());
    const Eigen::Vector2d rel = centroid - origin.head<2>();
    AngularSpan span;
    span.min_distance = std::max(0.0, rel.norm() - radius);
    if (rel.norm() <= radius * 1.0001 + 1e-9) return span;
    span.full = false;
    span.center = wrap_angle(std::atan2(rel.y(), rel.x()) - heading);
    for (const auto& p : corners) {
        const Eigen::Vector2d d = p.head<2>() - origin.head<2>();
        const double a = wrap_angle(std::atan2(d.y(), d.x()) - heading - span.center);
        span.half_width = std::max(span.half_width, std::abs(a));
    }
    span.half_width += 1e-6;
    return span;
}

}  // namespace

RangeScan raycast_scan(const World& world, const Pose& sensor_pose, const LidarSpec& spec, double timestamp) {
    // Azimuth culling assumes a level sensor; anything else takes the brute-force path.
    const Vec3 up = sensor_pose.rotation * Vec3::UnitZ();
    if (up.z() < 1.0 - 1e-12) return serial::raycast_scan(world, sensor_pose, spec, timestamp);

    const Point3& origin = sensor_pose.translation;
    const double heading = sensor_pose.yaw();
    std::vector<AngularSpan> rect_spans, box_spans;
    for (const auto& r : world.rects) {
        rect_spans.push_back(span_of(std::array<Point3, 4>{r.corner, r.corner + r.edge_u, r.corner + r.edge_v,
                                         r.corner + r.edge_u + r.edge_v},
                                        origin, heading));
    }
    for (const auto& b : world.boxes) {
        box_spans.push_back(span_of(std::array<Point3, 4>{b.min, Point3(b.max.x(), b.min.y(), 0.0), Point3(b.min.x(), b.max.y(), 0.0),
                                        b.max},
                                       origin, heading));
    }

    RangeScan scan(spec, timestamp);
    const int channels = spec.channel_count();
    const int bins = spec.azimuth_bins();
    const double max_range = spec.max_range;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < bins; ++j) {
        const double az = spec.azimuth_of(j);
        std::vector<const Rect*> rects;
        std::vector<const Box*> boxes;
        for (std::size_t i = 0; i < rect_spans.size(); ++i) {
            if (rect_spans[i].min_distance <= max_range && rect_spans[i].contains(az)) rects.push_back(&world.rects[i]);
        }
        for (std::size_t i = 0; i < box_spans.size(); ++i) {
            if (box_spans[i].min_distance <= max_range && box_spans[i].contains(az)) boxes.push_back(&world.boxes[i]);
        }
        for (int c = 0; c < channels; ++c) {
            const Vec3 dir = sensor_pose.rotation * beam_direction(az, spec.elevation_angles[c]);
            double best = std::numeric_limits<double>::infinity();
            for (const Rect* r : rects) {
                if (auto t = intersect_rect(*r, origin, dir); t && *t < best) best = *t;
            }
            for (const Box* b : boxes) {
                if (auto t = intersect_box(*b, origin, dir); t && *t < best) best = *t;
            }
            if (best <= max_range) scan.at(c, j) = best;
        }
    }
    return scan;
}

namespace serial {

RangeScan raycast_scan(const World& world, const Pose& sensor_pose, const LidarSpec& spec, double timestamp) {
    RangeScan scan(spec, timestamp);
    for (int c = 0; c < spec.channel_count(); ++c) {
        for (int j = 0; j < spec.azimuth_bins(); ++j) raycast_beam(world, sensor_pose, scan, c, j);
    }
    return scan;
}

}  // namespace serial

void add_range_noise(RangeScan& scan, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return;
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& r : scan.ranges) {
        if (r) r = std::clamp(*r + noise(rng), 0.0, scan.spec.max_range);
    }
}

GroundTruth sample_trajectory(const std::vector<Point3>& waypoints, double speed, const LidarSpec& spec) {
    if (waypoints.size() < 2) throw std::invalid_argument("sample_trajectory: need at least two waypoints");
    if (!(speed > 0.0)) throw std::invalid_argument("sample_trajectory: speed must be positive");

    std::vector<double> cumulative{0.0};
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
        const double len = (waypoints[i] - waypoints[i - 1]).norm();
        if (len < 1e-9) throw std::invalid_argument("sample_trajectory: coincident consecutive waypoints");
        cumulative.push_back(cumulative.back() + len);
    }

    const double dt = spec.frame_interval;
    const double total = cumulative.back();
    const auto frames = static_cast<std::size_t>(std::floor(total / (speed * dt) + 1e-9)) + 1;

    GroundTruth gt;
    gt.frame_interval = dt;
    std::size_t seg = 0;
    for (std::size_t k = 0; k < frames; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double s = std::min(speed * t, total);
        // Segment containing s, half-open so a corner frame takes the outgoing heading.
        while (seg + 2 < waypoints.size() && s >= cumulative[seg + 1] - 1e-9) ++seg;
        const Vec3 dir = (waypoints[seg + 1] - waypoints[seg]) / (cumulative[seg + 1] - cumulative[seg]);
        const Point3 pos = waypoints[seg] + (s - cumulative[seg]) * dir;
        gt.times.push_back(t);
        gt.poses.push_back(Pose::from_yaw(std::atan2(dir.y(), dir.x()), pos));
    }
    return gt;
}

DeadReckoningStream synth_dead_reckoning(const GroundTruth& gt, const NoiseParams& noise, std::uint64_t seed) {
    if (gt.size() < 2) throw std::invalid_argument("synth_dead_reckoning: need at least two poses");
    DeadReckoningStream out;
    out.noise = noise;
    out.seed = seed;
    out.relative_poses.reserve(gt.size() - 1);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 1; i < gt.size(); ++i) {
        Pose rel = compose(inverse(gt.poses[i - 1]), gt.poses[i]);
        const Vec3 dt(unit(rng), unit(rng), unit(rng));
        const double dyaw = unit(rng);
        if (noise.translation_sigma > 0.0) rel.translation += noise.translation_sigma * dt;
        if (noise.yaw_sigma > 0.0) rel = compose(rel, Pose::from_yaw(noise.yaw_sigma * dyaw));
        out.relative_poses.push_back(rel);
    }
    return out;
}

ScanReplay load_scan_replay(const std::filesystem::path& dir, const LidarSpec& spec) {
    namespace fs = std::filesystem;
    spec.validate();
    ScanReplay replay;
    replay.ground_truth.frame_interval = spec.frame_interval;

    std::ifstream gt_in(dir / "groundtruth.csv");
    if (!gt_in) throw std::runtime_error("scan replay: cannot open " + (dir / "groundtruth.csv").string());
    std::string line;
    int line_no = 0;
    while (std::getline(gt_in, line)) {
        ++line_no;
        if (line.empty() || line[0] == 't' || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double t, x, y, z, qx, qy, qz, qw;
        if (!(ss >> t >> x >> y >> z >> qx >> qy >> qz >> qw))
            throw std::runtime_error("scan replay: malformed groundtruth.csv line " + std::to_string(line_no));
        replay.ground_truth.times.push_back(t);
        replay.ground_truth.poses.push_back({Eigen::Quaterniond(qw, qx, qy, qz).normalized(), Vec3(x, y, z)});
    }

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "scans")) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.size() != replay.ground_truth.size())
        throw std::runtime_error("scan replay: " + std::to_string(files.size()) + " scan files but " +
                                 std::to_string(replay.ground_truth.size()) + " ground-truth rows");

    for (std::size_t i = 0; i < files.size(); ++i) {
        RangeScan scan(spec, replay.ground_truth.times[i]);
        std::ifstream in(files[i]);
        int ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            int channel;
            double az, range;
            if (!(ss >> channel >> az >> range) || channel < 0 || channel >= spec.channel_count())
                throw std::runtime_error("scan replay: bad beam at " + files[i].string() + ":" + std::to_string(ln));
            if (range > 0.0 && range <= spec.max_range) scan.at(channel, spec.bin_of(az)) = range;
        }
        replay.scans.push_back(std::move(scan));
    }
    return replay;
}

}  // namespace spooflab
