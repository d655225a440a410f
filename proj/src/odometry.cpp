#include "spooflab/odometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace spooflab {

void IcpConfig::validate() const {
    if (!(max_correspondence_distance > 0.0)) throw std::invalid_argument("IcpConfig: gate must be positive");
    if (max_iterations < 1) throw std::invalid_argument("IcpConfig: max_iterations must be >= 1");
    if (!(convergence_translation > 0.0) || !(convergence_rotation > 0.0))
        throw std::invalid_argument("IcpConfig: convergence thresholds must be positive");
    if (!(downsample_voxel > 0.0) || !(map_voxel > 0.0))
        throw std::invalid_argument("IcpConfig: voxel sizes must be positive");
    if (registration_stride < 1) throw std::invalid_argument("IcpConfig: registration_stride must be >= 1");
    if (map_max_points_per_voxel < 1) throw std::invalid_argument("IcpConfig: map_max_points_per_voxel must be >= 1");
    if (map_voxel < max_correspondence_distance)
        throw std::invalid_argument("IcpConfig: map_voxel must be >= the correspondence gate for exact search");
}

VoxelMap::VoxelMap(double voxel, int max_points_per_voxel)
    : voxel_(voxel), max_per_voxel_(max_points_per_voxel), cell_(voxel / 4.0) {
    if (!(voxel > 0.0) || max_points_per_voxel < 1) throw std::invalid_argument("VoxelMap: bad voxel or cap");
}

void VoxelMap::insert(std::span<const Point3> points) {
    for (const auto& p : points) {
        auto& bucket = voxels_[voxel_of(p, voxel_)];
        if (static_cast<int>(bucket.size()) >= max_per_voxel_) continue;
        bucket.push_back(p);
        cells_[voxel_of(p, cell_)].push_back(p);
        ++point_count_;
    }
}

namespace {

struct Offset {
    int dx, dy, dz;
};

// The 27 neighbour offsets, own cell first, then faces, edges, corners.
constexpr std::array<Offset, 27> kOffsets = [] {
    std::array<Offset, 27> out{};
    std::size_t n = 0;
    for (int order = 0; order <= 3; ++order)
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz)
                    if ((dx != 0) + (dy != 0) + (dz != 0) == order) out[n++] = {dx, dy, dz};
    return out;
}();

double gap_sq(double q, int cell, int d, double size) {
    if (d == 0) return 0.0;
    const double g = d > 0 ? (cell + 1) * size - q : q - cell * size;
    return g * g;
}

// Nearest point in the 27 cells around the query's cell that is no farther than
// sqrt(best_sq). Cells whose box is already out of reach are skipped; equally
// distant candidates keep the first found.
template <typename Cells>
const Point3* scan_neighbourhood(const Cells& cells, double size, const Point3& query, double& best_sq) {
    const VoxelKey c = voxel_of(query, size);
    const Point3* best = nullptr;
    for (const auto& o : kOffsets) {
        const double lower = gap_sq(query.x(), c.x, o.dx, size) + gap_sq(query.y(), c.y, o.dy, size) +
                             gap_sq(query.z(), c.z, o.dz, size);
        if (lower > best_sq) continue;
        auto it = cells.find({c.x + o.dx, c.y + o.dy, c.z + o.dz});
        if (it == cells.end()) continue;
        for (const auto& p : it->second) {
            const double d2 = (p - query).squaredNorm();
            if (d2 < best_sq || (d2 == best_sq && !best)) {
                best_sq = d2;
                best = &p;
            }
        }
    }
    return best;
}

}  // namespace

std::optional<Neighbor> VoxelMap::nearest(const Point3& query, double max_distance) const {
    // Every point outside the fine neighbourhood is farther than one cell, so
    // a hit within one cell is already the global nearest.
    double best_sq = std::min(max_distance, cell_) * std::min(max_distance, cell_);
    if (const Point3* p = scan_neighbourhood(cells_, cell_, query, best_sq))
        return Neighbor{*p, std::sqrt(best_sq)};
    if (max_distance <= cell_) return std::nullopt;
    best_sq = max_distance * max_distance;
    if (const Point3* p = scan_neighbourhood(voxels_, voxel_, query, best_sq))
        return Neighbor{*p, std::sqrt(best_sq)};
    return std::nullopt;
}

void VoxelMap::clear() {
    voxels_.clear();
    cells_.clear();
    point_count_ = 0;
}

std::span<const Point3> VoxelMap::voxel(const VoxelKey& key) const {
    auto it = voxels_.find(key);
    if (it == voxels_.end()) return {};
    return it->second;
}

std::vector<VoxelKey> VoxelMap::keys() const {
    std::vector<VoxelKey> out;
    out.reserve(voxels_.size());
    for (const auto& [k, v] : voxels_) out.push_back(k);
    return out;
}

std::vector<Point3> voxel_downsample(std::span<const Point3> points, double voxel) {
    if (!(voxel > 0.0)) throw std::invalid_argument("voxel_downsample: voxel must be positive");
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot;
    std::vector<Point3> sums;
    std::vector<int> counts;
    for (const auto& p : points) {
        auto [it, fresh] = slot.try_emplace(voxel_of(p, voxel), sums.size());
        if (fresh) {
            sums.push_back(p);
            counts.push_back(1);
        } else {
            sums[it->second] += p;
            ++counts[it->second];
        }
    }
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i] /= counts[i];
    return sums;
}

std::vector<Point3> stride_sample(std::span<const Point3> points, int stride) {
    if (stride < 1) throw std::invalid_argument("stride_sample: stride must be >= 1");
    std::vector<Point3> out;
    out.reserve(points.size() / stride + 1);
    for (std::size_t i = 0; i < points.size(); i += stride) out.push_back(points[i]);
    return out;
}

Pose predict_initial_guess(const OdometryState& state) {
    const auto& h = state.pose_history;
    if (h.empty()) return Pose::identity();
    if (h.size() == 1) return h.back();
    const Pose& prev = h[h.size() - 2];
    const Pose& cur = h.back();
    return compose(cur, compose(inverse(prev), cur));
}

std::vector<std::optional<Neighbor>> find_correspondences(const VoxelMap& map, std::span<const Point3> world_points,
                                                          double gate) {
    std::vector<std::optional<Neighbor>> out(world_points.size());
    const long n = static_cast<long>(world_points.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = map.nearest(world_points[i], gate);
    return out;
}

namespace serial {

std::vector<std::optional<Neighbor>> find_correspondences(const VoxelMap& map, std::span<const Point3> world_points,
                                                          double gate) {
    std::vector<std::optional<Neighbor>> out;
    out.reserve(world_points.size());
    for (const auto& p : world_points) out.push_back(map.nearest(p, gate));
    return out;
}

}  // namespace serial

Pose solve_rigid(std::span<const Point3> source, std::span<const Point3> target) {
    if (source.size() != target.size() || source.empty())
        throw std::invalid_argument("solve_rigid: need equally sized, non-empty point sets");
    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        cs += source[i];
        ct += target[i];
    }
    cs /= static_cast<double>(source.size());
    ct /= static_cast<double>(source.size());
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) h += (source[i] - cs) * (target[i] - ct).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();

    Pose out;
    out.rotation = Eigen::Quaterniond(r).normalized();
    out.translation = ct - out.rotation * cs;
    return out;
}

Pose solve_rigid_planar(std::span<const Point3> source, std::span<const Point3> target) {
    if (source.size() != target.size() || source.empty())
        throw std::invalid_argument("solve_rigid_planar: need equally sized, non-empty point sets");
    Eigen::Vector2d cs = Eigen::Vector2d::Zero(), ct = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        cs += source[i].head<2>();
        ct += target[i].head<2>();
    }
    cs /= static_cast<double>(source.size());
    ct /= static_cast<double>(source.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Eigen::Vector2d a = source[i].head<2>() - cs;
        const Eigen::Vector2d b = target[i].head<2>() - ct;
        sxx += a.dot(b);
        sxy += (a.x() * b.y() - a.y() * b.x());
    }
    const double yaw = std::atan2(sxy, sxx);
    const Eigen::Vector2d t = ct - Eigen::Rotation2Dd(yaw) * cs;
    return Pose::from_yaw(yaw, Vec3(t.x(), t.y(), 0.0));
}

Registration register_scan(const VoxelMap& map, std::span<const Point3> scan_points, const Pose& guess,
                           const IcpConfig& cfg) {
    Registration result{guess, {}};
    const double gate = cfg.max_correspondence_distance;
    std::vector<Point3> world(scan_points.size());
    std::vector<Point3> src, tgt;
    src.reserve(scan_points.size());
    tgt.reserve(scan_points.size());

    Pose pose = guess;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        for (std::size_t i = 0; i < scan_points.size(); ++i) world[i] = transform_point(pose, scan_points[i]);
        const auto matches = find_correspondences(map, world, gate);

        src.clear();
        tgt.clear();
        double residual = 0.0;
        for (std::size_t i = 0; i < matches.size(); ++i) {
            if (!matches[i]) continue;
            src.push_back(world[i]);
            tgt.push_back(matches[i]->point);
            residual += matches[i]->distance;
        }
        if (src.empty()) {
            result.pose = guess;
            result.diagnostics = {0, 0.0, iter + 1, true};
            return result;
        }

        const Pose delta = cfg.planar ? solve_rigid_planar(src, tgt) : solve_rigid(src, tgt);
        pose = compose(delta, pose);
        result.diagnostics.inliers = static_cast<int>(src.size());
        result.diagnostics.residual = residual / static_cast<double>(src.size());
        result.diagnostics.iterations = iter + 1;
        if (delta.translation.norm() < cfg.convergence_translation && rotation_angle(delta) < cfg.convergence_rotation)
            break;
    }
    result.pose = pose;
    return result;
}

void update_map(VoxelMap& map, std::span<const Point3> scan_points, const Pose& pose) {
    std::vector<Point3> world;
    world.reserve(scan_points.size());
    for (const auto& p : scan_points) world.push_back(transform_point(pose, p));
    map.insert(world);
}

Odometry::Odometry(IcpConfig cfg, const Pose& initial, const Pose& initial_motion) : cfg_(cfg) {
    cfg_.validate();
    reset(initial, initial_motion);
}

void Odometry::reset(const Pose& initial, const Pose& initial_motion) {
    initial_ = initial;
    initial_motion_ = initial_motion;
    state_ = OdometryState{initial, {}, VoxelMap(cfg_.map_voxel, cfg_.map_max_points_per_voxel), -1};
}

FrameEstimate Odometry::process(const RangeScan& scan) {
    const auto pts = scan_to_points(scan);
    return process(pts, scan.timestamp);
}

FrameEstimate Odometry::process(std::span<const Point3> sensor_points, double t, const std::optional<Pose>& motion_prior) {
    const auto pts = voxel_downsample(sensor_points, cfg_.downsample_voxel);
    const auto coarse = stride_sample(sensor_points, cfg_.registration_stride);
    FrameEstimate est;
    est.t = t;
    ++state_.frame_index;

    if (state_.frame_index == 0) {
        est.pose = initial_;
        state_.pose_history.push_back(compose(initial_, inverse(initial_motion_)));
    } else {
        Pose guess = motion_prior ? compose(state_.current_pose, *motion_prior) : predict_initial_guess(state_);
        if (cfg_.planar) {
            // The solve never touches z, roll or pitch, so the prior must not move them either.
            const Pose& cur = state_.current_pose;
            guess.rotation = (Eigen::AngleAxisd(wrap_angle(guess.yaw() - cur.yaw()), Vec3::UnitZ()) * cur.rotation).normalized();
            guess.translation.z() = cur.translation.z();
        }
        if (state_.map.empty() || coarse.empty()) {
            est.pose = guess;
            est.diagnostics.diverged = true;
        } else {
            const auto reg = register_scan(state_.map, coarse, guess, cfg_);
            est.pose = reg.pose;
            est.diagnostics = reg.diagnostics;
        }
    }

    update_map(state_.map, pts, est.pose);
    state_.current_pose = est.pose;
    state_.pose_history.push_back(est.pose);
    while (state_.pose_history.size() > OdometryState::kHistory) state_.pose_history.pop_front();
    return est;
}

OdometryRun run_odometry(std::span<const RangeScan> scans, const IcpConfig& cfg, const Pose& initial,
                         const Pose& initial_motion) {
    if (scans.empty()) throw std::invalid_argument("run_odometry: need at least one scan");
    Odometry odo(cfg, initial, initial_motion);
    OdometryRun run;
    for (const auto& scan : scans) {
        const auto est = odo.process(scan);
        run.times.push_back(est.t);
        run.poses.push_back(est.pose);
        run.diagnostics.push_back(est.diagnostics);
    }
    return run;
}

}  // namespace spooflab
