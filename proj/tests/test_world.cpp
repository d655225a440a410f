#include "helpers.hpp"

#include "spooflab/dead_reckoning.hpp"
#include "spooflab/world.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace spooflab;

namespace {

LidarSpec flat_spec() { return LidarSpec::uniform(1, 0.0, 0.0, deg2rad(1.0), 100.0, 0.1); }

// Ray against the four walls x = +-h, y = +-h, solved per wall.
double room_oracle(double azimuth, double h) {
    const double dx = std::cos(azimuth), dy = std::sin(azimuth);
    double best = INFINITY;
    for (double w : {h, -h}) {
        if (std::abs(dx) > 1e-12 && w / dx > 0) best = std::min(best, w / dx);
        if (std::abs(dy) > 1e-12 && w / dy > 0) best = std::min(best, w / dy);
    }
    return best;
}

World square_room(double side) {
    const double h = side / 2;
    World w;
    w.name = "room";
    w.rects.push_back({{h, -h, -5}, {0, side, 0}, {0, 0, 10}});
    w.rects.push_back({{-h, -h, -5}, {0, side, 0}, {0, 0, 10}});
    w.rects.push_back({{-h, h, -5}, {side, 0, 0}, {0, 0, 10}});
    w.rects.push_back({{-h, -h, -5}, {side, 0, 0}, {0, 0, 10}});
    return w;
}

}  // namespace

TEST_CASE("lidar spec") {
    const auto s = LidarSpec::vlp16();
    CHECK(s.channel_count() == 16);
    CHECK(s.azimuth_bins() == 1800);
    CHECK(s.azimuth_of(0) == doctest::Approx(-std::numbers::pi));
    CHECK(s.bin_of(s.azimuth_of(123)) == 123);
    CHECK_NOTHROW(s.validate());
    LidarSpec bad = s;
    bad.max_range = -1;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("sample_trajectory uniform motion") {
    const auto gt = sample_trajectory({{0, 0, 0}, {10, 0, 0}}, 1.0, LidarSpec::vlp16());
    REQUIRE(gt.size() == 101);
    CHECK((gt.poses[50].translation - Vec3(5, 0, 0)).norm() < 1e-9);
    CHECK(gt.times[50] == doctest::Approx(5.0));
    for (const auto& p : gt.poses) CHECK(rotation_angle(p) < 1e-12);
}

TEST_CASE("sample_trajectory heading follows the path") {
    const auto gt = sample_trajectory({{0, 0, 0}, {10, 0, 0}, {10, 10, 0}}, 1.0, LidarSpec::vlp16());
    REQUIRE(gt.size() == 201);
    // Heading recomputed from the positions themselves.
    for (std::size_t i = 0; i + 1 < gt.size(); ++i) {
        const Vec3 d = gt.poses[i + 1].translation - gt.poses[i].translation;
        const double fd = std::atan2(d.y(), d.x());
        const bool segment_interior = (i + 1 < 100) || (i > 100);
        if (segment_interior) CHECK(std::abs(wrap_angle(gt.poses[i].yaw() - fd)) < 1e-9);
    }
    CHECK(gt.poses[99].yaw() == doctest::Approx(0.0));
    CHECK(gt.poses[100].yaw() == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("raycast against an axis-aligned wall") {
    World w;
    w.rects.push_back({{20, -50, -50}, {0, 100, 0}, {0, 0, 100}});
    const auto spec = flat_spec();
    const auto scan = raycast_scan(w, Pose::identity(), spec, 0.0);
    const auto& r = scan.at(0, spec.bin_of(0.0));
    REQUIRE(r);
    CHECK(*r == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("raycast in an empty world returns nothing") {
    const auto scan = raycast_scan(World{}, Pose::identity(), LidarSpec::vlp16(), 0.0);
    CHECK(scan.return_count() == 0);
}

TEST_CASE("raycast in a square room matches closed form") {
    const auto spec = flat_spec();
    const World room = square_room(10.0);
    const auto scan = raycast_scan(room, Pose::identity(), spec, 0.0);
    CHECK(*scan.at(0, spec.bin_of(0.0)) == doctest::Approx(5.0));
    CHECK(*scan.at(0, spec.bin_of(std::numbers::pi / 4)) == doctest::Approx(5.0 * std::sqrt(2.0)));
    for (int j = 0; j < spec.azimuth_bins(); ++j) {
        const auto& r = scan.at(0, j);
        REQUIRE(r);
        CHECK(*r == doctest::Approx(room_oracle(spec.azimuth_of(j), 5.0)).epsilon(1e-9));
    }
}

TEST_CASE("parallel raycast equals the serial reference") {
    const World w = feature_rich_world();
    const Pose p = Pose::from_yaw(0.3, {5, 1, 1.8});
    const auto a = raycast_scan(w, p, LidarSpec::vlp16(), 0.0);
    const auto b = serial::raycast_scan(w, p, LidarSpec::vlp16(), 0.0);
    CHECK(a.ranges == b.ranges);
}

TEST_CASE("range noise stays within the sensor limits") {
    World w;
    w.rects.push_back({{99.99, -50, -50}, {0, 100, 0}, {0, 0, 100}});
    auto scan = raycast_scan(w, Pose::identity(), flat_spec(), 0.0);
    std::mt19937_64 rng(1);
    add_range_noise(scan, 0.5, rng);
    for (const auto& r : scan.ranges)
        if (r) CHECK((*r >= 0.0 && *r <= 100.0));
}

TEST_CASE("fixtures are valid") {
    CHECK_NOTHROW(feature_rich_world().validate());
    CHECK_NOTHROW(sparse_world().validate());
    CHECK_THROWS(fixture_world("moon"));
}

TEST_CASE("synthetic dead reckoning") {
    const auto gt = sample_trajectory({{0, 0, 0}, {10, 0, 0}, {10, 10, 0}}, 1.0, LidarSpec::vlp16());
    SUBCASE("zero noise reproduces the true increments") {
        const auto dr = synth_dead_reckoning(gt, {0.0, 0.0}, 4);
        REQUIRE(dr.relative_poses.size() == gt.size() - 1);
        for (std::size_t i = 0; i + 1 < gt.size(); ++i)
            spooflab::testing::check_pose_near(dr.relative_poses[i],
                                               compose(inverse(gt.poses[i]), gt.poses[i + 1]), 1e-12);
    }
    SUBCASE("same seed, same stream") {
        const auto a = synth_dead_reckoning(gt, {}, 11);
        const auto b = synth_dead_reckoning(gt, {}, 11);
        for (std::size_t i = 0; i < a.relative_poses.size(); ++i) {
            CHECK(a.relative_poses[i].translation == b.relative_poses[i].translation);
            CHECK(a.relative_poses[i].rotation.coeffs() == b.relative_poses[i].rotation.coeffs());
        }
    }
}

TEST_CASE("dead reckoning drift grows like a random walk") {
    // 1000 frames standing still; only translation noise.
    GroundTruth gt;
    for (int i = 0; i <= 1000; ++i) {
        gt.times.push_back(0.1 * i);
        gt.poses.push_back(Pose::identity());
    }
    double sum = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
        const auto dr = synth_dead_reckoning(gt, {0.01, 0.0}, seed);
        sum += integrate(dr, Pose::identity()).back().translation.norm();
    }
    const double mean = sum / 100.0;
    CHECK(mean >= 0.1);
    CHECK(mean <= 1.0);
}

TEST_CASE("scan replay round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "spooflab_replay_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "scans");
    std::ofstream(dir / "groundtruth.csv") << "t,x,y,z,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\n0.1,1,0,0,0,0,0,1\n";
    std::ofstream(dir / "scans" / "000.txt") << "0 0 5\n";
    std::ofstream(dir / "scans" / "001.txt") << "0 0 4\n";
    const auto spec = flat_spec();
    const auto replay = load_scan_replay(dir, spec);
    REQUIRE(replay.scans.size() == 2);
    CHECK(replay.ground_truth.size() == 2);
    CHECK(*replay.scans[1].at(0, spec.bin_of(0.0)) == doctest::Approx(4.0));
    fs::remove_all(dir);
}
