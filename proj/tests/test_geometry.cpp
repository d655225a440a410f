#include "helpers.hpp"

#include <cmath>
#include <random>

using namespace spooflab;
using spooflab::testing::check_pose_near;

namespace {

Pose random_pose(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return {q.normalized(), Vec3(n(rng), n(rng), n(rng)) * 10.0};
}

}  // namespace

TEST_CASE("compose with identity and inverse") {
    check_pose_near(compose(Pose::identity(), Pose::identity()), Pose::identity(), 1e-12);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Pose p = random_pose(rng);
        check_pose_near(compose(p, inverse(p)), Pose::identity(), 1e-9);
        check_pose_near(compose(inverse(p), p), Pose::identity(), 1e-9);
        CHECK(std::abs(compose(p, p).rotation.norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("pure translations commute") {
    const Pose r = compose(Pose::from_translation({1, 0, 0}), Pose::from_translation({0, 2, 0}));
    check_pose_near(r, Pose::from_translation({1, 2, 0}), 1e-12);
}

TEST_CASE("compose is associative") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        check_pose_near(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9);
    }
}

TEST_CASE("compose applies b first") {
    // Rotate 90 degrees, then shift along the rotated x axis.
    const Pose a = Pose::from_yaw(std::numbers::pi / 2);
    const Pose b = Pose::from_translation({1, 0, 0});
    const Point3 p = transform_point(compose(a, b), Point3::Zero());
    CHECK(p.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(1.0));
}

TEST_CASE("inverse") {
    check_pose_near(inverse(Pose::identity()), Pose::identity(), 1e-12);
    check_pose_near(inverse(Pose::from_translation({1, 2, 3})), Pose::from_translation({-1, -2, -3}), 1e-12);
    const Pose inv = inverse(Pose::from_yaw(std::numbers::pi / 2));
    CHECK(inv.yaw() == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("transform_point") {
    CHECK((transform_point(Pose::identity(), {1, 1, 1}) - Point3(1, 1, 1)).norm() < 1e-12);
    CHECK((transform_point(Pose::from_yaw(std::numbers::pi / 2), {1, 0, 0}) - Point3(0, 1, 0)).norm() < 1e-12);
    CHECK((transform_point(Pose::from_translation({0, 0, 5}), Point3::Zero()) - Point3(0, 0, 5)).norm() < 1e-12);
}

TEST_CASE("wrap_angle lands in [-pi, pi)") {
    CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(-std::numbers::pi));
    CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
    CHECK(wrap_angle(-0.25) == doctest::Approx(-0.25));
    for (double a = -20.0; a < 20.0; a += 0.37) {
        const double w = wrap_angle(a);
        CHECK(w >= -std::numbers::pi);
        CHECK(w < std::numbers::pi);
        CHECK(std::abs(std::remainder(w - a, 2 * std::numbers::pi)) < 1e-9);
    }
}

TEST_CASE("beam conversions") {
    const Point3 a = beam_to_point({0.0, 0.0, 10.0});
    CHECK((a - Point3(10, 0, 0)).norm() < 1e-12);
    const Point3 b = beam_to_point({std::numbers::pi / 2, 0.0, 2.0});
    CHECK((b - Point3(0, 2, 0)).norm() < 1e-12);
    const PolarBeam c = point_to_beam({3, 4, 0});
    CHECK(c.azimuth == doctest::Approx(std::atan2(4.0, 3.0)));
    CHECK(c.elevation == doctest::Approx(0.0));
    REQUIRE(c.range);
    CHECK(*c.range == doctest::Approx(5.0));
    CHECK_THROWS_AS(beam_to_point({0.0, 0.0, std::nullopt}), std::domain_error);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-40.0, 40.0);
    for (int i = 0; i < 100; ++i) {
        const Point3 p(u(rng), u(rng), u(rng));
        CHECK((beam_to_point(point_to_beam(p)) - p).norm() < 1e-9);
    }
}
