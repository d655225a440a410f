#pragma once

#include "spooflab/geometry.hpp"

#include "doctest.h"

namespace spooflab::testing {

inline void check_pose_near(const Pose& a, const Pose& b, double tol) {
    CHECK(rotation_angle(compose(inverse(a), b)) <= tol);
    CHECK((a.translation - b.translation).norm() <= tol);
}

}  // namespace spooflab::testing
