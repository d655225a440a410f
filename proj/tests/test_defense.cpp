#include "helpers.hpp"

#include "spooflab/defense.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace spooflab;
using spooflab::testing::check_pose_near;

namespace {

DetectorInputs forced(bool over) { return {over ? 2.0 : 0.0, 0.0, true}; }

DetectorConfig half_half(double threshold) {
    DetectorConfig c;
    c.w_ori = 0.5;
    c.w_speed = 0.5;
    c.threshold = threshold;
    return c;
}

struct LogRow {
    double t, e_ori, e_speed;
    bool flagged;
};

std::vector<LogRow> read_log(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::string line;
    std::getline(in, line);
    std::vector<LogRow> rows;
    while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        LogRow r;
        double d;
        int f;
        ss >> r.t >> r.e_ori >> r.e_speed >> d >> f;
        r.flagged = f != 0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("orientation and speed errors") {
    CHECK(orientation_error({1, 0, 0}, {2, 0, 0}) == doctest::Approx(0.0));
    CHECK(orientation_error({1, 0, 0}, {-1, 0, 0}) == doctest::Approx(2.0));
    CHECK(orientation_error({0, 1, 0}, {3, 0, 0}) == doctest::Approx(1.0));
    CHECK(orientation_error({0.01, 0, 0}, {-1, 0, 0}) == 0.0);
    CHECK(speed_error({1, 0, 0}, {1, 0, 0}) == 0.0);
    CHECK(speed_error({1, 0, 0}, {0, 0, 0}) == doctest::Approx(1.0));
    CHECK(speed_error({3, 0, 0}, {0, 4, 0}) == doctest::Approx(5.0));
}

TEST_CASE("detection metric") {
    CHECK(detection_metric(0, 0, half_half(1)) == 0.0);
    DetectorConfig ori;
    ori.w_ori = 1.0;
    ori.w_speed = 0.0;
    CHECK(detection_metric(2, 7, ori) == doctest::Approx(2.0));
    CHECK(std::abs(detection_metric(1, 3, half_half(1)) - 2.0) <= 1e-9);
}

TEST_CASE("gap transform and reconcile") {
    check_pose_near(predict_gap_transform({3, 1, 0}, 0.4, 0.0), Pose::identity(), 1e-12);
    check_pose_near(predict_gap_transform({1, 0, 0}, 0.0, 2.0), Pose::from_translation({2, 0, 0}), 1e-12);
    check_pose_near(predict_gap_transform(Vec3::Zero(), 0.1, 1.0), Pose::from_yaw(0.1), 1e-12);
    CHECK_THROWS(predict_gap_transform(Vec3::Zero(), 0.0, -1.0));

    const Pose I = Pose::identity();
    check_pose_near(reconcile(I, I, I), I, 1e-12);
    const Pose r = reconcile(Pose::from_translation({1, 0, 0}), Pose::from_translation({2, 0, 0}),
                             Pose::from_translation({3, 0, 0}));
    CHECK((r.translation - Vec3(6, 0, 0)).norm() <= 1e-9);
    const Pose q = reconcile(Pose::from_yaw(std::numbers::pi / 2), Pose::from_translation({1, 0, 0}), I);
    CHECK((q.translation - Vec3(0, 1, 0)).norm() <= 1e-9);
}

TEST_CASE("no attack: defended output is the shadow trajectory") {
    DefenseState s = DefenseState::start(Pose::identity());
    const DetectorConfig cfg = half_half(5.0);
    const Pose step = Pose::from_yaw(0.01, {0.1, 0, 0});
    Pose shadow = Pose::identity();
    for (int i = 0; i < 100; ++i) {
        if (i > 0) shadow = compose(shadow, step);
        const auto rec = defense_step(s, 0.1 * i, shadow, step, cfg);
        CHECK(rec.source == PoseSource::slam);
        CHECK(rec.pose.translation == shadow.translation);
        CHECK(rec.pose.rotation.coeffs() == shadow.rotation.coeffs());
    }
}

TEST_CASE("state machine trace") {
    DefenseState s = DefenseState::start(Pose::identity());
    DetectorConfig cfg = half_half(1.0);
    cfg.k_on = 3;
    int entered = -1;
    for (int i = 0; i < 300; ++i) {
        const bool over = i >= 100 && i < 200;
        const auto rec = decide(s, 0.1 * i, Pose::identity(), Pose::identity(), forced(over), cfg);
        if (entered < 0 && rec.phase == Phase::attack) entered = i;
        if (rec.phase == Phase::attack) CHECK(rec.source == PoseSource::dead_reckoning);
        else CHECK(rec.source == PoseSource::slam);
        if (rec.restart) CHECK(i == 200 + cfg.k_off - 1);
    }
    CHECK(entered == 102);
    CHECK(s.phase == Phase::normal);
    CHECK_THROWS(decide(s, 0.0, Pose::identity(), Pose::identity(), forced(false), cfg));
}

TEST_CASE("restart re-anchors on the constant-velocity chain") {
    // Straight line at 1 m/s, exact dead reckoning. The shadow freezes from
    // frame 99 to 199, then moves at the true speed again.
    const double dt = 0.1;
    DetectorConfig cfg = half_half(0.275);
    DefenseState s = DefenseState::start(Pose::identity());
    const Pose step = Pose::from_translation({dt, 0, 0});
    auto shadow_x = [](int i) { return i < 99 ? 0.1 * i : (i < 199 ? 9.9 : 9.9 + 0.1 * (i - 199)); };

    int entered = -1, restart = -1, last_unflagged = -1;
    Pose restart_pose;
    for (int i = 0; i < 260 && restart < 0; ++i) {
        const auto rec = defense_step(s, dt * i, Pose::from_translation({shadow_x(i), 0, 0}), step, cfg);
        if (entered < 0 && rec.phase == Phase::attack) entered = i;
        if (entered < 0 && !rec.flagged) last_unflagged = i;
        if (rec.restart) {
            restart = i;
            restart_pose = rec.pose;
        }
    }
    // Hand trace: shadow speed over the last second falls 0.1 m/s per frame
    // after the freeze, so D = 0.05 * (i - 99) first passes 0.275 at frame 105.
    CHECK(last_unflagged == 104);
    CHECK(entered == 107);
    // After the thaw D = 0.5 - 0.05 * (i - 199) drops below 0.275 at frame 204;
    // ten clean frames later the shadow restarts.
    CHECK(restart == 213);

    // The anchor is the last un-flagged defended pose: the frozen shadow at 9.9 m.
    const double t_det = 10.4, t_restart = 21.3;
    const Pose world_T_det = Pose::from_translation({9.9, 0, 0});
    const Pose det_T_restart = Pose::from_translation({1.0 * (t_restart - t_det), 0, 0});
    const Pose expected = compose(compose(world_T_det, det_T_restart), Pose::identity());
    CHECK((restart_pose.translation - expected.translation).norm() <= 1e-6);
    CHECK(rotation_angle(compose(inverse(restart_pose), expected)) <= 1e-6);
    CHECK((restart_pose.translation - Vec3(20.8, 0, 0)).norm() <= 1e-6);
}

TEST_CASE("dead-reckoning gap model") {
    DetectorConfig cfg = half_half(1.0);
    cfg.gap_model = GapModel::dead_reckoning;
    DefenseState s = DefenseState::start(Pose::identity());
    const Pose step = Pose::from_yaw(0.02, {0.1, 0, 0});
    Pose truth = Pose::identity();
    Pose restart_pose;
    for (int i = 0; i < 80; ++i) {
        if (i > 0) truth = compose(truth, step);
        const bool over = i >= 20 && i < 40;
        const auto rec = decide(s, 0.1 * i, truth, step, forced(over), cfg);
        if (rec.restart) restart_pose = rec.pose;
    }
    // Exact dead reckoning bridges the gap exactly.
    CHECK(restart_pose.translation.norm() > 1.0);
    const Pose truth_at_restart = [&] {
        Pose p = Pose::identity();
        for (int i = 1; i <= 40 + cfg.k_off - 1; ++i) p = compose(p, step);
        return p;
    }();
    check_pose_near(restart_pose, truth_at_restart, 1e-9);
}

TEST_CASE("detector config validation") {
    CHECK_NOTHROW(DetectorConfig{}.validate());
    DetectorConfig c;
    c.w_ori = 0.7;
    CHECK_THROWS(c.validate());
    c = DetectorConfig{};
    c.k_on = 0;
    CHECK_THROWS(c.validate());
    CHECK(gap_model_from_string("dead_reckoning") == GapModel::dead_reckoning);
    CHECK_THROWS(gap_model_from_string("kalman"));
}

TEST_CASE("flag decisions survive positive rescaling") {
    const auto log = read_log(SPOOFLAB_TEST_DATA "/detector_log.csv");
    REQUIRE(log.size() > 100);
    DetectorConfig base;
    base.w_ori = 0.84764086948468542;
    base.w_speed = 0.15235913051531458;
    base.threshold = 0.6232743465349867;

    auto trace = [&](const DetectorConfig& cfg) {
        DefenseState s = DefenseState::start(Pose::identity());
        std::vector<bool> flags;
        for (std::size_t i = 0; i < log.size(); ++i) {
            const DetectorInputs in{log[i].e_ori, log[i].e_speed, i >= 10};
            flags.push_back(decide(s, log[i].t, Pose::identity(), Pose::identity(), in, cfg).flagged);
        }
        return flags;
    };
    const auto reference = trace(base);
    CHECK(std::count(reference.begin(), reference.end(), true) > 10);
    for (std::size_t i = 0; i < log.size(); ++i) CHECK(reference[i] == log[i].flagged);

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> log_scale(std::log(1e-3), std::log(1e3));
    for (int k = 0; k < 100; ++k) {
        const double c = std::exp(log_scale(rng));
        DetectorConfig scaled = base;
        scaled.w_ori *= c;
        scaled.w_speed *= c;
        scaled.threshold *= c;
        CHECK(trace(scaled) == reference);
    }
}

namespace {

// Attacks show up only in e_ori; e_speed is noise with the same law in and out.
std::vector<TrainingRun> orientation_only(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<TrainingRun> runs(3);
    for (auto& r : runs) {
        r.attacks = {{5.0, 10.0}};
        for (int i = 0; i < 150; ++i) {
            const double t = 0.1 * i;
            const bool atk = t >= 5.0 && t <= 10.0;
            r.t.push_back(t);
            r.e_ori.push_back(std::abs((atk ? 1.0 : 0.05) + 0.05 * n(rng)));
            r.e_speed.push_back(std::abs(0.5 + 0.5 * n(rng)));
        }
    }
    return runs;
}

}  // namespace

TEST_CASE("tuner favours the informative input") {
    const auto runs = orientation_only(1);
    TunerOptions opts;
    opts.trials = 300;
    opts.seed = 17;
    const auto tuned = tune_weights(runs, opts);
    CHECK(tuned.config.w_ori >= 0.5);
    CHECK(tuned.config.w_ori + tuned.config.w_speed == doctest::Approx(1.0));
    CHECK(tuned.f1 == doctest::Approx(frame_f1(runs, tuned.config.w_ori, tuned.config.threshold, opts.boundary_margin)));

    // Brute force over a grid: the best F1 with w_ori >= 0.5 beats any with w_ori < 0.5.
    double best_hi = 0.0, best_lo = 0.0;
    for (int wi = 0; wi <= 20; ++wi) {
        const double w = wi / 20.0;
        for (int ti = 0; ti <= 80; ++ti) {
            const double thr = std::pow(10.0, -3.0 + 4.0 * ti / 80.0);
            const double f = frame_f1(runs, w, thr, opts.boundary_margin);
            (w >= 0.5 ? best_hi : best_lo) = std::max(w >= 0.5 ? best_hi : best_lo, f);
        }
    }
    CHECK(best_hi > best_lo);
}

TEST_CASE("tuner determinism and edge cases") {
    const auto runs = orientation_only(2);
    TunerOptions opts;
    opts.trials = 50;
    opts.seed = 99;
    const auto a = tune_weights(runs, opts);
    const auto b = tune_weights(runs, opts);
    CHECK(a.config.w_ori == b.config.w_ori);
    CHECK(a.config.threshold == b.config.threshold);

    // One trial returns the first sampled candidate.
    opts.trials = 1;
    const auto one = tune_weights(runs, opts);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double w = unit(rng);
    const double thr = std::exp(std::log(1e-3) + (std::log(10.0) - std::log(1e-3)) * unit(rng));
    CHECK(one.config.w_ori == w);
    CHECK(one.config.threshold == doctest::Approx(thr));

    opts.trials = 0;
    CHECK_THROWS(tune_weights(runs, opts));
    std::vector<TrainingRun> clean(1);
    clean[0].t = {0.0, 0.1};
    clean[0].e_ori = {0.0, 0.0};
    clean[0].e_speed = {0.0, 0.0};
    opts.trials = 5;
    CHECK_THROWS(tune_weights(clean, opts));
}
