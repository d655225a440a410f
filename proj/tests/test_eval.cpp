#include "helpers.hpp"

#include "spooflab/eval.hpp"

#include <random>

using namespace spooflab;

namespace {

GroundTruth straight(int n) {
    GroundTruth gt;
    for (int i = 0; i < n; ++i) {
        gt.times.push_back(0.1 * i);
        gt.poses.push_back(Pose::from_translation({0.5 * i, 0, 0}));
    }
    return gt;
}

std::vector<DetectionFrame> labelled(int n, const Interval& atk) {
    std::vector<DetectionFrame> log;
    for (int i = 0; i < n; ++i) {
        DetectionFrame f;
        f.t = 0.1 * i;
        f.attacked = in_intervals(f.t, std::span(&atk, 1));
        log.push_back(f);
    }
    return log;
}

}  // namespace

TEST_CASE("ape") {
    const auto gt = straight(50);
    const auto same = ape(gt.times, gt.poses, gt);
    CHECK(same.max == 0.0);
    CHECK(same.rmse == 0.0);

    std::vector<Pose> shifted;
    for (const auto& p : gt.poses) shifted.push_back(compose(Pose::from_translation({3, 4, 0}), p));
    const auto s = ape(gt.times, shifted, gt);
    for (double e : s.series) CHECK(e == doctest::Approx(5.0));
    CHECK(s.max == doctest::Approx(5.0));
    CHECK(s.rmse == doctest::Approx(5.0));

    const auto long_gt = straight(1001);
    std::vector<Pose> drift;
    for (std::size_t i = 0; i < long_gt.size(); ++i)
        drift.push_back(compose(Pose::from_translation({0, 0.01 * i, 0}), long_gt.poses[i]));
    CHECK(std::abs(ape(long_gt.times, drift, long_gt).max - 10.0) <= 1e-9);

    CHECK_THROWS(ape(std::span(gt.times).first(10), std::span(gt.poses).first(10), gt));
    auto late = gt.times;
    late[3] += 0.01;
    CHECK_THROWS(ape(late, gt.poses, gt));
}

TEST_CASE("asr") {
    std::vector<TrialResult> all(4);
    for (auto& t : all) t.ape_max = 10.0;
    CHECK(asr(all, 3.0) == doctest::Approx(100.0));
    for (auto& t : all) t.ape_max = 1.0;
    CHECK(asr(all, 3.0) == 0.0);
    std::vector<TrialResult> half(100);
    for (int i = 0; i < 100; ++i) half[i].ape_max = i < 50 ? 4.0 : 2.0;
    CHECK(asr(half, 3.0) == doctest::Approx(50.0));
    CHECK(half[0].success_at(4.0));
    CHECK_THROWS(asr(std::vector<TrialResult>{}, 3.0));
}

TEST_CASE("intervals") {
    const std::vector<Interval> a{{3.0, 13.0}};
    CHECK(in_intervals(3.0, a));
    CHECK(in_intervals(13.0, a));
    CHECK_FALSE(in_intervals(13.1, a));
    CHECK(near_boundary(2.5, a, 0.5));
    CHECK(near_boundary(13.4, a, 0.5));
    CHECK_FALSE(near_boundary(8.0, a, 0.5));
}

TEST_CASE("precision and recall") {
    const Interval atk{5.0, 10.0};
    const std::vector<Interval> atks{atk};
    auto log = labelled(200, atk);

    SUBCASE("perfect") {
        for (auto& f : log) f.flagged = f.attacked;
        const auto pr = precision_recall(log, atks, 0.5);
        CHECK(pr.precision == 1.0);
        CHECK(pr.recall == 1.0);
    }
    SUBCASE("never flags") {
        const auto pr = precision_recall(log, atks, 0.5);
        CHECK(pr.recall == 0.0);
        CHECK(pr.precision == 0.0);
        CHECK_FALSE(pr.diagnostic.empty());
    }
    SUBCASE("flags everything, half attacked") {
        auto even = labelled(200, {-0.05, 9.95});
        for (auto& f : even) f.flagged = true;
        const std::vector<Interval> first_half{{-0.05, 9.95}};
        const auto pr = precision_recall(even, first_half, 0.0);
        CHECK(pr.precision == doctest::Approx(0.5));
        CHECK(pr.recall == 1.0);
    }
    SUBCASE("edge frames are ignored") {
        for (auto& f : log) f.flagged = f.t >= 4.6 && f.t <= 10.4;
        const auto pr = precision_recall(log, atks, 0.5);
        CHECK(pr.fp == 0);
        CHECK(pr.precision == 1.0);
    }
    SUBCASE("single class rejected") {
        CHECK_THROWS(precision_recall(labelled(20, {100, 101}), atks, 0.5));
    }
}

TEST_CASE("pr curve") {
    const Interval atk{5.0, 10.0};
    const std::vector<Interval> atks{atk};
    SUBCASE("separable scores reach (1, 1)") {
        auto log = labelled(200, atk);
        for (auto& f : log) f.score = f.attacked ? 2.0 + f.t : f.t * 0.01;
        const auto c = pr_curve(log, atks, 0.5);
        CHECK(std::any_of(c.begin(), c.end(), [](const PrPoint& p) { return p.precision == 1.0 && p.recall == 1.0; }));
        for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].threshold < c[i - 1].threshold);
    }
    SUBCASE("one unique score") {
        auto log = labelled(200, atk);
        for (auto& f : log) f.score = 0.7;
        CHECK(pr_curve(log, atks, 0.5).size() == 1);
    }
    SUBCASE("uninformative scores sit at the class prior") {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<DetectionFrame> log(10000);
        const std::vector<Interval> first_half{{-0.05, 499.95}};
        for (int i = 0; i < 10000; ++i) {
            log[i].t = 0.1 * i;
            log[i].attacked = i < 5000;
            log[i].score = u(rng);
        }
        const auto c = pr_curve(log, first_half, 0.0);
        CHECK(c.size() == 10000);
        // The first thresholds flag only a handful of frames, so their
        // precision is a coin flip; check once a tenth of positives is in.
        for (const auto& p : c)
            if (p.recall >= 0.1) CHECK(std::abs(p.precision - 0.5) <= 0.05);
        // Brute-force check of a few points against precision_recall.
        for (std::size_t k : {10ul, 2500ul, 9999ul}) {
            auto flagged = log;
            for (auto& f : flagged) f.flagged = f.score >= c[k].threshold;
            const auto pr = precision_recall(flagged, first_half, 0.0);
            CHECK(pr.precision == doctest::Approx(c[k].precision));
            CHECK(pr.recall == doctest::Approx(c[k].recall));
        }
    }
}

TEST_CASE("mean and sample sd") {
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    const auto s = mean_sd(v);
    CHECK(s.mean == doctest::Approx(5.0));
    CHECK(s.sd == doctest::Approx(std::sqrt(32.0 / 7.0)));
    CHECK(mean_sd(std::vector<double>{3.0}).sd == 0.0);
}

TEST_CASE("sweep table") {
    SweepTable t;
    t.parameter = "shape";
    for (const char* v : {"cylinder", "corner", "plane"}) {
        std::vector<TrialResult> tr(2);
        tr[0].ape_max = std::string(v) == "corner" ? 9.0 : 1.0;
        tr[1].ape_max = 2.0;
        t.add(v, tr);
    }
    CHECK(t.rows.size() == 3);
    CHECK(t.argmax_ape().value == "corner");
    const std::string csv = t.to_csv();
    CHECK(csv.rfind("shape,trials,asr,ape_max_mean,ape_max_sd,precision,recall\n", 0) == 0);
    CHECK(csv.find("corner,2,50.000000,5.500000") != std::string::npos);
    CHECK_THROWS(SweepTable{}.argmax_ape());
}
