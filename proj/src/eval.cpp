#include "spooflab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace spooflab {

bool in_intervals(double t, std::span<const Interval> intervals) {
    return std::any_of(intervals.begin(), intervals.end(), [&](const Interval& i) { return t >= i.first && t <= i.second; });
}

bool near_boundary(double t, std::span<const Interval> intervals, double margin) {
    return std::any_of(intervals.begin(), intervals.end(), [&](const Interval& i) {
        return std::abs(t - i.first) <= margin || std::abs(t - i.second) <= margin;
    });
}

ApeResult ape(std::span<const double> est_times, std::span<const Pose> est, const GroundTruth& gt) {
    if (est.size() != gt.size() || est_times.size() != est.size())
        throw std::invalid_argument("ape: trajectory lengths differ");
    ApeResult out;
    out.series.reserve(est.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (std::abs(est_times[i] - gt.times[i]) > 1e-6) throw std::invalid_argument("ape: timestamps differ");
        const double e = (est[i].translation - gt.poses[i].translation).norm();
        out.series.push_back(e);
        out.max = std::max(out.max, e);
        sq += e * e;
    }
    if (!est.empty()) out.rmse = std::sqrt(sq / static_cast<double>(est.size()));
    return out;
}

double asr(std::span<const TrialResult> trials, double tau) {
    if (trials.empty()) throw std::invalid_argument("asr: no trials");
    const auto hits = std::count_if(trials.begin(), trials.end(), [&](const TrialResult& r) { return r.success_at(tau); });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(trials.size());
}

namespace {

template <typename Flag>
PrecisionRecall count(std::span<const DetectionFrame> log, std::span<const Interval> attacks, double margin,
                      Flag flagged) {
    PrecisionRecall pr;
    for (const auto& f : log) {
        if (near_boundary(f.t, attacks, margin)) continue;
        const bool flag = flagged(f);
        if (flag && f.attacked) ++pr.tp;
        else if (flag) ++pr.fp;
        else if (f.attacked) ++pr.fn;
        else ++pr.tn;
    }
    if (pr.tp + pr.fn == 0 || pr.fp + pr.tn == 0)
        throw std::invalid_argument("precision_recall: log needs both attacked and clean frames");
    pr.recall = static_cast<double>(pr.tp) / static_cast<double>(pr.tp + pr.fn);
    if (pr.tp + pr.fp == 0) pr.diagnostic = "no frames flagged; precision reported as 0";
    else pr.precision = static_cast<double>(pr.tp) / static_cast<double>(pr.tp + pr.fp);
    return pr;
}

}  // namespace

PrecisionRecall precision_recall(std::span<const DetectionFrame> log, std::span<const Interval> attacks,
                                 double boundary_margin) {
    return count(log, attacks, boundary_margin, [](const DetectionFrame& f) { return f.flagged; });
}

std::vector<PrPoint> pr_curve(std::span<const DetectionFrame> log, std::span<const Interval> attacks,
                              double boundary_margin) {
    std::vector<const DetectionFrame*> kept;
    long pos = 0;
    for (const auto& f : log) {
        if (near_boundary(f.t, attacks, boundary_margin)) continue;
        kept.push_back(&f);
        pos += f.attacked;
    }
    if (pos == 0 || pos == static_cast<long>(kept.size()))
        throw std::invalid_argument("precision_recall: log needs both attacked and clean frames");
    std::stable_sort(kept.begin(), kept.end(), [](const auto* a, const auto* b) { return a->score > b->score; });
    // Sweep thresholds downwards; every frame at or above the current score is flagged.
    std::vector<PrPoint> out;
    long tp = 0, flagged = 0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        tp += kept[i]->attacked;
        ++flagged;
        if (i + 1 < kept.size() && kept[i + 1]->score == kept[i]->score) continue;
        out.push_back({kept[i]->score, static_cast<double>(tp) / static_cast<double>(flagged),
                       static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return out;
}

MeanSd mean_sd(std::span<const double> values) {
    MeanSd out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

void SweepTable::add(const std::string& value, std::span<const TrialResult> trials, std::optional<PrecisionRecall> pr) {
    SweepRow row;
    row.value = value;
    row.trials = static_cast<int>(trials.size());
    row.asr = asr(trials, tau);
    std::vector<double> m;
    for (const auto& t : trials) m.push_back(t.ape_max);
    const auto s = mean_sd(m);
    row.ape_max_mean = s.mean;
    row.ape_max_sd = s.sd;
    if (pr) {
        row.precision = pr->precision;
        row.recall = pr->recall;
    }
    rows.push_back(row);
}

std::string SweepTable::to_csv() const {
    std::string out = parameter + ",trials,asr,ape_max_mean,ape_max_sd,precision,recall\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%d,%.6f,%.6f,%.6f,", r.trials, r.asr, r.ape_max_mean, r.ape_max_sd);
        out += r.value + buf;
        if (r.precision) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f", *r.precision, *r.recall);
            out += buf;
        } else {
            out += ",";
        }
        out += "\n";
    }
    return out;
}

const SweepRow& SweepTable::argmax_ape() const {
    if (rows.empty()) throw std::logic_error("SweepTable: no rows");
    return *std::max_element(rows.begin(), rows.end(),
                             [](const SweepRow& a, const SweepRow& b) { return a.ape_max_mean < b.ape_max_mean; });
}

}  // namespace spooflab
