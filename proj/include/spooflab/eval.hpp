#pragma once

#include "spooflab/geometry.hpp"
#include "spooflab/world.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spooflab {

using Interval = std::pair<double, double>;

bool in_intervals(double t, std::span<const Interval> intervals);
/// True within `margin` of any interval edge.
bool near_boundary(double t, std::span<const Interval> intervals, double margin);

struct ApeResult {
    std::vector<double> series;
    double max = 0.0;
    double rmse = 0.0;
};

/// Per-frame translational error, no alignment. Timestamps must match within 1e-6 s.
ApeResult ape(std::span<const double> est_times, std::span<const Pose> est, const GroundTruth& gt);

struct DetectionFrame {
    double t = 0.0;
    double score = 0.0;
    bool flagged = false;
    bool attacked = false;
};

struct TrialResult {
    std::uint64_t seed = 0;
    std::vector<double> ape_series;
    double ape_max = 0.0;
    double ape_rmse = 0.0;
    std::vector<DetectionFrame> detector_log;

    bool success_at(double tau) const { return ape_max >= tau; }
};

/// Percentage of trials with ape_max >= tau.
double asr(std::span<const TrialResult> trials, double tau);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
    /// Set when precision has no flagged frames to be computed from.
    std::string diagnostic;
};

/// Frame-level scores of the `flagged` column. Frames within `boundary_margin`
/// of an attack edge are left out.
PrecisionRecall precision_recall(std::span<const DetectionFrame> log, std::span<const Interval> attacks,
                                 double boundary_margin);

struct PrPoint {
    double threshold;
    double precision;
    double recall;
};

/// One point per unique score, thresholds decreasing; a frame counts as
/// flagged when score >= threshold.
std::vector<PrPoint> pr_curve(std::span<const DetectionFrame> log, std::span<const Interval> attacks,
                              double boundary_margin);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

/// Sample standard deviation; 0 for a single value.
MeanSd mean_sd(std::span<const double> values);

struct SweepRow {
    std::string value;
    int trials = 0;
    double asr = 0.0;
    double ape_max_mean = 0.0;
    double ape_max_sd = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
};

struct SweepTable {
    std::string parameter;
    double tau = 3.0;
    std::vector<SweepRow> rows;

    void add(const std::string& value, std::span<const TrialResult> trials,
             std::optional<PrecisionRecall> pr = std::nullopt);
    std::string to_csv() const;
    /// Row with the largest mean ape_max.
    const SweepRow& argmax_ape() const;
};

}  // namespace spooflab
