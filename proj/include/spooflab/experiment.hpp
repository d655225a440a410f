#pragma once

#include "spooflab/defense.hpp"
#include "spooflab/eval.hpp"
#include "spooflab/odometry.hpp"
#include "spooflab/spoofer.hpp"
#include "spooflab/world.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spooflab {

inline constexpr const char* kToolVersion = "spooflab 0.1.0";

struct Scenario {
    std::string name = "scenario";
    std::string world = "feature_rich";
    std::vector<Point3> waypoints{{0.0, 0.0, 1.8}, {20.0, 0.0, 1.8}};
    double speed = 1.0;  // m/s
    LidarSpec lidar = LidarSpec::vlp16();
    double range_noise = 0.02;  // m
    IcpConfig icp;
    std::optional<AttackConfig> attack;
    double spoofer_jitter = 0.0;  // m, uniform per axis in x and y
    /// Lets the sawtooth move farther than the gate per frame without a validation error.
    bool allow_exceeding_gate = false;
    std::optional<DetectorConfig> detector;
    NoiseParams dr_noise;
    int trials = 1;
    std::uint64_t seed = 0;
    double tau = 3.0;              // m
    double boundary_margin = 0.5;  // s
    std::string output_dir;
};

/// Parse failure; `line` is 1-based, 0 when unknown.
struct ScenarioError : std::runtime_error {
    int line;
    ScenarioError(const std::string& msg, int line_no)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg), line(line_no) {}
};

Scenario parse_scenario(const std::string& yaml_text);
Scenario load_scenario(const std::filesystem::path& file);
/// Canonical form: fixed key order, every field written.
std::string scenario_to_yaml(const Scenario& s);
/// SHA-256 of the canonical form, hex.
std::string scenario_hash(const Scenario& s);

/// Reads a `defense:` fragment as written by tune.
DetectorConfig load_detector_fragment(const std::filesystem::path& file);
std::string detector_fragment(const DetectorConfig& cfg, double f1);

struct Finding {
    std::string where;
    std::string message;
    bool warning = false;
};

/// Every sub-config validator plus the schedule checks. Warnings do not fail validation.
std::vector<Finding> validate_scenario(const Scenario& s);
bool has_errors(const std::vector<Finding>& findings);

struct RunFlags {
    bool attack = false;
    bool defense = false;
};

struct TrialOutput {
    int index = 0;
    TrialResult result;
    std::vector<double> times;
    std::vector<Pose> trajectory;
    std::vector<RegistrationDiagnostics> diagnostics;
    /// Detector log; present whenever the scenario has a detector config.
    std::vector<DefendedPoseRecord> detector;
    std::vector<Interval> attacks;
    std::string error;

    bool ok() const { return error.empty(); }
};

std::uint64_t trial_seed(const Scenario& s, int index);

/// One seeded trial. Never throws; failures land in `error`.
TrialOutput run_trial(const Scenario& s, int index, const RunFlags& flags);

struct Summary {
    std::string scenario;
    int trials = 0;
    double asr = 0.0;
    double ape_max_mean = 0.0;
    double ape_max_sd = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
};

struct Experiment {
    std::vector<TrialOutput> trials;
    Summary summary;
};

/// Pooled frame-level precision/recall over the successful trials; empty when
/// no trial has both classes.
std::optional<PrecisionRecall> pooled_precision_recall(const std::vector<TrialOutput>& trials, double margin);
Summary summarize(const Scenario& s, const std::vector<TrialOutput>& trials, const RunFlags& flags);

/// Runs every trial on `jobs` workers. With `out_dir`, writes per-trial CSVs,
/// trials.csv, summary.json and manifest.json.
Experiment run_experiment(const Scenario& s, const RunFlags& flags, int jobs,
                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string trajectory_csv(const std::vector<double>& times, const std::vector<Pose>& poses);
std::string diagnostics_csv(const std::vector<double>& times, const std::vector<RegistrationDiagnostics>& d);
std::string detector_csv(const std::vector<DefendedPoseRecord>& log);
std::string summary_json(const Summary& s);

enum class SweepParameter { window_deg, radial_speed_mps, shape, gate_m };
SweepParameter sweep_parameter_from_string(const std::string& s);
std::string to_string(SweepParameter p);
/// Copy of `s` with one parameter replaced.
Scenario apply_sweep_value(const Scenario& s, SweepParameter p, const std::string& value);

SweepTable run_sweep(const Scenario& s, SweepParameter p, const std::vector<std::string>& values,
                     const RunFlags& flags, int jobs, const std::optional<std::filesystem::path>& out_dir);

/// Attacked, undefended runs of each scenario turned into tuner input.
std::vector<TrainingRun> collect_training_runs(const std::vector<Scenario>& scenarios, int jobs);

struct ReportRow {
    std::string dir;
    std::string scenario;
    std::string scenario_hash;
    bool attack = false;
    bool defense = false;
    Summary summary;
    std::string error;
};

std::vector<ReportRow> collect_report(const std::vector<std::filesystem::path>& dirs);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ReportRow>& rows);

}  // namespace spooflab
