#include "spooflab/experiment.hpp"

#include "json.hpp"
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace spooflab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

class Section {
public:
    Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.IsMap()) throw ScenarioError(path_ + " must be a mapping", line_of(node_));
    }
    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) return;
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            throw ScenarioError(path_ + "." + key + ": bad value", line_of(n));
        }
    }

    std::optional<YAML::Node> child(const char* key) {
        seen_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) return std::nullopt;
        return n;
    }

    Point3 point(const YAML::Node& n, const std::string& what) {
        if (!n.IsSequence() || n.size() != 3) throw ScenarioError(what + " must be [x, y, z]", line_of(n));
        try {
            return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
        } catch (const YAML::Exception&) {
            throw ScenarioError(what + ": bad coordinate", line_of(n));
        }
    }

    void finish() const {
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ScenarioError("unknown key " + path_ + "." + key, line_of(kv.first));
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

DetectorConfig parse_detector(const YAML::Node& n) {
    DetectorConfig d;
    Section s(n, "defense");
    s.get("w_ori", d.w_ori);
    s.get("w_speed", d.w_speed);
    s.get("threshold", d.threshold);
    s.get("k_on_frames", d.k_on);
    s.get("k_off_frames", d.k_off);
    s.get("velocity_window_s", d.velocity_window);
    std::string gap = std::string(to_string(d.gap_model));
    s.get("gap_model", gap);
    try {
        d.gap_model = gap_model_from_string(gap);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(e.what(), line_of(n["gap_model"]));
    }
    s.finish();
    return d;
}

Scenario parse_root(const YAML::Node& root) {
    Scenario sc;
    Section top(root, "scenario");
    top.get("name", sc.name);
    top.get("world", sc.world);

    if (auto n = top.child("trajectory")) {
        Section s(*n, "trajectory");
        if (auto w = s.child("waypoints_m")) {
            if (!w->IsSequence()) throw ScenarioError("trajectory.waypoints_m must be a list", line_of(*w));
            sc.waypoints.clear();
            for (const auto& p : *w) sc.waypoints.push_back(s.point(p, "trajectory.waypoints_m"));
        }
        s.get("speed_mps", sc.speed);
        s.finish();
    }

    if (auto n = top.child("lidar")) {
        Section s(*n, "lidar");
        std::string preset = "vlp16";
        s.get("preset", preset);
        if (preset != "vlp16") throw ScenarioError("lidar.preset must be vlp16", line_of((*n)["preset"]));
        double az = rad2deg(sc.lidar.azimuth_step);
        s.get("azimuth_step_deg", az);
        sc.lidar.azimuth_step = deg2rad(az);
        s.get("max_range_m", sc.lidar.max_range);
        s.get("frame_interval_s", sc.lidar.frame_interval);
        s.get("range_noise_m", sc.range_noise);
        s.finish();
    }

    if (auto n = top.child("icp")) {
        Section s(*n, "icp");
        s.get("gate_m", sc.icp.max_correspondence_distance);
        s.get("max_iterations", sc.icp.max_iterations);
        s.get("convergence_translation_m", sc.icp.convergence_translation);
        s.get("convergence_rotation_rad", sc.icp.convergence_rotation);
        s.get("downsample_voxel_m", sc.icp.downsample_voxel);
        s.get("registration_stride", sc.icp.registration_stride);
        s.get("map_voxel_m", sc.icp.map_voxel);
        s.get("map_max_points_per_voxel", sc.icp.map_max_points_per_voxel);
        s.get("planar", sc.icp.planar);
        s.finish();
    }

    if (auto n = top.child("attack")) {
        Section s(*n, "attack");
        AttackConfig a;
        if (auto p = s.child("spoofer_m")) a.spoofer_position = s.point(*p, "attack.spoofer_m");
        s.get("spoofer_jitter_m", sc.spoofer_jitter);
        double win = rad2deg(a.window_width);
        s.get("window_deg", win);
        a.window_width = deg2rad(win);
        std::string shape(to_string(a.shape)), pattern(to_string(a.pattern));
        s.get("shape", shape);
        s.get("pattern", pattern);
        try {
            a.shape = shape_from_string(shape);
            a.pattern = pattern_from_string(pattern);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError(e.what(), line_of(*n));
        }
        s.get("d_min_m", a.d_min);
        s.get("d_max_m", a.d_max);
        std::optional<double> cycle, radial;
        double v = 0.0;
        if (s.child("t_cycle_s")) {
            s.get("t_cycle_s", v);
            cycle = v;
        }
        if (s.child("radial_speed_mps")) {
            s.get("radial_speed_mps", v);
            radial = v;
        }
        if (cycle && radial) throw ScenarioError("attack: give t_cycle_s or radial_speed_mps, not both", line_of(*n));
        if (radial) {
            if (!(*radial > 0.0)) throw ScenarioError("attack.radial_speed_mps must be positive", line_of((*n)["radial_speed_mps"]));
            cycle = (a.d_max - a.d_min) / *radial;
        }
        a.t_cycle = cycle;
        s.get("t_start_s", a.t_start);
        s.get("t_end_s", a.t_end);
        s.get("allow_exceeding_gate", sc.allow_exceeding_gate);
        s.finish();
        sc.attack = a;
    }

    if (auto n = top.child("defense")) sc.detector = parse_detector(*n);

    if (auto n = top.child("dead_reckoning")) {
        Section s(*n, "dead_reckoning");
        s.get("translation_sigma_m", sc.dr_noise.translation_sigma);
        s.get("yaw_sigma_rad", sc.dr_noise.yaw_sigma);
        s.finish();
    }

    if (auto n = top.child("experiment")) {
        Section s(*n, "experiment");
        s.get("trials", sc.trials);
        s.get("seed", sc.seed);
        s.get("tau_m", sc.tau);
        s.get("boundary_margin_s", sc.boundary_margin);
        s.get("output_dir", sc.output_dir);
        s.finish();
    }
    top.finish();
    return sc;
}

YAML::Node load_yaml(const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ScenarioError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

void emit_point(YAML::Emitter& e, const Point3& p) {
    e << YAML::Flow << YAML::BeginSeq << p.x() << p.y() << p.z() << YAML::EndSeq;
}

void emit_detector(YAML::Emitter& e, const DetectorConfig& d) {
    e << YAML::BeginMap;
    e << YAML::Key << "w_ori" << YAML::Value << d.w_ori;
    e << YAML::Key << "w_speed" << YAML::Value << d.w_speed;
    e << YAML::Key << "threshold" << YAML::Value << d.threshold;
    e << YAML::Key << "k_on_frames" << YAML::Value << d.k_on;
    e << YAML::Key << "k_off_frames" << YAML::Value << d.k_off;
    e << YAML::Key << "velocity_window_s" << YAML::Value << d.velocity_window;
    e << YAML::Key << "gap_model" << YAML::Value << std::string(to_string(d.gap_model));
    e << YAML::EndMap;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

Scenario parse_scenario(const std::string& yaml_text) {
    const YAML::Node root = load_yaml(yaml_text);
    if (!root || root.IsNull()) throw ScenarioError("empty scenario", 0);
    return parse_root(root);
}

Scenario load_scenario(const fs::path& file) { return parse_scenario(read_file(file)); }

std::string scenario_to_yaml(const Scenario& s) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap;
    e << YAML::Key << "name" << YAML::Value << s.name;
    e << YAML::Key << "world" << YAML::Value << s.world;
    e << YAML::Key << "trajectory" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "waypoints_m" << YAML::Value << YAML::BeginSeq;
    for (const auto& p : s.waypoints) emit_point(e, p);
    e << YAML::EndSeq;
    e << YAML::Key << "speed_mps" << YAML::Value << s.speed << YAML::EndMap;

    e << YAML::Key << "lidar" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "preset" << YAML::Value << "vlp16";
    e << YAML::Key << "azimuth_step_deg" << YAML::Value << rad2deg(s.lidar.azimuth_step);
    e << YAML::Key << "max_range_m" << YAML::Value << s.lidar.max_range;
    e << YAML::Key << "frame_interval_s" << YAML::Value << s.lidar.frame_interval;
    e << YAML::Key << "range_noise_m" << YAML::Value << s.range_noise << YAML::EndMap;

    e << YAML::Key << "icp" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "gate_m" << YAML::Value << s.icp.max_correspondence_distance;
    e << YAML::Key << "max_iterations" << YAML::Value << s.icp.max_iterations;
    e << YAML::Key << "convergence_translation_m" << YAML::Value << s.icp.convergence_translation;
    e << YAML::Key << "convergence_rotation_rad" << YAML::Value << s.icp.convergence_rotation;
    e << YAML::Key << "downsample_voxel_m" << YAML::Value << s.icp.downsample_voxel;
    e << YAML::Key << "registration_stride" << YAML::Value << s.icp.registration_stride;
    e << YAML::Key << "map_voxel_m" << YAML::Value << s.icp.map_voxel;
    e << YAML::Key << "map_max_points_per_voxel" << YAML::Value << s.icp.map_max_points_per_voxel;
    e << YAML::Key << "planar" << YAML::Value << s.icp.planar << YAML::EndMap;

    if (s.attack) {
        const auto& a = *s.attack;
        e << YAML::Key << "attack" << YAML::Value << YAML::BeginMap;
        e << YAML::Key << "spoofer_m" << YAML::Value;
        emit_point(e, a.spoofer_position);
        e << YAML::Key << "spoofer_jitter_m" << YAML::Value << s.spoofer_jitter;
        e << YAML::Key << "window_deg" << YAML::Value << rad2deg(a.window_width);
        e << YAML::Key << "shape" << YAML::Value << std::string(to_string(a.shape));
        e << YAML::Key << "pattern" << YAML::Value << std::string(to_string(a.pattern));
        e << YAML::Key << "d_min_m" << YAML::Value << a.d_min;
        e << YAML::Key << "d_max_m" << YAML::Value << a.d_max;
        if (a.t_cycle) e << YAML::Key << "t_cycle_s" << YAML::Value << *a.t_cycle;
        e << YAML::Key << "t_start_s" << YAML::Value << a.t_start;
        e << YAML::Key << "t_end_s" << YAML::Value << a.t_end;
        e << YAML::Key << "allow_exceeding_gate" << YAML::Value << s.allow_exceeding_gate << YAML::EndMap;
    }
    if (s.detector) {
        e << YAML::Key << "defense" << YAML::Value;
        emit_detector(e, *s.detector);
    }
    e << YAML::Key << "dead_reckoning" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "translation_sigma_m" << YAML::Value << s.dr_noise.translation_sigma;
    e << YAML::Key << "yaw_sigma_rad" << YAML::Value << s.dr_noise.yaw_sigma << YAML::EndMap;

    e << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "trials" << YAML::Value << s.trials;
    e << YAML::Key << "seed" << YAML::Value << s.seed;
    e << YAML::Key << "tau_m" << YAML::Value << s.tau;
    e << YAML::Key << "boundary_margin_s" << YAML::Value << s.boundary_margin;
    if (!s.output_dir.empty()) e << YAML::Key << "output_dir" << YAML::Value << s.output_dir;
    e << YAML::EndMap;
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

std::string scenario_hash(const Scenario& s) {
    const std::string text = scenario_to_yaml(s);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

DetectorConfig load_detector_fragment(const fs::path& file) {
    const YAML::Node root = load_yaml(read_file(file));
    if (!root.IsMap() || !root["defense"]) throw ScenarioError("fragment needs a defense mapping", line_of(root));
    return parse_detector(root["defense"]);
}

std::string detector_fragment(const DetectorConfig& cfg, double f1) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap << YAML::Key << "defense" << YAML::Value;
    emit_detector(e, cfg);
    e << YAML::EndMap;
    return "# tuned, training F1 " + fmt("%.4f", f1) + "\n" + e.c_str() + "\n";
}

std::vector<Finding> validate_scenario(const Scenario& s) {
    std::vector<Finding> out;
    auto check = [&](const char* where, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            out.push_back({where, e.what()});
        }
    };
    check("world", [&] { fixture_world(s.world).validate(); });
    check("lidar", [&] { s.lidar.validate(); });
    check("icp", [&] { s.icp.validate(); });
    check("trajectory", [&] {
        if (s.waypoints.size() < 2) throw std::invalid_argument("need at least two waypoints");
        if (!(s.speed > 0.0)) throw std::invalid_argument("speed must be positive");
    });
    if (!(s.range_noise >= 0.0)) out.push_back({"lidar", "range_noise_m must be >= 0"});
    if (!(s.dr_noise.translation_sigma >= 0.0) || !(s.dr_noise.yaw_sigma >= 0.0))
        out.push_back({"dead_reckoning", "noise sigmas must be >= 0"});
    if (s.trials < 1) out.push_back({"experiment", "trials must be >= 1"});
    if (!(s.tau > 0.0)) out.push_back({"experiment", "tau_m must be positive"});
    if (!(s.boundary_margin >= 0.0)) out.push_back({"experiment", "boundary_margin_s must be >= 0"});
    if (s.detector) check("defense", [&] { s.detector->validate(); });
    if (s.attack) {
        if (!(s.spoofer_jitter >= 0.0)) out.push_back({"attack", "spoofer_jitter_m must be >= 0"});
        const auto report = validate_schedule(*s.attack, s.lidar, s.icp.max_correspondence_distance);
        for (const auto& f : report.findings) {
            const bool warn = f.kind == ScheduleFinding::Kind::exceeds_gate && s.allow_exceeding_gate;
            out.push_back({"attack." + std::string(to_string(f.kind)), f.message, warn});
        }
    }
    return out;
}

bool has_errors(const std::vector<Finding>& findings) {
    return std::any_of(findings.begin(), findings.end(), [](const Finding& f) { return !f.warning; });
}

std::uint64_t trial_seed(const Scenario& s, int index) { return s.seed + static_cast<std::uint64_t>(index); }

TrialOutput run_trial(const Scenario& s, int index, const RunFlags& flags) {
    TrialOutput out;
    out.index = index;
    out.result.seed = trial_seed(s, index);
    try {
        if (flags.attack && !s.attack) throw std::invalid_argument("attack requested but scenario has no attack block");
        if (flags.defense && !s.detector)
            throw std::invalid_argument("defense requested but scenario has no defense block");
        const std::uint64_t seed = out.result.seed;
        // Independent streams per noise source so adding one never shifts another.
        std::seed_seq scan_seq{seed, std::uint64_t{1}}, jitter_seq{seed, std::uint64_t{2}},
            dr_seq{seed, std::uint64_t{3}};
        std::mt19937_64 scan_rng(scan_seq), jitter_rng(jitter_seq), dr_rng(dr_seq);

        const World world = fixture_world(s.world);
        const GroundTruth gt = sample_trajectory(s.waypoints, s.speed, s.lidar);
        const auto dr = synth_dead_reckoning(gt, s.dr_noise, dr_rng());

        std::optional<AttackConfig> attack;
        if (flags.attack) {
            attack = s.attack->resolved(s.icp.max_correspondence_distance, s.lidar.frame_interval);
            std::uniform_real_distribution<double> jit(-s.spoofer_jitter, s.spoofer_jitter);
            const double jx = jit(jitter_rng), jy = jit(jitter_rng);
            if (s.spoofer_jitter > 0.0) attack->spoofer_position += Vec3(jx, jy, 0.0);
            out.attacks.push_back({attack->t_start, attack->t_end});
        }

        const Pose initial = gt.poses.front();
        const Pose initial_motion = dr.relative_poses.front();
        std::optional<Odometry> victim;
        std::optional<DefendedOdometry> defended;
        std::optional<DefenseState> monitor;
        if (flags.defense) defended.emplace(s.icp, *s.detector, initial, initial_motion);
        else victim.emplace(s.icp, initial, initial_motion);
        if (!flags.defense && s.detector) monitor = DefenseState::start(initial);

        for (std::size_t k = 0; k < gt.size(); ++k) {
            const double t = gt.times[k];
            RangeScan scan = raycast_scan(world, gt.poses[k], s.lidar, t);
            if (s.range_noise > 0.0) add_range_noise(scan, s.range_noise, scan_rng);
            if (attack) scan = tamper_scan(scan, gt.poses[k], *attack, s.icp.max_correspondence_distance);
            const auto pts = scan_to_points(scan);
            const Pose inc = k == 0 ? Pose::identity() : dr.relative_poses[k - 1];

            if (defended) {
                const auto rec = defended->process(pts, t, inc);
                out.trajectory.push_back(rec.pose);
                out.diagnostics.push_back(defended->last_shadow_estimate().diagnostics);
                out.detector.push_back(rec);
            } else {
                const auto est = victim->process(pts, t);
                out.trajectory.push_back(est.pose);
                out.diagnostics.push_back(est.diagnostics);
                if (monitor) {
                    const auto in = observe(*monitor, t, est.pose, inc, *s.detector);
                    DefendedPoseRecord rec;
                    rec.t = t;
                    rec.pose = est.pose;
                    rec.e_ori = in.e_ori;
                    rec.e_speed = in.e_speed;
                    rec.D = in.valid ? detection_metric(in.e_ori, in.e_speed, *s.detector) : 0.0;
                    rec.flagged = in.valid && rec.D >= s.detector->threshold;
                    out.detector.push_back(rec);
                }
            }
            out.times.push_back(t);
        }

        const auto a = ape(out.times, out.trajectory, gt);
        out.result.ape_series = a.series;
        out.result.ape_max = a.max;
        out.result.ape_rmse = a.rmse;
        for (const auto& rec : out.detector)
            out.result.detector_log.push_back({rec.t, rec.D, rec.flagged, in_intervals(rec.t, out.attacks)});
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

std::optional<PrecisionRecall> pooled_precision_recall(const std::vector<TrialOutput>& trials, double margin) {
    PrecisionRecall sum;
    bool any = false;
    for (const auto& t : trials) {
        if (!t.ok() || t.result.detector_log.empty()) continue;
        try {
            const auto pr = precision_recall(t.result.detector_log, t.attacks, margin);
            sum.tp += pr.tp;
            sum.fp += pr.fp;
            sum.fn += pr.fn;
            sum.tn += pr.tn;
            any = true;
        } catch (const std::invalid_argument&) {
        }
    }
    if (!any) return std::nullopt;
    sum.recall = static_cast<double>(sum.tp) / static_cast<double>(sum.tp + sum.fn);
    if (sum.tp + sum.fp > 0) sum.precision = static_cast<double>(sum.tp) / static_cast<double>(sum.tp + sum.fp);
    else sum.diagnostic = "no frames flagged; precision reported as 0";
    return sum;
}

Summary summarize(const Scenario& s, const std::vector<TrialOutput>& trials, const RunFlags& flags) {
    Summary out;
    out.scenario = s.name;
    std::vector<TrialResult> ok;
    for (const auto& t : trials)
        if (t.ok()) ok.push_back(t.result);
    out.trials = static_cast<int>(ok.size());
    if (ok.empty()) return out;
    out.asr = asr(ok, s.tau);
    std::vector<double> m;
    for (const auto& r : ok) m.push_back(r.ape_max);
    const auto ms = mean_sd(m);
    out.ape_max_mean = ms.mean;
    out.ape_max_sd = ms.sd;
    if (flags.defense && flags.attack) {
        if (const auto pr = pooled_precision_recall(trials, s.boundary_margin)) {
            out.precision = pr->precision;
            out.recall = pr->recall;
        }
    }
    return out;
}

std::string trajectory_csv(const std::vector<double>& times, const std::vector<Pose>& poses) {
    std::string out = "t,x,y,z,qx,qy,qz,qw\n";
    char buf[256];
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto& p = poses[i];
        std::snprintf(buf, sizeof buf, "%.6f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", times[i], p.translation.x(),
                      p.translation.y(), p.translation.z(), p.rotation.x(), p.rotation.y(), p.rotation.z(),
                      p.rotation.w());
        out += buf;
    }
    return out;
}

std::string diagnostics_csv(const std::vector<double>& times, const std::vector<RegistrationDiagnostics>& d) {
    std::string out = "t,inliers,residual,iterations,diverged\n";
    char buf[160];
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f,%d,%.9f,%d,%d\n", times[i], d[i].inliers, d[i].residual, d[i].iterations,
                      d[i].diverged ? 1 : 0);
        out += buf;
    }
    return out;
}

std::string detector_csv(const std::vector<DefendedPoseRecord>& log) {
    std::string out = "t,e_ori,e_speed,D,flagged,phase\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%.6f,%.9f,%.9f,%.9f,%d,%s\n", r.t, r.e_ori, r.e_speed, r.D, r.flagged ? 1 : 0,
                      std::string(to_string(r.phase)).c_str());
        out += buf;
    }
    return out;
}

namespace {

json summary_to_json(const Summary& s) {
    json j;
    j["scenario"] = s.scenario;
    j["trials"] = s.trials;
    j["asr"] = s.asr;
    j["ape_max_mean"] = s.ape_max_mean;
    j["ape_max_sd"] = s.ape_max_sd;
    j["precision"] = s.precision ? json(*s.precision) : json(nullptr);
    j["recall"] = s.recall ? json(*s.recall) : json(nullptr);
    return j;
}

Summary summary_from_json(const json& j) {
    Summary s;
    s.scenario = j.at("scenario").get<std::string>();
    s.trials = j.at("trials").get<int>();
    s.asr = j.at("asr").get<double>();
    s.ape_max_mean = j.at("ape_max_mean").get<double>();
    s.ape_max_sd = j.at("ape_max_sd").get<double>();
    if (!j.at("precision").is_null()) s.precision = j.at("precision").get<double>();
    if (!j.at("recall").is_null()) s.recall = j.at("recall").get<double>();
    return s;
}

std::string trial_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "trial_%03d", index);
    return buf;
}

}  // namespace

std::string summary_json(const Summary& s) { return summary_to_json(s).dump(2) + "\n"; }

Experiment run_experiment(const Scenario& s, const RunFlags& flags, int jobs, const std::optional<fs::path>& out_dir) {
    const auto findings = validate_scenario(s);
    if (has_errors(findings)) {
        std::string msg = "scenario '" + s.name + "' is invalid:";
        for (const auto& f : findings)
            if (!f.warning) msg += "\n  " + f.where + ": " + f.message;
        throw std::invalid_argument(msg);
    }
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");

    Experiment exp;
    exp.trials.resize(static_cast<std::size_t>(s.trials));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < s.trials; i = next++) exp.trials[i] = run_trial(s, i, flags);
    };
    const int n = std::min(jobs, s.trials);
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    exp.summary = summarize(s, exp.trials, flags);

    if (out_dir) {
        fs::create_directories(*out_dir);
        std::string trials_csv = "trial,seed,ape_max,ape_rmse,success,error\n";
        json files = json::array();
        json seeds = json::array();
        json failed = json::array();
        for (const auto& t : exp.trials) {
            const auto dir = *out_dir / trial_dir_name(t.index);
            fs::create_directories(dir);
            seeds.push_back(t.result.seed);
            char buf[160];
            std::snprintf(buf, sizeof buf, "%d,%llu,%.9f,%.9f,%d,", t.index,
                          static_cast<unsigned long long>(t.result.seed), t.result.ape_max, t.result.ape_rmse,
                          t.ok() && t.result.success_at(s.tau) ? 1 : 0);
            std::string err = t.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            trials_csv += buf + err + "\n";
            if (!t.ok()) {
                failed.push_back({{"trial", t.index}, {"error", t.error}});
                continue;
            }
            write_file(dir / "trajectory.csv", trajectory_csv(t.times, t.trajectory));
            write_file(dir / "diagnostics.csv", diagnostics_csv(t.times, t.diagnostics));
            files.push_back(trial_dir_name(t.index) + "/trajectory.csv");
            files.push_back(trial_dir_name(t.index) + "/diagnostics.csv");
            if (!t.detector.empty()) {
                write_file(dir / "detector_log.csv", detector_csv(t.detector));
                files.push_back(trial_dir_name(t.index) + "/detector_log.csv");
            }
        }
        write_file(*out_dir / "trials.csv", trials_csv);
        write_file(*out_dir / "summary.json", summary_json(exp.summary));
        write_file(*out_dir / "scenario.yaml", scenario_to_yaml(s));
        files.push_back("trials.csv");
        files.push_back("summary.json");
        files.push_back("scenario.yaml");
        json manifest;
        manifest["scenario"] = s.name;
        manifest["scenario_hash"] = scenario_hash(s);
        manifest["attack"] = flags.attack;
        manifest["defense"] = flags.defense;
        manifest["base_seed"] = s.seed;
        manifest["seeds"] = seeds;
        manifest["files"] = files;
        manifest["failed"] = failed;
        manifest["tool_version"] = kToolVersion;
        write_file(*out_dir / "manifest.json", manifest.dump(2) + "\n");
    }
    return exp;
}

SweepParameter sweep_parameter_from_string(const std::string& s) {
    if (s == "window_deg") return SweepParameter::window_deg;
    if (s == "radial_speed_mps") return SweepParameter::radial_speed_mps;
    if (s == "shape") return SweepParameter::shape;
    if (s == "gate_m") return SweepParameter::gate_m;
    throw std::invalid_argument("unknown sweep parameter '" + s +
                                "' (expected window_deg, radial_speed_mps, shape or gate_m)");
}

std::string to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::window_deg: return "window_deg";
        case SweepParameter::radial_speed_mps: return "radial_speed_mps";
        case SweepParameter::shape: return "shape";
        case SweepParameter::gate_m: return "gate_m";
    }
    return "?";
}

Scenario apply_sweep_value(const Scenario& s, SweepParameter p, const std::string& value) {
    Scenario out = s;
    auto number = [&] {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size()) throw std::invalid_argument("sweep value '" + value + "' is not a number");
        return v;
    };
    if (p == SweepParameter::gate_m) {
        out.icp.max_correspondence_distance = number();
        out.icp.map_voxel = std::max(out.icp.map_voxel, out.icp.max_correspondence_distance);
        return out;
    }
    if (!out.attack) throw std::invalid_argument("sweeping " + to_string(p) + " needs an attack block");
    switch (p) {
        case SweepParameter::window_deg: out.attack->window_width = deg2rad(number()); break;
        case SweepParameter::radial_speed_mps: {
            const double v = number();
            if (!(v > 0.0)) throw std::invalid_argument("radial speed must be positive");
            out.attack->t_cycle = (out.attack->d_max - out.attack->d_min) / v;
            break;
        }
        case SweepParameter::shape: out.attack->shape = shape_from_string(value); break;
        case SweepParameter::gate_m: break;
    }
    return out;
}

SweepTable run_sweep(const Scenario& s, SweepParameter p, const std::vector<std::string>& values,
                     const RunFlags& flags, int jobs, const std::optional<fs::path>& out_dir) {
    if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
    std::vector<Scenario> variants;
    for (const auto& v : values) {
        variants.push_back(apply_sweep_value(s, p, v));
        variants.back().name = s.name + "/" + to_string(p) + "=" + v;
    }
    SweepTable table;
    table.parameter = to_string(p);
    table.tau = s.tau;
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::optional<fs::path> dir;
        if (out_dir) dir = *out_dir / (to_string(p) + "=" + values[i]);
        const auto exp = run_experiment(variants[i], flags, jobs, dir);
        std::vector<TrialResult> ok;
        for (const auto& t : exp.trials)
            if (t.ok()) ok.push_back(t.result);
        if (ok.empty()) throw std::runtime_error("every trial failed for " + values[i]);
        std::optional<PrecisionRecall> pr;
        if (flags.attack && flags.defense) pr = pooled_precision_recall(exp.trials, s.boundary_margin);
        table.add(values[i], ok, pr);
    }
    if (out_dir) write_file(*out_dir / "sweep.csv", table.to_csv());
    return table;
}

std::vector<TrainingRun> collect_training_runs(const std::vector<Scenario>& scenarios, int jobs) {
    std::vector<TrainingRun> runs;
    for (const auto& sc : scenarios) {
        if (!sc.attack) throw std::invalid_argument("training scenario '" + sc.name + "' has no attack block");
        Scenario s = sc;
        if (!s.detector) s.detector = DetectorConfig{};
        const auto exp = run_experiment(s, {true, false}, jobs);
        for (const auto& t : exp.trials) {
            if (!t.ok()) throw std::runtime_error("training trial failed: " + t.error);
            TrainingRun r;
            r.attacks = t.attacks;
            for (const auto& rec : t.detector) {
                r.t.push_back(rec.t);
                r.e_ori.push_back(rec.e_ori);
                r.e_speed.push_back(rec.e_speed);
            }
            runs.push_back(std::move(r));
        }
    }
    return runs;
}

std::vector<ReportRow> collect_report(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) throw std::invalid_argument("report needs at least one experiment directory");
    std::vector<ReportRow> rows;
    for (const auto& d : dirs) {
        ReportRow row;
        row.dir = d.string();
        try {
            const json m = json::parse(read_file(d / "manifest.json"));
            const json s = json::parse(read_file(d / "summary.json"));
            row.scenario = m.at("scenario").get<std::string>();
            row.scenario_hash = m.at("scenario_hash").get<std::string>();
            row.attack = m.at("attack").get<bool>();
            row.defense = m.at("defense").get<bool>();
            row.summary = summary_from_json(s);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out =
        "scenario,scenario_hash,attack,defense,trials,asr,ape_max_mean,ape_max_sd,precision,recall,dir,error\n";
    for (const auto& r : rows) {
        const auto& s = r.summary;
        out += r.scenario + "," + r.scenario_hash + "," + (r.attack ? "1" : "0") + "," + (r.defense ? "1" : "0") + ",";
        if (r.error.empty()) {
            out += std::to_string(s.trials) + "," + fmt("%.6f", s.asr) + "," + fmt("%.6f", s.ape_max_mean) + "," +
                   fmt("%.6f", s.ape_max_sd) + "," + (s.precision ? fmt("%.6f", *s.precision) : "") + "," +
                   (s.recall ? fmt("%.6f", *s.recall) : "") + ",";
        } else {
            out += ",,,,,,";
        }
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += r.dir + "," + err + "\n";
    }
    return out;
}

std::string report_json(const std::vector<ReportRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        json j;
        j["dir"] = r.dir;
        j["scenario"] = r.scenario;
        j["scenario_hash"] = r.scenario_hash;
        j["attack"] = r.attack;
        j["defense"] = r.defense;
        if (r.error.empty()) j["summary"] = summary_to_json(r.summary);
        else j["error"] = r.error;
        out.push_back(j);
    }
    return out.dump(2) + "\n";
}

}  // namespace spooflab
