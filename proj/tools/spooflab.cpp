#include "spooflab/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace spooflab;
namespace fs = std::filesystem;

namespace {

fs::path output_dir(const std::string& flag, const Scenario& s) {
    if (!flag.empty()) return flag;
    if (!s.output_dir.empty()) return s.output_dir;
    return fs::path("out") / s.name;
}

void print_summary(const Summary& s) { std::cout << summary_json(s); }

int cmd_validate(const std::string& file) {
    Scenario s;
    try {
        s = load_scenario(file);
    } catch (const ScenarioError& e) {
        std::cerr << file << ": " << e.what() << "\n";
        return 2;
    }
    const auto findings = validate_scenario(s);
    for (const auto& f : findings)
        std::cout << (f.warning ? "warning " : "error ") << f.where << ": " << f.message << "\n";
    if (has_errors(findings)) return 1;
    std::cout << file << ": ok\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR spoofing attack and defense experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string scenario_file, out, detector_file;
    bool attack = false, defense = false;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    int jobs = 1;

    auto* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("scenario", scenario_file, "Scenario YAML")->required();

    auto add_run_flags = [&](CLI::App* c) {
        c->add_option("scenario", scenario_file, "Scenario YAML")->required();
        c->add_flag("--attack", attack, "Apply the scenario's attack");
        c->add_flag("--defense", defense, "Wrap the victim in the defense");
        c->add_option("--detector", detector_file, "Detector fragment overriding the scenario's defense block");
        c->add_option("--trials", trials, "Trial count")->check(CLI::PositiveNumber);
        c->add_option("--seed", seed, "Base seed");
        c->add_option("--out", out, "Output directory");
        c->add_option("--jobs", jobs, "Parallel trials")->check(CLI::PositiveNumber);
    };
    auto* run = app.add_subcommand("run", "Run seeded trials");
    add_run_flags(run);

    auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
    add_run_flags(sweep);
    std::string param;
    std::vector<std::string> values;
    sweep->add_option("--param", param, "window_deg, radial_speed_mps, shape or gate_m")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

    auto* tune = app.add_subcommand("tune", "Fit detector weights on attacked training scenarios");
    std::vector<std::string> training;
    int tune_trials = 300;
    std::uint64_t tune_seed = 0;
    tune->add_option("scenarios", training, "Training scenario YAMLs")->required();
    tune->add_option("--trials", tune_trials, "Random-search candidates");
    tune->add_option("--seed", tune_seed, "Search seed");
    tune->add_option("--out", out, "Fragment path (stdout when omitted)");
    tune->add_option("--jobs", jobs, "Parallel trials")->check(CLI::PositiveNumber);

    auto* report = app.add_subcommand("report", "Join experiment summaries");
    std::vector<std::string> dirs;
    report->add_option("dirs", dirs, "Experiment directories")->required();
    report->add_option("--out", out, "Output stem; writes <stem>.csv and <stem>.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(scenario_file);

        if (*run || *sweep) {
            Scenario s = load_scenario(scenario_file);
            if (trials) s.trials = *trials;
            if (seed) s.seed = *seed;
            if (!detector_file.empty()) s.detector = load_detector_fragment(detector_file);
            const RunFlags flags{attack, defense};
            const fs::path dir = output_dir(out, s);
            if (*run) {
                const auto exp = run_experiment(s, flags, jobs, dir);
                for (const auto& t : exp.trials)
                    if (!t.ok()) std::cerr << "trial " << t.index << " failed: " << t.error << "\n";
                print_summary(exp.summary);
                return 0;
            }
            const auto table = run_sweep(s, sweep_parameter_from_string(param), values, flags, jobs, dir);
            std::cout << table.to_csv();
            return 0;
        }

        if (*tune) {
            if (tune_trials < 1) throw std::invalid_argument("--trials must be >= 1");
            std::vector<Scenario> scenarios;
            for (const auto& f : training) scenarios.push_back(load_scenario(f));
            const auto runs = collect_training_runs(scenarios, jobs);
            const DetectorConfig base = scenarios.front().detector.value_or(DetectorConfig{});
            TunerOptions opts;
            opts.trials = tune_trials;
            opts.seed = tune_seed;
            opts.boundary_margin = scenarios.front().boundary_margin;
            const auto tuned = tune_weights(runs, opts, base);
            const std::string frag = detector_fragment(tuned.config, tuned.f1);
            if (out.empty()) {
                std::cout << frag;
            } else {
                std::ofstream(out) << frag;
                std::cerr << "wrote " << out << "\n";
            }
            return 0;
        }

        if (*report) {
            std::vector<fs::path> paths(dirs.begin(), dirs.end());
            const auto rows = collect_report(paths);
            const std::string csv = report_csv(rows);
            int bad = 0;
            for (const auto& r : rows)
                if (!r.error.empty()) {
                    std::cerr << r.dir << ": " << r.error << "\n";
                    ++bad;
                }
            if (out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream(out + ".csv") << csv;
                std::ofstream(out + ".json") << report_json(rows);
            }
            return bad ? 1 : 0;
        }
    } catch (const ScenarioError& e) {
        std::cerr << scenario_file << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
