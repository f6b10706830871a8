// servosim: IBVS quadrotor navigation and collision-avoidance simulator.
//
// Subcommands:
//   run       simulate a mission and write logs
//   validate  check a scenario file and report spacing warnings
//   replay    re-run the avoidance decision over a recorded frame stream
//   export    re-emit CSVs from a recorded run directory

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "servosim/runner.hpp"

namespace {

int cmd_run(const std::string& scenario, const std::string& config_path, long seed,
            bool no_avoidance, bool two_process, const std::string& out_dir, double duration,
            bool quiet) {
    servosim::RunConfig cfg;
    if (!config_path.empty()) servosim::apply_run_config(cfg, servosim::load_config_file(config_path));
    cfg.scenario_path = scenario;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (no_avoidance) cfg.avoidance = false;
    if (two_process) cfg.two_process = true;
    if (duration > 0) cfg.duration = duration;
    cfg.out_dir = out_dir;

    servosim::MissionReport report = servosim::run_mission(cfg);
    if (!out_dir.empty()) servosim::export_report(report, out_dir);
    if (!quiet) std::cout << servosim::format_summary(report);
    return servosim::exit_code(report.outcome);
}

int cmd_validate(const std::string& scenario) {
    servosim::WorldScene scene = servosim::load_scenario_file(scenario);
    auto warnings = servosim::validate_spacing(scene);
    std::printf("scenario ok: %zu tag(s), %zu gate(s), %zu obstacle(s)\n", scene.tags.size(),
                scene.gates.size(), scene.obstacles.size());
    for (const auto& w : warnings)
        std::printf("warning: tags %zu and %zu are %.3f m apart (>= %.1f m detection limit)\n",
                    w.first_index, w.second_index, w.distance, servosim::kTagSpacingLimit);
    return 0;
}

int cmd_replay(const std::string& frames_path, const std::string& config_path,
               const std::string& out_path) {
    servosim::RunConfig cfg;
    if (!config_path.empty()) servosim::apply_run_config(cfg, servosim::load_config_file(config_path));
    std::ifstream in(frames_path, std::ios::binary);
    if (!in) {
        std::fprintf(stderr, "cannot open %s\n", frames_path.c_str());
        return 1;
    }
    std::vector<uint8_t> stream((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
    auto decisions = servosim::replay_frames(stream, cfg.percept);

    std::string csv = "t,seq,direction,white_fraction\n";
    char line[128];
    for (const auto& d : decisions) {
        if (d.command.direction == servosim::AvoidDirection::Center) continue;
        std::snprintf(line, sizeof(line), "%.6g,%u,%s,%.6g\n", d.t, d.seq,
                      servosim::to_string(d.command.direction), d.command.white_fraction);
        csv += line;
    }
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        out << csv;
    }
    return 0;
}

int cmd_export(const std::string& from_dir, const std::string& out_dir) {
    servosim::MissionReport report = servosim::load_report(from_dir);
    servosim::export_report(report, out_dir);
    std::printf("exported %zu trajectory rows to %s\n", report.trajectory.size(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IBVS quadrotor navigation and collision-avoidance simulator"};
    app.require_subcommand(1);

    std::string scenario, config_path, out_dir, frames_path, from_dir, out_path;
    long seed = -1;
    double duration = -1;
    bool no_avoidance = false, two_process = false, quiet = false;

    CLI::App* run = app.add_subcommand("run", "simulate a mission");
    run->add_option("--scenario", scenario, "scenario file")->required();
    run->add_option("--config", config_path, "run-config file");
    run->add_option("--seed", seed, "rng seed");
    run->add_flag("--no-avoidance", no_avoidance, "disable the perception stage");
    run->add_flag("--two-process", two_process, "run perception as a separate process");
    run->add_option("--out", out_dir, "output directory for logs");
    run->add_option("--duration", duration, "simulated time limit, s");
    run->add_flag("--quiet", quiet, "suppress the summary printout");

    CLI::App* validate = app.add_subcommand("validate", "check a scenario file");
    validate->add_option("--scenario", scenario, "scenario file")->required();

    CLI::App* replay = app.add_subcommand("replay", "re-decide from a recorded frame log");
    replay->add_option("--frames", frames_path, "frames.bin from a recorded run")->required();
    replay->add_option("--config", config_path, "run-config file (percept section)");
    replay->add_option("--out", out_path, "write decisions CSV here instead of stdout");

    CLI::App* exp = app.add_subcommand("export", "re-emit CSVs from a recorded run");
    exp->add_option("--from", from_dir, "recorded run directory")->required();
    exp->add_option("--out", out_dir, "destination directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(scenario, config_path, seed, no_avoidance, two_process, out_dir,
                           duration, quiet);
        if (validate->parsed()) return cmd_validate(scenario);
        if (replay->parsed()) return cmd_replay(frames_path, config_path, out_path);
        if (exp->parsed()) return cmd_export(from_dir, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
