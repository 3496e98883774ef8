// Command-line front end: map, synth, eval, calib-heading.
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include "picp/errors.hpp"
#include "picp/io.hpp"
#include "picp/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace picp;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

struct GlobalOptions
{
    std::string config;
    std::optional<long long> seed;
    std::string out;
    std::string mode;
};

struct ConfigFailure
{
    std::string message;
};

// Config file plus command-line overrides; everything that goes wrong here is a
// configuration error.
RunConfig load_run_config(const GlobalOptions& g, const std::string& input_dir = "")
{
    try
    {
        KeyValueConfig cfg = g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config);
        if (g.seed)
            cfg.set("seed", std::to_string(*g.seed));
        if (!g.out.empty())
            cfg.set("output_dir", g.out);
        if (!g.mode.empty())
            cfg.set("mode", g.mode);
        if (!input_dir.empty())
            cfg.set("input_dir", input_dir);
        RunConfig r = run_config_from(cfg);
        if (!r.input_dir.empty() && !fs::is_directory(r.input_dir))
            throw std::invalid_argument("input directory " + r.input_dir.string() + " does not exist");
        return r;
    }
    catch (const std::exception& e)
    {
        throw ConfigFailure{e.what()};
    }
}

int cmd_map(const GlobalOptions& g, const std::string& input_dir)
{
    const RunConfig r = load_run_config(g, input_dir);
    const RunResult result = run_mapping(r);
    write_outputs(r, result);

    std::size_t registered = 0;
    for (const auto& s : result.state.stats)
        registered += s.registered ? 1 : 0;
    std::cout << "mode " << to_string(r.mode) << ": " << result.state.stats.size() << " scans, " << registered
              << " registered, " << result.state.map.size() << " map points\n";
    if (result.loop_closure_error)
        std::cout << "loop closure error " << *result.loop_closure_error << " m\n";
    if (result.crispness)
        std::cout << "crispness " << *result.crispness << " m\n";
    for (const auto& e : result.state.events)
        std::cerr << "scan " << e.scan_id << ": " << e.message << "\n";
    for (const auto& m : result.messages)
        std::cerr << m << "\n";
    std::cout << "outputs in " << r.output_dir.string() << "\n";
    return 0;
}

int cmd_synth(const GlobalOptions& g)
{
    const RunConfig r = load_run_config(g);
    const Scenario sc = make_scenario(r.scenario);
    write_scenario(sc, r.output_dir);
    std::cout << sc.scan_count() << " scans, " << sc.fixes.size() << " sensor samples, " << sc.world.trees().size()
              << " trees written to " << r.output_dir.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& map_path, const std::string& world_path, const std::string& trajectory_path,
             const std::string& truth_path)
{
    const PointCloud map = read_ply(map_path);
    if (!world_path.empty())
        std::cout << "crispness_m = " << format_double(crispness(map, read_world_csv(world_path))) << "\n";
    std::cout << "local_crispness_m = " << format_double(local_crispness(map)) << "\n";
    std::cout << "nn_crispness_m = " << format_double(nn_crispness(map)) << "\n";
    if (!trajectory_path.empty() && !truth_path.empty())
    {
        const auto est = read_trajectory_csv(trajectory_path);
        const auto truth = read_trajectory_csv(truth_path);
        if (est.size() != truth.size())
            throw IoError("trajectory has " + std::to_string(est.size()) + " poses, truth " +
                          std::to_string(truth.size()));
        std::cout << "loop_closure_error_m = " << format_double(loop_closure_error(est, truth)) << "\n";
    }
    return 0;
}

int cmd_calib(const GlobalOptions& g, const std::string& input_dir, std::optional<double> distance)
{
    const RunConfig r = load_run_config(g, input_dir);
    std::vector<GnssFix> fixes;
    std::vector<ImuAttitude> attitudes;
    if (!r.input_dir.empty())
    {
        fixes = read_sensor_csv(r.input_dir / "gnss.csv").fixes;
        attitudes = read_sensor_csv(r.input_dir / "imu.csv").attitudes;
    }
    else
    {
        const Scenario sc = make_scenario(r.scenario);
        fixes = sc.fixes;
        attitudes = sc.attitudes;
    }
    std::vector<HeadingSample> headings;
    for (const auto& a : attitudes)
        headings.push_back({a.time, a.raw_magnetic_heading});
    const double offset = estimate_heading_offset(fixes, headings, distance.value_or(r.calibration_distance));
    std::cout << "heading_offset_deg = " << format_double(offset * kRadToDeg) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Penalty-constrained ICP mapping"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "key = value settings file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "scenario seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--mode", g.mode, "prior, baseline or penalty")
        ->check(CLI::IsMember({"prior", "baseline", "penalty"}));

    std::string input_dir;
    auto* map = app.add_subcommand("map", "run the mapper and write map, trajectory and metrics");
    map->add_option("--input", input_dir, "recorded inputs (gnss.csv, imu.csv, scans.csv)");

    app.add_subcommand("synth", "write a synthetic scenario as recorded inputs");

    std::string map_path, world_path, trajectory_path, truth_path;
    auto* eval = app.add_subcommand("eval", "metrics of a map against ground truth");
    eval->add_option("--map", map_path, "map PLY")->required()->check(CLI::ExistingFile);
    eval->add_option("--world", world_path, "world.csv for the analytic crispness")->check(CLI::ExistingFile);
    eval->add_option("--trajectory", trajectory_path, "estimated trajectory.csv")->check(CLI::ExistingFile);
    eval->add_option("--truth", truth_path, "true trajectory at scan times")->check(CLI::ExistingFile);

    std::optional<double> distance;
    auto* calib = app.add_subcommand("calib-heading", "estimate the magnetometer heading offset");
    calib->add_option("--input", input_dir, "directory with gnss.csv and imu.csv");
    calib->add_option("--distance", distance, "track length used for the estimate (m)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::Success& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return kConfigError;
    }

    try
    {
        if (map->parsed())
            return cmd_map(g, input_dir);
        if (app.got_subcommand("synth"))
            return cmd_synth(g);
        if (eval->parsed())
            return cmd_eval(map_path, world_path, trajectory_path, truth_path);
        if (calib->parsed())
            return cmd_calib(g, input_dir, distance);
    }
    catch (const ConfigFailure& e)
    {
        std::cerr << "config error: " << e.message << "\n";
        return kConfigError;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kRuntimeError;
}
