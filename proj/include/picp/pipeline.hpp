#pragma once

#include "picp/config.hpp"
#include "picp/mapper.hpp"
#include "picp/scenario.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace picp {

/// prior: insert at the sensor prior without ICP; baseline: ICP without
/// penalties; penalty: ICP with GNSS/IMU penalties.
enum class RunMode
{
    prior,
    baseline,
    penalty,
};

std::string to_string(RunMode m);
/// Throws std::invalid_argument for unknown names.
RunMode run_mode_from_string(const std::string& s);

struct RunConfig
{
    /// Synthetic scenario, used unless `input_dir` is set.
    ScenarioConfig scenario{};
    /// Recorded inputs: gnss.csv, imu.csv, scans.csv (scan_id,time,file) and
    /// the PLY files it lists; optionally world.csv for ground-truth metrics.
    std::filesystem::path input_dir;
    MapperConfig mapper{};
    RunMode mode = RunMode::penalty;
    /// 1: GNSS position only; 3: GNSS, gravity and heading points.
    int penalty_points = 3;
    /// Track length used to calibrate the magnetometer offset.
    double calibration_distance = 10.0;
    std::filesystem::path output_dir = "out";
    bool write_map = true;
    bool ascii_ply = false;

    /// MapperConfig with the mode applied.
    MapperConfig effective_mapper(double heading_offset) const;
};

/// Reads run keys (mode, mapper, ICP, outputs, scenario) from `cfg`.
/// Throws ParseError on invalid values.
RunConfig run_config_from(const KeyValueConfig& cfg, RunConfig base = {});

struct RunResult
{
    MapperState state;
    double heading_offset = 0.0;
    bool heading_calibrated = false;
    std::size_t input_warnings = 0;
    std::vector<std::string> messages;
    /// Ground-truth poses at scan times (synthetic runs).
    std::vector<StampedPose> truth;
    std::optional<synth::World> world;
    std::optional<double> loop_closure_error;
    /// See crispness(); needs the world.
    std::optional<double> crispness;
    /// Ground-truth-free measures, see local_crispness() and nn_crispness().
    double local_crispness = 0.0;
    double nn_crispness = 0.0;
};

/// Runs the mapper over all scans in memory.
RunResult run_mapping(const RunConfig& config);

/// Translation of the mismatch between estimated and true motion from the
/// first to the last pose.
double loop_closure_error(const std::vector<StampedPose>& estimate, const std::vector<StampedPose>& truth);
/// Mean distance of map points to the analytic surfaces of `world`. Global:
/// a map that is sharp but bent scores badly.
double crispness(const PointCloud& map, const synth::World& world);
/// Mean distance of each map point to the plane fitted through its k nearest
/// map neighbors: the apparent thickness of surfaces. Blur and doubled
/// surfaces score badly, smooth bending does not. Needs no ground truth.
double local_crispness(const PointCloud& map, std::size_t k = 10);
/// Mean nearest-neighbor distance inside the map, for runs without ground truth.
double nn_crispness(const PointCloud& map);

void write_trajectory_csv(const std::vector<StampedPose>& trajectory, const std::filesystem::path& path);
/// Throws ParseError on malformed rows.
std::vector<StampedPose> read_trajectory_csv(const std::filesystem::path& path);
void write_metrics_csv(const RunResult& result, const std::filesystem::path& path);
void write_world_csv(const synth::World& world, const std::filesystem::path& path);
synth::World read_world_csv(const std::filesystem::path& path);

/// Writes map.ply, trajectory.csv, metrics.csv and summary.txt into the output directory.
void write_outputs(const RunConfig& config, const RunResult& result);

/// Writes the synthetic scenario as recorded inputs (see RunConfig::input_dir)
/// plus truth.csv and world.csv.
void write_scenario(const Scenario& scenario, const std::filesystem::path& dir);

}  // namespace picp
