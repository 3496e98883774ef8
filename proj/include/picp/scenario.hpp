#pragma once

#include "picp/config.hpp"
#include "picp/geometry.hpp"
#include "picp/penalties.hpp"
#include "picp/point_cloud.hpp"
#include "picp/synth.hpp"

#include <cstdint>
#include <vector>

namespace picp {

enum class GnssProfile
{
    automatic,  // canopy noise where trees surround the antenna
    open,
    canopy,
};

/// Everything needed to generate a synthetic run.
struct ScenarioConfig
{
    std::uint64_t seed = 1;

    synth::TrajectoryKind trajectory = synth::TrajectoryKind::straight;
    double length = 100.0;      // m
    double scan_step = 1.0;     // m between scans
    double sensor_step = 0.2;   // m between GNSS/IMU samples; divides scan_step
    synth::TrajectoryOptions motion{};

    double tree_density = 0.02;
    double world_margin = 40.0;         // m around the path
    double corridor_half_width = 2.0;   // m kept free of trees along the path
    double tree_min_radius = 0.15;
    double tree_max_radius = 0.4;
    double tree_min_height = 5.0;
    double tree_max_height = 15.0;

    synth::LidarModel lidar{};
    synth::SensorNoise noise{};
    GnssProfile gnss_profile = GnssProfile::automatic;
    double canopy_radius = 10.0;
    std::size_t canopy_min_trees = 3;

    /// Throws std::invalid_argument on inconsistent values.
    void validate() const;
};

/// Reads scenario keys from `cfg` (missing keys keep their defaults).
ScenarioConfig scenario_from_config(const KeyValueConfig& cfg, ScenarioConfig base = {});

/// Generated world, ground truth and sensor streams. Scans are produced on
/// demand since they dominate memory.
struct Scenario
{
    ScenarioConfig config;
    synth::World world{0.0, {}, 0};
    std::vector<StampedPose> truth;  // at sensor rate
    std::vector<GnssFix> fixes;      // one per truth sample
    std::vector<ImuAttitude> attitudes;
    std::vector<std::size_t> scan_samples;  // truth indices where scans are taken

    std::size_t scan_count() const { return scan_samples.size(); }
    double scan_time(std::size_t k) const { return truth[scan_samples[k]].time; }
    const RigidTransform& scan_truth(std::size_t k) const { return truth[scan_samples[k]].pose; }
    PointCloud scan(std::size_t k) const;
};

Scenario make_scenario(const ScenarioConfig& config);

}  // namespace picp
