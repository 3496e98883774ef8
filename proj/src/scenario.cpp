#include "picp/scenario.hpp"

#include "picp/io.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace picp {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Stream identifiers for derive_seed.
enum Stream : std::uint64_t
{
    world_stream = 10,
    gnss_stream = 11,
    imu_stream = 12,
    scan_stream = 13,
};

}  // namespace

void ScenarioConfig::validate() const
{
    if (!(length > 0.0) || !(scan_step > 0.0) || !(sensor_step > 0.0))
        throw std::invalid_argument("scenario: length, scan_step and sensor_step must be positive");
    const double ratio = scan_step / sensor_step;
    if (std::abs(ratio - std::round(ratio)) > 1e-6 || ratio < 1.0 - 1e-9)
        throw std::invalid_argument("scenario: scan_step must be a whole multiple of sensor_step");
    if (!(tree_density >= 0.0) || !(world_margin >= 0.0) || !(corridor_half_width >= 0.0))
        throw std::invalid_argument("scenario: density, margin and corridor width must be non-negative");
    if (!(lidar.max_range > lidar.min_range) || lidar.beams < 1 || lidar.azimuth_steps < 1 ||
        !(lidar.range_noise_sigma >= 0.0))
        throw std::invalid_argument("scenario: invalid lidar model");
}

ScenarioConfig scenario_from_config(const KeyValueConfig& cfg, ScenarioConfig s)
{
    s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(s.seed)));

    const std::string kind = cfg.get_string("trajectory", "");
    if (kind == "straight")
        s.trajectory = synth::TrajectoryKind::straight;
    else if (kind == "loop")
        s.trajectory = synth::TrajectoryKind::loop;
    else if (kind == "rough")
        s.trajectory = synth::TrajectoryKind::rough;
    else if (!kind.empty())
        throw ParseError(cfg.source(), cfg.line_of("trajectory"), "trajectory must be straight, loop or rough");

    s.length = cfg.get_double("length", s.length);
    s.scan_step = cfg.get_double("scan_step", s.scan_step);
    s.sensor_step = cfg.get_double("sensor_step", s.sensor_step);
    s.motion.speed = cfg.get_double("speed", s.motion.speed);
    s.motion.sensor_height = cfg.get_double("sensor_height", s.motion.sensor_height);
    s.motion.rough_pitch = cfg.get_double("rough_pitch_deg", s.motion.rough_pitch / kDeg) * kDeg;
    s.motion.rough_roll = cfg.get_double("rough_roll_deg", s.motion.rough_roll / kDeg) * kDeg;
    s.motion.rough_wavelength = cfg.get_double("rough_wavelength", s.motion.rough_wavelength);

    s.tree_density = cfg.get_double("tree_density", s.tree_density);
    s.world_margin = cfg.get_double("world_margin", s.world_margin);
    s.corridor_half_width = cfg.get_double("corridor_half_width", s.corridor_half_width);
    s.tree_min_radius = cfg.get_double("tree_min_radius", s.tree_min_radius);
    s.tree_max_radius = cfg.get_double("tree_max_radius", s.tree_max_radius);
    s.tree_min_height = cfg.get_double("tree_min_height", s.tree_min_height);
    s.tree_max_height = cfg.get_double("tree_max_height", s.tree_max_height);

    s.lidar.max_range = cfg.get_double("lidar_max_range", s.lidar.max_range);
    s.lidar.min_range = cfg.get_double("lidar_min_range", s.lidar.min_range);
    s.lidar.beams = static_cast<int>(cfg.get_int("lidar_beams", s.lidar.beams));
    s.lidar.azimuth_steps = static_cast<int>(cfg.get_int("lidar_azimuth_steps", s.lidar.azimuth_steps));
    s.lidar.tilt = cfg.get_double("lidar_tilt_deg", s.lidar.tilt / kDeg) * kDeg;
    const double fov = cfg.get_double("lidar_fov_deg", (s.lidar.max_elevation - s.lidar.min_elevation) / kDeg);
    s.lidar.min_elevation = -0.5 * fov * kDeg;
    s.lidar.max_elevation = 0.5 * fov * kDeg;
    s.lidar.range_noise_sigma = cfg.get_double("range_noise", s.lidar.range_noise_sigma);

    const std::string profile = cfg.get_string("gnss_profile", "");
    if (profile == "auto")
        s.gnss_profile = GnssProfile::automatic;
    else if (profile == "open")
        s.gnss_profile = GnssProfile::open;
    else if (profile == "canopy")
        s.gnss_profile = GnssProfile::canopy;
    else if (!profile.empty())
        throw ParseError(cfg.source(), cfg.line_of("gnss_profile"), "gnss_profile must be auto, open or canopy");

    auto cov = [&](const std::string& prefix, const SymMat3& fallback) {
        const double xy = cfg.get_double("gnss_sigma_xy_" + prefix, std::sqrt(fallback.xx));
        const double z = cfg.get_double("gnss_sigma_z_" + prefix, std::sqrt(fallback.zz));
        return SymMat3::diagonal(xy * xy, xy * xy, z * z);
    };
    s.noise.gnss_cov_open = cov("open", s.noise.gnss_cov_open);
    s.noise.gnss_cov_canopy = cov("canopy", s.noise.gnss_cov_canopy);
    s.noise.mag_heading_bias = cfg.get_double("mag_bias_deg", s.noise.mag_heading_bias / kDeg) * kDeg;
    s.noise.mag_heading_noise_sigma = cfg.get_double("mag_noise_deg", s.noise.mag_heading_noise_sigma / kDeg) * kDeg;
    s.noise.attitude_noise_sigma = cfg.get_double("attitude_noise_deg", s.noise.attitude_noise_sigma / kDeg) * kDeg;
    s.canopy_radius = cfg.get_double("canopy_radius", s.canopy_radius);
    s.canopy_min_trees = static_cast<std::size_t>(cfg.get_int("canopy_min_trees", static_cast<long long>(s.canopy_min_trees)));
    s.validate();
    return s;
}

Scenario make_scenario(const ScenarioConfig& config)
{
    config.validate();
    Scenario sc;
    sc.config = config;
    sc.truth = synth::gen_trajectory(config.trajectory, config.length, config.sensor_step, config.motion);

    Vec3 lo = sc.truth.front().pose.translation();
    Vec3 hi = lo;
    std::vector<Vec3> path;
    for (const auto& p : sc.truth)
    {
        lo = lo.cwiseMin(p.pose.translation());
        hi = hi.cwiseMax(p.pose.translation());
        path.push_back(p.pose.translation());
    }
    synth::WorldOptions wo;
    wo.min_corner = Vec3(lo.x() - config.world_margin, lo.y() - config.world_margin, 0.0);
    wo.max_corner = Vec3(hi.x() + config.world_margin, hi.y() + config.world_margin, 0.0);
    wo.tree_density = config.tree_density;
    wo.min_radius = config.tree_min_radius;
    wo.max_radius = config.tree_max_radius;
    wo.min_height = config.tree_min_height;
    wo.max_height = config.tree_max_height;
    sc.world = synth::clear_corridor(synth::gen_world(synth::derive_seed(config.seed, world_stream), wo), path,
                                     config.corridor_half_width);

    for (std::size_t i = 0; i < sc.truth.size(); ++i)
    {
        const auto& tp = sc.truth[i];
        bool canopy = config.gnss_profile == GnssProfile::canopy;
        if (config.gnss_profile == GnssProfile::automatic)
            canopy = synth::under_canopy(sc.world, tp.pose.translation(), config.canopy_radius, config.canopy_min_trees);
        sc.fixes.push_back(synth::gen_gnss(tp.pose, tp.time, config.noise, canopy,
                                           synth::derive_seed(config.seed, gnss_stream, i)));
        sc.attitudes.push_back(synth::gen_imu(tp.pose, tp.time, config.noise, synth::derive_seed(config.seed, imu_stream, i)));
    }

    const auto every = static_cast<std::size_t>(std::llround(config.scan_step / config.sensor_step));
    for (std::size_t i = 0; i < sc.truth.size(); i += every)
        sc.scan_samples.push_back(i);
    if (config.trajectory == synth::TrajectoryKind::loop && sc.scan_samples.back() != sc.truth.size() - 1)
        sc.scan_samples.push_back(sc.truth.size() - 1);
    return sc;
}

PointCloud Scenario::scan(std::size_t k) const
{
    return synth::gen_scan(world, scan_truth(k), config.lidar, synth::derive_seed(config.seed, scan_stream, k));
}

}  // namespace picp
