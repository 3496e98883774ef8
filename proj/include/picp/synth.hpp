#pragma once

#include "picp/geometry.hpp"
#include "picp/penalties.hpp"
#include "picp/point_cloud.hpp"

#include <cstdint>
#include <numbers>
#include <vector>

namespace picp::synth {

/// Independent stream seed derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

/// Vertical cylinder standing on the ground plane.
struct Tree
{
    Vec3 center = Vec3::Zero();  // base point, on the ground
    double radius = 0.2;
    double height = 10.0;
};

struct WorldOptions
{
    Vec3 min_corner = Vec3(-50.0, -50.0, 0.0);
    Vec3 max_corner = Vec3(50.0, 50.0, 0.0);
    double tree_density = 0.02;  // trees / m^2
    double min_radius = 0.1;
    double max_radius = 0.4;
    double min_height = 5.0;
    double max_height = 15.0;
};

/// Flat ground at z = ground_height plus Poisson-scattered trees.
class World
{
public:
    World(double ground_height, std::vector<Tree> trees, std::uint64_t seed);

    double ground_height() const { return ground_height_; }
    const std::vector<Tree>& trees() const { return trees_; }
    std::uint64_t seed() const { return seed_; }

    /// Indices of trees whose axis lies within `radius` (horizontally) of `p`, ascending.
    std::vector<std::size_t> trees_near(const Vec3& p, double radius) const;

    /// Distance from `p` to the closest surface (ground or any tree mantle/top).
    double surface_distance(const Vec3& p) const;


private:
    void build_grid();

    double ground_height_;
    std::vector<Tree> trees_;
    std::uint64_t seed_;

    double cell_ = 5.0;
    double max_tree_radius_ = 0.0;
    std::int64_t gx0_ = 0, gy0_ = 0, nx_ = 0, ny_ = 0;
    std::vector<std::vector<std::size_t>> grid_;
};

/// Poisson number of trees over the rectangle, uniformly placed.
World gen_world(std::uint64_t seed, const WorldOptions& options);

/// Convenience: square of side `extent` centered at the origin.
World gen_world(std::uint64_t seed, double extent, double tree_density);

/// Copy of `world` without trees closer than `half_width` (horizontally) to the path.
World clear_corridor(const World& world, const std::vector<Vec3>& path, double half_width);

struct LidarModel
{
    double max_range = 100.0;
    double min_range = 0.5;
    int beams = 16;
    double min_elevation = -15.0 * std::numbers::pi / 180.0;
    double max_elevation = 15.0 * std::numbers::pi / 180.0;
    int azimuth_steps = 900;
    double tilt = 0.0;  // rotation of the spin axis about the body y axis
    double range_noise_sigma = 0.0;
};

/// Direction of ray (beam, step) in the sensor frame (unit vector).
Vec3 ray_direction(const LidarModel& lidar, int beam, int step);

/// Range along a ray from `origin` to the first surface, or +inf.
double cast_ray(const World& world, const Vec3& origin, const Vec3& direction, double max_range,
                const std::vector<std::size_t>& candidates);

/// One return per ray hitting geometry within [min_range, max_range], in the
/// sensor frame, with Gaussian range noise. `pose` is sensor -> world.
PointCloud gen_scan(const World& world, const RigidTransform& pose, const LidarModel& lidar, std::uint64_t seed);

struct SensorNoise
{
    SymMat3 gnss_cov_open = SymMat3::diagonal(0.02 * 0.02, 0.02 * 0.02, 0.06 * 0.06);
    SymMat3 gnss_cov_canopy = SymMat3::diagonal(0.1 * 0.1, 0.1 * 0.1, 0.3 * 0.3);
    double mag_heading_bias = 0.0;                                  // rad
    double mag_heading_noise_sigma = 1.0 * std::numbers::pi / 180.0;  // rad
    double attitude_noise_sigma = 0.2 * std::numbers::pi / 180.0;     // rad, roll and pitch
};

/// Canopy test used to pick the GNSS noise profile: at least `min_trees`
/// trees within `radius` horizontally.
bool under_canopy(const World& world, const Vec3& position, double radius = 10.0, std::size_t min_trees = 3);

/// Fix at the pose origin plus a sample of the selected covariance, which is
/// also reported unchanged.
GnssFix gen_gnss(const RigidTransform& true_pose, double time, const SensorNoise& noise, bool canopy,
                 std::uint64_t seed);

/// Attitude with unbiased roll/pitch noise and a biased, noisy magnetic heading.
ImuAttitude gen_imu(const RigidTransform& true_pose, double time, const SensorNoise& noise, std::uint64_t seed);

enum class TrajectoryKind
{
    straight,
    loop,
    rough,
};

struct TrajectoryOptions
{
    double speed = 1.0;             // m/s
    double sensor_height = 1.5;     // m above ground
    double rough_pitch = 4.0 * std::numbers::pi / 180.0;  // excursion bound
    double rough_roll = 3.0 * std::numbers::pi / 180.0;
    double rough_wavelength = 12.0;  // m
};

/// Poses at fixed arc-length `step`, heading tangent to the path.
/// straight: along +x; loop: counter-clockwise circle of circumference
/// `length` starting and ending at the origin; rough: straight with
/// sinusoidal pitch and roll.
std::vector<StampedPose> gen_trajectory(TrajectoryKind kind, double length, double step,
                                      const TrajectoryOptions& options = {});

}  // namespace picp::synth
