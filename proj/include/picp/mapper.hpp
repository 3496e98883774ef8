#pragma once

#include "picp/geometry.hpp"
#include "picp/normals.hpp"
#include "picp/penalties.hpp"
#include "picp/point_cloud.hpp"
#include "picp/registration.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace picp {

enum class PenaltyMode
{
    none,
    gnss_only,
    three_point,
};

struct MapperConfig
{
    double epsilon = 0.05;  // m, densification spacing
    /// Cut-map radius; infinity disables the cut (whole map as reference).
    double r_max = 100.0;
    IcpConfig icp{};
    PenaltyMode penalty_mode = PenaltyMode::three_point;
    /// false: insert every scan at its sensor prior without registration.
    bool register_scans = true;
    NormalOptions normals{};
    /// Offset of the gravity and heading points. With a 1 m arm the penalties
    /// hold pitch far more loosely than ICP trades it for height, and a
    /// corridor run can pitch away; 5 m keeps them anchored.
    double arm_length = 5.0;
    double aux_cov_scale = 1.0;
    /// Magnetometer offset known before the run (magnetic minus true heading).
    double initial_heading_offset = 0.0;
    bool fuse_heading = true;
    HeadingFusionConfig heading{};
    /// Wall-clock timings in the stats; off gives reproducible (zero) values.
    bool record_timings = true;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

struct ScanStats
{
    std::size_t scan_id = 0;
    double time = 0.0;
    std::size_t scan_points = 0;
    std::size_t cutmap_points = 0;  // reference points offered to registration
    std::size_t map_points = 0;     // map size when the scan arrived
    std::size_t inserted_points = 0;
    double registration_ms = 0.0;
    double insertion_ms = 0.0;
    int icp_iterations = 0;
    double residual = 0.0;
    std::size_t match_count = 0;
    bool registered = false;
};

struct MapperEvent
{
    std::size_t scan_id = 0;
    std::string message;
};

/// Point lookup for the spacing rule: a hash of cubic cells of side epsilon.
class SpacingGrid
{
public:
    explicit SpacingGrid(double epsilon);

    double epsilon() const { return epsilon_; }
    /// True when some stored point lies at distance <= epsilon from `p`.
    bool occupied(const Vec3& p, const std::vector<Vec3>& points) const;
    void add(const Vec3& p, std::uint32_t index);

private:
    using Key = std::uint64_t;
    Key key(std::int64_t x, std::int64_t y, std::int64_t z) const;
    std::int64_t cell(double v) const;

    double epsilon_;
    std::unordered_map<Key, std::vector<std::uint32_t>> cells_;
};

/// Coarse spatial blocks over the map for radius selection.
class BlockIndex
{
public:
    explicit BlockIndex(double block_size = 10.0);

    void add(const Vec3& p, std::uint32_t index);
    /// Indices of points within `radius` of `center`, ascending.
    std::vector<std::uint32_t> within(const Vec3& center, double radius, const std::vector<Vec3>& points) const;

private:
    using Key = std::uint64_t;
    Key key(std::int64_t x, std::int64_t y, std::int64_t z) const;

    double size_;
    std::int64_t lo_[3] = {0, 0, 0};
    std::int64_t hi_[3] = {-1, -1, -1};
    std::unordered_map<Key, std::vector<std::uint32_t>> blocks_;
};

struct MapperState
{
    PointCloud map;  // always carries normals; zero normal = unusable
    RigidTransform pose;
    std::optional<GnssFix> last_gnss;
    std::optional<ImuAttitude> last_attitude;
    std::vector<StampedPose> trajectory;
    std::vector<ScanStats> stats;
    std::vector<MapperEvent> events;
};

/// Previous pose moved by the GNSS position increment and rotated by the IMU
/// attitude change; the previous pose itself when either sample is missing.
RigidTransform prior_from_sensors(const MapperState& prev, const std::optional<GnssFix>& fix,
                                  const std::optional<ImuAttitude>& att);

/// Points with |p - center| <= r_max, in map order, with their normals.
PointCloud cut_map(const PointCloud& map, const Vec3& center, double r_max);

/// Appends the transformed scan points lying farther than epsilon from every
/// map point, taken in scan order so accepted points also exclude later
/// ones. New points get normals from their neighbors in the updated map
/// (existing normals are untouched).
PointCloud insert_scan(const PointCloud& map, const PointCloud& scan, const RigidTransform& t, double epsilon,
                       const NormalOptions& normals = {});

/// Incremental mapper: prior from sensors, cut map, penalized ICP, insertion.
class Mapper
{
public:
    explicit Mapper(MapperConfig config);

    /// Processes one scan (sensor frame) with the GNSS fix and IMU attitude at
    /// its timestamp. A failed registration never aborts: the prior pose is
    /// recorded, the scan is not inserted and an event is logged. An empty cut
    /// map inserts the scan at the prior.
    void process_scan(double time, const PointCloud& scan, const GnssFix& fix, const ImuAttitude& att);

    const MapperState& state() const { return state_; }
    const MapperConfig& config() const { return config_; }
    /// Heading used for the last scan (magnetometer corrected by the offset).
    double heading() const { return heading_; }

private:
    std::size_t insert(const PointCloud& scan, const RigidTransform& pose);
    PointCloud cut(const Vec3& center) const;

    MapperConfig config_;
    MapperState state_;
    SpacingGrid spacing_;
    BlockIndex blocks_;
    HeadingFusion fusion_;
    double heading_ = 0.0;
};

}  // namespace picp
