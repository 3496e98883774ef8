#include "picp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace picp::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Distance from p to the surface of a solid cylinder standing on the ground.
double tree_distance(const Tree& t, const Vec3& p)
{
    const double rho = std::hypot(p.x() - t.center.x(), p.y() - t.center.y());
    const double top = t.center.z() + t.height;
    const double dz = p.z() - top;
    if (dz > 0.0)
        return rho <= t.radius ? dz : std::hypot(rho - t.radius, dz);
    if (rho >= t.radius)
        return p.z() >= t.center.z() ? rho - t.radius : std::hypot(rho - t.radius, t.center.z() - p.z());
    return std::min(t.radius - rho, -dz);
}

// First positive hit of a ray with a tree's mantle or top cap.
double tree_hit(const Tree& t, const Vec3& o, const Vec3& d)
{
    double best = kInf;
    const double ox = o.x() - t.center.x();
    const double oy = o.y() - t.center.y();
    const double a = d.x() * d.x() + d.y() * d.y();
    const double top = t.center.z() + t.height;
    if (a > 1e-18)
    {
        const double b = ox * d.x() + oy * d.y();
        const double c = ox * ox + oy * oy - t.radius * t.radius;
        const double disc = b * b - a * c;
        if (c > 0.0 && disc >= 0.0)
        {
            const double s = (-b - std::sqrt(disc)) / a;
            const double z = o.z() + s * d.z();
            if (s > 0.0 && z >= t.center.z() && z <= top)
                best = s;
        }
    }
    if (d.z() < 0.0 && o.z() > top)
    {
        const double s = (top - o.z()) / d.z();
        const double x = ox + s * d.x();
        const double y = oy + s * d.y();
        if (x * x + y * y <= t.radius * t.radius)
            best = std::min(best, s);
    }
    return best;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

World::World(double ground_height, std::vector<Tree> trees, std::uint64_t seed)
    : ground_height_(ground_height), trees_(std::move(trees)), seed_(seed)
{
    for (const auto& t : trees_)
    {
        if (!(t.radius > 0.0) || !(t.height > 0.0))
            throw std::invalid_argument("World: tree radius and height must be positive");
    }
    build_grid();
}

void World::build_grid()
{
    grid_.clear();
    if (trees_.empty())
        return;
    double x0 = kInf, y0 = kInf, x1 = -kInf, y1 = -kInf;
    for (const auto& t : trees_)
    {
        x0 = std::min(x0, t.center.x());
        y0 = std::min(y0, t.center.y());
        x1 = std::max(x1, t.center.x());
        y1 = std::max(y1, t.center.y());
        max_tree_radius_ = std::max(max_tree_radius_, t.radius);
    }
    gx0_ = static_cast<std::int64_t>(std::floor(x0 / cell_));
    gy0_ = static_cast<std::int64_t>(std::floor(y0 / cell_));
    nx_ = static_cast<std::int64_t>(std::floor(x1 / cell_)) - gx0_ + 1;
    ny_ = static_cast<std::int64_t>(std::floor(y1 / cell_)) - gy0_ + 1;
    grid_.assign(static_cast<std::size_t>(nx_ * ny_), {});
    for (std::size_t i = 0; i < trees_.size(); ++i)
    {
        const auto ix = static_cast<std::int64_t>(std::floor(trees_[i].center.x() / cell_)) - gx0_;
        const auto iy = static_cast<std::int64_t>(std::floor(trees_[i].center.y() / cell_)) - gy0_;
        grid_[static_cast<std::size_t>(iy * nx_ + ix)].push_back(i);
    }
}

std::vector<std::size_t> World::trees_near(const Vec3& p, double radius) const
{
    std::vector<std::size_t> out;
    if (grid_.empty())
        return out;
    const auto lo_x = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((p.x() - radius) / cell_)) - gx0_);
    const auto hi_x = std::min<std::int64_t>(nx_ - 1, static_cast<std::int64_t>(std::floor((p.x() + radius) / cell_)) - gx0_);
    const auto lo_y = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((p.y() - radius) / cell_)) - gy0_);
    const auto hi_y = std::min<std::int64_t>(ny_ - 1, static_cast<std::int64_t>(std::floor((p.y() + radius) / cell_)) - gy0_);
    const double r2 = radius * radius;
    for (std::int64_t iy = lo_y; iy <= hi_y; ++iy)
    {
        for (std::int64_t ix = lo_x; ix <= hi_x; ++ix)
        {
            for (std::size_t i : grid_[static_cast<std::size_t>(iy * nx_ + ix)])
            {
                const double dx = trees_[i].center.x() - p.x();
                const double dy = trees_[i].center.y() - p.y();
                if (dx * dx + dy * dy <= r2)
                    out.push_back(i);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

double World::surface_distance(const Vec3& p) const
{
    double best = std::abs(p.z() - ground_height_);
    for (std::size_t i : trees_near(p, best + max_tree_radius_))
        best = std::min(best, tree_distance(trees_[i], p));
    return best;
}

World gen_world(std::uint64_t seed, const WorldOptions& o)
{
    if (!(o.tree_density >= 0.0))
        throw std::invalid_argument("gen_world: density must be non-negative");
    if (!(o.min_radius > 0.0 && o.max_radius >= o.min_radius && o.min_height > 0.0 && o.max_height >= o.min_height))
        throw std::invalid_argument("gen_world: invalid tree size ranges");
    std::mt19937_64 rng(derive_seed(seed, 1));
    const double w = o.max_corner.x() - o.min_corner.x();
    const double h = o.max_corner.y() - o.min_corner.y();
    std::vector<Tree> trees;
    const double mean = o.tree_density * std::max(0.0, w) * std::max(0.0, h);
    if (mean > 0.0)
    {
        std::poisson_distribution<long> count(mean);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const long n = count(rng);
        trees.reserve(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i)
        {
            Tree t;
            t.center = Vec3(o.min_corner.x() + w * u(rng), o.min_corner.y() + h * u(rng), 0.0);
            t.radius = o.min_radius + (o.max_radius - o.min_radius) * u(rng);
            t.height = o.min_height + (o.max_height - o.min_height) * u(rng);
            trees.push_back(t);
        }
    }
    return World(0.0, std::move(trees), seed);
}

World gen_world(std::uint64_t seed, double extent, double tree_density)
{
    WorldOptions o;
    o.min_corner = Vec3(-0.5 * extent, -0.5 * extent, 0.0);
    o.max_corner = Vec3(0.5 * extent, 0.5 * extent, 0.0);
    o.tree_density = tree_density;
    return gen_world(seed, o);
}

World clear_corridor(const World& world, const std::vector<Vec3>& path, double half_width)
{
    std::vector<bool> remove(world.trees().size(), false);
    for (const Vec3& p : path)
    {
        for (std::size_t i : world.trees_near(p, half_width + 1.0))
        {
            const Tree& t = world.trees()[i];
            if (std::hypot(t.center.x() - p.x(), t.center.y() - p.y()) < half_width + t.radius)
                remove[i] = true;
        }
    }
    // also clear between consecutive path samples
    for (std::size_t k = 1; k < path.size(); ++k)
    {
        const Vec3 a = path[k - 1];
        const Vec3 b = path[k];
        const Vec3 mid = 0.5 * (a + b);
        const double half = 0.5 * std::hypot(b.x() - a.x(), b.y() - a.y());
        for (std::size_t i : world.trees_near(mid, half + half_width + 1.0))
        {
            const Tree& t = world.trees()[i];
            const Eigen::Vector2d ab(b.x() - a.x(), b.y() - a.y());
            const Eigen::Vector2d ac(t.center.x() - a.x(), t.center.y() - a.y());
            const double len2 = ab.squaredNorm();
            const double s = len2 > 0.0 ? std::clamp(ac.dot(ab) / len2, 0.0, 1.0) : 0.0;
            if ((ac - s * ab).norm() < half_width + t.radius)
                remove[i] = true;
        }
    }
    std::vector<Tree> kept;
    for (std::size_t i = 0; i < world.trees().size(); ++i)
    {
        if (!remove[i])
            kept.push_back(world.trees()[i]);
    }
    return World(world.ground_height(), std::move(kept), world.seed());
}

Vec3 ray_direction(const LidarModel& lidar, int beam, int step)
{
    const double el = lidar.beams > 1
                          ? lidar.min_elevation + (lidar.max_elevation - lidar.min_elevation) * beam / (lidar.beams - 1)
                          : 0.5 * (lidar.min_elevation + lidar.max_elevation);
    const double az = 2.0 * std::numbers::pi * step / lidar.azimuth_steps;
    const Vec3 spin(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    return lidar.tilt == 0.0 ? spin : Vec3(rot_y(lidar.tilt) * spin);
}

double cast_ray(const World& world, const Vec3& origin, const Vec3& direction, double max_range,
                const std::vector<std::size_t>& candidates)
{
    double best = kInf;
    if (direction.z() < 0.0)
        best = (world.ground_height() - origin.z()) / direction.z();
    for (std::size_t i : candidates)
        best = std::min(best, tree_hit(world.trees()[i], origin, direction));
    return best <= max_range ? best : kInf;
}

PointCloud gen_scan(const World& world, const RigidTransform& pose, const LidarModel& lidar, std::uint64_t seed)
{
    if (!(lidar.max_range > 0.0) || lidar.beams < 1 || lidar.azimuth_steps < 1 || !(lidar.range_noise_sigma >= 0.0))
        throw std::invalid_argument("gen_scan: invalid lidar model");

    const Vec3 origin = pose.translation();
    const Mat3& r = pose.rotation();

    // bucket nearby trees by the world azimuth interval they subtend
    constexpr int kBins = 720;
    const double bin_width = 2.0 * std::numbers::pi / kBins;
    std::vector<std::vector<std::size_t>> bins(kBins);
    std::vector<std::size_t> close;  // trees too near for a meaningful azimuth interval
    for (std::size_t i : world.trees_near(origin, lidar.max_range + 1.0))
    {
        const Tree& t = world.trees()[i];
        const double dx = t.center.x() - origin.x();
        const double dy = t.center.y() - origin.y();
        const double dist = std::hypot(dx, dy);
        if (dist <= t.radius * 1.5 + 1e-9)
        {
            close.push_back(i);
            continue;
        }
        const double half = std::asin(std::min(1.0, t.radius / dist)) + 1e-6;
        const double center = std::atan2(dy, dx);
        const int lo = static_cast<int>(std::floor((center - half + std::numbers::pi) / bin_width));
        const int hi = static_cast<int>(std::floor((center + half + std::numbers::pi) / bin_width));
        for (int b = lo; b <= hi; ++b)
            bins[static_cast<std::size_t>(((b % kBins) + kBins) % kBins)].push_back(i);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::size_t> candidates;
    PointCloud out;
    out.points.reserve(static_cast<std::size_t>(lidar.beams) * static_cast<std::size_t>(lidar.azimuth_steps));
    for (int step = 0; step < lidar.azimuth_steps; ++step)
    {
        for (int beam = 0; beam < lidar.beams; ++beam)
        {
            const Vec3 d_sensor = ray_direction(lidar, beam, step);
            const Vec3 d = r * d_sensor;
            candidates = close;
            if (d.x() * d.x() + d.y() * d.y() > 1e-12)
            {
                const int b = static_cast<int>(std::floor((std::atan2(d.y(), d.x()) + std::numbers::pi) / bin_width));
                const auto& bin = bins[static_cast<std::size_t>(std::clamp(b, 0, kBins - 1))];
                candidates.insert(candidates.end(), bin.begin(), bin.end());
            }
            const double range = cast_ray(world, origin, d, lidar.max_range, candidates);
            if (!(range >= lidar.min_range) || !std::isfinite(range))
                continue;
            const double measured = range + lidar.range_noise_sigma * noise(rng);
            if (measured < lidar.min_range || measured > lidar.max_range)
                continue;
            out.points.push_back(measured * d_sensor);
        }
    }
    return out;
}

bool under_canopy(const World& world, const Vec3& position, double radius, std::size_t min_trees)
{
    return world.trees_near(position, radius).size() >= min_trees;
}

GnssFix gen_gnss(const RigidTransform& true_pose, double time, const SensorNoise& noise, bool canopy,
                 std::uint64_t seed)
{
    const SymMat3& cov = canopy ? noise.gnss_cov_canopy : noise.gnss_cov_open;
    const SymEigen eig = eig_sym3(cov);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 z;
    for (int i = 0; i < 3; ++i)
        z[i] = std::sqrt(std::max(0.0, eig.values[i])) * n(rng);

    GnssFix fix;
    fix.time = time;
    fix.position = true_pose.translation() + eig.vectors * z;
    fix.covariance = cov;
    fix.status = canopy ? GnssStatus::rtk_float : GnssStatus::rtk_fixed;
    return fix;
}

ImuAttitude gen_imu(const RigidTransform& true_pose, double time, const SensorNoise& noise, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    const YawPitchRoll ypr = yaw_pitch_roll(true_pose.rotation());
    const double roll = ypr.roll + noise.attitude_noise_sigma * n(rng);
    const double pitch = ypr.pitch + noise.attitude_noise_sigma * n(rng);
    const double heading = wrap_angle(ypr.yaw + noise.mag_heading_bias + noise.mag_heading_noise_sigma * n(rng));

    ImuAttitude att;
    att.time = time;
    att.attitude = from_yaw_pitch_roll(heading, pitch, roll);
    att.roll_pitch_cov = noise.attitude_noise_sigma * noise.attitude_noise_sigma;
    att.raw_magnetic_heading = heading;
    return att;
}

std::vector<StampedPose> gen_trajectory(TrajectoryKind kind, double length, double step, const TrajectoryOptions& o)
{
    if (!(step > 0.0))
        throw std::invalid_argument("gen_trajectory: step must be positive");
    if (!(length >= 0.0))
        throw std::invalid_argument("gen_trajectory: length must be non-negative");
    if (!(o.speed > 0.0))
        throw std::invalid_argument("gen_trajectory: speed must be positive");

    std::vector<StampedPose> out;
    switch (kind)
    {
    case TrajectoryKind::straight:
    case TrajectoryKind::rough:
    {
        const auto n = static_cast<int>(std::floor(length / step + 1e-9));
        for (int i = 0; i <= n; ++i)
        {
            const double s = i * step;
            double pitch = 0.0;
            double roll = 0.0;
            if (kind == TrajectoryKind::rough)
            {
                const double phase = 2.0 * std::numbers::pi * s / o.rough_wavelength;
                pitch = o.rough_pitch * std::sin(phase);
                roll = o.rough_roll * std::sin(0.61 * phase + 1.0);
            }
            out.push_back({s / o.speed, RigidTransform(from_yaw_pitch_roll(0.0, pitch, roll), Vec3(s, 0.0, o.sensor_height))});
        }
        break;
    }
    case TrajectoryKind::loop:
    {
        const double radius = length / (2.0 * std::numbers::pi);
        const auto n = std::max(3, static_cast<int>(std::lround(length / step)));
        for (int i = 0; i <= n; ++i)
        {
            const double theta = 2.0 * std::numbers::pi * i / n;
            const double s = length * i / n;
            if (i == n)
            {
                out.push_back({s / o.speed, out.front().pose});
                break;
            }
            const Vec3 p(radius * std::sin(theta), radius * (1.0 - std::cos(theta)), o.sensor_height);
            out.push_back({s / o.speed, RigidTransform(rot_z(theta), p)});
        }
        break;
    }
    }
    return out;
}

}  // namespace picp::synth
