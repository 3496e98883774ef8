#include "picp/mapper.hpp"

#include "picp/neighbor_index.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace picp {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z)
{
    constexpr std::uint64_t mask = (1ULL << 21) - 1;
    return ((static_cast<std::uint64_t>(x) & mask) << 42) | ((static_cast<std::uint64_t>(y) & mask) << 21) |
           (static_cast<std::uint64_t>(z) & mask);
}

// Appends the transformed scan points that pass the spacing rule; returns how many.
std::size_t append_spaced(PointCloud& map, SpacingGrid& grid, const PointCloud& scan, const RigidTransform& t,
                          BlockIndex* blocks)
{
    std::size_t inserted = 0;
    for (const Vec3& p : scan.points)
    {
        const Vec3 q = t.apply(p);
        if (grid.occupied(q, map.points))
            continue;
        const auto index = static_cast<std::uint32_t>(map.points.size());
        map.points.push_back(q);
        map.normals.push_back(Vec3::Zero());
        grid.add(q, index);
        if (blocks)
            blocks->add(q, index);
        ++inserted;
    }
    return inserted;
}

// Normals for map points [first, end) from neighbors among `local` (map indices).
void fill_normals(PointCloud& map, std::size_t first, const std::vector<std::uint32_t>& local,
                  const Vec3& viewpoint, NormalOptions options)
{
    if (first >= map.size())
        return;
    std::vector<Vec3> points;
    points.reserve(local.size());
    for (std::uint32_t i : local)
        points.push_back(map.points[i]);
    options.k = std::min(options.k, points.size());
    if (options.k < 3)
        return;
    options.orientation = NormalOrientation::toward_viewpoint(viewpoint);
    const NeighborIndex index{std::span<const Vec3>(points)};
    for (std::size_t i = first; i < map.size(); ++i)
    {
        if (auto n = estimate_normal(index, points, map.points[i], options))
            map.normals[i] = *n;
    }
}

}  // namespace

void MapperConfig::validate() const
{
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("MapperConfig: epsilon must be positive");
    if (!(r_max > 0.0))
        throw std::invalid_argument("MapperConfig: r_max must be positive");
    if (!(arm_length > 0.0) || !(aux_cov_scale > 0.0))
        throw std::invalid_argument("MapperConfig: arm_length and aux_cov_scale must be positive");
    if (normals.k < 3)
        throw std::invalid_argument("MapperConfig: normal k must be at least 3");
    icp.validate();
}

SpacingGrid::SpacingGrid(double epsilon) : epsilon_(epsilon)
{
    if (!(epsilon > 0.0))
        throw std::invalid_argument("SpacingGrid: epsilon must be positive");
}

std::int64_t SpacingGrid::cell(double v) const
{
    return static_cast<std::int64_t>(std::floor(v / epsilon_));
}

SpacingGrid::Key SpacingGrid::key(std::int64_t x, std::int64_t y, std::int64_t z) const
{
    return pack(x, y, z);
}

bool SpacingGrid::occupied(const Vec3& p, const std::vector<Vec3>& points) const
{
    const double e2 = epsilon_ * epsilon_;
    const std::int64_t cx = cell(p.x());
    const std::int64_t cy = cell(p.y());
    const std::int64_t cz = cell(p.z());
    for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dz = -1; dz <= 1; ++dz)
            {
                const auto it = cells_.find(key(cx + dx, cy + dy, cz + dz));
                if (it == cells_.end())
                    continue;
                for (std::uint32_t i : it->second)
                {
                    if ((points[i] - p).squaredNorm() <= e2)
                        return true;
                }
            }
    return false;
}

void SpacingGrid::add(const Vec3& p, std::uint32_t index)
{
    cells_[key(cell(p.x()), cell(p.y()), cell(p.z()))].push_back(index);
}

BlockIndex::BlockIndex(double block_size) : size_(block_size)
{
    if (!(block_size > 0.0))
        throw std::invalid_argument("BlockIndex: block size must be positive");
}

BlockIndex::Key BlockIndex::key(std::int64_t x, std::int64_t y, std::int64_t z) const
{
    return pack(x, y, z);
}

void BlockIndex::add(const Vec3& p, std::uint32_t index)
{
    const std::int64_t c[3] = {static_cast<std::int64_t>(std::floor(p.x() / size_)),
                               static_cast<std::int64_t>(std::floor(p.y() / size_)),
                               static_cast<std::int64_t>(std::floor(p.z() / size_))};
    const bool first = blocks_.empty();
    for (int a = 0; a < 3; ++a)
    {
        lo_[a] = first ? c[a] : std::min(lo_[a], c[a]);
        hi_[a] = first ? c[a] : std::max(hi_[a], c[a]);
    }
    blocks_[key(c[0], c[1], c[2])].push_back(index);
}

std::vector<std::uint32_t> BlockIndex::within(const Vec3& center, double radius,
                                              const std::vector<Vec3>& points) const
{
    std::vector<std::uint32_t> out;
    if (blocks_.empty())
        return out;
    const double r2 = radius * radius;
    auto take = [&](const std::vector<std::uint32_t>& ids) {
        for (std::uint32_t i : ids)
        {
            if ((points[i] - center).squaredNorm() <= r2)
                out.push_back(i);
        }
    };

    std::int64_t lo[3];
    std::int64_t hi[3];
    double span = 1.0;
    for (int a = 0; a < 3; ++a)
    {
        const double l = std::floor((center[a] - radius) / size_);
        const double h = std::floor((center[a] + radius) / size_);
        lo[a] = std::isfinite(l) ? std::max(lo_[a], static_cast<std::int64_t>(std::max(l, -1e15))) : lo_[a];
        hi[a] = std::isfinite(h) ? std::min(hi_[a], static_cast<std::int64_t>(std::min(h, 1e15))) : hi_[a];
        if (hi[a] < lo[a])
            return out;
        span *= static_cast<double>(hi[a] - lo[a] + 1);
    }
    if (span > static_cast<double>(blocks_.size()))
    {
        for (const auto& [k, ids] : blocks_)
            take(ids);
    }
    else
    {
        for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
            for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
                for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
                {
                    const auto it = blocks_.find(key(x, y, z));
                    if (it != blocks_.end())
                        take(it->second);
                }
    }
    std::sort(out.begin(), out.end());
    return out;
}

RigidTransform prior_from_sensors(const MapperState& prev, const std::optional<GnssFix>& fix,
                                  const std::optional<ImuAttitude>& att)
{
    if (!prev.last_gnss || !prev.last_attitude || !fix || !att)
        return prev.pose;
    const Mat3 delta_r = att->attitude * prev.last_attitude->attitude.transpose();
    const Vec3 delta_t = fix->position - prev.last_gnss->position;
    return RigidTransform(orthonormalize(delta_r * prev.pose.rotation()), prev.pose.translation() + delta_t);
}

PointCloud cut_map(const PointCloud& map, const Vec3& center, double r_max)
{
    PointCloud out;
    const double r2 = r_max * r_max;
    for (std::size_t i = 0; i < map.size(); ++i)
    {
        if ((map.points[i] - center).squaredNorm() <= r2)
            out.push_back_from(map, i);
    }
    return out;
}

PointCloud insert_scan(const PointCloud& map, const PointCloud& scan, const RigidTransform& t, double epsilon,
                       const NormalOptions& normals)
{
    PointCloud out;
    out.points = map.points;
    out.normals = map.has_normals() ? map.normals : std::vector<Vec3>(map.size(), Vec3::Zero());
    SpacingGrid grid(epsilon);
    for (std::size_t i = 0; i < out.size(); ++i)
        grid.add(out.points[i], static_cast<std::uint32_t>(i));
    const std::size_t first = out.size();
    append_spaced(out, grid, scan, t, nullptr);

    std::vector<std::uint32_t> all(out.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        all[i] = static_cast<std::uint32_t>(i);
    fill_normals(out, first, all, t.translation(), normals);
    return out;
}

Mapper::Mapper(MapperConfig config)
    : config_(config), spacing_(config.epsilon), fusion_(config.initial_heading_offset, config.heading)
{
    config_.validate();
}

PointCloud Mapper::cut(const Vec3& center) const
{
    PointCloud out;
    const PointCloud& map = state_.map;
    if (!std::isfinite(config_.r_max))
        return map;
    for (std::uint32_t i : blocks_.within(center, config_.r_max, map.points))
        out.push_back_from(map, i);
    return out;
}

std::size_t Mapper::insert(const PointCloud& scan, const RigidTransform& pose)
{
    PointCloud& map = state_.map;
    const std::size_t first = map.size();
    const std::size_t inserted = append_spaced(map, spacing_, scan, pose, &blocks_);
    if (inserted == 0)
        return 0;

    double reach = 0.0;
    for (std::size_t i = first; i < map.size(); ++i)
        reach = std::max(reach, (map.points[i] - pose.translation()).norm());
    // neighbors of new points lie close to them; 2 m covers any k-NN ball here
    const auto local = blocks_.within(pose.translation(), reach + 2.0, map.points);
    fill_normals(map, first, local, pose.translation(), config_.normals);
    return inserted;
}

void Mapper::process_scan(double time, const PointCloud& scan, const GnssFix& fix, const ImuAttitude& att)
{
    ScanStats st;
    st.scan_id = state_.stats.size();
    st.time = time;
    st.scan_points = scan.size();
    st.map_points = state_.map.size();

    heading_ = config_.fuse_heading ? fusion_.update(fix, att.raw_magnetic_heading)
                                    : wrap_angle(att.raw_magnetic_heading - config_.initial_heading_offset);

    RigidTransform pose;
    bool skip = false;
    if (state_.trajectory.empty())
    {
        // the map frame is the local ENU frame; the first scan sits at the sensors
        pose = RigidTransform(with_heading(att.attitude, heading_), fix.position);
    }
    else
    {
        const auto t0 = Clock::now();
        const RigidTransform prior = prior_from_sensors(state_, fix, att);
        pose = prior;
        const PointCloud reference = cut(prior.translation());
        st.cutmap_points = reference.size();
        if (config_.register_scans)
        {
            if (reference.empty() || scan.empty())
            {
                state_.events.push_back({st.scan_id, "no reference points near the prior; inserted at prior"});
            }
            else
            {
                try
                {
                    PenaltySet penalties;
                    switch (config_.penalty_mode)
                    {
                    case PenaltyMode::none:
                        break;
                    case PenaltyMode::gnss_only:
                        penalties = make_gnss_penalty(fix);
                        break;
                    case PenaltyMode::three_point:
                        penalties = make_three_point_penalties(fix, att, heading_, config_.arm_length,
                                                               config_.aux_cov_scale);
                        break;
                    }
                    const ReferenceMap ref(reference);
                    const IcpResult result = icp(scan, ref, prior, penalties.penalties, config_.icp);
                    pose = result.transform;
                    st.registered = true;
                    st.icp_iterations = result.diagnostics.iterations;
                    st.residual = result.diagnostics.residual;
                    st.match_count = result.diagnostics.match_count;
                }
                catch (const std::exception& e)
                {
                    // a scan that failed to register would only blur the map
                    skip = true;
                    state_.events.push_back({st.scan_id, std::string("registration failed, scan skipped: ") + e.what()});
                }
            }
        }
        if (config_.record_timings)
            st.registration_ms = elapsed_ms(t0);
    }

    const auto t1 = Clock::now();
    st.inserted_points = skip ? 0 : insert(scan, pose);
    if (config_.record_timings)
        st.insertion_ms = elapsed_ms(t1);

    state_.pose = pose;
    state_.trajectory.push_back({time, pose});
    state_.last_gnss = fix;
    state_.last_attitude = att;
    state_.stats.push_back(st);
}

}  // namespace picp
