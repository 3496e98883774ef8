#include "picp/penalties.hpp"

#include "picp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace picp {

namespace {

double horizontal_distance(const Vec3& a, const Vec3& b)
{
    return std::hypot(a.x() - b.x(), a.y() - b.y());
}

double course(const Vec3& from, const Vec3& to)
{
    return std::atan2(to.y() - from.y(), to.x() - from.x());
}

// Index of the last element with time <= t (0 when t precedes everything).
template <typename T>
std::size_t lower_bracket(std::span<const T> samples, double t)
{
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double value, const T& s) { return value < s.time; });
    if (it == samples.begin())
        return 0;
    return static_cast<std::size_t>(std::distance(samples.begin(), it)) - 1;
}

}  // namespace

double circular_mean(std::span<const double> angles)
{
    double s = 0.0;
    double c = 0.0;
    for (double a : angles)
    {
        s += std::sin(a);
        c += std::cos(a);
    }
    return wrap_angle(std::atan2(s, c));
}

double interpolate_heading(std::span<const HeadingSample> headings, double time)
{
    if (headings.empty())
        throw std::invalid_argument("interpolate_heading: no samples");
    const std::size_t i = lower_bracket(headings, time);
    if (time <= headings.front().time || i + 1 >= headings.size())
        return wrap_angle(headings[time <= headings.front().time ? 0 : i].heading);
    const auto& a = headings[i];
    const auto& b = headings[i + 1];
    const double alpha = b.time > a.time ? (time - a.time) / (b.time - a.time) : 0.0;
    return wrap_angle(a.heading + alpha * wrap_angle(b.heading - a.heading));
}

double estimate_heading_offset(std::span<const GnssFix> gnss_track,
                               std::span<const HeadingSample> imu_headings,
                               double min_distance)
{
    if (!(min_distance > 0.0))
        throw std::invalid_argument("estimate_heading_offset: min_distance must be positive");
    if (gnss_track.size() < 2 || imu_headings.empty())
        throw InsufficientMotion("estimate_heading_offset: need at least two fixes and one heading");

    std::size_t end = 0;
    for (std::size_t i = 1; i < gnss_track.size(); ++i)
    {
        if (horizontal_distance(gnss_track[i].position, gnss_track.front().position) >= min_distance)
        {
            end = i;
            break;
        }
    }
    if (end == 0)
        throw InsufficientMotion("estimate_heading_offset: track never leaves a " + std::to_string(min_distance) +
                                 " m radius; heading offset is unobservable");

    const double baseline = 0.5 * min_distance;
    std::vector<double> differences;
    for (std::size_t i = 0; i < end; ++i)
    {
        for (std::size_t j = i + 1; j <= end; ++j)
        {
            const Vec3& a = gnss_track[i].position;
            const Vec3& b = gnss_track[j].position;
            if (horizontal_distance(a, b) < baseline)
                continue;
            const double mid_time = 0.5 * (gnss_track[i].time + gnss_track[j].time);
            differences.push_back(wrap_angle(interpolate_heading(imu_headings, mid_time) - course(a, b)));
            break;
        }
    }
    return circular_mean(differences);
}

PenaltySet make_gnss_penalty(const GnssFix& fix, const Vec3& scan_origin)
{
    return PenaltySet{{Penalty{fix.position, scan_origin, fix.covariance}}, PenaltyProvenance::gnss_only};
}

Mat3 with_heading(const Mat3& att, double heading)
{
    const YawPitchRoll ypr = yaw_pitch_roll(att);
    return from_yaw_pitch_roll(heading, ypr.pitch, ypr.roll);
}

PenaltySet make_three_point_penalties(const GnssFix& fix,
                                      const ImuAttitude& att,
                                      double heading,
                                      double arm_length,
                                      double aux_cov_scale,
                                      const Vec3& scan_origin)
{
    if (!(arm_length > 0.0))
        throw std::invalid_argument("make_three_point_penalties: arm_length must be positive");
    if (!(aux_cov_scale > 0.0))
        throw std::invalid_argument("make_three_point_penalties: aux_cov_scale must be positive");

    const Mat3 body_to_map = with_heading(att.attitude, heading);
    const Vec3 down = Vec3(0.0, 0.0, -arm_length);
    const Vec3 ahead = arm_length * Vec3(std::cos(heading), std::sin(heading), 0.0);
    const SymMat3 aux_cov = fix.covariance * aux_cov_scale;

    PenaltySet set;
    set.provenance = PenaltyProvenance::gnss_imu_three_point;
    set.penalties = {
        Penalty{fix.position, scan_origin, fix.covariance},
        Penalty{fix.position + down, scan_origin + body_to_map.transpose() * down, aux_cov},
        Penalty{fix.position + ahead, scan_origin + body_to_map.transpose() * ahead, aux_cov},
    };
    return set;
}

Vec3 penalty_residual(const Penalty& p, const RigidTransform& t)
{
    return p.map_point - t.apply(p.scan_point);
}

GnssFix interpolate_fix(std::span<const GnssFix> fixes, double time)
{
    if (fixes.empty())
        throw std::invalid_argument("interpolate_fix: no fixes");
    if (time <= fixes.front().time)
        return fixes.front();
    const std::size_t i = lower_bracket(fixes, time);
    if (i + 1 >= fixes.size())
        return fixes.back();
    const auto& a = fixes[i];
    const auto& b = fixes[i + 1];
    const double alpha = b.time > a.time ? (time - a.time) / (b.time - a.time) : 0.0;
    GnssFix out;
    out.time = time;
    out.position = (1.0 - alpha) * a.position + alpha * b.position;
    out.covariance = a.covariance * (1.0 - alpha) + b.covariance * alpha;
    out.status = alpha < 0.5 ? a.status : b.status;
    return out;
}

ImuAttitude interpolate_attitude(std::span<const ImuAttitude> attitudes, double time)
{
    if (attitudes.empty())
        throw std::invalid_argument("interpolate_attitude: no attitudes");
    if (time <= attitudes.front().time)
        return attitudes.front();
    const std::size_t i = lower_bracket(attitudes, time);
    if (i + 1 >= attitudes.size())
        return attitudes.back();
    const auto& a = attitudes[i];
    const auto& b = attitudes[i + 1];
    const double alpha = b.time > a.time ? (time - a.time) / (b.time - a.time) : 0.0;
    ImuAttitude out;
    out.time = time;
    const Eigen::Quaterniond qa(a.attitude);
    const Eigen::Quaterniond qb(b.attitude);
    out.attitude = qa.slerp(alpha, qb).normalized().toRotationMatrix();
    out.roll_pitch_cov = (1.0 - alpha) * a.roll_pitch_cov + alpha * b.roll_pitch_cov;
    out.raw_magnetic_heading =
        wrap_angle(a.raw_magnetic_heading + alpha * wrap_angle(b.raw_magnetic_heading - a.raw_magnetic_heading));
    return out;
}

HeadingFusion::HeadingFusion(double initial_offset, HeadingFusionConfig config)
    : config_(config), offset_(wrap_angle(initial_offset))
{
}

double HeadingFusion::update(const GnssFix& fix, double magnetic_heading)
{
    const bool moving = [&] {
        if (history_.empty())
            return false;
        const Entry& last = history_.back();
        const double dt = fix.time - last.time;
        return dt > 0.0 && horizontal_distance(fix.position, last.position) / dt > config_.speed_threshold;
    }();
    history_.push_back(Entry{fix.time, fix.position, magnetic_heading});

    if (moving)
    {
        // most recent sample at least one baseline behind the current fix
        for (auto it = history_.rbegin() + 1; it != history_.rend(); ++it)
        {
            if (horizontal_distance(fix.position, it->position) < config_.baseline)
                continue;
            std::vector<double> magnetic;
            for (auto jt = it.base() - 1; jt != history_.end(); ++jt)
                magnetic.push_back(jt->magnetic);
            const double sample = wrap_angle(circular_mean(magnetic) - course(it->position, fix.position));
            offset_ = wrap_angle(offset_ + config_.gain * wrap_angle(sample - offset_));
            // older samples can no longer be the most recent chord start
            history_.erase(history_.begin(), it.base() - 1);
            break;
        }
    }
    else if (!history_.empty() && history_.size() > 1 &&
             horizontal_distance(fix.position, history_[history_.size() - 2].position) < 1e-9)
    {
        // stationary: drop the duplicate so a later chord does not average over the stop
        history_.erase(history_.end() - 2);
    }
    heading_ = wrap_angle(magnetic_heading - offset_);
    return heading_;
}

}  // namespace picp
