#pragma once

#include "picp/geometry.hpp"
#include "picp/registration.hpp"

#include <deque>
#include <span>
#include <vector>

namespace picp {

enum class GnssStatus
{
    rtk_fixed,
    rtk_float,
    standalone,
};

/// GNSS position in the local ENU frame (x east, y north, z up).
struct GnssFix
{
    double time = 0.0;
    Vec3 position = Vec3::Zero();
    SymMat3 covariance = SymMat3::identity();
    GnssStatus status = GnssStatus::rtk_fixed;
};

/// IMU orientation estimate, body -> ENU. Its yaw is the raw magnetometer heading.
struct ImuAttitude
{
    double time = 0.0;
    Mat3 attitude = Mat3::Identity();
    double roll_pitch_cov = 0.0;        // rad^2
    double raw_magnetic_heading = 0.0;  // rad, counter-clockwise from east
};

struct HeadingSample
{
    double time = 0.0;
    double heading = 0.0;
};

enum class PenaltyProvenance
{
    gnss_only,
    gnss_imu_three_point,
};

struct PenaltySet
{
    std::vector<Penalty> penalties;
    PenaltyProvenance provenance = PenaltyProvenance::gnss_only;
};

/// Circular mean of angles (radians), in (-pi, pi].
double circular_mean(std::span<const double> angles);

/// Heading at `time`, interpolated along the shorter arc; clamped at the ends.
double interpolate_heading(std::span<const HeadingSample> headings, double time);

/// Magnetometer heading offset (magnetometer minus GNSS course over ground)
/// observed over the initial part of the track that first reaches
/// `min_distance` of horizontal displacement. Courses come from chords of at
/// least half that length, compared against the magnetometer heading
/// interpolated at the chord mid-time, and averaged on the circle.
/// Throws InsufficientMotion when the track never gets that far.
double estimate_heading_offset(std::span<const GnssFix> gnss_track,
                               std::span<const HeadingSample> imu_headings,
                               double min_distance = 10.0);

/// Single penalty: the scan origin must sit on the GNSS position.
PenaltySet make_gnss_penalty(const GnssFix& fix, const Vec3& scan_origin = Vec3::Zero());

/// GNSS penalty plus a gravity point `arm_length` below the antenna and a
/// heading point `arm_length` ahead in the horizontal plane. Their scan-frame
/// counterparts are the same offsets projected through the IMU roll/pitch and
/// `heading`, so all three coincide when the pose agrees with the sensors.
PenaltySet make_three_point_penalties(const GnssFix& fix,
                                      const ImuAttitude& att,
                                      double heading,
                                      double arm_length = 1.0,
                                      double aux_cov_scale = 1.0,
                                      const Vec3& scan_origin = Vec3::Zero());

/// q_k - T p_k.
Vec3 penalty_residual(const Penalty& p, const RigidTransform& t);

/// `att` with its yaw replaced by `heading` (roll and pitch kept).
Mat3 with_heading(const Mat3& att, double heading);

/// Linear interpolation of position and covariance; clamped at the ends.
GnssFix interpolate_fix(std::span<const GnssFix> fixes, double time);
/// Spherical interpolation of the attitude; clamped at the ends.
ImuAttitude interpolate_attitude(std::span<const ImuAttitude> attitudes, double time);

struct HeadingFusionConfig
{
    double speed_threshold = 0.3;  // m/s
    double baseline = 5.0;         // m, chord length for course over ground
    double gain = 0.1;             // smoothing of the offset update
};

/// Keeps the magnetometer offset calibrated from GNSS course over ground while
/// the platform moves forward faster than the speed threshold; while slower,
/// the offset is frozen and the heading is the corrected magnetometer.
class HeadingFusion
{
public:
    explicit HeadingFusion(double initial_offset = 0.0, HeadingFusionConfig config = {});

    /// Feeds a fix and the magnetometer heading at the same time; returns the
    /// corrected heading.
    double update(const GnssFix& fix, double magnetic_heading);

    double offset() const { return offset_; }
    /// Most recent corrected heading.
    double heading() const { return heading_; }

private:
    struct Entry
    {
        double time;
        Vec3 position;
        double magnetic;
    };

    HeadingFusionConfig config_;
    double offset_;
    double heading_ = 0.0;
    std::deque<Entry> history_;
};

}  // namespace picp
