#pragma once

#include "picp/geometry.hpp"
#include "picp/neighbor_index.hpp"
#include "picp/point_cloud.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace picp {

/// Outlier down-weighting applied to point matches.
struct OutlierWeighting
{
    enum class Kind
    {
        none,
        trimmed,  ///< keep the `parameter` fraction of matches with the smallest distances
        cauchy,   ///< w = 1 / (1 + d^2 / parameter^2)
    };
    Kind kind = Kind::trimmed;
    double parameter = 0.85;

    static OutlierWeighting none() { return {Kind::none, 0.0}; }
    static OutlierWeighting trimmed(double ratio) { return {Kind::trimmed, ratio}; }
    static OutlierWeighting cauchy(double scale) { return {Kind::cauchy, scale}; }
};

struct IcpConfig
{
    int max_iterations = 40;
    double translation_epsilon = 1e-4;  // m
    double rotation_epsilon = 1e-5;     // rad
    OutlierWeighting outlier{};
    /// Scale turning projected point distances into Mahalanobis-like units;
    /// defaults to 1 / sigma^2 for a 3 cm sensor.
    double scale_s = 1.0 / (0.03 * 0.03);
    /// Largest accepted eigenvalue ratio of the 6x6 normal system.
    double max_condition = 1e8;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

struct Match
{
    std::size_t scan_index = 0;
    std::size_t map_index = 0;
    double squared_distance = 0.0;
};

/// One weighted point-to-plane term: weight * ((map_point - scan_point) . normal)^2,
/// with `scan_point` already expressed in the map frame at the current estimate.
struct PlaneConstraint
{
    Vec3 normal = Vec3::UnitZ();
    double weight = 0.0;
    Vec3 map_point = Vec3::Zero();
    Vec3 scan_point = Vec3::Zero();

    bool operator==(const PlaneConstraint&) const = default;
};

/// Correspondence with known association: `map_point` in the map frame must
/// coincide with `scan_point` (scan frame) once the scan is placed.
struct Penalty
{
    Vec3 map_point = Vec3::Zero();
    Vec3 scan_point = Vec3::Zero();
    SymMat3 covariance = SymMat3::identity();
};

/// Map points usable as matching targets (valid normals only) with their index.
class ReferenceMap
{
public:
    /// Keeps the points of `map` that carry a valid normal.
    /// Throws std::invalid_argument if the map has no normals;
    /// NoOverlap if none of them is valid.
    explicit ReferenceMap(const PointCloud& map);

    const std::vector<Vec3>& points() const { return points_; }
    const std::vector<Vec3>& normals() const { return normals_; }
    const NeighborIndex& index() const { return index_; }
    std::size_t size() const { return points_.size(); }

private:
    ReferenceMap(std::vector<Vec3> points, std::vector<Vec3> normals);
    static ReferenceMap filtered(const PointCloud& map);

    std::vector<Vec3> points_;
    std::vector<Vec3> normals_;
    NeighborIndex index_;
};

/// One nearest-neighbor match per scan point, taken at apply(t, p).
std::vector<Match> match(const PointCloud& scan, const NeighborIndex& index, const RigidTransform& t);

/// Per-match weights in [0, 1].
std::vector<double> weight_outliers(std::span<const Match> matches, const IcpConfig& config);

/// Splits the Mahalanobis term e^T W^-1 e into three point-to-plane terms
/// along the eigenvectors of W, weighted by the inverse eigenvalues.
/// Throws DegenerateCovariance when W is not positive definite.
std::array<PlaneConstraint, 3> decompose_gaussian(const Vec3& map_point, const Vec3& scan_point, const SymMat3& w);

/// map_cov + R scan_cov R^T.
SymMat3 gaussian_to_gaussian_cov(const SymMat3& map_cov, const SymMat3& scan_cov, const RigidTransform& t);

/// One Gauss-Newton step over the twist (omega, v) under the small-angle model
/// p' -> p' + omega x (p' - c) + v, with c the centroid of the scan points.
/// Throws RankDeficient when the normal system condition number exceeds
/// `max_condition`.
RigidTransform solve_constraints(std::span<const PlaneConstraint> constraints, double max_condition = 1e8);

/// Mixed objective terms at `t`: point-to-plane terms scaled by s/M and every
/// penalty expanded into three decomposed terms scaled by 1/K.
/// `matches` and `weights` must come from matching at `t`.
std::vector<PlaneConstraint> build_constraints(const PointCloud& scan,
                                               const ReferenceMap& map,
                                               const RigidTransform& t,
                                               std::span<const Match> matches,
                                               std::span<const double> weights,
                                               std::span<const Penalty> penalties,
                                               const IcpConfig& config);

struct IcpDiagnostics
{
    int iterations = 0;
    double residual = 0.0;          ///< objective at the returned transform
    std::size_t match_count = 0;    ///< M: matches with non-zero weight
    bool converged = false;
};

struct IcpResult
{
    RigidTransform transform;
    IcpDiagnostics diagnostics;
};

/// Penalty-augmented point-to-plane ICP from `prior`.
/// Throws NoOverlap when no match survives weighting, RankDeficient from the solver.
IcpResult icp(const PointCloud& scan,
              const ReferenceMap& map,
              const RigidTransform& prior,
              std::span<const Penalty> penalties,
              const IcpConfig& config);

IcpResult icp(const PointCloud& scan,
              const PointCloud& map,
              const RigidTransform& prior,
              std::span<const Penalty> penalties,
              const IcpConfig& config);

/// Value of the mixed objective with matching done at `t`.
double objective(const PointCloud& scan,
                 const ReferenceMap& map,
                 const RigidTransform& t,
                 std::span<const Penalty> penalties,
                 const IcpConfig& config);

}  // namespace picp
