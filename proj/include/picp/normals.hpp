#pragma once

#include "picp/geometry.hpp"
#include "picp/neighbor_index.hpp"
#include "picp/point_cloud.hpp"

#include <optional>
#include <span>

namespace picp {

/// How the sign of an estimated normal is chosen.
struct NormalOrientation
{
    enum class Kind
    {
        direction,  ///< n . reference >= 0
        viewpoint,  ///< n . (reference - p) >= 0
    };
    Kind kind = Kind::direction;
    Vec3 reference = Vec3::UnitZ();

    static NormalOrientation toward_direction(const Vec3& d) { return {Kind::direction, d}; }
    static NormalOrientation toward_viewpoint(const Vec3& v) { return {Kind::viewpoint, v}; }
};

struct NormalOptions
{
    std::size_t k = 15;
    NormalOrientation orientation{};
    /// Neighborhoods whose middle scatter eigenvalue is below this fraction of
    /// the largest are treated as collinear and get no normal.
    double min_eigen_ratio = 1e-6;
};

/// Plane normal at `query` from its k nearest neighbors in `index`/`points`:
/// the eigenvector of the smallest eigenvalue of the neighborhood scatter.
/// Empty when the neighborhood is degenerate.
std::optional<Vec3> estimate_normal(const NeighborIndex& index,
                                    std::span<const Vec3> points,
                                    const Vec3& query,
                                    const NormalOptions& options);

/// Copy of `cloud` carrying one normal per point. Degenerate neighborhoods get
/// a zero normal, which excludes the point from matching.
/// Throws std::invalid_argument if k < 3 or the cloud has fewer than k points.
PointCloud estimate_normals(const PointCloud& cloud, const NormalOptions& options = {});

}  // namespace picp
