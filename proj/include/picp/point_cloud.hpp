#pragma once

#include "picp/geometry.hpp"

#include <cstddef>
#include <vector>

namespace picp {

/// Points with optional per-point normals and covariances.
///
/// `normals` and `covariances` are either empty or the same length as `points`.
/// A zero normal marks a point whose neighborhood was too degenerate to fit a
/// plane; such points are kept but never used as matching targets.
struct PointCloud
{
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<SymMat3> covariances;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_normals() const { return !normals.empty(); }
    bool has_covariances() const { return !covariances.empty(); }
    bool normal_valid(std::size_t i) const { return has_normals() && normals[i].squaredNorm() > 0.5; }

    /// Appends point `i` of `other` (with its attributes, when both clouds carry them).
    void push_back_from(const PointCloud& other, std::size_t i);

    /// Throws std::invalid_argument on length mismatch, non-unit normals or
    /// non positive definite covariances.
    void validate() const;
};

/// Copy of `cloud` with every point (and normal) transformed by `t`.
PointCloud transformed(const PointCloud& cloud, const RigidTransform& t);

}  // namespace picp
