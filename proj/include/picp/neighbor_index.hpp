#pragma once

#include "picp/geometry.hpp"
#include "picp/point_cloud.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace picp {

struct Neighbor
{
    std::size_t index = 0;
    double squared_distance = 0.0;

    bool operator==(const Neighbor&) const = default;
};

/// Exact Euclidean nearest-neighbor search over a fixed point set (k-d tree).
///
/// Equal distances are broken by the smaller point index, so every query has a
/// single well-defined answer. The index is immutable once built and may be
/// queried concurrently.
class NeighborIndex
{
public:
    /// Throws std::invalid_argument when `points` is empty.
    explicit NeighborIndex(std::span<const Vec3> points);
    explicit NeighborIndex(const PointCloud& cloud) : NeighborIndex(std::span<const Vec3>(cloud.points)) {}

    std::size_t size() const { return points_.size(); }

    Neighbor nearest(const Vec3& query) const;
    /// Up to `k` neighbors sorted by (distance, index).
    std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;
    /// All points with squared distance <= radius^2, sorted by (distance, index).
    std::vector<Neighbor> radius(const Vec3& query, double radius) const;
    /// True when some point lies at distance <= radius.
    bool any_within(const Vec3& query, double radius) const;

private:
    struct Node
    {
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        int axis = 0;
        double split = 0.0;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    template <typename Visitor>
    void search(const Vec3& query, Visitor& visitor) const;

    std::vector<Vec3> points_;             // permuted into leaf order
    std::vector<std::size_t> original_;    // permuted position -> caller index
    std::vector<Node> nodes_;
};

NeighborIndex build_index(const PointCloud& cloud);

}  // namespace picp
