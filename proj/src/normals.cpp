#include "picp/normals.hpp"

#include <stdexcept>

namespace picp {

std::optional<Vec3> estimate_normal(const NeighborIndex& index,
                                    std::span<const Vec3> points,
                                    const Vec3& query,
                                    const NormalOptions& options)
{
    const auto neighbors = index.knn(query, options.k);
    if (neighbors.size() < 3)
        return std::nullopt;

    Vec3 mean = Vec3::Zero();
    for (const auto& n : neighbors)
        mean += points[n.index];
    mean /= static_cast<double>(neighbors.size());

    Mat3 scatter = Mat3::Zero();
    for (const auto& n : neighbors)
    {
        const Vec3 d = points[n.index] - mean;
        scatter += d * d.transpose();
    }
    const SymEigen eig = eig_sym3(SymMat3::from_matrix(scatter));
    if (!(eig.values[2] > 0.0) || eig.values[1] <= options.min_eigen_ratio * eig.values[2])
        return std::nullopt;

    Vec3 normal = eig.vectors.col(0).normalized();
    const Vec3 ref = options.orientation.kind == NormalOrientation::Kind::direction
                         ? options.orientation.reference
                         : Vec3(options.orientation.reference - query);
    if (normal.dot(ref) < 0.0)
        normal = -normal;
    return normal;
}

PointCloud estimate_normals(const PointCloud& cloud, const NormalOptions& options)
{
    if (options.k < 3)
        throw std::invalid_argument("estimate_normals: k must be at least 3");
    if (cloud.size() < options.k)
        throw std::invalid_argument("estimate_normals: cloud has fewer points than k");

    const NeighborIndex index(cloud);
    PointCloud out = cloud;
    out.normals.assign(cloud.size(), Vec3::Zero());
    for (std::size_t i = 0; i < cloud.size(); ++i)
    {
        if (auto n = estimate_normal(index, cloud.points, cloud.points[i], options))
            out.normals[i] = *n;
    }
    return out;
}

}  // namespace picp
