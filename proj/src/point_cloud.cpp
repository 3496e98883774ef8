#include "picp/point_cloud.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace picp {

void PointCloud::push_back_from(const PointCloud& other, std::size_t i)
{
    points.push_back(other.points[i]);
    if (other.has_normals())
        normals.push_back(other.normals[i]);
    if (other.has_covariances())
        covariances.push_back(other.covariances[i]);
}

void PointCloud::validate() const
{
    if (has_normals() && normals.size() != points.size())
        throw std::invalid_argument("PointCloud: normals length mismatch");
    if (has_covariances() && covariances.size() != points.size())
        throw std::invalid_argument("PointCloud: covariances length mismatch");
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        if (!points[i].allFinite())
            throw std::invalid_argument("PointCloud: non-finite point " + std::to_string(i));
        if (has_normals())
        {
            const double n2 = normals[i].squaredNorm();
            if (n2 != 0.0 && std::abs(std::sqrt(n2) - 1.0) > 1e-9)
                throw std::invalid_argument("PointCloud: normal " + std::to_string(i) + " is not unit length");
        }
        if (has_covariances() && !is_positive_definite(covariances[i]))
            throw std::invalid_argument("PointCloud: covariance " + std::to_string(i) + " is not positive definite");
    }
}

PointCloud transformed(const PointCloud& cloud, const RigidTransform& t)
{
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points)
        out.points.push_back(t.apply(p));
    out.normals.reserve(cloud.normals.size());
    for (const auto& n : cloud.normals)
        out.normals.push_back(t.rotation() * n);
    const Mat3& r = t.rotation();
    for (const auto& c : cloud.covariances)
        out.covariances.push_back(SymMat3::from_matrix(r * c.matrix() * r.transpose()));
    return out;
}

}  // namespace picp
