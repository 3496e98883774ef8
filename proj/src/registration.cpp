#include "picp/registration.hpp"

#include "picp/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace picp {

namespace {

constexpr std::array<const char*, 6> kTwistNames{"rot_x", "rot_y", "rot_z", "trans_x", "trans_y", "trans_z"};

}  // namespace

void IcpConfig::validate() const
{
    if (max_iterations < 1)
        throw std::invalid_argument("IcpConfig: max_iterations must be >= 1");
    if (!(translation_epsilon > 0.0) || !(rotation_epsilon > 0.0))
        throw std::invalid_argument("IcpConfig: convergence thresholds must be positive");
    if (!std::isfinite(scale_s) || !(scale_s > 0.0))
        throw std::invalid_argument("IcpConfig: scale_s must be finite and positive");
    if (outlier.kind == OutlierWeighting::Kind::trimmed && !(outlier.parameter > 0.0 && outlier.parameter <= 1.0))
        throw std::invalid_argument("IcpConfig: trimmed ratio must lie in (0, 1]");
    if (outlier.kind == OutlierWeighting::Kind::cauchy && !(outlier.parameter > 0.0))
        throw std::invalid_argument("IcpConfig: cauchy scale must be positive");
    if (!(max_condition > 1.0))
        throw std::invalid_argument("IcpConfig: max_condition must exceed 1");
}

ReferenceMap::ReferenceMap(const PointCloud& map) : ReferenceMap(filtered(map)) {}

ReferenceMap::ReferenceMap(std::vector<Vec3> points, std::vector<Vec3> normals)
    : points_(std::move(points)), normals_(std::move(normals)), index_(std::span<const Vec3>(points_))
{
}

ReferenceMap ReferenceMap::filtered(const PointCloud& map)
{
    if (!map.has_normals())
        throw std::invalid_argument("ReferenceMap: map has no normals");
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    points.reserve(map.size());
    normals.reserve(map.size());
    for (std::size_t i = 0; i < map.size(); ++i)
    {
        if (map.normal_valid(i))
        {
            points.push_back(map.points[i]);
            normals.push_back(map.normals[i]);
        }
    }
    if (points.empty())
        throw NoOverlap("ReferenceMap: no map point carries a valid normal");
    return ReferenceMap(std::move(points), std::move(normals));
}

std::vector<Match> match(const PointCloud& scan, const NeighborIndex& index, const RigidTransform& t)
{
    std::vector<Match> out(scan.size());
    for (std::size_t j = 0; j < scan.size(); ++j)
    {
        const Neighbor n = index.nearest(t.apply(scan.points[j]));
        out[j] = Match{j, n.index, n.squared_distance};
    }
    return out;
}

std::vector<double> weight_outliers(std::span<const Match> matches, const IcpConfig& config)
{
    std::vector<double> w(matches.size(), 1.0);
    switch (config.outlier.kind)
    {
    case OutlierWeighting::Kind::none:
        break;
    case OutlierWeighting::Kind::cauchy:
    {
        const double s2 = config.outlier.parameter * config.outlier.parameter;
        for (std::size_t i = 0; i < matches.size(); ++i)
            w[i] = 1.0 / (1.0 + matches[i].squared_distance / s2);
        break;
    }
    case OutlierWeighting::Kind::trimmed:
    {
        if (matches.empty())
            break;
        const auto n = matches.size();
        const auto keep = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(config.outlier.parameter * static_cast<double>(n))), 1, n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto less = [&](std::size_t a, std::size_t b) {
            const double da = matches[a].squared_distance;
            const double db = matches[b].squared_distance;
            return da < db || (da == db && matches[a].scan_index < matches[b].scan_index);
        };
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(), less);
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < keep; ++i)
            w[order[i]] = 1.0;
        break;
    }
    }
    return w;
}

std::array<PlaneConstraint, 3> decompose_gaussian(const Vec3& map_point, const Vec3& scan_point, const SymMat3& w)
{
    if (!w.is_finite())
        throw DegenerateCovariance("decompose_gaussian: non-finite covariance");
    const SymEigen eig = eig_sym3(w);
    if (!(eig.values[0] > 0.0) || eig.values[0] < 1e-14 * eig.values[2])
        throw DegenerateCovariance("decompose_gaussian: covariance is singular or indefinite");

    std::array<PlaneConstraint, 3> out;
    for (int i = 0; i < 3; ++i)
        out[i] = PlaneConstraint{eig.vectors.col(i), 1.0 / eig.values[i], map_point, scan_point};
    return out;
}

SymMat3 gaussian_to_gaussian_cov(const SymMat3& map_cov, const SymMat3& scan_cov, const RigidTransform& t)
{
    const Mat3& r = t.rotation();
    return map_cov + SymMat3::from_matrix(r * scan_cov.matrix() * r.transpose());
}

RigidTransform solve_constraints(std::span<const PlaneConstraint> constraints, double max_condition)
{
    // The twist is taken about the centroid of the scan points: about the map
    // origin the rotation block grows with the squared distance travelled and
    // the condition check would fail far from the start.
    Vec3 center = Vec3::Zero();
    std::size_t used = 0;
    for (const auto& c : constraints)
    {
        if (c.weight == 0.0)
            continue;
        center += c.scan_point;
        ++used;
    }
    if (used > 0)
        center /= static_cast<double>(used);

    // residual_i = (q - p') . n - omega . ((p' - c) x n) - v . n
    Mat6 a = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& c : constraints)
    {
        if (c.weight == 0.0)
            continue;
        Vec6 j;
        j.head<3>() = (c.scan_point - center).cross(c.normal);
        j.tail<3>() = c.normal;
        const double b = (c.map_point - c.scan_point).dot(c.normal);
        a.noalias() += c.weight * j * j.transpose();
        g.noalias() += c.weight * b * j;
    }

    const Eigen::SelfAdjointEigenSolver<Mat6> eig(a);
    const Vec6 lambda = eig.eigenvalues();
    const double lmax = lambda[5];
    const double lmin = lambda[0];
    const double condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(lmax > 0.0) || !(condition <= max_condition))
    {
        // projector onto the weak subspace; an axis is free when most of it lies there
        Mat6 projector = Mat6::Zero();
        for (int i = 0; i < 6; ++i)
        {
            if (!(lmax > 0.0) || lambda[i] * max_condition < lmax)
                projector += eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose();
        }
        std::vector<std::string> names;
        for (int i = 0; i < 6; ++i)
        {
            if (projector(i, i) > 0.5)
                names.emplace_back(kTwistNames[i]);
        }
        if (names.empty())
        {
            int worst = 0;
            projector.diagonal().maxCoeff(&worst);
            names.emplace_back(kTwistNames[worst]);
        }
        throw RankDeficient(std::move(names), condition);
    }

    const Vec6 x = eig.eigenvectors() * ((eig.eigenvectors().transpose() * g).cwiseQuotient(lambda));
    const Mat3 r = so3_exp(x.head<3>());
    return RigidTransform(r, center + x.tail<3>() - r * center);
}

std::vector<PlaneConstraint> build_constraints(const PointCloud& scan,
                                               const ReferenceMap& map,
                                               const RigidTransform& t,
                                               std::span<const Match> matches,
                                               std::span<const double> weights,
                                               std::span<const Penalty> penalties,
                                               const IcpConfig& config)
{
    std::size_t surviving = 0;
    for (double w : weights)
        surviving += w > 0.0 ? 1 : 0;

    std::vector<PlaneConstraint> out;
    out.reserve(surviving + 3 * penalties.size());
    if (surviving > 0)
    {
        const double point_scale = config.scale_s / static_cast<double>(surviving);
        for (std::size_t m = 0; m < matches.size(); ++m)
        {
            if (!(weights[m] > 0.0))
                continue;
            const Match& mt = matches[m];
            out.push_back(PlaneConstraint{map.normals()[mt.map_index],
                                          point_scale * weights[m],
                                          map.points()[mt.map_index],
                                          t.apply(scan.points[mt.scan_index])});
        }
    }
    if (!penalties.empty())
    {
        const double penalty_scale = 1.0 / static_cast<double>(penalties.size());
        for (const auto& p : penalties)
        {
            for (auto c : decompose_gaussian(p.map_point, t.apply(p.scan_point), p.covariance))
            {
                c.weight *= penalty_scale;
                out.push_back(c);
            }
        }
    }
    return out;
}

namespace {

double objective_from(const PointCloud& scan,
                      const ReferenceMap& map,
                      const RigidTransform& t,
                      std::span<const Match> matches,
                      std::span<const double> weights,
                      std::span<const Penalty> penalties,
                      const IcpConfig& config,
                      std::size_t* surviving_out)
{
    double point_sum = 0.0;
    std::size_t surviving = 0;
    for (std::size_t m = 0; m < matches.size(); ++m)
    {
        if (!(weights[m] > 0.0))
            continue;
        ++surviving;
        const Match& mt = matches[m];
        const Vec3 e = map.points()[mt.map_index] - t.apply(scan.points[mt.scan_index]);
        const double proj = e.dot(map.normals()[mt.map_index]);
        point_sum += weights[m] * proj * proj;
    }
    double total = surviving > 0 ? config.scale_s * point_sum / static_cast<double>(surviving) : 0.0;
    if (!penalties.empty())
    {
        double penalty_sum = 0.0;
        for (const auto& p : penalties)
            penalty_sum += mahalanobis_sq(p.map_point - t.apply(p.scan_point), p.covariance);
        total += penalty_sum / static_cast<double>(penalties.size());
    }
    if (surviving_out)
        *surviving_out = surviving;
    return total;
}

}  // namespace

double objective(const PointCloud& scan,
                 const ReferenceMap& map,
                 const RigidTransform& t,
                 std::span<const Penalty> penalties,
                 const IcpConfig& config)
{
    const auto matches = match(scan, map.index(), t);
    const auto weights = weight_outliers(matches, config);
    return objective_from(scan, map, t, matches, weights, penalties, config, nullptr);
}

IcpResult icp(const PointCloud& scan,
              const ReferenceMap& map,
              const RigidTransform& prior,
              std::span<const Penalty> penalties,
              const IcpConfig& config)
{
    config.validate();
    if (scan.empty())
        throw NoOverlap("icp: empty scan");

    IcpResult result;
    result.transform = prior;
    for (int iter = 1; iter <= config.max_iterations; ++iter)
    {
        const auto matches = match(scan, map.index(), result.transform);
        const auto weights = weight_outliers(matches, config);
        const auto constraints = build_constraints(scan, map, result.transform, matches, weights, penalties, config);
        if (constraints.size() == 3 * penalties.size())
            throw NoOverlap("icp: no match survived outlier weighting");

        const RigidTransform step = solve_constraints(constraints, config.max_condition);
        result.transform = compose(step, result.transform);
        result.diagnostics.iterations = iter;
        if (step.translation().norm() < config.translation_epsilon &&
            rotation_angle(step.rotation()) < config.rotation_epsilon)
        {
            result.diagnostics.converged = true;
            break;
        }
    }

    const auto matches = match(scan, map.index(), result.transform);
    const auto weights = weight_outliers(matches, config);
    result.diagnostics.residual = objective_from(
        scan, map, result.transform, matches, weights, penalties, config, &result.diagnostics.match_count);
    return result;
}

IcpResult icp(const PointCloud& scan,
              const PointCloud& map,
              const RigidTransform& prior,
              std::span<const Penalty> penalties,
              const IcpConfig& config)
{
    return icp(scan, ReferenceMap(map), prior, penalties, config);
}

}  // namespace picp
