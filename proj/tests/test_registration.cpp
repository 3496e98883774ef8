#include "picp/errors.hpp"
#include "picp/registration.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace picp;
using picp::testing::deg;

namespace {

std::vector<Match> linear_match(const PointCloud& scan, const std::vector<Vec3>& map, const RigidTransform& t)
{
    std::vector<Match> out;
    for (std::size_t j = 0; j < scan.size(); ++j)
    {
        const Vec3 p = t.apply(scan.points[j]);
        Match best{j, 0, (map[0] - p).squaredNorm()};
        for (std::size_t i = 1; i < map.size(); ++i)
        {
            const double d = (map[i] - p).squaredNorm();
            if (d < best.squared_distance)
                best = {j, i, d};
        }
        out.push_back(best);
    }
    return out;
}

// Direct-solve reference for e^T W^-1 e, in extended precision so the oracle
// is not the weaker side at condition numbers near 1e6.
double direct_mahalanobis(const Vec3& e, const SymMat3& w)
{
    using MatL = Eigen::Matrix<long double, 3, 3>;
    using VecL = Eigen::Matrix<long double, 3, 1>;
    const MatL m = w.matrix().cast<long double>();
    const VecL el = e.cast<long double>();
    return static_cast<double>(el.dot(m.fullPivLu().solve(el)));
}

double pose_translation_error(const RigidTransform& a, const RigidTransform& b)
{
    return (a.translation() - b.translation()).norm();
}

double pose_rotation_error(const RigidTransform& a, const RigidTransform& b)
{
    return rotation_angle(a.rotation().transpose() * b.rotation());
}

IcpConfig plain_config()
{
    IcpConfig c;
    c.outlier = OutlierWeighting::none();
    c.max_iterations = 60;
    c.translation_epsilon = 1e-9;
    c.rotation_epsilon = 1e-10;
    return c;
}

}  // namespace

TEST(Match, SelfMatchHasZeroDistance)
{
    const auto scene = picp::testing::structured_scene(0.5);
    const NeighborIndex index(scene);
    for (const auto& m : match(scene, index, RigidTransform::identity()))
    {
        EXPECT_EQ(scene.points[m.map_index], scene.points[m.scan_index]);  // the scene repeats edge points
        EXPECT_LE(m.map_index, m.scan_index);
        EXPECT_EQ(m.squared_distance, 0.0);
    }
}

TEST(Match, ShiftedLineMatchesNearestOriginal)
{
    PointCloud map;
    PointCloud scan;
    for (int i = 0; i < 10; ++i)
    {
        map.points.emplace_back(i, 0, 0);
        scan.points.emplace_back(i + 0.1, 0, 0);
    }
    const NeighborIndex index(map);
    for (const auto& m : match(scan, index, RigidTransform::identity()))
    {
        EXPECT_EQ(m.map_index, m.scan_index);
        EXPECT_NEAR(m.squared_distance, 0.01, 1e-12);
    }
}

TEST(Match, EqualsLinearScan)
{
    std::mt19937_64 rng(77);
    PointCloud map;
    PointCloud scan;
    for (int i = 0; i < 600; ++i)
        map.points.push_back(picp::testing::random_vec(rng, 5.0));
    for (int i = 0; i < 300; ++i)
        scan.points.push_back(picp::testing::random_vec(rng, 5.0));
    const auto t = picp::testing::random_transform(rng, 1.0);
    const NeighborIndex index(map);
    const auto got = match(scan, index, t);
    const auto ref = linear_match(scan, map.points, t);
    for (std::size_t j = 0; j < got.size(); ++j)
    {
        EXPECT_EQ(got[j].map_index, ref[j].map_index);
        EXPECT_EQ(got[j].squared_distance, ref[j].squared_distance);
    }
}

TEST(WeightOutliers, Examples)
{
    std::vector<Match> m{{0, 0, 1.0}, {1, 0, 2.0}, {2, 0, 3.0}, {3, 0, 4.0}};
    IcpConfig c;
    c.outlier = OutlierWeighting::trimmed(0.5);
    EXPECT_EQ(weight_outliers(m, c), (std::vector<double>{1, 1, 0, 0}));
    std::reverse(m.begin(), m.end());
    EXPECT_EQ(weight_outliers(m, c), (std::vector<double>{0, 0, 1, 1}));
    c.outlier = OutlierWeighting::none();
    EXPECT_EQ(weight_outliers(m, c), (std::vector<double>(4, 1.0)));
    c.outlier = OutlierWeighting::cauchy(1.0);
    const std::vector<Match> one{{0, 0, 1.0}};
    EXPECT_DOUBLE_EQ(weight_outliers(one, c)[0], 0.5);
}

TEST(IcpConfig, ValidatesRanges)
{
    IcpConfig c;
    EXPECT_NO_THROW(c.validate());
    c.outlier = OutlierWeighting::trimmed(0.0);
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.outlier = OutlierWeighting::trimmed(1.0);
    c.scale_s = std::numeric_limits<double>::infinity();
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(DecomposeGaussian, IdentityGivesUnitOrthonormalConstraints)
{
    const auto cs = decompose_gaussian(Vec3::Zero(), Vec3::Zero(), SymMat3::identity());
    Mat3 basis;
    for (int i = 0; i < 3; ++i)
    {
        EXPECT_DOUBLE_EQ(cs[i].weight, 1.0);
        basis.col(i) = cs[i].normal;
    }
    EXPECT_LE((basis.transpose() * basis - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DecomposeGaussian, ThinCovarianceIsPointToPlane)
{
    const auto cs = decompose_gaussian(Vec3::Zero(), Vec3::Zero(), SymMat3::diagonal(1e-4, 1, 1));
    EXPECT_NEAR(std::abs(cs[0].normal.dot(Vec3::UnitX())), 1.0, 1e-15);
    EXPECT_NEAR(cs[0].weight, 1e4, 1e-8);
    EXPECT_NEAR(cs[1].weight, 1.0, 1e-12);
    EXPECT_NEAR(cs[2].weight, 1.0, 1e-12);
}

TEST(DecomposeGaussian, WeightedProjectionsEqualMahalanobis)
{
    std::mt19937_64 rng(123);
    for (int i = 0; i < 10000; ++i)
    {
        const SymMat3 w = picp::testing::random_spd(rng);
        const Vec3 q = picp::testing::random_vec(rng, 2.0);
        const Vec3 p = picp::testing::random_vec(rng, 2.0);
        double sum = 0.0;
        for (const auto& c : decompose_gaussian(q, p, w))
            sum += c.weight * std::pow((c.map_point - c.scan_point).dot(c.normal), 2);
        const double ref = direct_mahalanobis(q - p, w);
        EXPECT_LE(std::abs(sum - ref), 1e-9 * ref);
    }
}

TEST(DecomposeGaussian, PointToPlaneLimitConvergesMonotonically)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial)
    {
        const Mat3 r = picp::testing::random_rotation(rng);
        const Vec3 e = picp::testing::random_vec(rng, 1.0);
        const Vec3 n1 = r.col(0);
        const double plane_term = std::pow(e.dot(n1), 2);
        double previous = std::numeric_limits<double>::infinity();
        for (double l1 : {1e-2, 1e-4, 1e-6})
        {
            const SymMat3 w = SymMat3::from_matrix(r * Vec3(l1, 1, 1).asDiagonal() * r.transpose());
            double sum = 0.0;
            for (const auto& c : decompose_gaussian(e, Vec3::Zero(), w))
                sum += c.weight * std::pow(c.map_point.dot(c.normal), 2);
            const double deviation = std::abs(sum * l1 - plane_term) / plane_term;
            EXPECT_LT(deviation, previous);
            previous = deviation;
        }
    }
}

TEST(DecomposeGaussian, SingularIsRejected)
{
    EXPECT_THROW(decompose_gaussian(Vec3::Zero(), Vec3::Zero(), SymMat3::diagonal(0, 1, 1)), DegenerateCovariance);
}

TEST(GaussianToGaussian, Examples)
{
    std::mt19937_64 rng(9);
    const auto sum = gaussian_to_gaussian_cov(SymMat3::identity(), SymMat3::identity(),
                                              picp::testing::random_transform(rng));
    EXPECT_LE((sum.matrix() - 2.0 * Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-14);

    const auto rotated = gaussian_to_gaussian_cov(SymMat3::diagonal(1e-12, 1e-12, 1e-12), SymMat3::diagonal(1, 0.1, 0.1),
                                                  RigidTransform::from_rotation(rot_z(deg(90))));
    EXPECT_LE((rotated.matrix() - Vec3(0.1, 1, 0.1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-9);

    for (int i = 0; i < 1000; ++i)
    {
        const auto c = gaussian_to_gaussian_cov(picp::testing::random_spd(rng), picp::testing::random_spd(rng),
                                                picp::testing::random_transform(rng));
        EXPECT_GT(eig_sym3(c).values[0], 0.0);
        EXPECT_EQ(SymMat3::from_matrix(c.matrix()), c);
    }
}

TEST(SolveConstraints, AlignedGivesIdentity)
{
    const auto scene = picp::testing::structured_scene(0.5);
    std::vector<PlaneConstraint> cs;
    for (std::size_t i = 0; i < scene.size(); ++i)
        cs.push_back({scene.normals[i], 1.0, scene.points[i], scene.points[i]});
    const auto step = solve_constraints(cs);
    EXPECT_LE(step.translation().norm(), 1e-10);
    EXPECT_LE(rotation_angle(step.rotation()), 1e-10);
}

TEST(SolveConstraints, RecoversPureTranslation)
{
    // the x-facing family carries the 0.1 m offset; y and z families are aligned
    std::vector<PlaneConstraint> cs;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
        {
            const Vec3 q(0.0, i - 2.5, j - 2.5);
            cs.push_back({Vec3::UnitX(), 1.0, q, q + Vec3(0.1, 0, 0)});
            const Vec3 qy(i - 2.5, 0.0, j - 2.5);
            cs.push_back({Vec3::UnitY(), 1.0, qy, qy});
            const Vec3 qz(i - 2.5, j - 2.5, 0.0);
            cs.push_back({Vec3::UnitZ(), 1.0, qz, qz});
        }
    const auto step = solve_constraints(cs);
    EXPECT_LE((step.translation() - Vec3(-0.1, 0, 0)).norm(), 1e-6);
    EXPECT_LE(rotation_angle(step.rotation()), 1e-9);
}

TEST(SolveConstraints, SingleNormalDirectionIsRankDeficient)
{
    std::vector<PlaneConstraint> cs;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
        {
            const Vec3 q(i, j, 0.0);
            cs.push_back({Vec3::UnitZ(), 1.0, q, q + Vec3(0, 0, 0.05)});
        }
    try
    {
        solve_constraints(cs);
        FAIL() << "expected RankDeficient";
    }
    catch (const RankDeficient& e)
    {
        auto names = e.unconstrained();
        std::sort(names.begin(), names.end());
        EXPECT_EQ(names, (std::vector<std::string>{"rot_z", "trans_x", "trans_y"}));
    }
}

TEST(SolveConstraints, SingleStepIsExactForSmallMotions)
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial)
    {
        Vec3 omega = picp::testing::random_vec(rng, 1.0);
        omega *= 0.01 * std::uniform_real_distribution<double>(0, 1)(rng) / omega.norm();
        const RigidTransform truth(so3_exp(omega), picp::testing::random_vec(rng, 0.05));
        std::vector<PlaneConstraint> cs;
        for (int i = 0; i < 60; ++i)
        {
            const Vec3 q = picp::testing::random_vec(rng, 1.0);
            const Vec3 n = picp::testing::random_vec(rng, 1.0).normalized();
            cs.push_back({n, 1.0, q, truth.inverse().apply(q)});
        }
        const auto step = solve_constraints(cs);
        EXPECT_LE((step.translation() - truth.translation()).norm(), 1e-4);
        EXPECT_LE(pose_rotation_error(step, truth), 1e-4);
    }
}

TEST(BuildConstraints, WithoutPenaltiesIsWeightedPointToPlane)
{
    const auto scene = picp::testing::structured_scene(0.5);
    const ReferenceMap map(scene);
    std::mt19937_64 rng(2);
    const RigidTransform t(so3_exp(Vec3(0.01, -0.02, 0.03)), Vec3(0.05, 0.02, -0.03));
    IcpConfig config;
    const auto matches = match(scene, map.index(), t);
    const auto weights = weight_outliers(matches, config);
    const auto built = build_constraints(scene, map, t, matches, weights, {}, config);

    const double m = std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0; });
    std::vector<PlaneConstraint> expected;
    for (std::size_t i = 0; i < matches.size(); ++i)
    {
        if (weights[i] > 0)
            expected.push_back({map.normals()[matches[i].map_index], config.scale_s / m * weights[i],
                                map.points()[matches[i].map_index], t.apply(scene.points[matches[i].scan_index])});
    }
    EXPECT_EQ(built, expected);
}

TEST(Objective, Examples)
{
    const auto scene = picp::testing::structured_scene(0.5);
    const ReferenceMap map(scene);
    EXPECT_EQ(objective(scene, map, RigidTransform::identity(), {}, IcpConfig{}), 0.0);

    PointCloud one_map;
    one_map.points = {Vec3(1, 0, 0)};
    one_map.normals = {Vec3(1, 0, 0)};
    PointCloud one_scan;
    one_scan.points = {Vec3::Zero()};
    IcpConfig c;
    c.outlier = OutlierWeighting::none();
    c.scale_s = 1.0;
    EXPECT_DOUBLE_EQ(objective(one_scan, ReferenceMap(one_map), RigidTransform::identity(), {}, c), 1.0);
}

TEST(Objective, NonIncreasingOverIterationsOnPlaneWorld)
{
    const auto scene = picp::testing::structured_scene(0.3);
    const ReferenceMap map(scene);
    IcpConfig c = plain_config();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial)
    {
        RigidTransform t(so3_exp(picp::testing::random_vec(rng, deg(3))), picp::testing::random_vec(rng, 0.15));
        double previous = objective(scene, map, t, {}, c);
        for (int iter = 0; iter < 8; ++iter)
        {
            const auto matches = match(scene, map.index(), t);
            const auto weights = weight_outliers(matches, c);
            const auto cs = build_constraints(scene, map, t, matches, weights, {}, c);
            t = compose(solve_constraints(cs), t);
            const double value = objective(scene, map, t, {}, c);
            EXPECT_LE(value, previous * (1 + 1e-12) + 1e-15);
            previous = value;
        }
    }
}

TEST(Icp, SelfRegistrationFromIdentity)
{
    const auto scene = picp::testing::structured_scene(0.3);
    const auto result = icp(scene, scene, RigidTransform::identity(), {}, IcpConfig{});
    EXPECT_LE(result.transform.translation().norm(), 1e-9);
    EXPECT_LE(rotation_angle(result.transform.rotation()), 1e-9);
    EXPECT_LE(result.diagnostics.iterations, 2);
    EXPECT_TRUE(result.diagnostics.converged);
}

TEST(Icp, RecoversKnownTransformFromPerturbedPrior)
{
    const auto map = picp::testing::structured_scene(0.2);
    std::mt19937_64 rng(61);
    IcpConfig config;
    config.outlier = OutlierWeighting::trimmed(0.9);
    for (int trial = 0; trial < 10; ++trial)
    {
        const RigidTransform truth(so3_exp(picp::testing::random_vec(rng, 0.3)), picp::testing::random_vec(rng, 1.0));
        PointCloud scan;
        scan.points.reserve(map.size());
        for (const auto& p : map.points)
            scan.points.push_back(truth.inverse().apply(p));
        Vec3 axis = picp::testing::random_vec(rng).normalized();
        Vec3 offset = picp::testing::random_vec(rng).normalized();
        const RigidTransform prior =
            compose(RigidTransform(so3_exp(axis * deg(5)), offset * 0.2), truth);
        const auto result = icp(scan, map, prior, {}, config);
        EXPECT_LE(pose_translation_error(result.transform, truth), 1e-3);
        EXPECT_LE(pose_rotation_error(result.transform, truth), 1e-3);
    }
}

TEST(Icp, PenaltyDominatesWhenPointScaleVanishes)
{
    const auto scene = picp::testing::structured_scene(0.5);
    IcpConfig config;
    config.scale_s = 1e-3;
    config.outlier = OutlierWeighting::none();
    const std::vector<Penalty> penalties{{Vec3(1, 0, 0), Vec3::Zero(), SymMat3::identity() * 1e-4}};
    const auto result = icp(scene, scene, RigidTransform::identity(), penalties, config);
    // rotation is left to the (vanishing) point term; only the translation is pinned
    EXPECT_LE((result.transform.translation() - Vec3(1, 0, 0)).norm(), 1e-3);
}

TEST(Icp, InvariantToScanPermutation)
{
    const auto map = picp::testing::structured_scene(0.3);
    const RigidTransform truth(so3_exp(Vec3(0.02, 0.01, -0.04)), Vec3(0.1, -0.05, 0.02));
    PointCloud scan;
    for (const auto& p : map.points)
        scan.points.push_back(truth.inverse().apply(p));
    PointCloud shuffled = scan;
    std::mt19937_64 rng(3);
    std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
    IcpConfig config;
    const std::vector<Penalty> penalties{{Vec3(0.1, -0.05, 0.02), Vec3::Zero(), SymMat3::diagonal(0.01, 0.01, 0.04)}};
    const auto a = icp(scan, map, RigidTransform::identity(), penalties, config);
    const auto b = icp(shuffled, map, RigidTransform::identity(), penalties, config);
    EXPECT_LE(pose_translation_error(a.transform, b.transform), 1e-9);
    EXPECT_LE(pose_rotation_error(a.transform, b.transform), 1e-9);
}

TEST(Icp, MapWithoutValidNormalsHasNoOverlap)
{
    PointCloud map;
    map.points = {Vec3::Zero(), Vec3::UnitX()};
    map.normals = {Vec3::Zero(), Vec3::Zero()};
    EXPECT_THROW(ReferenceMap{map}, NoOverlap);
    map.normals.clear();
    EXPECT_THROW(ReferenceMap{map}, std::invalid_argument);
}

TEST(Icp, PropagatesRankDeficiency)
{
    PointCloud floor;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
        {
            floor.points.emplace_back(i, j, 0);
            floor.normals.push_back(Vec3::UnitZ());
        }
    EXPECT_THROW(icp(floor, floor, RigidTransform::identity(), {}, IcpConfig{}), RankDeficient);
    // a penalty fixes the horizontal translation but not yaw
    const std::vector<Penalty> p{{Vec3::Zero(), Vec3::Zero(), SymMat3::identity()}};
    EXPECT_THROW(icp(floor, floor, RigidTransform::identity(), p, IcpConfig{}), RankDeficient);
}
