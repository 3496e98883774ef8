#include "picp/errors.hpp"
#include "picp/geometry.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

using namespace picp;
using picp::testing::deg;

namespace {

// Eigenvalues of a symmetric 3x3 matrix as roots of its characteristic
// polynomial, by the trigonometric solution of the depressed cubic.
Vec3 char_poly_eigenvalues(const Mat3& a)
{
    const double q = a.trace() / 3.0;
    const Mat3 b = a - q * Mat3::Identity();
    const double p = std::sqrt((b * b).trace() / 6.0);
    if (p == 0.0)
        return Vec3::Constant(q);
    const double r = std::clamp((b / p).determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double l3 = q + 2.0 * p * std::cos(phi);
    const double l1 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    return {l1, 3.0 * q - l1 - l3, l3};
}

void expect_mat_near(const Mat3& a, const Mat3& b, double tol)
{
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), tol) << "\n" << a << "\nvs\n" << b;
}

}  // namespace

TEST(Compose, IdentityWithIdentity)
{
    const auto r = compose(RigidTransform::identity(), RigidTransform::identity());
    expect_mat_near(r.rotation(), Mat3::Identity(), 0.0);
    EXPECT_EQ(r.translation(), Vec3::Zero());
}

TEST(Compose, WithInverseIsIdentity)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i)
    {
        const auto t = picp::testing::random_transform(rng);
        const auto r = compose(t, t.inverse());
        expect_mat_near(r.rotation(), Mat3::Identity(), 1e-12);
        EXPECT_LE(r.translation().norm(), 1e-12);
    }
}

TEST(Compose, RotationsAdd)
{
    const auto r90 = RigidTransform::from_rotation(rot_z(deg(90)));
    expect_mat_near(compose(r90, r90).rotation(), rot_z(deg(180)), 1e-12);
}

TEST(Compose, ApplyIsAssociative)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i)
    {
        const auto a = picp::testing::random_transform(rng);
        const auto b = picp::testing::random_transform(rng);
        const Vec3 p = picp::testing::random_vec(rng, 10.0);
        EXPECT_LE((apply(compose(a, b), p) - apply(a, apply(b, p))).norm(), 1e-12);
    }
}

TEST(Compose, StaysOrthonormalOverLongChains)
{
    std::mt19937_64 rng(3);
    RigidTransform acc;
    for (int i = 0; i < 100000; ++i)
        acc = compose(acc, RigidTransform::from_rotation(so3_exp(picp::testing::random_vec(rng, 0.05))));
    EXPECT_LE(orthonormality_error(acc.rotation()), 1e-12);
    EXPECT_NEAR(acc.rotation().determinant(), 1.0, 1e-12);
}

TEST(Apply, Examples)
{
    EXPECT_EQ(apply(RigidTransform::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3));
    EXPECT_EQ(apply(RigidTransform::from_translation({1, 0, 0}), Vec3::Zero()), Vec3(1, 0, 0));
    EXPECT_LE((apply(RigidTransform::from_rotation(rot_z(deg(90))), Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(RigidTransform, RejectsImproperRotation)
{
    Mat3 reflection = Mat3::Identity();
    reflection(2, 2) = -1.0;
    EXPECT_THROW(RigidTransform(reflection, Vec3::Zero()), std::invalid_argument);
    EXPECT_THROW(RigidTransform(2.0 * Mat3::Identity(), Vec3::Zero()), std::invalid_argument);
}

TEST(RigidTransform, QuaternionRoundTrip)
{
    std::mt19937_64 rng(5);
    const auto t = picp::testing::random_transform(rng);
    const auto back = RigidTransform::from_quaternion(t.quaternion(), t.translation());
    expect_mat_near(back.rotation(), t.rotation(), 1e-12);
}

TEST(Angles, YawPitchRollRoundTrip)
{
    const auto ypr = yaw_pitch_roll(from_yaw_pitch_roll(0.3, -0.2, 0.1));
    EXPECT_NEAR(ypr.yaw, 0.3, 1e-12);
    EXPECT_NEAR(ypr.pitch, -0.2, 1e-12);
    EXPECT_NEAR(ypr.roll, 0.1, 1e-12);
    EXPECT_NEAR(wrap_angle(3 * std::numbers::pi), std::numbers::pi, 1e-12);
    EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-12);
    EXPECT_NEAR(rotation_angle(rot_x(2.5)), 2.5, 1e-12);
}

TEST(EigSym3, Identity)
{
    const auto e = eig_sym3(SymMat3::identity());
    EXPECT_EQ(e.values, Vec3(1, 1, 1));
    expect_mat_near(e.vectors.transpose() * e.vectors, Mat3::Identity(), 1e-15);
}

TEST(EigSym3, DiagonalIsSortedAndAxisAligned)
{
    const auto e = eig_sym3(SymMat3::diagonal(4, 1, 9));
    EXPECT_EQ(e.values, Vec3(1, 4, 9));
    EXPECT_NEAR(std::abs(e.vectors.col(0).dot(Vec3::UnitY())), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(e.vectors.col(1).dot(Vec3::UnitX())), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(e.vectors.col(2).dot(Vec3::UnitZ())), 1.0, 1e-15);
}

TEST(EigSym3, RandomSpdReconstructsAndMatchesCharacteristicPolynomial)
{
    std::mt19937_64 rng(42);
    for (int i = 0; i < 5000; ++i)
    {
        const SymMat3 w = picp::testing::random_spd(rng);
        const Mat3 m = w.matrix();
        const auto e = eig_sym3(w);
        ASSERT_LE(e.values[0], e.values[1]);
        ASSERT_LE(e.values[1], e.values[2]);
        expect_mat_near(e.vectors * e.values.asDiagonal() * e.vectors.transpose(), m, 1e-9 * m.norm());
        expect_mat_near(e.vectors.transpose() * e.vectors, Mat3::Identity(), 1e-12);
        EXPECT_NEAR(e.vectors.determinant(), 1.0, 1e-12);
        const Vec3 ref = char_poly_eigenvalues(m);
        for (int k = 0; k < 3; ++k)
            EXPECT_NEAR(e.values[k], ref[k], 1e-9 * m.norm());
    }
}

TEST(EigSym3, AscendingForIndefiniteAndRepeated)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 2000; ++i)
    {
        const Mat3 r = picp::testing::random_rotation(rng);
        Vec3 l(u(rng), u(rng), u(rng));
        if (i % 3 == 0)
            l[1] = l[0];
        const auto e = eig_sym3(SymMat3::from_matrix(r * l.asDiagonal() * r.transpose()));
        EXPECT_LE(e.values[0], e.values[1]);
        EXPECT_LE(e.values[1], e.values[2]);
    }
}

TEST(EigSym3, RejectsNonFinite)
{
    SymMat3 w = SymMat3::identity();
    w.xy = std::nan("");
    EXPECT_THROW(eig_sym3(w), std::invalid_argument);
}

TEST(Mahalanobis, Examples)
{
    std::mt19937_64 rng(1);
    EXPECT_EQ(mahalanobis_sq(Vec3::Zero(), picp::testing::random_spd(rng)), 0.0);
    EXPECT_DOUBLE_EQ(mahalanobis_sq(Vec3(1, 0, 0), SymMat3::identity()), 1.0);
    EXPECT_NEAR(mahalanobis_sq(Vec3(1, 1, 0), SymMat3::diagonal(4, 1, 1)), 0.25 + 1.0, 1e-15);
}

TEST(Mahalanobis, SingularCovarianceIsDegenerate)
{
    EXPECT_THROW(mahalanobis_sq(Vec3(1, 0, 0), SymMat3::diagonal(1, 1, 0)), DegenerateCovariance);
    EXPECT_THROW(mahalanobis_sq(Vec3(1, 0, 0), SymMat3::diagonal(1, -1, 1)), DegenerateCovariance);
}

TEST(Mahalanobis, EqualsEigenDecomposedSum)
{
    std::mt19937_64 rng(99);
    for (int i = 0; i < 10000; ++i)
    {
        const SymMat3 w = picp::testing::random_spd(rng);
        const Vec3 e = picp::testing::random_vec(rng, 3.0);
        const auto eig = eig_sym3(w);
        double sum = 0.0;
        for (int k = 0; k < 3; ++k)
            sum += std::pow(e.dot(eig.vectors.col(k)), 2) / eig.values[k];
        const double direct = mahalanobis_sq(e, w);
        EXPECT_LE(std::abs(sum - direct), 1e-9 * direct);
    }
}
