#include "picp/geometry.hpp"

#include "picp/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace picp {

namespace {

constexpr double kRotationTolerance = 1e-9;
constexpr double kDriftTolerance = 1e-12;

}  // namespace

SymMat3 SymMat3::from_matrix(const Mat3& m)
{
    return {m(0, 0),
            m(1, 1),
            m(2, 2),
            0.5 * (m(0, 1) + m(1, 0)),
            0.5 * (m(0, 2) + m(2, 0)),
            0.5 * (m(1, 2) + m(2, 1))};
}

Mat3 SymMat3::matrix() const
{
    Mat3 m;
    m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
    return m;
}

bool SymMat3::is_finite() const
{
    return std::isfinite(xx) && std::isfinite(yy) && std::isfinite(zz) && std::isfinite(xy) &&
           std::isfinite(xz) && std::isfinite(yz);
}

Mat3 rot_x(double angle)
{
    return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix();
}

Mat3 rot_y(double angle)
{
    return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

Mat3 rot_z(double angle)
{
    return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 so3_exp(const Vec3& omega)
{
    const double theta = omega.norm();
    Mat3 k;
    k << 0.0, -omega.z(), omega.y(), omega.z(), 0.0, -omega.x(), -omega.y(), omega.x(), 0.0;
    if (theta < 1e-8)
    {
        // second-order series; the remainder is O(theta^3)
        return Mat3::Identity() + k + 0.5 * k * k;
    }
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * k + b * k * k;
}

double rotation_angle(const Mat3& r)
{
    // atan2 form stays accurate near 0 and pi
    const Vec3 axis_sin(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double s = 0.5 * axis_sin.norm();
    const double c = 0.5 * (r.trace() - 1.0);
    return std::atan2(s, c);
}

YawPitchRoll yaw_pitch_roll(const Mat3& r)
{
    YawPitchRoll out;
    out.pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    out.yaw = std::atan2(r(1, 0), r(0, 0));
    out.roll = std::atan2(r(2, 1), r(2, 2));
    return out;
}

Mat3 from_yaw_pitch_roll(double yaw, double pitch, double roll)
{
    return rot_z(yaw) * rot_y(pitch) * rot_x(roll);
}

double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a, two_pi);
    if (w <= -std::numbers::pi)
        w += two_pi;
    else if (w > std::numbers::pi)
        w -= two_pi;
    return w;
}

double orthonormality_error(const Mat3& r)
{
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 orthonormalize(const Mat3& r)
{
    return Eigen::Quaterniond(r).normalized().toRotationMatrix();
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation)
{
    if (!rotation.allFinite() || !translation.allFinite())
        throw std::invalid_argument("RigidTransform: non-finite entries");
    if (orthonormality_error(rotation) > kRotationTolerance ||
        std::abs(rotation.determinant() - 1.0) > kRotationTolerance)
    {
        throw std::invalid_argument("RigidTransform: rotation is not a proper rotation");
    }
}

RigidTransform RigidTransform::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t)
{
    return RigidTransform(q.normalized().toRotationMatrix(), t);
}

Eigen::Quaterniond RigidTransform::quaternion() const
{
    return Eigen::Quaterniond(rotation_).normalized();
}

RigidTransform RigidTransform::inverse() const
{
    const Mat3 rt = rotation_.transpose();
    return RigidTransform(rt, -(rt * translation_));
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b)
{
    Mat3 r = a.rotation() * b.rotation();
    if (orthonormality_error(r) > kDriftTolerance)
        r = orthonormalize(r);
    return RigidTransform(r, a.rotation() * b.translation() + a.translation());
}

SymEigen eig_sym3(const SymMat3& w)
{
    if (!w.is_finite())
        throw std::invalid_argument("eig_sym3: non-finite input");

    Mat3 a = w.matrix();
    Mat3 v = Mat3::Identity();

    // Cyclic Jacobi. Convergence is judged relative to the diagonal pair, which
    // keeps small eigenvalues of positive definite matrices relatively accurate.
    constexpr double tol = 1e-15;
    constexpr int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep)
    {
        bool rotated = false;
        for (int p = 0; p < 2; ++p)
        {
            for (int q = p + 1; q < 3; ++q)
            {
                const double apq = a(p, q);
                if (apq == 0.0)
                    continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double scale = std::sqrt(std::abs(app * aqq));
                if (std::abs(apq) <= tol * scale ||
                    std::abs(apq) <= 1e-300 + 1e-18 * (std::abs(app) + std::abs(aqq)))
                {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                rotated = true;
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                Eigen::Matrix3d j = Mat3::Identity();
                j(p, p) = c;
                j(q, q) = c;
                j(p, q) = s;
                j(q, p) = -s;
                a = j.transpose() * a * j;
                a(p, q) = a(q, p) = 0.0;
                v = v * j;
            }
        }
        if (!rotated)
            break;
    }

    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });

    SymEigen out;
    for (int i = 0; i < 3; ++i)
    {
        out.values[i] = a(order[i], order[i]);
        out.vectors.col(i) = v.col(order[i]).normalized();
    }
    if (out.vectors.determinant() < 0.0)
        out.vectors.col(2) = -out.vectors.col(2);
    return out;
}

double mahalanobis_sq(const Vec3& e, const SymMat3& w)
{
    const Mat3 m = w.matrix();
    Eigen::LLT<Mat3> llt(m);
    if (!w.is_finite() || llt.info() != Eigen::Success)
        throw DegenerateCovariance("mahalanobis_sq: covariance is not positive definite");
    const Vec3 d = llt.matrixL().toDenseMatrix().diagonal();
    const double dmin = d.minCoeff();
    const double dmax = d.maxCoeff();
    if (!(dmin > 0.0) || dmin * dmin < 1e-14 * dmax * dmax)
    {
        std::ostringstream msg;
        msg << "mahalanobis_sq: covariance is numerically singular (pivot ratio " << dmin * dmin / (dmax * dmax)
            << ")";
        throw DegenerateCovariance(msg.str());
    }
    const Vec3 y = llt.matrixL().solve(e);
    return y.squaredNorm();
}

bool is_positive_definite(const SymMat3& w)
{
    if (!w.is_finite())
        return false;
    const SymEigen eig = eig_sym3(w);
    return eig.values[0] > 0.0;
}

}  // namespace picp
