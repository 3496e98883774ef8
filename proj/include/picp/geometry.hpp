#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>

namespace picp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Symmetric 3x3 matrix stored by its six independent entries.
/// Used for covariances (meters^2) and scatter matrices.
struct SymMat3
{
    double xx = 0.0, yy = 0.0, zz = 0.0;
    double xy = 0.0, xz = 0.0, yz = 0.0;

    static SymMat3 identity() { return diagonal(1.0, 1.0, 1.0); }
    static SymMat3 diagonal(double a, double b, double c) { return {a, b, c, 0.0, 0.0, 0.0}; }
    /// Symmetric part of `m`.
    static SymMat3 from_matrix(const Mat3& m);

    Mat3 matrix() const;
    bool is_finite() const;

    SymMat3 operator*(double s) const { return {xx * s, yy * s, zz * s, xy * s, xz * s, yz * s}; }
    SymMat3 operator+(const SymMat3& o) const
    {
        return {xx + o.xx, yy + o.yy, zz + o.zz, xy + o.xy, xz + o.xz, yz + o.yz};
    }
    bool operator==(const SymMat3&) const = default;
};

/// Rotation about the x, y and z axes by `angle` radians.
Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Rodrigues map from a rotation vector to SO(3).
Mat3 so3_exp(const Vec3& omega);
/// Rotation angle of `r` in [0, pi].
double rotation_angle(const Mat3& r);

/// Z-Y-X Euler decomposition: r = rot_z(yaw) * rot_y(pitch) * rot_x(roll).
struct YawPitchRoll
{
    double yaw = 0.0, pitch = 0.0, roll = 0.0;
};
YawPitchRoll yaw_pitch_roll(const Mat3& r);
Mat3 from_yaw_pitch_roll(double yaw, double pitch, double roll);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Element of SE(3): x -> R x + t. The rotation is kept orthonormal with det +1.
class RigidTransform
{
public:
    RigidTransform() = default;
    /// Throws std::invalid_argument unless `rotation` is a proper rotation within 1e-9.
    RigidTransform(const Mat3& rotation, const Vec3& translation);

    static RigidTransform identity() { return {}; }
    static RigidTransform from_translation(const Vec3& t) { return RigidTransform(Mat3::Identity(), t); }
    static RigidTransform from_rotation(const Mat3& r) { return RigidTransform(r, Vec3::Zero()); }
    static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    Eigen::Quaterniond quaternion() const;

    Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
    RigidTransform inverse() const;

private:
    Mat3 rotation_ = Mat3::Identity();
    Vec3 translation_ = Vec3::Zero();
};

struct StampedPose
{
    double time = 0.0;
    RigidTransform pose;
};

/// Returns the transform applying `b` first, then `a`.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) { return compose(a, b); }
inline Vec3 apply(const RigidTransform& t, const Vec3& p) { return t.apply(p); }

/// Closest rotation to `r` (Gram-Schmidt through a normalized quaternion).
Mat3 orthonormalize(const Mat3& r);
/// Largest absolute entry of R^T R - I.
double orthonormality_error(const Mat3& r);

struct SymEigen
{
    Vec3 values;   ///< ascending
    Mat3 vectors;  ///< column i pairs with values[i]; orthonormal, det +1
};

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Throws std::invalid_argument on non-finite input.
SymEigen eig_sym3(const SymMat3& w);

/// e^T W^-1 e through a Cholesky solve.
/// Throws DegenerateCovariance when W is not (numerically) positive definite.
double mahalanobis_sq(const Vec3& e, const SymMat3& w);

/// True when every eigenvalue of `w` is positive.
bool is_positive_definite(const SymMat3& w);

}  // namespace picp
