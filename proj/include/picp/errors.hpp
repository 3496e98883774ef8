#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace picp {

/// Covariance is singular or not positive definite.
class DegenerateCovariance : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// The 6x6 normal system of a registration step cannot fix every degree of freedom.
class RankDeficient : public std::runtime_error
{
public:
    RankDeficient(std::vector<std::string> unconstrained, double condition);

    /// Names drawn from rot_x, rot_y, rot_z, trans_x, trans_y, trans_z.
    const std::vector<std::string>& unconstrained() const { return unconstrained_; }
    double condition() const { return condition_; }

private:
    std::vector<std::string> unconstrained_;
    double condition_;
};

/// No scan point survived matching and outlier rejection.
class NoOverlap : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Heading offset cannot be observed from the given track.
class InsufficientMotion : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

}  // namespace picp
