#pragma once

#include "picp/geometry.hpp"
#include "picp/penalties.hpp"
#include "picp/point_cloud.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace picp {

/// Base of all file-format errors.
class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class PlyHeaderError : public IoError
{
public:
    using IoError::IoError;
};

class PlyTruncatedError : public IoError
{
public:
    using IoError::IoError;
};

class PlyUnsupportedError : public IoError
{
public:
    using IoError::IoError;
};

/// Error tied to a line of a text input (1-based).
class ParseError : public IoError
{
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Writes through a temporary file in the same directory, then renames over
/// `path`, so readers never observe a partial file.
void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer,
                      bool binary = false);

/// Reads the vertex element of a PLY file (ASCII or binary little-endian):
/// x, y, z and, when all present, nx, ny, nz. Other scalar properties are skipped.
PointCloud read_ply(const std::filesystem::path& path);

/// Writes x, y, z (and normals when present) as doubles. ASCII uses 9
/// significant digits; binary is little-endian and bit-exact.
void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool ascii = false);

struct SensorData
{
    std::vector<GnssFix> fixes;
    std::vector<ImuAttitude> attitudes;
    std::size_t warnings = 0;
    std::vector<std::string> warning_messages;
};

/// Reads a GNSS or an IMU CSV, recognised by its header:
///   time,e,n,u,cov_ee,cov_nn,cov_uu,cov_en,cov_eu,cov_nu,status
///   time,qw,qx,qy,qz,mag_heading[,roll_pitch_var]
/// Rows whose covariance is not positive definite are skipped with a warning.
/// Throws ParseError on missing columns, malformed values or decreasing time.
SensorData read_sensor_csv(const std::filesystem::path& path);

void write_gnss_csv(const std::vector<GnssFix>& fixes, const std::filesystem::path& path);
void write_imu_csv(const std::vector<ImuAttitude>& attitudes, const std::filesystem::path& path);

std::string to_string(GnssStatus s);
/// Throws std::invalid_argument for unknown names.
GnssStatus gnss_status_from_string(const std::string& s);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace picp
