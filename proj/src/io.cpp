#include "picp/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace picp {

namespace fs = std::filesystem;

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& what)
    : IoError(file + ":" + std::to_string(line) + ": " + what), line_(line)
{
}

void write_atomically(const fs::path& path, const std::function<void(std::ostream&)>& writer, bool binary)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        writer(out);
        out.flush();
        if (!out)
        {
            out.close();
            fs::remove(tmp);
            throw IoError("failed writing " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::string format_double(double v)
{
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

// ---------------------------------------------------------------- PLY

namespace {

enum class PlyType
{
    i8,
    u8,
    i16,
    u16,
    i32,
    u32,
    f32,
    f64,
};

std::size_t type_size(PlyType t)
{
    switch (t)
    {
    case PlyType::i8:
    case PlyType::u8:
        return 1;
    case PlyType::i16:
    case PlyType::u16:
        return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32:
        return 4;
    case PlyType::f64:
        return 8;
    }
    return 0;
}

bool parse_type(const std::string& s, PlyType& t)
{
    static const std::map<std::string, PlyType> names{
        {"char", PlyType::i8},     {"int8", PlyType::i8},     {"uchar", PlyType::u8},   {"uint8", PlyType::u8},
        {"short", PlyType::i16},   {"int16", PlyType::i16},   {"ushort", PlyType::u16}, {"uint16", PlyType::u16},
        {"int", PlyType::i32},     {"int32", PlyType::i32},   {"uint", PlyType::u32},   {"uint32", PlyType::u32},
        {"float", PlyType::f32},   {"float32", PlyType::f32}, {"double", PlyType::f64}, {"float64", PlyType::f64},
    };
    const auto it = names.find(s);
    if (it == names.end())
        return false;
    t = it->second;
    return true;
}

struct PlyProperty
{
    std::string name;
    PlyType type;
};

struct PlyElement
{
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    bool has_list = false;
};

template <typename T>
T load_le(const char* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double decode(const char* p, PlyType t)
{
    static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");
    switch (t)
    {
    case PlyType::i8:
        return load_le<std::int8_t>(p);
    case PlyType::u8:
        return load_le<std::uint8_t>(p);
    case PlyType::i16:
        return load_le<std::int16_t>(p);
    case PlyType::u16:
        return load_le<std::uint16_t>(p);
    case PlyType::i32:
        return load_le<std::int32_t>(p);
    case PlyType::u32:
        return load_le<std::uint32_t>(p);
    case PlyType::f32:
        return load_le<float>(p);
    case PlyType::f64:
        return load_le<double>(p);
    }
    return 0.0;
}

bool parse_number(std::string_view s, double& out)
{
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

PointCloud read_ply(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    const std::string file = path.string();

    std::string line;
    if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
        throw PlyHeaderError(file + ": missing 'ply' magic");

    bool binary = false;
    bool have_format = false;
    std::vector<PlyElement> elements;
    bool ended = false;
    while (std::getline(in, line))
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word.empty() || word == "comment" || word == "obj_info")
            continue;
        if (word == "end_header")
        {
            ended = true;
            break;
        }
        if (word == "format")
        {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii")
                binary = false;
            else if (fmt == "binary_little_endian")
                binary = true;
            else if (fmt == "binary_big_endian")
                throw PlyUnsupportedError(file + ": big-endian PLY is not supported");
            else
                throw PlyHeaderError(file + ": unknown format '" + fmt + "'");
            have_format = true;
        }
        else if (word == "element")
        {
            PlyElement e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0)
                throw PlyHeaderError(file + ": malformed element line '" + line + "'");
            e.count = static_cast<std::size_t>(count);
            elements.push_back(e);
        }
        else if (word == "property")
        {
            if (elements.empty())
                throw PlyHeaderError(file + ": property before any element");
            std::string type, name;
            ls >> type;
            if (type == "list")
            {
                elements.back().has_list = true;
                continue;
            }
            ls >> name;
            PlyType t;
            if (name.empty())
                throw PlyHeaderError(file + ": malformed property line '" + line + "'");
            if (!parse_type(type, t))
                throw PlyUnsupportedError(file + ": unsupported property type '" + type + "'");
            elements.back().properties.push_back({name, t});
        }
        else
        {
            throw PlyHeaderError(file + ": unexpected header line '" + line + "'");
        }
    }
    if (!ended)
        throw PlyHeaderError(file + ": missing end_header");
    if (!have_format)
        throw PlyHeaderError(file + ": missing format line");

    const auto vertex = std::find_if(elements.begin(), elements.end(), [](const PlyElement& e) { return e.name == "vertex"; });
    if (vertex == elements.end())
        throw PlyHeaderError(file + ": no vertex element");
    for (auto it = elements.begin(); it != vertex; ++it)
    {
        if (it->count > 0)
            throw PlyUnsupportedError(file + ": elements before 'vertex' are not supported");
    }
    if (vertex->has_list)
        throw PlyUnsupportedError(file + ": list properties on vertices are not supported");

    auto find = [&](const char* name) -> int {
        for (std::size_t i = 0; i < vertex->properties.size(); ++i)
        {
            if (vertex->properties[i].name == name)
                return static_cast<int>(i);
        }
        return -1;
    };
    const std::array<int, 3> xyz{find("x"), find("y"), find("z")};
    const std::array<int, 3> nxyz{find("nx"), find("ny"), find("nz")};
    if (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0)
        throw PlyHeaderError(file + ": vertex element lacks x, y or z");
    for (int i : xyz)
    {
        const PlyType t = vertex->properties[static_cast<std::size_t>(i)].type;
        if (t != PlyType::f32 && t != PlyType::f64)
            throw PlyUnsupportedError(file + ": coordinates must be float or double");
    }
    const bool normals = nxyz[0] >= 0 && nxyz[1] >= 0 && nxyz[2] >= 0;

    PointCloud cloud;
    cloud.points.resize(vertex->count);
    if (normals)
        cloud.normals.resize(vertex->count);

    const std::size_t nprops = vertex->properties.size();
    std::vector<double> values(nprops);
    if (binary)
    {
        std::vector<std::size_t> offset(nprops);
        std::size_t stride = 0;
        for (std::size_t i = 0; i < nprops; ++i)
        {
            offset[i] = stride;
            stride += type_size(vertex->properties[i].type);
        }
        std::vector<char> row(stride);
        for (std::size_t v = 0; v < vertex->count; ++v)
        {
            if (!in.read(row.data(), static_cast<std::streamsize>(stride)))
                throw PlyTruncatedError(file + ": body ends at vertex " + std::to_string(v) + " of " +
                                        std::to_string(vertex->count));
            for (std::size_t i = 0; i < nprops; ++i)
                values[i] = decode(row.data() + offset[i], vertex->properties[i].type);
            cloud.points[v] = Vec3(values[static_cast<std::size_t>(xyz[0])], values[static_cast<std::size_t>(xyz[1])],
                                   values[static_cast<std::size_t>(xyz[2])]);
            if (normals)
                cloud.normals[v] = Vec3(values[static_cast<std::size_t>(nxyz[0])],
                                        values[static_cast<std::size_t>(nxyz[1])],
                                        values[static_cast<std::size_t>(nxyz[2])]);
        }
    }
    else
    {
        for (std::size_t v = 0; v < vertex->count; ++v)
        {
            do
            {
                if (!std::getline(in, line))
                    throw PlyTruncatedError(file + ": body ends at vertex " + std::to_string(v) + " of " +
                                            std::to_string(vertex->count));
            } while (line.find_first_not_of(" \t\r") == std::string::npos);
            std::istringstream ls(line);
            std::string token;
            for (std::size_t i = 0; i < nprops; ++i)
            {
                if (!(ls >> token))
                    throw PlyTruncatedError(file + ": vertex " + std::to_string(v) + " has too few values");
                if (!parse_number(token, values[i]))
                    throw PlyHeaderError(file + ": vertex " + std::to_string(v) + ": malformed value '" + token + "'");
            }
            cloud.points[v] = Vec3(values[static_cast<std::size_t>(xyz[0])], values[static_cast<std::size_t>(xyz[1])],
                                   values[static_cast<std::size_t>(xyz[2])]);
            if (normals)
                cloud.normals[v] = Vec3(values[static_cast<std::size_t>(nxyz[0])],
                                        values[static_cast<std::size_t>(nxyz[1])],
                                        values[static_cast<std::size_t>(nxyz[2])]);
        }
    }
    return cloud;
}

void write_ply(const PointCloud& cloud, const fs::path& path, bool ascii)
{
    if (cloud.has_normals() && cloud.normals.size() != cloud.size())
        throw std::invalid_argument("write_ply: normals and points differ in length");
    const bool normals = cloud.has_normals();
    write_atomically(
        path,
        [&](std::ostream& out) {
            out << "ply\n" << (ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n");
            out << "element vertex " << cloud.size() << "\n";
            out << "property double x\nproperty double y\nproperty double z\n";
            if (normals)
                out << "property double nx\nproperty double ny\nproperty double nz\n";
            out << "end_header\n";
            if (ascii)
            {
                char buf[160];
                for (std::size_t i = 0; i < cloud.size(); ++i)
                {
                    const Vec3& p = cloud.points[i];
                    int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", p.x(), p.y(), p.z());
                    out.write(buf, n);
                    if (normals)
                    {
                        const Vec3& q = cloud.normals[i];
                        n = std::snprintf(buf, sizeof buf, " %.9g %.9g %.9g", q.x(), q.y(), q.z());
                        out.write(buf, n);
                    }
                    out.put('\n');
                }
            }
            else
            {
                std::vector<double> row;
                for (std::size_t i = 0; i < cloud.size(); ++i)
                {
                    row.assign(cloud.points[i].data(), cloud.points[i].data() + 3);
                    if (normals)
                        row.insert(row.end(), cloud.normals[i].data(), cloud.normals[i].data() + 3);
                    out.write(reinterpret_cast<const char*>(row.data()),
                              static_cast<std::streamsize>(row.size() * sizeof(double)));
                }
            }
        },
        !ascii);
}

// ---------------------------------------------------------------- sensor CSV

std::string to_string(GnssStatus s)
{
    switch (s)
    {
    case GnssStatus::rtk_fixed:
        return "rtk_fixed";
    case GnssStatus::rtk_float:
        return "rtk_float";
    case GnssStatus::standalone:
        return "standalone";
    }
    return "standalone";
}

GnssStatus gnss_status_from_string(const std::string& s)
{
    if (s == "rtk_fixed")
        return GnssStatus::rtk_fixed;
    if (s == "rtk_float")
        return GnssStatus::rtk_float;
    if (s == "standalone")
        return GnssStatus::standalone;
    throw std::invalid_argument("unknown GNSS status '" + s + "'");
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ','))
    {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

const std::vector<std::string> kGnssColumns{"time",   "e",      "n",      "u",      "cov_ee", "cov_nn",
                                            "cov_uu", "cov_en", "cov_eu", "cov_nu", "status"};
const std::vector<std::string> kImuColumns{"time", "qw", "qx", "qy", "qz", "mag_heading"};

}  // namespace

SensorData read_sensor_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    const std::string file = path.string();

    std::string line;
    std::size_t line_no = 0;
    // header: first non-empty, non-comment line
    std::vector<std::string> header;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#')
            continue;
        header = split_csv(line);
        break;
    }
    if (header.empty())
        throw ParseError(file, std::max<std::size_t>(line_no, 1), "missing header row");

    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i)
        column[header[i]] = i;
    const bool is_gnss = column.count("e") || column.count("cov_ee") || column.count("status");
    const auto& required = is_gnss ? kGnssColumns : kImuColumns;
    std::vector<std::string> missing;
    for (const auto& c : required)
    {
        if (!column.count(c))
            missing.push_back(c);
    }
    if (!missing.empty())
    {
        std::string list;
        for (const auto& m : missing)
            list += (list.empty() ? "" : ", ") + m;
        throw ParseError(file, line_no, std::string(is_gnss ? "GNSS" : "IMU") + " header lacks column(s): " + list);
    }
    const bool has_rp_var = column.count("roll_pitch_var") > 0;

    SensorData data;
    double last_time = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto cells = split_csv(line);
        if (cells.size() < header.size())
            throw ParseError(file, line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                                std::to_string(cells.size()));
        auto num = [&](const std::string& name) {
            double v = 0.0;
            const std::string& cell = cells[column.at(name)];
            if (!parse_number(cell, v) || !std::isfinite(v))
                throw ParseError(file, line_no, "column '" + name + "': malformed number '" + cell + "'");
            return v;
        };
        const double time = num("time");
        if (time < last_time)
            throw ParseError(file, line_no, "time decreases (" + format_double(time) + " after " +
                                                format_double(last_time) + ")");
        last_time = time;

        if (is_gnss)
        {
            GnssFix f;
            f.time = time;
            f.position = Vec3(num("e"), num("n"), num("u"));
            f.covariance = SymMat3{num("cov_ee"), num("cov_nn"), num("cov_uu"), num("cov_en"), num("cov_eu"), num("cov_nu")};
            try
            {
                f.status = gnss_status_from_string(cells[column.at("status")]);
            }
            catch (const std::invalid_argument& e)
            {
                throw ParseError(file, line_no, e.what());
            }
            if (!is_positive_definite(f.covariance))
            {
                ++data.warnings;
                data.warning_messages.push_back(file + ":" + std::to_string(line_no) +
                                                ": covariance not positive definite; row skipped");
                continue;
            }
            data.fixes.push_back(f);
        }
        else
        {
            Eigen::Quaterniond q(num("qw"), num("qx"), num("qy"), num("qz"));
            if (!(q.norm() > 1e-9))
                throw ParseError(file, line_no, "zero quaternion");
            ImuAttitude a;
            a.time = time;
            a.attitude = q.normalized().toRotationMatrix();
            a.raw_magnetic_heading = wrap_angle(num("mag_heading"));
            if (has_rp_var)
            {
                a.roll_pitch_cov = num("roll_pitch_var");
                if (a.roll_pitch_cov < 0.0)
                {
                    ++data.warnings;
                    data.warning_messages.push_back(file + ":" + std::to_string(line_no) +
                                                    ": negative roll/pitch variance; row skipped");
                    continue;
                }
            }
            data.attitudes.push_back(a);
        }
    }
    return data;
}

void write_gnss_csv(const std::vector<GnssFix>& fixes, const fs::path& path)
{
    write_atomically(path, [&](std::ostream& out) {
        for (std::size_t i = 0; i < kGnssColumns.size(); ++i)
            out << (i ? "," : "") << kGnssColumns[i];
        out << "\n";
        for (const auto& f : fixes)
        {
            const SymMat3& c = f.covariance;
            out << format_double(f.time) << ',' << format_double(f.position.x()) << ',' << format_double(f.position.y())
                << ',' << format_double(f.position.z()) << ',' << format_double(c.xx) << ',' << format_double(c.yy)
                << ',' << format_double(c.zz) << ',' << format_double(c.xy) << ',' << format_double(c.xz) << ','
                << format_double(c.yz) << ',' << to_string(f.status) << "\n";
        }
    });
}

void write_imu_csv(const std::vector<ImuAttitude>& attitudes, const fs::path& path)
{
    write_atomically(path, [&](std::ostream& out) {
        out << "time,qw,qx,qy,qz,mag_heading,roll_pitch_var\n";
        for (const auto& a : attitudes)
        {
            const Eigen::Quaterniond q(a.attitude);
            out << format_double(a.time) << ',' << format_double(q.w()) << ',' << format_double(q.x()) << ','
                << format_double(q.y()) << ',' << format_double(q.z()) << ',' << format_double(a.raw_magnetic_heading)
                << ',' << format_double(a.roll_pitch_cov) << "\n";
        }
    });
}

}  // namespace picp
