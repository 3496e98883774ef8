#include "picp/pipeline.hpp"

#include "picp/errors.hpp"
#include "picp/io.hpp"
#include "picp/neighbor_index.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace picp {

namespace fs = std::filesystem;

std::string to_string(RunMode m)
{
    switch (m)
    {
    case RunMode::prior:
        return "prior";
    case RunMode::baseline:
        return "baseline";
    case RunMode::penalty:
        return "penalty";
    }
    return "penalty";
}

RunMode run_mode_from_string(const std::string& s)
{
    if (s == "prior")
        return RunMode::prior;
    if (s == "baseline")
        return RunMode::baseline;
    if (s == "penalty")
        return RunMode::penalty;
    throw std::invalid_argument("mode must be prior, baseline or penalty, got '" + s + "'");
}

MapperConfig RunConfig::effective_mapper(double heading_offset) const
{
    MapperConfig m = mapper;
    m.initial_heading_offset = heading_offset;
    switch (mode)
    {
    case RunMode::prior:
        m.register_scans = false;
        m.penalty_mode = PenaltyMode::none;
        break;
    case RunMode::baseline:
        m.register_scans = true;
        m.penalty_mode = PenaltyMode::none;
        break;
    case RunMode::penalty:
        m.register_scans = true;
        m.penalty_mode = penalty_points == 1 ? PenaltyMode::gnss_only : PenaltyMode::three_point;
        break;
    }
    return m;
}

RunConfig run_config_from(const KeyValueConfig& cfg, RunConfig r)
{
    auto bad = [&](const std::string& key, const std::string& what) {
        throw ParseError(cfg.source(), cfg.line_of(key), "key '" + key + "': " + what);
    };

    const std::string mode = cfg.get_string("mode", to_string(r.mode));
    try
    {
        r.mode = run_mode_from_string(mode);
    }
    catch (const std::invalid_argument& e)
    {
        bad("mode", e.what());
    }
    const std::string input = cfg.get_string("input_dir", "");
    if (!input.empty())
        r.input_dir = input;
    r.output_dir = cfg.get_string("output_dir", r.output_dir.string());
    r.penalty_points = static_cast<int>(cfg.get_int("penalty_points", r.penalty_points));
    if (r.penalty_points != 1 && r.penalty_points != 3)
        bad("penalty_points", "must be 1 or 3");
    r.calibration_distance = cfg.get_double("calibration_distance", r.calibration_distance);
    r.write_map = cfg.get_bool("write_map", r.write_map);
    r.ascii_ply = cfg.get_bool("ascii_ply", r.ascii_ply);

    MapperConfig& m = r.mapper;
    m.epsilon = cfg.get_double("epsilon", m.epsilon);
    m.r_max = cfg.get_double("r_max", m.r_max);
    m.arm_length = cfg.get_double("arm_length", m.arm_length);
    m.aux_cov_scale = cfg.get_double("aux_cov_scale", m.aux_cov_scale);
    m.normals.k = static_cast<std::size_t>(cfg.get_int("normal_k", static_cast<long long>(m.normals.k)));
    m.fuse_heading = cfg.get_bool("heading_fusion", m.fuse_heading);
    m.heading.speed_threshold = cfg.get_double("heading_speed_threshold", m.heading.speed_threshold);
    m.heading.baseline = cfg.get_double("heading_baseline", m.heading.baseline);
    m.heading.gain = cfg.get_double("heading_gain", m.heading.gain);
    m.record_timings = cfg.get_bool("timing", m.record_timings);

    IcpConfig& icp = m.icp;
    icp.max_iterations = static_cast<int>(cfg.get_int("icp_max_iterations", icp.max_iterations));
    icp.translation_epsilon = cfg.get_double("icp_translation_eps", icp.translation_epsilon);
    icp.rotation_epsilon = cfg.get_double("icp_rotation_eps", icp.rotation_epsilon);
    icp.max_condition = cfg.get_double("icp_max_condition", icp.max_condition);
    const double sigma = cfg.get_double("point_sigma", 1.0 / std::sqrt(icp.scale_s));
    icp.scale_s = 1.0 / (sigma * sigma);
    const std::string outlier = cfg.get_string("outlier", "");
    if (outlier == "none")
        icp.outlier = OutlierWeighting::none();
    else if (outlier == "trimmed")
        icp.outlier = OutlierWeighting::trimmed(0.85);
    else if (outlier == "cauchy")
        icp.outlier = OutlierWeighting::cauchy(0.1);
    else if (!outlier.empty())
        bad("outlier", "must be none, trimmed or cauchy");
    icp.outlier.parameter = cfg.get_double("outlier_param", icp.outlier.parameter);

    try
    {
        m.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw ParseError(cfg.source(), 0, e.what());
    }
    r.scenario = scenario_from_config(cfg, r.scenario);

    const auto unused = cfg.unused_keys();
    if (!unused.empty())
        bad(unused.front(), "unknown key");
    return r;
}

namespace {

struct Inputs
{
    std::vector<GnssFix> fixes;
    std::vector<ImuAttitude> attitudes;
    std::vector<double> scan_times;
    std::vector<fs::path> scan_files;
    std::vector<StampedPose> truth;
    std::optional<synth::World> world;
    std::size_t warnings = 0;
    std::vector<std::string> messages;
};

Inputs read_recorded(const fs::path& dir)
{
    Inputs in;
    SensorData gnss = read_sensor_csv(dir / "gnss.csv");
    SensorData imu = read_sensor_csv(dir / "imu.csv");
    if (gnss.fixes.empty() && !gnss.attitudes.empty())
        throw IoError((dir / "gnss.csv").string() + " holds IMU rows");
    if (imu.attitudes.empty() && !imu.fixes.empty())
        throw IoError((dir / "imu.csv").string() + " holds GNSS rows");
    in.fixes = std::move(gnss.fixes);
    in.attitudes = std::move(imu.attitudes);
    in.warnings = gnss.warnings + imu.warnings;
    in.messages = gnss.warning_messages;
    in.messages.insert(in.messages.end(), imu.warning_messages.begin(), imu.warning_messages.end());

    const fs::path index = dir / "scans.csv";
    std::ifstream s(index);
    if (!s)
        throw IoError("cannot open " + index.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(s, line))
    {
        ++line_no;
        if (line_no == 1 || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        std::string id, time, file;
        if (!std::getline(ls, id, ',') || !std::getline(ls, time, ',') || !std::getline(ls, file))
            throw ParseError(index.string(), line_no, "expected scan_id,time,file");
        if (!file.empty() && file.back() == '\r')
            file.pop_back();
        double t = 0.0;
        const auto [ptr, ec] = std::from_chars(time.data(), time.data() + time.size(), t);
        if (ec != std::errc() || ptr != time.data() + time.size())
            throw ParseError(index.string(), line_no, "malformed time '" + time + "'");
        if (!in.scan_times.empty() && t < in.scan_times.back())
            throw ParseError(index.string(), line_no, "scan times decrease");
        in.scan_times.push_back(t);
        in.scan_files.push_back(dir / file);
    }
    if (fs::exists(dir / "truth.csv"))
        in.truth = read_trajectory_csv(dir / "truth.csv");
    if (fs::exists(dir / "world.csv"))
        in.world = read_world_csv(dir / "world.csv");
    return in;
}

}  // namespace

RunResult run_mapping(const RunConfig& config)
{
    RunResult result;
    std::optional<Scenario> scenario;
    Inputs rec;
    const bool recorded = !config.input_dir.empty();
    if (recorded)
    {
        rec = read_recorded(config.input_dir);
        result.input_warnings = rec.warnings;
        result.messages = rec.messages;
        result.truth = rec.truth;
        result.world = rec.world;
    }
    else
    {
        scenario = make_scenario(config.scenario);
        rec.fixes = scenario->fixes;
        rec.attitudes = scenario->attitudes;
        for (std::size_t k = 0; k < scenario->scan_count(); ++k)
        {
            rec.scan_times.push_back(scenario->scan_time(k));
            result.truth.push_back({scenario->scan_time(k), scenario->scan_truth(k)});
        }
        result.world = scenario->world;
    }
    if (rec.fixes.empty() || rec.attitudes.empty())
        throw IoError("no GNSS fixes or IMU attitudes to map with");

    std::vector<HeadingSample> headings;
    for (const auto& a : rec.attitudes)
        headings.push_back({a.time, a.raw_magnetic_heading});
    try
    {
        result.heading_offset = estimate_heading_offset(rec.fixes, headings, config.calibration_distance);
        result.heading_calibrated = true;
    }
    catch (const InsufficientMotion& e)
    {
        result.messages.push_back(std::string("heading offset not calibrated: ") + e.what());
    }

    Mapper mapper(config.effective_mapper(result.heading_offset));
    for (std::size_t k = 0; k < rec.scan_times.size(); ++k)
    {
        const double t = rec.scan_times[k];
        const PointCloud scan = recorded ? read_ply(rec.scan_files[k]) : scenario->scan(k);
        mapper.process_scan(t, scan, interpolate_fix(rec.fixes, t), interpolate_attitude(rec.attitudes, t));
    }
    result.state = mapper.state();

    if (!result.truth.empty() && result.truth.size() == result.state.trajectory.size())
        result.loop_closure_error = loop_closure_error(result.state.trajectory, result.truth);
    if (result.world)
        result.crispness = crispness(result.state.map, *result.world);
    result.local_crispness = local_crispness(result.state.map);
    result.nn_crispness = nn_crispness(result.state.map);
    return result;
}

double loop_closure_error(const std::vector<StampedPose>& estimate, const std::vector<StampedPose>& truth)
{
    if (estimate.size() < 2 || truth.size() != estimate.size())
        throw std::invalid_argument("loop_closure_error: need matching trajectories of at least two poses");
    const RigidTransform est = estimate.front().pose.inverse() * estimate.back().pose;
    const RigidTransform tru = truth.front().pose.inverse() * truth.back().pose;
    return (tru.inverse() * est).translation().norm();
}

double crispness(const PointCloud& map, const synth::World& world)
{
    if (map.empty())
        return 0.0;
    double sum = 0.0;
    for (const Vec3& p : map.points)
        sum += world.surface_distance(p);
    return sum / static_cast<double>(map.size());
}

double local_crispness(const PointCloud& map, std::size_t k)
{
    if (k < 3)
        throw std::invalid_argument("local_crispness: k must be at least 3");
    if (map.size() < k)
        return 0.0;
    const NeighborIndex index(map);
    double sum = 0.0;
    for (const Vec3& p : map.points)
    {
        const auto nn = index.knn(p, k);
        Vec3 centroid = Vec3::Zero();
        for (const auto& n : nn)
            centroid += map.points[n.index];
        centroid /= static_cast<double>(nn.size());
        Mat3 scatter = Mat3::Zero();
        for (const auto& n : nn)
        {
            const Vec3 d = map.points[n.index] - centroid;
            scatter += d * d.transpose();
        }
        const Vec3 normal = eig_sym3(SymMat3::from_matrix(scatter)).vectors.col(0);
        sum += std::abs((p - centroid).dot(normal));
    }
    return sum / static_cast<double>(map.size());
}

double nn_crispness(const PointCloud& map)
{
    if (map.size() < 2)
        return 0.0;
    const NeighborIndex index(map);
    double sum = 0.0;
    for (const Vec3& p : map.points)
        sum += std::sqrt(index.knn(p, 2)[1].squared_distance);
    return sum / static_cast<double>(map.size());
}

void write_trajectory_csv(const std::vector<StampedPose>& trajectory, const fs::path& path)
{
    write_atomically(path, [&](std::ostream& out) {
        out << "time,x,y,z,qw,qx,qy,qz\n";
        for (const auto& p : trajectory)
        {
            const Vec3& t = p.pose.translation();
            const Eigen::Quaterniond q = p.pose.quaternion();
            out << format_double(p.time) << ',' << format_double(t.x()) << ',' << format_double(t.y()) << ','
                << format_double(t.z()) << ',' << format_double(q.w()) << ',' << format_double(q.x()) << ','
                << format_double(q.y()) << ',' << format_double(q.z()) << "\n";
        }
    });
}

namespace {

std::vector<double> parse_row(const std::string& file, std::size_t line_no, const std::string& line, std::size_t expected)
{
    std::vector<double> out;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ','))
    {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
            cell.pop_back();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
            throw ParseError(file, line_no, "malformed number '" + cell + "'");
        out.push_back(v);
    }
    if (out.size() != expected)
        throw ParseError(file, line_no, "expected " + std::to_string(expected) + " values");
    return out;
}

}  // namespace

std::vector<StampedPose> read_trajectory_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<StampedPose> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line_no == 1 || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto v = parse_row(path.string(), line_no, line, 8);
        const Eigen::Quaterniond q(v[4], v[5], v[6], v[7]);
        out.push_back({v[0], RigidTransform::from_quaternion(q.normalized(), Vec3(v[1], v[2], v[3]))});
    }
    return out;
}

void write_world_csv(const synth::World& world, const fs::path& path)
{
    write_atomically(path, [&](std::ostream& out) {
        out << "# ground_height=" << format_double(world.ground_height()) << "\n";
        out << "x,y,z,radius,height\n";
        for (const auto& t : world.trees())
            out << format_double(t.center.x()) << ',' << format_double(t.center.y()) << ','
                << format_double(t.center.z()) << ',' << format_double(t.radius) << ',' << format_double(t.height)
                << "\n";
    });
}

synth::World read_world_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    double ground = 0.0;
    std::vector<synth::Tree> trees;
    bool header_seen = false;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.rfind("# ground_height=", 0) == 0)
        {
            const std::string v = line.substr(16);
            ground = parse_row(path.string(), line_no, v, 1)[0];
            continue;
        }
        if (line.empty() || line[0] == '#')
            continue;
        if (!header_seen)
        {
            header_seen = true;
            continue;
        }
        const auto v = parse_row(path.string(), line_no, line, 5);
        trees.push_back({Vec3(v[0], v[1], v[2]), v[3], v[4]});
    }
    return synth::World(ground, std::move(trees), 0);
}

void write_metrics_csv(const RunResult& result, const fs::path& path)
{
    const bool truth = result.loop_closure_error.has_value() || result.crispness.has_value();
    write_atomically(path, [&](std::ostream& out) {
        out << "scan_id,time_s,cutmap_points,map_points,registration_ms,insertion_ms,icp_iterations,residual";
        if (truth)
            out << ",loop_closure_error_m,crispness_m";
        out << "\n";
        for (const auto& s : result.state.stats)
        {
            out << s.scan_id << ',' << format_double(s.time) << ',' << s.cutmap_points << ',' << s.map_points << ','
                << format_double(s.registration_ms) << ',' << format_double(s.insertion_ms) << ','
                << s.icp_iterations << ',' << format_double(s.residual);
            if (truth)
                out << ',' << (result.loop_closure_error ? format_double(*result.loop_closure_error) : "")
                    << ',' << (result.crispness ? format_double(*result.crispness) : "");
            out << "\n";
        }
    });
}

void write_outputs(const RunConfig& config, const RunResult& result)
{
    fs::create_directories(config.output_dir);
    if (config.write_map)
        write_ply(result.state.map, config.output_dir / "map.ply", config.ascii_ply);
    write_trajectory_csv(result.state.trajectory, config.output_dir / "trajectory.csv");
    write_metrics_csv(result, config.output_dir / "metrics.csv");

    std::size_t registered = 0;
    for (const auto& s : result.state.stats)
        registered += s.registered ? 1 : 0;
    write_atomically(config.output_dir / "summary.txt", [&](std::ostream& out) {
        out << "mode = " << to_string(config.mode) << "\n";
        if (config.mode == RunMode::penalty)
            out << "penalty_points = " << config.penalty_points << "\n";
        out << "scans = " << result.state.stats.size() << "\n";
        out << "registered_scans = " << registered << "\n";
        out << "map_points = " << result.state.map.size() << "\n";
        out << "heading_offset_deg = " << format_double(result.heading_offset * 180.0 / 3.14159265358979323846)
            << (result.heading_calibrated ? "" : " # not calibrated") << "\n";
        out << "input_warnings = " << result.input_warnings << "\n";
        if (result.loop_closure_error)
            out << "loop_closure_error_m = " << format_double(*result.loop_closure_error) << "\n";
        if (result.crispness)
            out << "crispness_m = " << format_double(*result.crispness) << "\n";
        out << "local_crispness_m = " << format_double(result.local_crispness) << "\n";
        out << "nn_crispness_m = " << format_double(result.nn_crispness) << "\n";
        for (const auto& e : result.state.events)
            out << "# scan " << e.scan_id << ": " << e.message << "\n";
        for (const auto& m : result.messages)
            out << "# " << m << "\n";
    });
}

void write_scenario(const Scenario& scenario, const fs::path& dir)
{
    fs::create_directories(dir / "scans");
    write_gnss_csv(scenario.fixes, dir / "gnss.csv");
    write_imu_csv(scenario.attitudes, dir / "imu.csv");
    std::vector<StampedPose> truth;
    std::ostringstream index;
    index << "scan_id,time,file\n";
    for (std::size_t k = 0; k < scenario.scan_count(); ++k)
    {
        char name[32];
        std::snprintf(name, sizeof name, "scans/scan_%05zu.ply", k);
        write_ply(scenario.scan(k), dir / name, false);
        index << k << ',' << format_double(scenario.scan_time(k)) << ',' << name << "\n";
        truth.push_back({scenario.scan_time(k), scenario.scan_truth(k)});
    }
    const std::string text = index.str();
    write_atomically(dir / "scans.csv", [&](std::ostream& out) { out << text; });
    write_trajectory_csv(truth, dir / "truth.csv");
    write_world_csv(scenario.world, dir / "world.csv");
}

}  // namespace picp
