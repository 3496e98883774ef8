#include "picp/errors.hpp"
#include "picp/io.hpp"
#include "picp/pipeline.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace picp;
using picp::testing::deg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag)
{
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    const fs::path p = fs::temp_directory_path() / (std::string("picp_") + info->name() + "_" + tag);
    fs::remove_all(p);
    return p;
}

std::string read_text(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig small_run(RunMode mode, double length = 8.0)
{
    RunConfig r;
    r.mode = mode;
    r.scenario.seed = 3;
    r.scenario.length = length;
    r.scenario.scan_step = 2.0;
    r.scenario.sensor_step = 0.5;
    r.scenario.world_margin = 15.0;
    r.scenario.tree_density = 0.05;
    r.scenario.lidar.max_range = 15.0;
    r.scenario.lidar.azimuth_steps = 300;
    r.scenario.lidar.tilt = deg(27);
    r.calibration_distance = 4.0;
    r.mapper.record_timings = false;
    return r;
}

}  // namespace

TEST(RunMode, NamesRoundTrip)
{
    for (RunMode m : {RunMode::prior, RunMode::baseline, RunMode::penalty})
        EXPECT_EQ(run_mode_from_string(to_string(m)), m);
    EXPECT_THROW(run_mode_from_string("icp"), std::invalid_argument);
}

TEST(RunConfig, ModesSelectRegistrationAndPenalties)
{
    RunConfig r;
    r.mode = RunMode::prior;
    EXPECT_FALSE(r.effective_mapper(0).register_scans);
    r.mode = RunMode::baseline;
    EXPECT_TRUE(r.effective_mapper(0).register_scans);
    EXPECT_EQ(r.effective_mapper(0).penalty_mode, PenaltyMode::none);
    r.mode = RunMode::penalty;
    EXPECT_EQ(r.effective_mapper(0.2).penalty_mode, PenaltyMode::three_point);
    EXPECT_EQ(r.effective_mapper(0.2).initial_heading_offset, 0.2);
    r.penalty_points = 1;
    EXPECT_EQ(r.effective_mapper(0).penalty_mode, PenaltyMode::gnss_only);
}

TEST(RunConfig, ReadsKeys)
{
    const auto cfg = KeyValueConfig::parse(
        "mode = baseline\nepsilon = 0.1\nr_max = off\npoint_sigma = 0.05\noutlier = cauchy\nseed = 9\n"
        "trajectory = loop\nlidar_tilt_deg = 10\ntiming = no\n");
    const RunConfig r = run_config_from(cfg);
    EXPECT_EQ(r.mode, RunMode::baseline);
    EXPECT_EQ(r.mapper.epsilon, 0.1);
    EXPECT_TRUE(std::isinf(r.mapper.r_max));
    EXPECT_NEAR(r.mapper.icp.scale_s, 400.0, 1e-9);
    EXPECT_EQ(r.mapper.icp.outlier.kind, OutlierWeighting::cauchy(0.1).kind);
    EXPECT_EQ(r.scenario.seed, 9u);
    EXPECT_EQ(r.scenario.trajectory, synth::TrajectoryKind::loop);
    EXPECT_NEAR(r.scenario.lidar.tilt, deg(10), 1e-15);
    EXPECT_FALSE(r.mapper.record_timings);
}

TEST(RunConfig, RejectsBadValuesWithLineNumbers)
{
    auto line_of_error = [](const std::string& text) -> std::size_t {
        try
        {
            run_config_from(KeyValueConfig::parse(text));
        }
        catch (const ParseError& e)
        {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of_error("seed = 1\nmode = fancy\n"), 2u);
    EXPECT_EQ(line_of_error("penalty_points = 2\n"), 1u);
    EXPECT_EQ(line_of_error("\n\noutlier = huber\n"), 3u);
    EXPECT_EQ(line_of_error("epsilon = 0.05\nepsilonn = 0.1\n"), 2u);
    EXPECT_EQ(line_of_error("trajectory = spiral\n"), 1u);
    EXPECT_THROW(run_config_from(KeyValueConfig::parse("epsilon = -1\n")), ParseError);
}

TEST(Pipeline, TwoScanBaselineRunWritesOutputs)
{
    RunConfig r = small_run(RunMode::baseline, 2.0);
    r.output_dir = fresh_dir("out");
    const RunResult res = run_mapping(r);
    ASSERT_EQ(res.state.trajectory.size(), 2u);
    write_outputs(r, res);
    const PointCloud map = read_ply(r.output_dir / "map.ply");
    EXPECT_GT(map.size(), 0u);
    EXPECT_EQ(map.size(), res.state.map.size());
    EXPECT_EQ(read_trajectory_csv(r.output_dir / "trajectory.csv").size(), 2u);
    const std::string summary = read_text(r.output_dir / "summary.txt");
    EXPECT_NE(summary.find("mode = baseline"), std::string::npos);
    EXPECT_NE(summary.find("crispness_m = "), std::string::npos);
    fs::remove_all(r.output_dir);
}

TEST(Pipeline, PriorModeFollowsSensorIncrements)
{
    const RunConfig r = small_run(RunMode::prior);
    const RunResult res = run_mapping(r);
    const Scenario sc = make_scenario(r.scenario);
    ASSERT_EQ(res.state.trajectory.size(), sc.scan_count());
    const auto& fix0 = sc.fixes[sc.scan_samples[0]];
    const auto& att0 = sc.attitudes[sc.scan_samples[0]];
    const RigidTransform& p0 = res.state.trajectory[0].pose;
    EXPECT_TRUE(p0.translation().isApprox(fix0.position, 1e-12));
    for (std::size_t k = 1; k < sc.scan_count(); ++k)
    {
        const std::size_t i = sc.scan_samples[k];
        const RigidTransform& p = res.state.trajectory[k].pose;
        EXPECT_LT((p.translation() - sc.fixes[i].position).norm(), 1e-9);
        const Mat3 expected = sc.attitudes[i].attitude * att0.attitude.transpose() * p0.rotation();
        EXPECT_LT((p.rotation() - expected).norm(), 1e-9);
        EXPECT_FALSE(res.state.stats[k].registered);
    }
}

TEST(Pipeline, RunsAreByteIdentical)
{
    RunConfig r = small_run(RunMode::penalty);
    r.output_dir = fresh_dir("a");
    write_outputs(r, run_mapping(r));
    RunConfig r2 = r;
    r2.output_dir = fresh_dir("b");
    write_outputs(r2, run_mapping(r2));
    for (const char* f : {"metrics.csv", "trajectory.csv", "map.ply"})
        EXPECT_EQ(read_text(r.output_dir / f), read_text(r2.output_dir / f)) << f;
    fs::remove_all(r.output_dir);
    fs::remove_all(r2.output_dir);
}

TEST(Pipeline, EmptyRunWritesHeaderOnlyMetrics)
{
    RunConfig r;
    r.output_dir = fresh_dir("out");
    write_outputs(r, RunResult{});
    EXPECT_EQ(read_text(r.output_dir / "metrics.csv"),
              "scan_id,time_s,cutmap_points,map_points,registration_ms,insertion_ms,icp_iterations,residual\n");
    EXPECT_TRUE(read_ply(r.output_dir / "map.ply").empty());
    fs::remove_all(r.output_dir);
}

TEST(Pipeline, UnboundedCutMapIsTheWholeMap)
{
    RunConfig r = small_run(RunMode::baseline);
    r.mapper.r_max = std::numeric_limits<double>::infinity();
    const RunResult res = run_mapping(r);
    for (std::size_t k = 1; k < res.state.stats.size(); ++k)
        EXPECT_EQ(res.state.stats[k].cutmap_points, res.state.stats[k].map_points) << k;
}

TEST(Pipeline, RecordedInputsReproduceTheSyntheticRun)
{
    const RunConfig mem = small_run(RunMode::penalty);
    const RunResult a = run_mapping(mem);

    RunConfig rec = mem;
    rec.input_dir = fresh_dir("in");
    write_scenario(make_scenario(mem.scenario), rec.input_dir);
    const RunResult b = run_mapping(rec);

    ASSERT_EQ(a.state.trajectory.size(), b.state.trajectory.size());
    for (std::size_t k = 0; k < a.state.trajectory.size(); ++k)
    {
        const RigidTransform d = a.state.trajectory[k].pose.inverse() * b.state.trajectory[k].pose;
        EXPECT_LT(d.translation().norm(), 1e-6) << k;
    }
    ASSERT_TRUE(b.loop_closure_error && b.crispness);
    EXPECT_NEAR(*a.loop_closure_error, *b.loop_closure_error, 1e-6);
    EXPECT_NEAR(*a.crispness, *b.crispness, 1e-6);
    fs::remove_all(rec.input_dir);
}

TEST(Pipeline, MissingRecordedInputIsAnIoError)
{
    RunConfig r;
    r.input_dir = fresh_dir("nothing");
    EXPECT_THROW(run_mapping(r), IoError);
}

TEST(TrajectoryCsv, RoundTrip)
{
    std::mt19937_64 rng(4);
    std::vector<StampedPose> traj;
    for (int i = 0; i < 10; ++i)
        traj.push_back({0.25 * i, picp::testing::random_transform(rng, 50.0)});
    const fs::path p = fresh_dir("t.csv");
    write_trajectory_csv(traj, p);
    const auto back = read_trajectory_csv(p);
    ASSERT_EQ(back.size(), traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i)
    {
        EXPECT_EQ(back[i].time, traj[i].time);
        EXPECT_EQ(back[i].pose.translation(), traj[i].pose.translation());
        EXPECT_LT((back[i].pose.rotation() - traj[i].pose.rotation()).norm(), 1e-14);
    }
    fs::remove(p);
}

TEST(WorldCsv, RoundTripKeepsSurfaceDistances)
{
    const Scenario sc = make_scenario(small_run(RunMode::prior).scenario);
    const fs::path p = fresh_dir("w.csv");
    write_world_csv(sc.world, p);
    const synth::World w = read_world_csv(p);
    std::mt19937_64 rng(8);
    for (int i = 0; i < 100; ++i)
    {
        const Vec3 q = picp::testing::random_vec(rng, 15.0);
        EXPECT_EQ(w.surface_distance(q), sc.world.surface_distance(q));
    }
    fs::remove(p);
}

TEST(Metrics, LoopClosureErrorOracle)
{
    std::mt19937_64 rng(6);
    std::vector<StampedPose> truth, est;
    const RigidTransform offset = picp::testing::random_transform(rng);
    for (int i = 0; i < 5; ++i)
    {
        const RigidTransform t = picp::testing::random_transform(rng);
        truth.push_back({double(i), t});
        est.push_back({double(i), offset * t});
    }
    // a global rigid offset is not a closure error
    EXPECT_LT(loop_closure_error(est, truth), 1e-9);
    est.back().pose = RigidTransform(est.back().pose.rotation(), est.back().pose.translation() + Vec3(0.3, 0, 0.4));
    EXPECT_NEAR(loop_closure_error(est, truth), 0.5, 1e-9);
}

TEST(Metrics, CrispnessOfSampledPlane)
{
    PointCloud flat;
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j)
            flat.points.emplace_back(0.1 * i, 0.1 * j, 0.0);
    EXPECT_LT(local_crispness(flat), 1e-12);
    EXPECT_NEAR(nn_crispness(flat), 0.1, 1e-12);
    const synth::World ground(-0.02, {}, 0);
    EXPECT_NEAR(crispness(flat, ground), 0.02, 1e-12);

    PointCloud doubled = flat;
    for (const Vec3& p : flat.points)
        doubled.points.push_back(p + Vec3(0.05, 0.05, 0.1));
    EXPECT_GT(local_crispness(doubled), 0.02);
}
