#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "depthreg/eval.hpp"
#include "support.hpp"

using namespace depthreg;
using eval::TrajectoryRecord;
using testing_support::Gen;
using testing_support::scratch_dir;

namespace {

std::vector<TrajectoryRecord> random_trajectory(Gen& gen, int n) {
  std::vector<TrajectoryRecord> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"f" + std::to_string(i), Pose{gen.vec3(-5, 5), gen.vec3(-0.5, 0.5)}});
  }
  return out;
}

// Applies world <- (r, t) * world to every pose.
std::vector<TrajectoryRecord> moved(std::vector<TrajectoryRecord> traj, const Mat3& r, const Vec3& t) {
  for (auto& rec : traj) rec.pose = pose_from_rotation(r * rec.pose.rotation(), r * rec.pose.t + t);
  return traj;
}

}  // namespace

TEST(PoseErrors, IdenticalTrajectoriesGiveZero) {
  Gen gen(1);
  const auto t = random_trajectory(gen, 6);
  const auto s = eval::pose_errors(t, t);
  EXPECT_EQ(s.mae_trans, 0.0);
  EXPECT_EQ(s.rmse_trans, 0.0);
  EXPECT_EQ(s.mae_rot, 0.0);
  EXPECT_EQ(s.frames.size(), 6u);
}

TEST(PoseErrors, OneFrameOffset) {
  Gen gen(2);
  const auto truth = random_trajectory(gen, 10);
  auto est = truth;
  est[3].pose.t.y() += 0.01;
  const auto s = eval::pose_errors(est, truth);
  EXPECT_NEAR(s.mae_trans, 0.001, 1e-15);
  EXPECT_NEAR(s.rmse_trans, 0.01 / std::sqrt(10.0), 1e-15);
  EXPECT_NEAR(s.frames[3].translation, 0.01, 1e-15);
  EXPECT_EQ(s.mae_rot, 0.0);
}

TEST(PoseErrors, RotationOffsetIsGeodesic) {
  std::vector<TrajectoryRecord> truth{{"a", Pose{{0, 0, 0}, {0.1, 0.2, 0.3}}}};
  auto est = truth;
  est[0].pose = pose_from_rotation(truth[0].pose.rotation() * rotation(Vec3(0, 0.004, 0)), truth[0].pose.t);
  EXPECT_NEAR(eval::pose_errors(est, truth).mae_rot, 0.004, 1e-12);
}

TEST(PoseErrors, RmseNeverBelowMae) {
  Gen gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = gen.integer(1, 12);
    const auto a = random_trajectory(gen, n);
    auto b = a;
    for (auto& r : b) {
      r.pose.t += gen.vec3(-0.1, 0.1);
      r.pose.theta += gen.vec3(-0.05, 0.05);
    }
    const auto s = eval::pose_errors(b, a);
    EXPECT_GE(s.rmse_trans + 1e-15, s.mae_trans);
    EXPECT_GE(s.rmse_rot + 1e-15, s.mae_rot);
  }
}

TEST(PoseErrors, FrameCountMismatchThrows) {
  Gen gen(4);
  const auto a = random_trajectory(gen, 3);
  const auto b = random_trajectory(gen, 4);
  EXPECT_THROW(eval::pose_errors(a, b), InvalidArgument);
}

TEST(AlignGauge, RemovesRigidOffset) {
  Gen gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto truth = random_trajectory(gen, gen.integer(1, 8));
    const Mat3 r = rotation(gen.vec3(-3, 3));
    const auto est = moved(truth, r, gen.vec3(-10, 10));
    const auto s = eval::pose_errors(eval::align_gauge(est, truth), truth);
    EXPECT_LT(s.mae_trans, 1e-9);
    EXPECT_LT(s.mae_rot, 1e-9);
  }
}

TEST(AlignGauge, ErrorsInvariantToCommonRigidMotion) {
  Gen gen(6);
  const auto truth = random_trajectory(gen, 7);
  auto est = truth;
  for (auto& r : est) r.pose.t += gen.vec3(-0.02, 0.02);
  const auto base = eval::pose_errors(eval::align_gauge(est, truth), truth);
  const auto shifted = moved(est, rotation(Vec3(0.3, -0.2, 1.0)), Vec3(4, -2, 1));
  const auto again = eval::pose_errors(eval::align_gauge(shifted, truth), truth);
  EXPECT_NEAR(base.mae_trans, again.mae_trans, 1e-12);
  EXPECT_NEAR(base.mae_rot, again.mae_rot, 1e-12);
  // Anchor is exact after alignment.
  EXPECT_LT(again.frames[0].translation, 1e-12);
}

TEST(AlignGauge, FrameIdMismatchNamesBothIds) {
  Gen gen(7);
  const auto truth = random_trajectory(gen, 3);
  auto est = truth;
  est[1].frame_id = "other";
  try {
    eval::align_gauge(est, truth);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("other"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("f1"), std::string::npos);
  }
}

TEST(Markers, ShiftedFrameGivesAxisError) {
  const std::vector<TrajectoryRecord> truth{{"a", Pose::identity()}, {"b", Pose{{2, 0, 0}, {0, 0, 0}}}};
  const std::vector<eval::MarkerObservation> obs{{"m1", "a", {0.5, 0.5, 0}}, {"m2", "b", {0.5, 0.5, 0}}};
  const std::vector<eval::MarkerReference> refs{{"m1", "m2", {2, 0, 0}}};
  auto est = truth;
  est[1].pose.t.x() += 0.03;
  const auto exact = eval::marker_distance_errors(obs, truth, refs);
  EXPECT_LT(exact[0].axis_error.norm(), 1e-15);
  const auto e = eval::marker_distance_errors(obs, est, refs);
  EXPECT_NEAR(e[0].axis_error.x(), 0.03, 1e-12);
  EXPECT_EQ(e[0].axis_error.y(), 0.0);
  EXPECT_NEAR(e[0].distance_error, 0.03, 1e-12);
  EXPECT_NE(eval::to_table(e).find("m1-m2"), std::string::npos);
}

TEST(Markers, PositionsAverageObservations) {
  const std::vector<TrajectoryRecord> traj{{"a", Pose::identity()}, {"b", Pose{{0, 0, 1}, {0, 0, 0}}}};
  const std::vector<eval::MarkerObservation> obs{{"m", "a", {1, 0, 0}}, {"m", "b", {1, 0, 0}}};
  EXPECT_EQ(eval::marker_positions(obs, traj).at("m"), Vec3(1, 0, 0.5));
}

TEST(Markers, MissingMarkerAndUnknownFrameThrow) {
  const std::vector<TrajectoryRecord> traj{{"a", Pose::identity()}};
  const std::vector<eval::MarkerObservation> obs{{"m1", "a", {0, 0, 0}}};
  const std::vector<eval::MarkerReference> refs{{"m1", "m9", {1, 0, 0}}};
  EXPECT_THROW(eval::marker_distance_errors(obs, traj, refs), InvalidArgument);
  const std::vector<eval::MarkerObservation> stray{{"m1", "zz", {0, 0, 0}}};
  EXPECT_THROW(eval::marker_positions(stray, traj), InvalidArgument);
}

TEST(Markers, FileReaders) {
  const auto dir = scratch_dir("eval_markers");
  {
    std::ofstream(dir / "obs.txt") << "# id frame x y z\nm1 f0 1 2 3\n";
    std::ofstream(dir / "ref.txt") << "m1 m2 -1 0.5 0\n";
    std::ofstream(dir / "bad.txt") << "m1 f0 1 2\n";
  }
  const auto obs = eval::read_marker_observations((dir / "obs.txt").string());
  ASSERT_EQ(obs.size(), 1u);
  EXPECT_EQ(obs[0].local, Vec3(1, 2, 3));
  const auto refs = eval::read_marker_references((dir / "ref.txt").string());
  EXPECT_EQ(refs[0].axis_distance, Vec3(1, 0.5, 0));
  try {
    eval::read_marker_observations((dir / "bad.txt").string());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 1u);
  }
}

TEST(Summary, TableAndJson) {
  Gen gen(8);
  const auto t = random_trajectory(gen, 2);
  const auto s = eval::pose_errors(t, t);
  const auto table = eval::to_table(s);
  EXPECT_NE(table.find("MAE(Trans/m)"), std::string::npos);
  EXPECT_NE(table.find("f1"), std::string::npos);
  const auto j = eval::to_json(s);
  EXPECT_EQ(j["frames"].size(), 2u);
  EXPECT_EQ(j["mae_trans"], 0.0);
}
