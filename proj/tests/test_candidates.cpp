#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "taskgrasp/candidates.hpp"

using namespace taskgrasp;

namespace
{
PrimitiveObject cylinder(double diameter, double height)
{
  PrimitiveObject obj;
  obj.name = "cyl";
  obj.shape = ShapeKind::Cylinder;
  obj.dimensions = Vec3(diameter, diameter, height);
  obj.pose = translation_pose(Vec3(0.1, 0.05, height / 2));
  return obj;
}

ErrorKind kind_of(auto&& fn)
{
  try
  {
    fn();
  }
  catch (const Error& e)
  {
    return e.kind();
  }
  return ErrorKind::IoError;  // sentinel: nothing thrown
}

std::string write_temp(const std::string& name, const std::string& text)
{
  const std::string path = testing::TempDir() + name;
  std::ofstream(path) << text;
  return path;
}

SceneDescription open_scene()
{
  SceneDescription scene;
  scene.workspace = {Vec3(0, 0, 0), 1.0};
  scene.table_height = 0.0;
  PrimitiveObject dummy;
  dummy.name = "dummy";
  scene.objects.push_back(dummy);
  return scene;
}

// Top-down grasp at the given contact height.
GraspCandidate top_down(int id, const Vec3& contact, double conf = 0.5)
{
  GripperGeometry grip;
  return make_candidate(grasp_from_contact(contact, Vec3::UnitX(), -Vec3::UnitZ(), grip), conf, id, grip);
}
}  // namespace

TEST(GenerateSynthetic, SphereWiderThanGripper)
{
  PrimitiveObject ball;
  ball.shape = ShapeKind::Sphere;
  ball.dimensions = Vec3::Constant(0.10);
  EXPECT_EQ(kind_of([&] { generate_synthetic(ball, 10, 1); }), ErrorKind::NoGraspExists);
}

TEST(GenerateSynthetic, ThinCylinderClosesAcrossAxis)
{
  const auto obj = cylinder(0.03, 0.2);
  const auto set = generate_synthetic(obj, 50, 42);
  ASSERT_EQ(set.size(), 50u);
  const Vec3 axis = obj.pose.rotate(Vec3::UnitZ());
  for (const auto& c : set)
  {
    const double angle = std::abs(std::asin(std::clamp(closing_axis(c.pose).dot(axis), -1.0, 1.0)));
    EXPECT_LT(angle, 1e-6);
    EXPECT_TRUE(c.pose.is_valid(1e-9));
    EXPECT_GE(c.confidence, 0.0);
    EXPECT_LE(c.confidence, 1.0);
    EXPECT_LT((c.contact - contact_point(c.pose, GripperGeometry{})).norm(), 1e-12);
  }
}

TEST(GenerateSynthetic, Deterministic)
{
  const auto obj = cylinder(0.03, 0.2);
  EXPECT_EQ(generate_synthetic(obj, 30, 9), generate_synthetic(obj, 30, 9));
  EXPECT_FALSE(generate_synthetic(obj, 30, 9) == generate_synthetic(obj, 30, 10));
}

TEST(GenerateSynthetic, SortedWithUniqueIds)
{
  const auto set = generate_synthetic(cylinder(0.05, 0.06), 80, 3);
  std::set<int> ids;
  for (std::size_t i = 0; i < set.size(); ++i)
  {
    ids.insert(set[i].id);
    if (i > 0)
      EXPECT_TRUE(!confidence_order(set[i], set[i - 1]));
  }
  EXPECT_EQ(ids.size(), set.size());
}

TEST(GenerateSynthetic, WidthConstraintHoldsAnalytically)
{
  GripperGeometry grip;
  PrimitiveObject box;
  box.name = "box";
  box.shape = ShapeKind::Box;
  box.dimensions = Vec3(0.03, 0.12, 0.05);
  box.pose = axis_angle_pose(Vec3::UnitZ(), 0.4, Vec3(0, 0, 0.025));
  for (const auto& c : generate_synthetic(box, 100, 77))
  {
    // Closing axis must be a box face normal; the width is that extent.
    const Vec3 local = box.pose.inverse().rotate(closing_axis(c.pose)).cwiseAbs();
    int axis;
    EXPECT_NEAR(local.maxCoeff(&axis), 1.0, 1e-9);
    EXPECT_LE(box.dimensions[axis], grip.max_width);
  }
  for (const auto& c : generate_synthetic(cylinder(0.05, 0.06), 100, 5))
  {
    const auto obj = cylinder(0.05, 0.06);
    const Vec3 local_closing = obj.pose.inverse().rotate(closing_axis(c.pose));
    // Either across the diameter (0.05) or along the axis (0.06).
    const double width = std::abs(local_closing.z()) > 0.5 ? 0.06 : 0.05;
    EXPECT_LE(width, grip.max_width);
    const Vec3 lc = obj.pose.inverse().apply(c.contact);
    if (width == 0.05)
      EXPECT_LT(std::hypot(lc.x(), lc.y()), 1e-9);
    else
      EXPECT_LT(std::abs(lc.z()), 1e-9);
  }
}

TEST(GenerateSynthetic, ConfidenceFormula)
{
  GripperGeometry grip;
  EXPECT_DOUBLE_EQ(synthetic_confidence(0.02, -Vec3::UnitZ(), grip), 0.75);
  EXPECT_DOUBLE_EQ(synthetic_confidence(0.02, Vec3::UnitX(), grip), 0.375);
  EXPECT_DOUBLE_EQ(synthetic_confidence(0.09, -Vec3::UnitZ(), grip), 0.0);
}

TEST(LoadCandidates, SingleIdentityGrasp)
{
  const auto path = write_temp(
      "one.json", R"({"format_version":1,"grasps":[{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0],"confidence":0.9}]})");
  const auto set = load_candidates(path);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.source, CandidateSource::File);
  EXPECT_DOUBLE_EQ(set[0].confidence, 0.9);
  EXPECT_TRUE(set[0].contact.isApprox(Vec3(0, 0, 0.041)));
}

TEST(LoadCandidates, ConfidenceOutOfRange)
{
  const auto path = write_temp(
      "bad.json", R"({"grasps":[{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0],"confidence":1.2}]})");
  try
  {
    load_candidates(path);
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("confidence"), std::string::npos);
  }
}

TEST(LoadCandidates, NonOrthonormalRotation)
{
  const auto path = write_temp(
      "skew.json", R"({"grasps":[{"rotation":[1,0.01,0,0,1,0,0,0,1],"translation":[0,0,0],"confidence":0.5}]})");
  EXPECT_EQ(kind_of([&] { load_candidates(path); }), ErrorKind::InvalidPose);
}

TEST(LoadCandidates, SyntaxErrorReportsLine)
{
  const auto path = write_temp("syntax.json", "{\n  \"grasps\": [\n    {oops}\n  ]\n}\n");
  try
  {
    load_candidates(path);
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(LoadCandidates, SaveLoadIsIdentity)
{
  const auto set = generate_synthetic(cylinder(0.03, 0.2), 25, 8);
  const std::string path = testing::TempDir() + "rt.json";
  save_candidates(path, set);
  auto loaded = load_candidates(path);
  EXPECT_EQ(loaded.source, CandidateSource::File);
  loaded.source = set.source;
  EXPECT_EQ(loaded, set);
  const std::string path2 = testing::TempDir() + "rt2.json";
  save_candidates(path2, loaded);
  EXPECT_EQ(load_candidates(path2), load_candidates(path));
}

TEST(FeasibilityFilter, RemovesOutsideWorkspace)
{
  auto scene = open_scene();
  scene.workspace = {Vec3(0, 0, 0), 0.3};
  CandidateSet set;
  set.candidates = {top_down(0, Vec3(0.1, 0, 0.05)), top_down(1, Vec3(0.5, 0, 0.05))};
  const auto out = feasibility_filter(set, scene);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, 0);
}

TEST(FeasibilityFilter, RemovesGraspFromUnderTheTable)
{
  auto scene = open_scene();
  GripperGeometry grip;
  CandidateSet set;
  set.candidates = {top_down(0, Vec3(0, 0, 0.05)),
                    make_candidate(grasp_from_contact(Vec3(0, 0, 0.02), Vec3::UnitX(), Vec3::UnitZ(), grip), 0.5, 1, grip),
                    // Horizontal approach, contact too low for the fingertips to clear 5 mm.
                    make_candidate(grasp_from_contact(Vec3(0, 0, 0.004), Vec3::UnitY(), Vec3::UnitX(), grip), 0.5, 2,
                                   grip)};
  const auto out = feasibility_filter(set, scene);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, 0);
}

TEST(FeasibilityFilter, ApproachAngleFloor)
{
  auto scene = open_scene();
  GripperGeometry grip;
  // Approach tilted 20 deg from straight up: below the 30 deg floor.
  const Vec3 up20(std::sin(20 * std::numbers::pi / 180), 0, std::cos(20 * std::numbers::pi / 180));
  const Vec3 up40(std::sin(40 * std::numbers::pi / 180), 0, std::cos(40 * std::numbers::pi / 180));
  CandidateSet set;
  set.candidates = {make_candidate(grasp_from_contact(Vec3(0, 0, 0.2), Vec3::UnitY(), up20, grip), 0.5, 0, grip),
                    make_candidate(grasp_from_contact(Vec3(0, 0, 0.2), Vec3::UnitY(), up40, grip), 0.5, 1, grip)};
  const auto out = feasibility_filter(set, scene);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, 1);
}

TEST(FeasibilityFilter, AllFeasibleIsIdentity)
{
  auto scene = open_scene();
  CandidateSet set;
  for (int i = 0; i < 5; ++i)
    set.candidates.push_back(top_down(4 - i, Vec3(0.01 * i, 0, 0.05), 0.9 - 0.1 * i));
  EXPECT_EQ(feasibility_filter(set, scene), set);
}

TEST(FeasibilityFilter, IdempotentSubset)
{
  SceneDescription scene = open_scene();
  scene.workspace = {Vec3(0.1, 0.05, 0.1), 0.06};
  const auto set = generate_synthetic(cylinder(0.03, 0.2), 200, 21);
  const auto once = feasibility_filter(set, scene);
  EXPECT_LT(once.size(), set.size());
  EXPECT_GT(once.size(), 0u);
  EXPECT_EQ(feasibility_filter(once, scene), once);
  std::size_t j = 0;
  for (const auto& c : set)
    if (j < once.size() && once[j] == c)
      ++j;
  EXPECT_EQ(j, once.size());  // ordered subsequence of the input
}

TEST(TopK, Examples)
{
  CandidateSet set;
  set.candidates = {top_down(0, Vec3::Zero(), 0.9), top_down(1, Vec3::Zero(), 0.8), top_down(2, Vec3::Zero(), 0.7)};
  const auto two = top_k(set, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].id, 0);
  EXPECT_EQ(two[1].id, 1);
  EXPECT_EQ(top_k(set, 10), set);

  CandidateSet tie;
  tie.candidates = {top_down(3, Vec3::Zero(), 0.5), top_down(1, Vec3::Zero(), 0.5)};
  const auto one = top_k(tie, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].id, 1);
  EXPECT_EQ(kind_of([&] { top_k(set, 0); }), ErrorKind::ConfigError);
}
