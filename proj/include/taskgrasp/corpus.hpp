#pragma once

// Built-in synthetic scenes: ten everyday objects made of primitives, each
// with labeled parts and one task. Objects rest on the table at the origin.

#include <numbers>
#include <string>
#include <vector>

#include "taskgrasp/primitives.hpp"
#include "taskgrasp/scene.hpp"
#include "taskgrasp/scene_io.hpp"
#include "taskgrasp/task.hpp"

namespace taskgrasp
{

namespace corpus_detail
{
inline Primitive make_part(ShapeKind kind, const Vec3& dims, const Pose& pose, Rgb color)
{
  Primitive p;
  p.kind = kind;
  p.dims = dims;
  p.pose = pose;
  p.color = color;
  return p;
}

inline Primitive box(const Vec3& dims, const Vec3& center, Rgb color = {190, 150, 90})
{
  return make_part(ShapeKind::Box, dims, translation_pose(center), color);
}

// Cylinder standing on its axis (local z).
inline Primitive upright_cylinder(double d, double h, const Vec3& center, Rgb color = {190, 150, 90})
{
  return make_part(ShapeKind::Cylinder, Vec3(d, d, h), translation_pose(center), color);
}

// Cylinder lying with its axis along object x.
inline Primitive lying_cylinder(double d, double length, const Vec3& center, Rgb color = {190, 150, 90})
{
  return make_part(ShapeKind::Cylinder, Vec3(d, d, length), axis_angle_pose(Vec3::UnitY(), std::numbers::pi / 2, center),
                   color);
}

inline Primitive sphere(double d, const Vec3& center, Rgb color = {190, 150, 90})
{
  return make_part(ShapeKind::Sphere, Vec3::Constant(d), translation_pose(center), color);
}

// Region volume hugging a part, grown by 0.8 mm per side so surface contacts
// count as inside.
inline LabeledRegion region_of(const std::string& name, Primitive part)
{
  constexpr double grow = 0.0016;
  part.dims += Vec3::Constant(grow);
  return {name, part};
}

inline PrimitiveObject composite(const std::string& name, std::vector<std::pair<std::string, Primitive>> named_parts,
                                 double yaw_deg)
{
  PrimitiveObject o;
  o.name = name;
  o.shape = ShapeKind::Composite;
  o.pose = axis_angle_pose(Vec3::UnitZ(), yaw_deg * std::numbers::pi / 180.0);
  for (auto& [region, part] : named_parts)
  {
    o.parts.push_back(part);
    o.regions.push_back(region_of(region, part));
  }
  return o;
}

inline SceneFile scene_for(PrimitiveObject obj, TaskSpec task, const Vec3& look_target)
{
  SceneFile sf;
  sf.name = obj.name;
  sf.scene.objects.push_back(std::move(obj));
  sf.tasks.push_back(std::move(task));
  // Wrist camera above and in front of the object, 640x480, f = 600 px.
  sf.camera.intrinsics = CameraIntrinsics{600.0, 600.0, 319.5, 239.5, 640, 480};
  sf.camera.pose = look_at(look_target + Vec3(-0.08, -0.26, 0.36), look_target);
  return sf;
}

inline TaskSpec task(std::string description, TaskCategory category, std::string region,
                     Polarity polarity = Polarity::Require)
{
  return {std::move(description), category, std::move(region), polarity};
}
}  // namespace corpus_detail

inline std::vector<SceneFile> builtin_corpus()
{
  using namespace corpus_detail;
  const Rgb wood{170, 120, 70}, steel{170, 175, 185}, plastic{60, 110, 190}, ceramic{225, 220, 210},
      glass{90, 160, 120}, rubber{200, 60, 50}, cloth{230, 200, 80};
  std::vector<SceneFile> out;

  out.push_back(scene_for(
      composite("mug",
                {{"body", upright_cylinder(0.07, 0.09, {0, 0, 0.045}, ceramic)},
                 {"handle", box({0.02, 0.01, 0.06}, {0.045, 0, 0.045}, ceramic)}},
                20),
      task("Hand the mug to a person so that they can take it by the handle", TaskCategory::Handover, "body"),
      {0, 0, 0.045}));

  out.push_back(scene_for(
      composite("screwdriver",
                {{"handle", lying_cylinder(0.034, 0.1, {-0.05, 0, 0.019}, rubber)},
                 {"shaft", lying_cylinder(0.006, 0.09, {0.045, 0, 0.019}, steel)}},
                -15),
      task("Use the screwdriver to drive in a screw", TaskCategory::ToolUse, "handle"), {0, 0, 0.015}));

  out.push_back(scene_for(
      composite("knife",
                {{"handle", box({0.1, 0.022, 0.022}, {-0.05, 0, 0.011}, wood)},
                 {"blade", box({0.13, 0.003, 0.03}, {0.065, 0, 0.015}, steel)}},
                10),
      task("Use the knife to cut bread", TaskCategory::ToolUse, "handle"), {0, 0, 0.015}));

  out.push_back(scene_for(
      composite("hammer",
                {{"handle", lying_cylinder(0.032, 0.22, {0, 0, 0.02}, wood)},
                 {"head", box({0.025, 0.1, 0.036}, {0.1225, 0, 0.02}, steel)}},
                -25),
      task("Hammer a nail into the wall", TaskCategory::ToolUse, "handle"), {0.03, 0, 0.015}));

  out.push_back(scene_for(
      composite("bottle",
                {{"body", upright_cylinder(0.07, 0.15, {0, 0, 0.075}, glass)},
                 {"neck", upright_cylinder(0.026, 0.05, {0, 0, 0.175}, glass)}},
                0),
      task("Grasp the bottle by its body", TaskCategory::SpecificPosition, "body"), {0, 0, 0.09}));

  out.push_back(scene_for(
      composite("toy",
                {{"torso", box({0.04, 0.03, 0.06}, {0, 0, 0.03}, plastic)},
                 {"head", sphere(0.036, {0, 0, 0.078}, cloth)}},
                30),
      task("Grasp the toy precisely by its head", TaskCategory::SpecificPosition, "head"), {0, 0, 0.045}));

  out.push_back(scene_for(
      composite("spoon",
                {{"handle", box({0.09, 0.012, 0.012}, {-0.045, 0, 0.012}, steel)},
                 {"bowl", box({0.06, 0.045, 0.024}, {0.03, 0, 0.012}, steel)}},
                -10),
      task("Hand the spoon over so the person can hold its handle", TaskCategory::Handover, "bowl"),
      {-0.01, 0, 0.01}));

  out.push_back(scene_for(
      composite("brush",
                {{"handle", lying_cylinder(0.026, 0.1, {-0.05, 0, 0.022}, wood)},
                 {"head", box({0.08, 0.045, 0.035}, {0.04, 0, 0.0175}, cloth)}},
                15),
      task("Pass the brush so the person can take the handle", TaskCategory::Handover, "head"), {0, 0, 0.0175}));

  out.push_back(scene_for(
      composite("scissors",
                {{"handles", box({0.07, 0.06, 0.012}, {-0.035, 0, 0.01}, plastic)},
                 {"blades", box({0.09, 0.014, 0.012}, {0.045, 0, 0.01}, steel)}},
                -20),
      task("Use the scissors to cut paper", TaskCategory::ToolUse, "handles"), {0.005, 0, 0.01}));

  out.push_back(scene_for(
      composite("flashlight",
                {{"body", lying_cylinder(0.044, 0.12, {-0.04, 0, 0.03}, rubber)},
                 {"head", lying_cylinder(0.06, 0.04, {0.04, 0, 0.03}, steel)}},
                5),
      task("Hand over the flashlight without covering the lens", TaskCategory::Handover, "head", Polarity::Avoid),
      {0, 0, 0.025}));

  return out;
}

// The mug behind a tall screen, seen by four cameras on a 0.2 m ring. The
// screen hides the handle from some directions. Visibility annotations are
// the analytic fraction of the handle's surface each camera sees.
inline SceneFile ring_view_scene()
{
  using namespace corpus_detail;
  auto sf = builtin_corpus().front();
  sf.name = "mug_ring";
  sf.tasks = {task("Use the mug to drink, holding it by the handle", TaskCategory::ToolUse, "handle")};
  sf.scene.obstacles.push_back(box({0.02, 0.16, 0.2}, {0.12, 0.0, 0.1}, {80, 80, 80}));
  const Vec3 target(0, 0, 0.045);
  const auto poses = camera_ring(target, 0.2, 0.22, target, 4, std::numbers::pi / 8);
  const auto& obj = sf.scene.target();
  for (const auto& pose : poses)
  {
    ViewSpec v;
    v.camera = {sf.camera.intrinsics, pose};
    v.visibility = region_visibility(sf.scene, obj, obj.region("handle"), pose, sf.camera.intrinsics);
    sf.views.push_back(std::move(v));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sf.views.size(); ++i)
    if (*sf.views[i].visibility > *sf.views[best].visibility)
      best = i;
  sf.expected_best_view = best;
  return sf;
}

}  // namespace taskgrasp
