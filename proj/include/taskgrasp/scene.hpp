#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "taskgrasp/geometry.hpp"
#include "taskgrasp/image.hpp"
#include "taskgrasp/primitives.hpp"

namespace taskgrasp
{

struct WorkspaceSphere
{
  Vec3 center = Vec3(0, 0, 0.2);
  double radius = 0.8;
};

// Static scene: a table plane at z = table_height (world frame), objects
// resting on it and optional obstacles.
struct SceneDescription
{
  double table_height = 0.0;
  double table_half_extent = 1.0;
  WorkspaceSphere workspace;
  double min_approach_angle_deg = 30.0;
  double table_clearance = 0.005;
  std::vector<PrimitiveObject> objects;
  std::vector<Primitive> obstacles;  // world frame
  std::string target_object;         // empty: first object

  const PrimitiveObject& target() const
  {
    if (objects.empty())
      fail(ErrorKind::ConfigError, "scene has no objects");
    if (target_object.empty())
      return objects.front();
    for (const auto& o : objects)
      if (o.name == target_object)
        return o;
    fail(ErrorKind::ConfigError, "scene has no object named '" + target_object + "'");
  }

  void validate() const
  {
    if (!(workspace.radius > 0.0))
      fail(ErrorKind::ConfigError, "workspace radius must be positive");
    if (objects.empty())
      fail(ErrorKind::ConfigError, "scene has no objects");
    for (const auto& o : objects)
      o.validate();
    for (const auto& o : obstacles)
      o.validate();
    (void)target();
  }
};

// One RGB-D frame with its camera model. camera_pose maps camera -> world.
struct SceneObservation
{
  RgbImage rgb;
  DepthImage depth;
  CameraIntrinsics intrinsics;
  Pose camera_pose;

  void validate() const
  {
    intrinsics.validate();
    if (rgb.width != intrinsics.width || rgb.height != intrinsics.height)
      fail(ErrorKind::DimensionMismatch, "RGB image size disagrees with intrinsics");
    if (depth.width != intrinsics.width || depth.height != intrinsics.height)
      fail(ErrorKind::DimensionMismatch, "depth image size disagrees with intrinsics");
    depth.validate();
    if (!camera_pose.is_valid(1e-6))
      fail(ErrorKind::InvalidPose, "camera pose is not a rigid transform");
  }
};

struct RayHit
{
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::UnitZ();
  Rgb color;
};

inline std::optional<RayHit> raycast(const SceneDescription& scene, const Vec3& origin, const Vec3& dir,
                                     double t_min = 1e-9)
{
  std::optional<RayHit> best;
  auto consider = [&](const Primitive& solid) {
    const Span s = solid.span(origin, dir);
    if (s.empty())
      return;
    double t;
    Vec3 n;
    if (s.t0 > t_min)
      t = s.t0, n = s.n0;
    else if (s.t1 > t_min)
      t = s.t1, n = s.n1;  // origin inside the solid
    else
      return;
    if (!best || t < best->t)
      best = RayHit{t, n, solid.color};
  };
  for (const auto& obj : scene.objects)
    for (const auto& part : obj.world_parts())
      consider(part);
  for (const auto& obs : scene.obstacles)
    consider(obs);
  if (std::abs(dir.z()) > 1e-15)
  {
    const double t = (scene.table_height - origin.z()) / dir.z();
    const Vec3 p = origin + t * dir;
    if (t > t_min && std::abs(p.x()) <= scene.table_half_extent && std::abs(p.y()) <= scene.table_half_extent &&
        (!best || t < best->t))
      best = RayHit{t, origin.z() >= scene.table_height ? Vec3::UnitZ() : Vec3(-Vec3::UnitZ()), Rgb{110, 100, 90}};
  }
  return best;
}

// Renders a synthetic RGB-D frame by casting one ray per pixel centre.
inline SceneObservation render(const SceneDescription& scene, const Pose& camera_pose, const CameraIntrinsics& intr,
                               double max_range = 4.0)
{
  intr.validate();
  SceneObservation obs;
  obs.intrinsics = intr;
  obs.camera_pose = camera_pose;
  obs.rgb = RgbImage(intr.width, intr.height, Rgb{20, 20, 24});
  obs.depth = DepthImage(intr.width, intr.height, 0.0);
  const Vec3 origin = camera_pose.translation;
  for (int v = 0; v < intr.height; ++v)
  {
    for (int u = 0; u < intr.width; ++u)
    {
      // Unnormalised ray with unit z in the camera frame, so t is the depth.
      const Vec3 ray_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const Vec3 dir = camera_pose.rotate(ray_cam);
      const auto hit = raycast(scene, origin, dir);
      if (!hit || hit->t > max_range)
        continue;
      obs.depth.at(u, v) = hit->t;
      const double shade = 0.35 + 0.65 * std::abs(hit->normal.dot(dir.normalized()));
      auto mul = [shade](std::uint8_t c) { return static_cast<std::uint8_t>(std::lround(c * shade)); };
      obs.rgb.set(u, v, {mul(hit->color.r), mul(hit->color.g), mul(hit->color.b)});
    }
  }
  return obs;
}

// Fraction of a region's surface samples that are in the camera frustum and
// not hidden behind other geometry.
inline double region_visibility(const SceneDescription& scene, const PrimitiveObject& obj, const LabeledRegion& region,
                                const Pose& camera_pose, const CameraIntrinsics& intr, int samples_per_side = 10)
{
  Primitive world_region = region.volume;
  world_region.pose = obj.pose * region.volume.pose;
  const auto samples = world_region.surface_samples(samples_per_side);
  if (samples.empty())
    return 0.0;
  const Pose world_to_cam = camera_pose.inverse();
  const Vec3 origin = camera_pose.translation;
  std::size_t visible = 0;
  for (const auto& p : samples)
  {
    const Vec3 pc = world_to_cam.apply(p);
    if (pc.z() <= 1e-6)
      continue;
    const PixelCoord px = project(pc, intr);
    if (px.u < 0 || px.v < 0 || px.u > intr.width - 1 || px.v > intr.height - 1)
      continue;
    const Vec3 dir = p - origin;
    const auto hit = raycast(scene, origin, dir);
    // dir spans the full distance, so a hit at t ~ 1 is the sample itself.
    const double dist = dir.norm();
    if (!hit || hit->t * dist >= dist - 1e-3)
      ++visible;
  }
  return static_cast<double>(visible) / static_cast<double>(samples.size());
}

// Cameras evenly spaced on a horizontal circle, all looking at `target`.
inline std::vector<Pose> camera_ring(const Vec3& center, double radius, double height, const Vec3& target,
                                     int count = 4, double start_angle = 0.0)
{
  std::vector<Pose> poses;
  for (int i = 0; i < count; ++i)
  {
    const double a = start_angle + 2.0 * std::numbers::pi * i / count;
    const Vec3 eye = center + Vec3(radius * std::cos(a), radius * std::sin(a), height);
    poses.push_back(look_at(eye, target));
  }
  return poses;
}

}  // namespace taskgrasp
