#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taskgrasp/error.hpp"

namespace taskgrasp
{

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform (R, t) in SE(3). Used for grasp poses, camera extrinsics
// (camera -> world) and object placements (object -> world).
struct Pose
{
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }

  Pose inverse() const
  {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  // (this * other).apply(p) == this->apply(other.apply(p))
  Pose operator*(const Pose& other) const
  {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  bool is_valid(double tol = 1e-9) const
  {
    if (!rotation.allFinite() || !translation.allFinite())
      return false;
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  bool operator==(const Pose& other) const
  {
    return rotation == other.rotation && translation == other.translation;
  }
};

using GraspPose = Pose;

inline Pose make_pose(const Mat3& rotation, const Vec3& translation)
{
  Pose p;
  p.rotation = rotation;
  p.translation = translation;
  return p;
}

inline Pose translation_pose(const Vec3& t) { return make_pose(Mat3::Identity(), t); }

inline Pose axis_angle_pose(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero())
{
  return make_pose(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), t);
}

// Camera pose (camera -> world) for a camera at `eye` looking at `target`.
// Camera frame follows the optical convention: z forward, x right, y down.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = Vec3::UnitZ())
{
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(world_up);
  if (right.norm() < 1e-9)
    right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return make_pose(r, eye);
}

struct CameraIntrinsics
{
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const
  {
    if (!(fx > 0.0) || !(fy > 0.0))
      fail(ErrorKind::ConfigError, "focal lengths must be positive");
    if (width <= 0 || height <= 0)
      fail(ErrorKind::ConfigError, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
      fail(ErrorKind::ConfigError, "principal point must lie inside the image");
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

struct PixelCoord
{
  double u = 0.0;
  double v = 0.0;

  bool operator==(const PixelCoord&) const = default;
};

inline double pixel_distance(const PixelCoord& a, const PixelCoord& b)
{
  return std::hypot(a.u - b.u, a.v - b.v);
}

// Metric depth, row-major, 0 marks an invalid pixel.
struct DepthImage
{
  int width = 0;
  int height = 0;
  std::vector<double> data;

  DepthImage() = default;
  DepthImage(int w, int h, double fill = 0.0)
    : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill)
  {
  }

  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }

  void validate() const
  {
    if (width < 0 || height < 0 || data.size() != static_cast<std::size_t>(width) * height)
      fail(ErrorKind::DimensionMismatch, "depth buffer size does not match width x height");
    for (double d : data)
      if (!std::isfinite(d) || d < 0.0)
        fail(ErrorKind::ParseError, "depth values must be finite and non-negative");
  }
};

struct PixelIndex
{
  int u = 0;
  int v = 0;

  bool operator==(const PixelIndex&) const = default;
};

struct PointCloud
{
  std::vector<Vec3> points;
  // Either empty or parallel to `points`.
  std::vector<PixelIndex> pixels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_pixels() const { return !pixels.empty() && pixels.size() == points.size(); }
};

inline PointCloud unproject(const DepthImage& depth, const CameraIntrinsics& intr)
{
  if (depth.width != intr.width || depth.height != intr.height ||
      depth.data.size() != static_cast<std::size_t>(depth.width) * depth.height)
    fail(ErrorKind::DimensionMismatch, "depth image " + std::to_string(depth.width) + "x" +
                                           std::to_string(depth.height) + " vs intrinsics " +
                                           std::to_string(intr.width) + "x" + std::to_string(intr.height));
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v)
  {
    for (int u = 0; u < depth.width; ++u)
    {
      const double d = depth.at(u, v);
      if (!(d > 0.0))
        continue;
      cloud.points.emplace_back((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
      cloud.pixels.push_back({u, v});
    }
  }
  return cloud;
}

inline PixelCoord project(const Vec3& point, const CameraIntrinsics& intr)
{
  if (!(point.z() > 0.0))
    fail(ErrorKind::BehindCamera, "point has non-positive depth");
  return {intr.fx * point.x() / point.z() + intr.cx, intr.fy * point.y() / point.z() + intr.cy};
}

inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose)
{
  PointCloud out;
  out.pixels = cloud.pixels;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points)
    out.points.push_back(pose.apply(p));
  return out;
}

// Keeps points (world frame) strictly above the plane z = height + margin.
inline PointCloud crop_above_plane(const PointCloud& cloud, double height, double margin)
{
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i)
  {
    if (cloud.points[i].z() > height + margin)
    {
      out.points.push_back(cloud.points[i]);
      if (cloud.has_pixels())
        out.pixels.push_back(cloud.pixels[i]);
    }
  }
  return out;
}

// Parallel-jaw gripper. Gripper frame: z = approach, y = closing axis, origin
// at the gripper base (the pose translation t).
struct GripperGeometry
{
  double max_width = 0.08;
  double finger_length = 0.041;

  enum Keypoint : std::size_t
  {
    Base = 0,
    LeftRoot = 1,
    LeftTip = 2,
    RightRoot = 3,
    RightTip = 4
  };

  void validate() const
  {
    if (!(max_width > 0.0) || !(finger_length >= 0.0))
      fail(ErrorKind::ConfigError, "gripper dimensions must be positive");
  }

  std::array<Vec3, 5> keypoints() const
  {
    const double h = max_width / 2.0;
    return {Vec3(0, 0, 0), Vec3(0, h, 0), Vec3(0, h, finger_length), Vec3(0, -h, 0),
            Vec3(0, -h, finger_length)};
  }

  bool operator==(const GripperGeometry&) const = default;
};

inline Vec3 approach_axis(const GraspPose& g) { return g.rotation.col(2); }
inline Vec3 closing_axis(const GraspPose& g) { return g.rotation.col(1); }

inline Vec3 contact_point(const GraspPose& g, const GripperGeometry& grip)
{
  return g.translation + g.rotation * Vec3(0, 0, grip.finger_length);
}

inline std::array<Vec3, 5> world_keypoints(const GraspPose& g, const GripperGeometry& grip)
{
  auto kp = grip.keypoints();
  for (auto& p : kp)
    p = g.apply(p);
  return kp;
}

struct Segment2
{
  PixelCoord a;
  PixelCoord b;
};

// `g` must be expressed in the camera frame.
inline std::array<Segment2, 4> wireframe_segments(const GraspPose& g, const GripperGeometry& grip,
                                                 const CameraIntrinsics& intr)
{
  const auto kp = world_keypoints(g, grip);
  std::array<PixelCoord, 5> px;
  for (std::size_t i = 0; i < kp.size(); ++i)
    px[i] = project(kp[i], intr);
  using K = GripperGeometry;
  return {Segment2{px[K::Base], px[K::LeftRoot]}, Segment2{px[K::Base], px[K::RightRoot]},
          Segment2{px[K::LeftRoot], px[K::LeftTip]}, Segment2{px[K::RightRoot], px[K::RightTip]}};
}

// ASCII PLY with x y z float properties.
inline void write_ply(const std::string& path, const PointCloud& cloud)
{
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out.precision(9);
  for (const auto& p : cloud.points)
    out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

inline PointCloud read_ply(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::IoError, "cannot read " + path);
  std::string line;
  std::size_t count = 0;
  bool ascii = false;
  int line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    if (line.rfind("format ascii", 0) == 0)
      ascii = true;
    else if (line.rfind("element vertex", 0) == 0)
      count = std::stoul(line.substr(14));
    else if (line == "end_header")
      break;
  }
  if (!ascii)
    fail(ErrorKind::ParseError, path + ": only ASCII PLY is supported");
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
  {
    ++line_no;
    if (!std::getline(in, line))
      fail(ErrorKind::ParseError, path + ":" + std::to_string(line_no) + ": truncated vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      fail(ErrorKind::ParseError, path + ":" + std::to_string(line_no) + ": bad vertex");
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

}  // namespace taskgrasp
