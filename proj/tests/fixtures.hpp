#pragma once

// Small scenes and image probes shared by the tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/image.hpp"
#include "taskgrasp/scene.hpp"

namespace fixtures
{
using namespace taskgrasp;

inline CameraIntrinsics vga() { return {600.0, 600.0, 319.5, 239.5, 640, 480}; }

// Uniform grey frame with the camera at the world origin looking down +z.
inline SceneObservation flat_observation(Rgb fill = {128, 128, 128}, double depth = 1.0)
{
  SceneObservation obs;
  obs.intrinsics = vga();
  obs.rgb = RgbImage(640, 480, fill);
  obs.depth = DepthImage(640, 480, depth);
  obs.camera_pose = Pose{};
  return obs;
}

// Grasp approaching along +z whose contact sits at `contact`.
inline GraspCandidate rep_at(int id, const Vec3& contact, double confidence, const GripperGeometry& grip = {})
{
  const Vec3 base = contact - Vec3(0, 0, grip.finger_length);
  return make_candidate(translation_pose(base), confidence, id, grip);
}

// Three representatives well apart in the image, ids 10, 11, 12.
inline CandidateSet spaced_reps(std::size_t n)
{
  CandidateSet set;
  for (std::size_t i = 0; i < n; ++i)
  {
    const double x = -0.12 + 0.12 * static_cast<double>(i);
    set.candidates.push_back(rep_at(10 + static_cast<int>(i), Vec3(x, 0.0, 0.5), 0.9 - 0.1 * i));
  }
  return set;
}

// 4-connected components of exactly `color`.
inline int components(const RgbImage& img, Rgb color)
{
  std::vector<char> seen(static_cast<std::size_t>(img.width) * img.height, 0);
  int count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u)
    {
      const auto idx = static_cast<std::size_t>(v) * img.width + u;
      if (seen[idx] || !(img.at(u, v) == color))
        continue;
      ++count;
      stack.push_back({u, v});
      seen[idx] = 1;
      while (!stack.empty())
      {
        auto [x, y] = stack.back();
        stack.pop_back();
        const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
        for (const auto& n : nb)
        {
          if (!img.contains(n[0], n[1]))
            continue;
          const auto j = static_cast<std::size_t>(n[1]) * img.width + n[0];
          if (!seen[j] && img.at(n[0], n[1]) == color)
          {
            seen[j] = 1;
            stack.push_back({n[0], n[1]});
          }
        }
      }
    }
  return count;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name)
{
  const auto p = std::filesystem::temp_directory_path() / ("taskgrasp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace fixtures
