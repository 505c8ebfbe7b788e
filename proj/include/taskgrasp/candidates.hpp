#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"
#include "taskgrasp/primitives.hpp"
#include "taskgrasp/scene.hpp"

namespace taskgrasp
{

struct GraspCandidate
{
  GraspPose pose;
  double confidence = 0.0;
  Vec3 contact = Vec3::Zero();
  int id = 0;

  bool operator==(const GraspCandidate& o) const
  {
    return pose == o.pose && confidence == o.confidence && contact == o.contact && id == o.id;
  }
};

inline GraspCandidate make_candidate(const GraspPose& pose, double confidence, int id, const GripperGeometry& grip)
{
  return {pose, confidence, contact_point(pose, grip), id};
}

enum class CandidateSource
{
  Synthetic,
  File
};

// Higher confidence first, then lower id.
inline bool confidence_order(const GraspCandidate& a, const GraspCandidate& b)
{
  if (a.confidence != b.confidence)
    return a.confidence > b.confidence;
  return a.id < b.id;
}

struct CandidateSet
{
  std::vector<GraspCandidate> candidates;
  CandidateSource source = CandidateSource::Synthetic;

  std::size_t size() const { return candidates.size(); }
  bool empty() const { return candidates.empty(); }
  const GraspCandidate& operator[](std::size_t i) const { return candidates[i]; }
  auto begin() const { return candidates.begin(); }
  auto end() const { return candidates.end(); }

  void sort() { std::stable_sort(candidates.begin(), candidates.end(), confidence_order); }

  const GraspCandidate* find(int id) const
  {
    for (const auto& c : candidates)
      if (c.id == id)
        return &c;
    return nullptr;
  }

  std::vector<Vec3> contacts() const
  {
    std::vector<Vec3> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates)
      out.push_back(c.contact);
    return out;
  }

  bool operator==(const CandidateSet&) const = default;
};

// Chord of the object along the closing axis through a contact, and how far
// the two surface normals deviate from the closing axis.
struct AntipodalAnalysis
{
  bool hit = false;
  double width = 0.0;
  double normal_angle = std::numbers::pi;  // worst of the two normals, radians
};

inline AntipodalAnalysis analyze_antipodal(const PrimitiveObject& obj, const Vec3& contact, const Vec3& closing)
{
  AntipodalAnalysis out;
  const Vec3 axis = closing.normalized();
  const auto chord = obj.chord(contact, axis);
  if (!chord)
    return out;
  out.hit = true;
  out.width = chord->t1 - chord->t0;
  auto angle = [](const Vec3& a, const Vec3& b) {
    return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
  };
  // The finger closing from -axis meets the entry face; its outward normal
  // must point along -axis, and the exit face normal along +axis.
  out.normal_angle = std::max(angle(chord->n0, -axis), angle(chord->n1, axis));
  return out;
}

struct SyntheticGraspConfig
{
  GripperGeometry gripper;
  // Fraction of each span used for contact placement, keeps contacts off edges.
  double interior_fraction = 0.9;
  double antipodal_tolerance_rad = 1e-6;
  int max_attempts_per_grasp = 200;
};

// clamp(width margin / max width) x (0.5 + 0.5 cos(angle between approach and
// straight down)). Top-down approaches on narrow spans score highest.
inline double synthetic_confidence(double width, const Vec3& approach, const GripperGeometry& grip)
{
  const double margin = std::clamp((grip.max_width - width) / grip.max_width, 0.0, 1.0);
  const double down = -approach.normalized().z();
  return margin * (0.5 + 0.5 * down);
}

namespace detail
{
struct SpanFamily
{
  enum Kind
  {
    SphereAny,
    CylinderRadial,
    CylinderAxial,
    BoxAxis
  } kind;
  std::size_t part = 0;
  int axis = 2;
  double width = 0.0;
};

inline std::vector<SpanFamily> span_families(const std::vector<Primitive>& parts, double max_width)
{
  std::vector<SpanFamily> out;
  for (std::size_t i = 0; i < parts.size(); ++i)
  {
    const auto& p = parts[i];
    switch (p.kind)
    {
      case ShapeKind::Sphere: out.push_back({SpanFamily::SphereAny, i, 2, p.dims.x()}); break;
      case ShapeKind::Cylinder:
        out.push_back({SpanFamily::CylinderRadial, i, 2, p.dims.x()});
        out.push_back({SpanFamily::CylinderAxial, i, 2, p.dims.z()});
        break;
      case ShapeKind::Box:
        for (int a = 0; a < 3; ++a)
          out.push_back({SpanFamily::BoxAxis, i, a, p.dims[a]});
        break;
      case ShapeKind::Composite: break;
    }
  }
  std::erase_if(out, [max_width](const SpanFamily& f) { return f.width > max_width; });
  return out;
}

inline Vec3 any_perpendicular(const Vec3& v)
{
  const Vec3 helper = std::abs(v.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return v.cross(helper).normalized();
}
}  // namespace detail

// Gripper pose whose contact sits at `contact` with the given closing and
// approach directions (world frame, mutually perpendicular).
inline GraspPose grasp_from_contact(const Vec3& contact, const Vec3& closing, const Vec3& approach,
                                    const GripperGeometry& grip)
{
  Mat3 r;
  r.col(1) = closing.normalized();
  r.col(2) = approach.normalized();
  r.col(0) = r.col(1).cross(r.col(2));
  return make_pose(r, contact - grip.finger_length * r.col(2));
}

// Samples antipodal parallel-jaw grasps on the object's primitives. Stand-in
// for a learned grasp generator; reproducible for a fixed seed.
inline CandidateSet generate_synthetic(const PrimitiveObject& obj, int n, std::uint64_t seed,
                                       const SyntheticGraspConfig& cfg = {})
{
  if (n < 1)
    fail(ErrorKind::ConfigError, "candidate count must be at least 1");
  const auto& grip = cfg.gripper;
  const auto parts = obj.local_parts();
  const auto families = detail::span_families(parts, grip.max_width);
  if (families.empty())
    fail(ErrorKind::NoGraspExists, "object '" + obj.name + "' is wider than the gripper everywhere");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, families.size() - 1);
  const double f = cfg.interior_fraction;

  CandidateSet set;
  set.source = CandidateSource::Synthetic;
  const long max_attempts = static_cast<long>(cfg.max_attempts_per_grasp) * n;
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(set.size()) < n; ++attempt)
  {
    const auto& fam = families[pick(rng)];
    const Primitive& part = parts[fam.part];
    Vec3 contact = Vec3::Zero();
    Vec3 closing = Vec3::UnitZ();
    switch (fam.kind)
    {
      case detail::SpanFamily::SphereAny:
      {
        closing = Vec3(gauss(rng), gauss(rng), gauss(rng));
        if (closing.norm() < 1e-9)
          continue;
        closing.normalize();
        break;
      }
      case detail::SpanFamily::CylinderRadial:
      {
        const double phi = 2 * std::numbers::pi * unit(rng);
        closing = Vec3(std::cos(phi), std::sin(phi), 0);
        contact.z() = (2 * unit(rng) - 1) * f * part.dims.z() / 2;
        break;
      }
      case detail::SpanFamily::CylinderAxial:
      {
        const double rho = f * part.radius() * std::sqrt(unit(rng));
        const double phi = 2 * std::numbers::pi * unit(rng);
        contact = Vec3(rho * std::cos(phi), rho * std::sin(phi), 0);
        closing = Vec3::UnitZ();
        break;
      }
      case detail::SpanFamily::BoxAxis:
      {
        for (int a = 0; a < 3; ++a)
          if (a != fam.axis)
            contact[a] = (2 * unit(rng) - 1) * f * part.dims[a] / 2;
        closing = Vec3::Unit(fam.axis);
        break;
      }
    }
    const Vec3 e1 = detail::any_perpendicular(closing);
    const Vec3 e2 = closing.cross(e1);
    const double psi = 2 * std::numbers::pi * unit(rng);
    Vec3 approach = std::cos(psi) * e1 + std::sin(psi) * e2;

    const Pose to_world = obj.pose * part.pose;
    const Vec3 contact_w = to_world.apply(contact);
    const Vec3 closing_w = to_world.rotate(closing);
    approach = to_world.rotate(approach);

    const auto check = analyze_antipodal(obj, contact_w, closing_w);
    if (!check.hit || check.width > grip.max_width || check.normal_angle > cfg.antipodal_tolerance_rad)
      continue;
    const GraspPose pose = grasp_from_contact(contact_w, closing_w, approach, grip);
    const auto kp = world_keypoints(pose, grip);
    bool clear = true;
    for (std::size_t k = 0; k < kp.size() && clear; ++k)
      clear = obj.sdf(kp[k]) > 0.0;
    if (!clear)
      continue;
    const int id = static_cast<int>(set.size());
    set.candidates.push_back(make_candidate(pose, synthetic_confidence(check.width, approach, grip), id, grip));
  }
  if (set.empty())
    fail(ErrorKind::NoGraspExists, "no collision-free antipodal grasp found on '" + obj.name + "'");
  set.sort();
  return set;
}

inline nlohmann::json pose_to_json(const Pose& p)
{
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      rot.push_back(p.rotation(r, c));
  return {{"rotation", rot}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

// Rotation is optional (identity). Throws nlohmann exceptions on type errors.
inline Pose pose_from_json(const nlohmann::json& j)
{
  Pose p;
  if (j.contains("rotation"))
  {
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9)
      fail(ErrorKind::ParseError, "rotation must hold 9 row-major numbers");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        p.rotation(r, c) = rot.at(r * 3 + c).get<double>();
  }
  if (j.contains("translation"))
  {
    const auto& t = j.at("translation");
    if (!t.is_array() || t.size() != 3)
      fail(ErrorKind::ParseError, "translation must hold 3 numbers");
    p.translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  }
  return p;
}

inline nlohmann::json candidates_to_json(const CandidateSet& set)
{
  nlohmann::json grasps = nlohmann::json::array();
  for (const auto& c : set)
  {
    auto g = pose_to_json(c.pose);
    g["confidence"] = c.confidence;
    g["id"] = c.id;
    grasps.push_back(std::move(g));
  }
  return {{"format_version", 1}, {"grasps", grasps}};
}

inline void save_candidates(const std::string& path, const CandidateSet& set)
{
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + path);
  out << candidates_to_json(set).dump(2) << '\n';
}

inline CandidateSet candidates_from_json(const nlohmann::json& doc, const GripperGeometry& grip,
                                         const std::string& origin = "grasps")
{
  if (!doc.is_object() || !doc.contains("grasps") || !doc["grasps"].is_array())
    fail(ErrorKind::ParseError, origin + ": missing \"grasps\" array");
  if (doc.contains("format_version") && doc["format_version"] != 1)
    fail(ErrorKind::ParseError, origin + ": unsupported format_version");
  CandidateSet set;
  set.source = CandidateSource::File;
  const auto& grasps = doc["grasps"];
  for (std::size_t i = 0; i < grasps.size(); ++i)
  {
    const std::string where = origin + ": grasps[" + std::to_string(i) + "]";
    Pose pose;
    double confidence = 0.0;
    int id = static_cast<int>(i);
    try
    {
      const auto& g = grasps[i];
      if (!g.contains("rotation") || !g.contains("translation"))
        fail(ErrorKind::ParseError, where + ": rotation and translation are required");
      pose = pose_from_json(g);
      if (!g.contains("confidence"))
        fail(ErrorKind::ParseError, where + ".confidence: missing");
      confidence = g.at("confidence").get<double>();
      if (g.contains("id"))
        id = g.at("id").get<int>();
    }
    catch (const nlohmann::json::exception& e)
    {
      fail(ErrorKind::ParseError, where + ": " + e.what());
    }
    catch (const Error& e)
    {
      if (e.kind() != ErrorKind::ParseError)
        throw;
      fail(ErrorKind::ParseError, where + ": " + e.what());
    }
    if (!(confidence >= 0.0 && confidence <= 1.0))
      fail(ErrorKind::ParseError, where + ".confidence: confidence out of range [0, 1]");
    if (!pose.is_valid(1e-6))
      fail(ErrorKind::InvalidPose, where + ": rotation is not orthonormal with det +1 (tol 1e-6)");
    if (set.find(id))
      fail(ErrorKind::ParseError, where + ".id: duplicate id " + std::to_string(id));
    set.candidates.push_back(make_candidate(pose, confidence, id, grip));
  }
  set.sort();
  return set;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset)
{
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(offset, text.size()), '\n'));
}

inline CandidateSet load_candidates(const std::string& path, const GripperGeometry& grip = {})
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::IoError, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(text);
  }
  catch (const nlohmann::json::parse_error& e)
  {
    fail(ErrorKind::ParseError, path + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  return candidates_from_json(doc, grip, path);
}

// Rule-based stand-in for a motion planner: workspace sphere, approach-angle
// floor against the table normal, and table clearance of every gripper keypoint.
inline bool is_feasible(const GraspCandidate& c, const SceneDescription& scene, const GripperGeometry& grip)
{
  if ((c.contact - scene.workspace.center).norm() > scene.workspace.radius)
    return false;
  const double cos_angle = std::clamp(approach_axis(c.pose).normalized().z(), -1.0, 1.0);
  const double angle_deg = std::acos(cos_angle) * 180.0 / std::numbers::pi;
  if (angle_deg < scene.min_approach_angle_deg)
    return false;
  for (const auto& p : world_keypoints(c.pose, grip))
    if (p.z() < scene.table_height + scene.table_clearance)
      return false;
  return true;
}

inline CandidateSet feasibility_filter(const CandidateSet& set, const SceneDescription& scene,
                                       const GripperGeometry& grip = {})
{
  CandidateSet out;
  out.source = set.source;
  for (const auto& c : set)
    if (is_feasible(c, scene, grip))
      out.candidates.push_back(c);
  return out;
}

inline CandidateSet top_k(const CandidateSet& set, std::size_t k)
{
  if (k < 1)
    fail(ErrorKind::ConfigError, "top_k requires k >= 1");
  CandidateSet out = set;
  out.sort();
  if (out.candidates.size() > k)
    out.candidates.resize(k);
  return out;
}

}  // namespace taskgrasp
