#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"
#include "taskgrasp/image.hpp"
#include "taskgrasp/primitives.hpp"
#include "taskgrasp/scene.hpp"
#include "taskgrasp/task.hpp"

namespace taskgrasp
{

struct CameraSetup
{
  CameraIntrinsics intrinsics;
  Pose pose;  // camera -> world
};

// Recorded RGB-D frame on disk. Without one, the frame is rendered.
struct ObservationFiles
{
  std::string rgb;
  std::string depth;
  std::string depth_meta;
};

struct ViewSpec
{
  CameraSetup camera;
  std::optional<double> visibility;  // detector score annotation
  std::optional<ObservationFiles> files;
};

struct SceneFile
{
  std::string name;
  SceneDescription scene;
  CameraSetup camera;
  std::optional<ObservationFiles> observation;
  std::optional<std::string> grasps_path;
  int synthetic_count = 200;
  std::vector<TaskSpec> tasks;
  std::vector<ViewSpec> views;
  std::optional<std::size_t> expected_best_view;
  std::filesystem::path base_dir;  // relative paths resolve against this
};

namespace detail
{
inline Vec3 vec3_from_json(const nlohmann::json& j)
{
  if (!j.is_array() || j.size() != 3)
    fail(ErrorKind::ConfigError, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json vec3_to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Rgb rgb_from_json(const nlohmann::json& j)
{
  if (!j.is_array() || j.size() != 3)
    fail(ErrorKind::ConfigError, "color must be [r, g, b]");
  return {j[0].get<std::uint8_t>(), j[1].get<std::uint8_t>(), j[2].get<std::uint8_t>()};
}

inline nlohmann::json rgb_to_json(Rgb c) { return {c.r, c.g, c.b}; }

inline Primitive primitive_from_json(const nlohmann::json& j)
{
  Primitive p;
  p.kind = shape_from_string(j.at("shape").get<std::string>());
  p.dims = vec3_from_json(j.at("dims"));
  if (j.contains("pose"))
    p.pose = pose_from_json(j["pose"]);
  if (j.contains("color"))
    p.color = rgb_from_json(j["color"]);
  return p;
}

inline nlohmann::json primitive_to_json(const Primitive& p)
{
  return {{"shape", std::string(to_string(p.kind))},
          {"dims", vec3_to_json(p.dims)},
          {"pose", pose_to_json(p.pose)},
          {"color", rgb_to_json(p.color)}};
}

inline PrimitiveObject object_from_json(const nlohmann::json& j)
{
  PrimitiveObject o;
  o.name = j.at("name").get<std::string>();
  o.shape = shape_from_string(j.at("shape").get<std::string>());
  if (j.contains("pose"))
    o.pose = pose_from_json(j["pose"]);
  if (j.contains("dimensions"))
    o.dimensions = vec3_from_json(j["dimensions"]);
  if (j.contains("color"))
    o.color = rgb_from_json(j["color"]);
  for (const auto& p : j.value("parts", nlohmann::json::array()))
    o.parts.push_back(primitive_from_json(p));
  for (const auto& r : j.value("regions", nlohmann::json::array()))
    o.regions.push_back({r.at("name").get<std::string>(), primitive_from_json(r)});
  return o;
}

inline nlohmann::json object_to_json(const PrimitiveObject& o)
{
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : o.parts)
    parts.push_back(primitive_to_json(p));
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : o.regions)
  {
    auto rj = primitive_to_json(r.volume);
    rj["name"] = r.name;
    regions.push_back(std::move(rj));
  }
  return {{"name", o.name},         {"shape", std::string(to_string(o.shape))},
          {"pose", pose_to_json(o.pose)}, {"dimensions", vec3_to_json(o.dimensions)},
          {"color", rgb_to_json(o.color)}, {"parts", parts},
          {"regions", regions}};
}

// {"intrinsics": {...}, "pose": {...}} or {"intrinsics", "look_at": {"eye", "target", "up"}}.
inline CameraSetup camera_from_json(const nlohmann::json& j)
{
  CameraSetup c;
  if (j.contains("intrinsics"))
    c.intrinsics = intrinsics_from_json(j["intrinsics"]);
  if (j.contains("look_at"))
  {
    const auto& l = j["look_at"];
    c.pose = look_at(vec3_from_json(l.at("eye")), vec3_from_json(l.at("target")),
                     l.contains("up") ? vec3_from_json(l["up"]) : Vec3::UnitZ());
  }
  else
  {
    c.pose = pose_from_json(j.at("pose"));
  }
  c.intrinsics.validate();
  if (!c.pose.is_valid(1e-6))
    fail(ErrorKind::InvalidPose, "camera pose is not a rigid transform");
  return c;
}

inline nlohmann::json camera_to_json(const CameraSetup& c)
{
  return {{"intrinsics", intrinsics_to_json(c.intrinsics)}, {"pose", pose_to_json(c.pose)}};
}

inline std::optional<ObservationFiles> observation_files_from_json(const nlohmann::json& j)
{
  if (!j.contains("rgb"))
    return std::nullopt;
  return ObservationFiles{j.at("rgb").get<std::string>(), j.at("depth").get<std::string>(),
                          j.at("depth_meta").get<std::string>()};
}
}  // namespace detail

inline SceneFile scene_file_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
  SceneFile sf;
  sf.base_dir = base_dir;
  try
  {
    if (j.value("format_version", 1) != 1)
      fail(ErrorKind::ConfigError, "unsupported scene format_version");
    sf.name = j.value("name", std::string("scene"));
    auto& s = sf.scene;
    if (j.contains("table"))
    {
      const auto& t = j["table"];
      s.table_height = t.value("height", s.table_height);
      s.table_half_extent = t.value("half_extent", s.table_half_extent);
      s.table_clearance = t.value("clearance", s.table_clearance);
    }
    if (j.contains("workspace"))
    {
      s.workspace.center = detail::vec3_from_json(j["workspace"].at("center"));
      s.workspace.radius = j["workspace"].at("radius").get<double>();
    }
    s.min_approach_angle_deg = j.value("min_approach_angle_deg", s.min_approach_angle_deg);
    s.target_object = j.value("target_object", std::string());
    for (const auto& o : j.at("objects"))
      s.objects.push_back(detail::object_from_json(o));
    for (const auto& o : j.value("obstacles", nlohmann::json::array()))
      s.obstacles.push_back(detail::primitive_from_json(o));
    sf.camera = detail::camera_from_json(j.at("camera"));
    if (j.contains("observation"))
      sf.observation = detail::observation_files_from_json(j["observation"]);
    if (j.contains("grasps"))
      sf.grasps_path = j["grasps"].get<std::string>();
    sf.synthetic_count = j.value("synthetic_grasps", sf.synthetic_count);
    for (const auto& t : j.value("tasks", nlohmann::json::array()))
      sf.tasks.push_back(task_from_json(t));
    for (const auto& v : j.value("views", nlohmann::json::array()))
    {
      ViewSpec view;
      nlohmann::json cam = v.value("camera", nlohmann::json::object());
      if (!cam.contains("intrinsics"))
        cam["intrinsics"] = intrinsics_to_json(sf.camera.intrinsics);
      view.camera = detail::camera_from_json(cam);
      if (v.contains("visibility"))
        view.visibility = v["visibility"].get<double>();
      if (v.contains("observation"))
        view.files = detail::observation_files_from_json(v["observation"]);
      sf.views.push_back(std::move(view));
    }
    if (j.contains("camera_ring"))
    {
      const auto& r = j["camera_ring"];
      const auto poses = camera_ring(detail::vec3_from_json(r.at("center")), r.at("radius").get<double>(),
                                     r.at("height").get<double>(), detail::vec3_from_json(r.at("target")),
                                     r.value("count", 4), r.value("start_angle_deg", 0.0) * std::numbers::pi / 180.0);
      const auto vis = r.value("visibility", std::vector<double>());
      for (std::size_t i = 0; i < poses.size(); ++i)
      {
        ViewSpec view;
        view.camera = {sf.camera.intrinsics, poses[i]};
        if (i < vis.size())
          view.visibility = vis[i];
        sf.views.push_back(std::move(view));
      }
    }
    if (j.contains("expected_best_view"))
      sf.expected_best_view = j["expected_best_view"].get<std::size_t>();
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ConfigError, "scene '" + sf.name + "': " + e.what());
  }
  for (const auto& t : sf.tasks)
    (void)sf.scene.target().region(t.target_region);
  sf.scene.validate();
  return sf;
}

inline nlohmann::json scene_file_to_json(const SceneFile& sf)
{
  const auto& s = sf.scene;
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : s.objects)
    objects.push_back(detail::object_to_json(o));
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& o : s.obstacles)
    obstacles.push_back(detail::primitive_to_json(o));
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : sf.tasks)
    tasks.push_back(task_to_json(t));
  nlohmann::json j = {{"format_version", 1},
                      {"name", sf.name},
                      {"table",
                       {{"height", s.table_height},
                        {"half_extent", s.table_half_extent},
                        {"clearance", s.table_clearance}}},
                      {"workspace", {{"center", detail::vec3_to_json(s.workspace.center)}, {"radius", s.workspace.radius}}},
                      {"min_approach_angle_deg", s.min_approach_angle_deg},
                      {"target_object", s.target_object},
                      {"objects", objects},
                      {"obstacles", obstacles},
                      {"camera", detail::camera_to_json(sf.camera)},
                      {"synthetic_grasps", sf.synthetic_count},
                      {"tasks", tasks}};
  if (sf.grasps_path)
    j["grasps"] = *sf.grasps_path;
  if (sf.observation)
    j["observation"] = {{"rgb", sf.observation->rgb},
                        {"depth", sf.observation->depth},
                        {"depth_meta", sf.observation->depth_meta}};
  if (!sf.views.empty())
  {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : sf.views)
    {
      nlohmann::json vj = {{"camera", detail::camera_to_json(v.camera)}};
      if (v.visibility)
        vj["visibility"] = *v.visibility;
      if (v.files)
        vj["observation"] = {{"rgb", v.files->rgb}, {"depth", v.files->depth}, {"depth_meta", v.files->depth_meta}};
      views.push_back(std::move(vj));
    }
    j["views"] = views;
  }
  if (sf.expected_best_view)
    j["expected_best_view"] = *sf.expected_best_view;
  return j;
}

inline nlohmann::json read_json_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::ConfigError, "cannot read " + path);
  try
  {
    return nlohmann::json::parse(in);
  }
  catch (const nlohmann::json::parse_error& e)
  {
    fail(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j)
{
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + path);
}

inline SceneFile load_scene_file(const std::string& path)
{
  auto sf = scene_file_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
  // Referenced files must exist before anything runs.
  auto must_exist = [&](const std::string& rel) {
    const auto p = sf.base_dir / rel;
    if (!std::filesystem::exists(p))
      fail(ErrorKind::ConfigError, "scene " + path + " references missing file " + p.string());
  };
  if (sf.grasps_path)
    must_exist(*sf.grasps_path);
  auto check_files = [&](const std::optional<ObservationFiles>& f) {
    if (!f)
      return;
    must_exist(f->rgb);
    must_exist(f->depth);
    must_exist(f->depth_meta);
  };
  check_files(sf.observation);
  for (const auto& v : sf.views)
    check_files(v.files);
  return sf;
}

namespace detail
{
inline SceneObservation observe_with(const SceneFile& sf, const CameraSetup& cam,
                                     const std::optional<ObservationFiles>& files)
{
  if (!files)
    return render(sf.scene, cam.pose, cam.intrinsics);
  SceneObservation obs;
  const auto meta = read_depth_meta((sf.base_dir / files->depth_meta).string());
  obs.intrinsics = meta.intrinsics;
  obs.depth = read_depth((sf.base_dir / files->depth).string(), meta);
  obs.rgb = read_png((sf.base_dir / files->rgb).string());
  obs.camera_pose = cam.pose;
  obs.validate();
  return obs;
}
}  // namespace detail

// The main (hand) camera frame: loaded from disk if recorded, else rendered.
inline SceneObservation observe(const SceneFile& sf) { return detail::observe_with(sf, sf.camera, sf.observation); }

inline SceneObservation observe_view(const SceneFile& sf, std::size_t i)
{
  return detail::observe_with(sf, sf.views.at(i).camera, sf.views.at(i).files);
}

// Manifest: {"format_version": 1, "scenes": ["a.json", ...]} relative to itself.
inline std::vector<SceneFile> load_corpus(const std::string& manifest_path)
{
  const auto j = read_json_file(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  if (!j.contains("scenes") || !j["scenes"].is_array() || j["scenes"].empty())
    fail(ErrorKind::ConfigError, manifest_path + ": manifest needs a non-empty \"scenes\" array");
  std::vector<SceneFile> out;
  for (const auto& s : j["scenes"])
    out.push_back(load_scene_file((base / s.get<std::string>()).string()));
  return out;
}

}  // namespace taskgrasp
