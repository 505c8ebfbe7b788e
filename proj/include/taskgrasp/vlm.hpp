#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/compliance.hpp"
#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"
#include "taskgrasp/image.hpp"
#include "taskgrasp/prompting.hpp"
#include "taskgrasp/scene.hpp"
#include "taskgrasp/task.hpp"

namespace taskgrasp
{

struct MatchConfig
{
  double max_pixel_distance_px = 20.0;
  int reference_width = 640;  // the threshold scales with image width

  void validate() const
  {
    if (!(max_pixel_distance_px > 0.0) || reference_width < 1)
      fail(ErrorKind::ConfigError, "max_pixel_distance_px must be positive");
  }

  double threshold_for(int width) const { return max_pixel_distance_px * width / reference_width; }
};

struct PointMatch
{
  std::size_t cloud_index = 0;
  double pixel_distance = 0.0;
  std::size_t candidate_index = 0;  // into the candidate set
};

// Nearest projected cloud point to the pixel, then the candidate whose
// contact is nearest to that point. Ties go to the lower index in both stages.
inline PointMatch match_point_details(const PixelPoint& px, const PointCloud& world_cloud, const CandidateSet& cands,
                                      const CameraIntrinsics& intr, const Pose& camera_pose,
                                      const MatchConfig& cfg = {})
{
  cfg.validate();
  if (world_cloud.empty())
    fail(ErrorKind::EmptyInput, "point cloud is empty");
  if (cands.empty())
    fail(ErrorKind::EmptyInput, "no candidates to match against");
  const Pose world_to_cam = camera_pose.inverse();
  PointMatch m;
  m.pixel_distance = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < world_cloud.size(); ++i)
  {
    const Vec3 pc = world_to_cam.apply(world_cloud.points[i]);
    if (!(pc.z() > 0.0))
      continue;
    const double d = pixel_distance(project(pc, intr), {px.u, px.v});
    if (d < m.pixel_distance)
    {
      m.pixel_distance = d;
      m.cloud_index = i;
      any = true;
    }
  }
  const double limit = cfg.threshold_for(intr.width);
  if (!any || m.pixel_distance > limit)
  {
    std::ostringstream msg;
    msg << "no object point within " << limit << " px of (" << px.u << ", " << px.v << ")";
    fail(ErrorKind::VlmPointOffObject, msg.str());
  }
  const Vec3& p = world_cloud.points[m.cloud_index];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cands.size(); ++c)
  {
    const double d = (cands[c].contact - p).squaredNorm();
    if (d < best)
    {
      best = d;
      m.candidate_index = c;
    }
  }
  return m;
}

inline GraspCandidate match_point_to_grasp(const PixelPoint& px, const PointCloud& world_cloud,
                                           const CandidateSet& cands, const CameraIntrinsics& intr,
                                           const Pose& camera_pose, const MatchConfig& cfg = {})
{
  return cands[match_point_details(px, world_cloud, cands, intr, camera_pose, cfg).candidate_index];
}

// World-frame cloud of an observation, optionally keeping only points above
// the table so that table pixels never count as "on the object".
inline PointCloud world_cloud_of(const SceneObservation& obs, std::optional<double> table_height = std::nullopt,
                                 double margin = 0.003)
{
  auto cloud = transform_cloud(unproject(obs.depth, obs.intrinsics), obs.camera_pose);
  if (table_height)
    cloud = crop_above_plane(cloud, *table_height, margin);
  return cloud;
}

// Everything a backend may look at besides the bundle. Real models ignore it;
// the ground-truth test doubles read the object and task from it.
struct QueryContext
{
  const PrimitiveObject* object = nullptr;
  const TaskSpec* task = nullptr;
  const CandidateSet* shown = nullptr;      // candidates in display order
  const CandidateSet* match_set = nullptr;  // candidates a CPG point is matched against
  const PointCloud* world_cloud = nullptr;
  const SceneObservation* observation = nullptr;
  MatchConfig match;
};

class VlmBackend
{
public:
  virtual ~VlmBackend() = default;
  // Must be safe to call concurrently.
  virtual std::string query(const QueryBundle& bundle, const QueryContext& ctx) const = 0;
  virtual std::string name() const = 0;
};

struct ScriptRule
{
  std::string contains;              // empty matches any prompt
  std::optional<Strategy> strategy;  // unset matches any strategy
  std::string respond;
};

// Fixed replies chosen by the first matching rule. Immutable once built.
class ScriptedVlm : public VlmBackend
{
public:
  ScriptedVlm(std::vector<ScriptRule> rules, std::string default_response)
    : rules_(std::move(rules)), default_(std::move(default_response))
  {
  }

  std::string query(const QueryBundle& bundle, const QueryContext&) const override
  {
    for (const auto& r : rules_)
      if ((!r.strategy || *r.strategy == bundle.strategy) && bundle.prompt.find(r.contains) != std::string::npos)
        return r.respond;
    return default_;
  }

  std::string name() const override { return "scripted"; }

  static ScriptedVlm from_json(const nlohmann::json& j)
  {
    std::vector<ScriptRule> rules;
    try
    {
      for (const auto& r : j.value("rules", nlohmann::json::array()))
      {
        ScriptRule rule;
        rule.contains = r.value("contains", std::string());
        if (r.contains("strategy"))
          rule.strategy = strategy_from_string(r.at("strategy").get<std::string>());
        rule.respond = r.at("respond").get<std::string>();
        rules.push_back(std::move(rule));
      }
      return ScriptedVlm(std::move(rules), j.value("default", std::string()));
    }
    catch (const nlohmann::json::exception& e)
    {
      fail(ErrorKind::ConfigError, std::string("script: ") + e.what());
    }
  }

private:
  std::vector<ScriptRule> rules_;
  std::string default_;
};

// Answers from ground truth: the omniscient mode names a task-compliant
// candidate whenever one is on offer, the adversarial mode a non-compliant one.
class OracleVlm : public VlmBackend
{
public:
  enum class Mode
  {
    Omniscient,
    Adversarial
  };

  explicit OracleVlm(Mode mode) : mode_(mode) {}

  std::string query(const QueryBundle& bundle, const QueryContext& ctx) const override
  {
    if (!ctx.object || !ctx.task)
      fail(ErrorKind::ConfigError, "ground-truth backend needs the scene object and task");
    auto wanted = [&](const GraspCandidate& c) {
      return check_compliance(c, *ctx.task, *ctx.object) == (mode_ == Mode::Omniscient);
    };
    if (bundle.strategy != Strategy::CPG)
    {
      if (!ctx.shown)
        fail(ErrorKind::ConfigError, "ground-truth backend needs the displayed candidates");
      for (std::size_t i = 0; i < bundle.candidate_order.size(); ++i)
      {
        const auto* c = ctx.shown->find(bundle.candidate_order[i]);
        if (c && wanted(*c))
          return canonical_reply(ChosenIndex{static_cast<int>(i)});
      }
      return canonical_reply(ChosenIndex{0});
    }
    return point_reply(ctx, wanted);
  }

  std::string name() const override { return mode_ == Mode::Omniscient ? "omniscient" : "adversarial"; }

private:
  template <typename Pred>
  std::string point_reply(const QueryContext& ctx, Pred wanted) const
  {
    if (!ctx.match_set || !ctx.world_cloud || !ctx.observation)
      fail(ErrorKind::ConfigError, "ground-truth backend needs the cloud and candidates for point answers");
    const auto& cands = *ctx.match_set;
    const auto& cloud = *ctx.world_cloud;
    const auto& obs = *ctx.observation;
    const Pose world_to_cam = obs.camera_pose.inverse();
    std::optional<PixelPoint> fallback;
    for (std::size_t i = 0; i < cloud.size() && !cands.empty(); ++i)
    {
      const Vec3 pc = world_to_cam.apply(cloud.points[i]);
      if (!(pc.z() > 0.0))
        continue;
      const PixelCoord proj = project(pc, obs.intrinsics);
      const PixelPoint px{std::round(proj.u), std::round(proj.v)};
      if (px.u < 0 || px.v < 0 || px.u >= obs.intrinsics.width || px.v >= obs.intrinsics.height)
        continue;
      if (!fallback)
        fallback = px;
      std::size_t nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cands.size(); ++c)
      {
        const double d = (cands[c].contact - cloud.points[i]).squaredNorm();
        if (d < best)
        {
          best = d;
          nearest = c;
        }
      }
      if (!wanted(cands[nearest]))
        continue;
      // Confirm with the real matcher; rounding can land on a neighbour.
      if (wanted(match_point_to_grasp(px, cloud, cands, obs.intrinsics, obs.camera_pose, ctx.match)))
        return canonical_reply(px);
    }
    const PixelPoint centre{std::floor(obs.intrinsics.cx), std::floor(obs.intrinsics.cy)};
    return canonical_reply(fallback.value_or(centre));
  }

  Mode mode_;
};

// Script file: either {"oracle": "omniscient" | "adversarial"} or
// {"rules": [{"contains", "strategy", "respond"}...], "default": "..."}.
inline std::unique_ptr<VlmBackend> backend_from_json(const nlohmann::json& j)
{
  if (j.contains("oracle"))
  {
    const auto mode = j["oracle"].get<std::string>();
    if (mode == "omniscient")
      return std::make_unique<OracleVlm>(OracleVlm::Mode::Omniscient);
    if (mode == "adversarial")
      return std::make_unique<OracleVlm>(OracleVlm::Mode::Adversarial);
    fail(ErrorKind::ConfigError, "unknown oracle mode '" + mode + "'");
  }
  return std::make_unique<ScriptedVlm>(ScriptedVlm::from_json(j));
}

inline std::unique_ptr<VlmBackend> load_script(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::ConfigError, "cannot read script " + path);
  try
  {
    return backend_from_json(nlohmann::json::parse(in));
  }
  catch (const nlohmann::json::parse_error& e)
  {
    fail(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

struct AttemptRecord
{
  std::string reminder;  // text appended to the prompt, empty on the first try
  std::string raw_reply;
  std::string error;  // error tag, empty when the reply parsed

  bool operator==(const AttemptRecord&) const = default;
};

struct AuditRecord
{
  std::string strategy;
  std::string task;
  std::string prompt;
  std::vector<std::string> image_hashes;
  std::vector<int> candidate_order;
  std::vector<AttemptRecord> attempts;
  std::string parsed;  // canonical JSON of the parsed reply, empty if none
  std::optional<int> chosen_id;
  bool fallback_used = false;
  std::string error;  // error tag of the whole selection, empty on success

  bool operator==(const AuditRecord&) const = default;
};

inline nlohmann::json audit_to_json(const AuditRecord& a)
{
  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& t : a.attempts)
    attempts.push_back({{"reminder", t.reminder}, {"raw_reply", t.raw_reply}, {"error", t.error}});
  return {{"strategy", a.strategy},
          {"task", a.task},
          {"prompt", a.prompt},
          {"image_hashes", a.image_hashes},
          {"candidate_order", a.candidate_order},
          {"attempts", attempts},
          {"parsed", a.parsed},
          {"chosen_id", a.chosen_id ? nlohmann::json(*a.chosen_id) : nlohmann::json(nullptr)},
          {"fallback_used", a.fallback_used},
          {"error", a.error}};
}

inline AuditRecord audit_from_json(const nlohmann::json& j)
{
  AuditRecord a;
  try
  {
    a.strategy = j.at("strategy").get<std::string>();
    a.task = j.at("task").get<std::string>();
    a.prompt = j.at("prompt").get<std::string>();
    a.image_hashes = j.at("image_hashes").get<std::vector<std::string>>();
    a.candidate_order = j.at("candidate_order").get<std::vector<int>>();
    for (const auto& t : j.at("attempts"))
      a.attempts.push_back({t.at("reminder").get<std::string>(), t.at("raw_reply").get<std::string>(),
                            t.at("error").get<std::string>()});
    a.parsed = j.at("parsed").get<std::string>();
    if (!j.at("chosen_id").is_null())
      a.chosen_id = j.at("chosen_id").get<int>();
    a.fallback_used = j.at("fallback_used").get<bool>();
    a.error = j.at("error").get<std::string>();
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ParseError, std::string("audit record: ") + e.what());
  }
  return a;
}

// One JSON document per line.
inline void append_audit(const std::string& path, const AuditRecord& a)
{
  std::ofstream out(path, std::ios::app);
  if (!out)
    fail(ErrorKind::IoError, "cannot append to " + path);
  out << audit_to_json(a).dump() << '\n';
}

struct SelectConfig
{
  int reprompt_limit = 2;
  // On a reply that never yields a usable answer, take the most confident
  // candidate instead of failing. Recorded in the audit.
  bool fallback_to_top_confidence = false;
  MarkerStyle style;
  GripperGeometry grip;
  MatchConfig match;
};

struct Selection
{
  AuditRecord audit;
  QueryBundle bundle;
  std::optional<GraspCandidate> chosen;
  std::optional<ErrorKind> error;
  std::string error_message;

  bool ok() const { return chosen.has_value(); }

  // The chosen grasp, or the selection's error rethrown.
  const GraspCandidate& value() const
  {
    if (!chosen)
      throw Error(error.value_or(ErrorKind::ModelError), error_message);
    return *chosen;
  }
};

inline std::string reprompt_reminder(Strategy s, std::size_t n, int attempt)
{
  std::string r = "Attempt " + std::to_string(attempt) + ": the previous reply could not be read. Reply with only ";
  if (s == Strategy::CPG)
    r += "the JSON object {\"point\": [u, v]} with integer pixel coordinates.";
  else
    r += "the JSON object {\"choice\": N} where N is an integer from 1 to " + std::to_string(n) + ".";
  return r;
}

// build_query -> query -> parse_reply -> candidate. Unreadable replies are
// re-asked up to reprompt_limit times. Errors are captured, never thrown, so
// the audit record is always available.
inline Selection select_grasp(const SceneObservation& obs, const CandidateSet& reps, const TaskSpec& task,
                              Strategy strategy, const VlmBackend& backend, QueryContext ctx = {},
                              const SelectConfig& cfg = {})
{
  Selection sel;
  sel.audit.strategy = std::string(to_string(strategy));
  sel.audit.task = task.description;
  auto record_error = [&](const Error& e) {
    sel.error = e.kind();
    sel.error_message = e.what();
    sel.audit.error = std::string(to_string(e.kind()));
  };
  auto choose_fallback = [&]() {
    if (!cfg.fallback_to_top_confidence || reps.empty())
      return false;
    sel.chosen = top_k(reps, 1)[0];
    sel.audit.chosen_id = sel.chosen->id;
    sel.audit.fallback_used = true;
    return true;
  };

  try
  {
    sel.bundle = build_query(obs, reps, task, strategy, cfg.style, cfg.grip);
  }
  catch (const Error& e)
  {
    record_error(e);
    return sel;
  }
  sel.audit.prompt = sel.bundle.prompt;
  sel.audit.candidate_order = sel.bundle.candidate_order;
  for (const auto& img : sel.bundle.images)
    sel.audit.image_hashes.push_back(image_hash(img));

  std::optional<PointCloud> own_cloud;
  ctx.task = &task;
  ctx.shown = &reps;
  ctx.observation = &obs;
  ctx.match = cfg.match;
  if (!ctx.match_set)
    ctx.match_set = &reps;
  if (!ctx.world_cloud && strategy == Strategy::CPG)
  {
    own_cloud = world_cloud_of(obs);
    ctx.world_cloud = &*own_cloud;
  }

  const std::size_t n = sel.bundle.candidate_order.size();
  for (int attempt = 1; attempt <= cfg.reprompt_limit + 1; ++attempt)
  {
    AttemptRecord rec;
    QueryBundle asked = sel.bundle;
    if (attempt > 1)
    {
      rec.reminder = reprompt_reminder(strategy, n, attempt);
      asked.prompt += "\n" + rec.reminder;
    }
    try
    {
      rec.raw_reply = backend.query(asked, ctx);
      const auto reply = parse_reply(rec.raw_reply, strategy, n, obs.rgb.width, obs.rgb.height, cfg.style);
      sel.audit.parsed = canonical_reply(reply.parsed);
      if (reply.is_index())
        sel.chosen = *reps.find(sel.bundle.candidate_order[reply.index()]);
      else
        sel.chosen = match_point_to_grasp(reply.point(), *ctx.world_cloud, *ctx.match_set, obs.intrinsics,
                                          obs.camera_pose, cfg.match);
      sel.audit.chosen_id = sel.chosen->id;
      sel.audit.attempts.push_back(std::move(rec));
      return sel;
    }
    catch (const Error& e)
    {
      rec.error = std::string(to_string(e.kind()));
      sel.audit.attempts.push_back(std::move(rec));
      const bool reply_problem = e.kind() == ErrorKind::UnparseableReply || e.kind() == ErrorKind::AmbiguousReply ||
                                 e.kind() == ErrorKind::IndexOutOfRange || e.kind() == ErrorKind::PointOutOfImage ||
                                 e.kind() == ErrorKind::VlmPointOffObject;
      if (e.kind() == ErrorKind::UnparseableReply && attempt <= cfg.reprompt_limit)
        continue;
      record_error(e);
      if (reply_problem && choose_fallback())
      {
        sel.error.reset();
        sel.error_message.clear();
        sel.audit.error.clear();
      }
      return sel;
    }
  }
  return sel;
}

}  // namespace taskgrasp
