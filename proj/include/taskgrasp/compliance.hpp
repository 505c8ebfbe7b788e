#pragma once

#include <numbers>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/primitives.hpp"
#include "taskgrasp/task.hpp"

namespace taskgrasp
{

// Contact inside the target region (surface counts as inside), or outside it
// for an avoid task. Contacts are world-frame; the object pose is applied.
inline bool check_compliance(const GraspCandidate& chosen, const TaskSpec& task, const PrimitiveObject& obj)
{
  const bool inside = region_sdf(obj, obj.region(task.target_region), chosen.contact) <= 0.0;
  return task.polarity == Polarity::Require ? inside : !inside;
}

struct SuccessProxyConfig
{
  double max_normal_angle_deg = 15.0;
  double contact_dilation = 0.005;  // meters
};

// Analytic stand-in for a lift test: the jaws fit across the object at the
// contact, the surface normals oppose along the closing axis, and the contact
// sits on or within a few millimetres of the object.
inline bool grasp_success_proxy(const GraspCandidate& chosen, const PrimitiveObject& obj,
                                const GripperGeometry& grip, const SuccessProxyConfig& cfg = {})
{
  if (obj.sdf(chosen.contact) > cfg.contact_dilation)
    return false;
  const auto a = analyze_antipodal(obj, chosen.contact, closing_axis(chosen.pose));
  return a.hit && a.width <= grip.max_width &&
         a.normal_angle <= cfg.max_normal_angle_deg * std::numbers::pi / 180.0;
}

}  // namespace taskgrasp
