#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "taskgrasp/error.hpp"

namespace taskgrasp
{

enum class TaskCategory
{
  SpecificPosition,
  ToolUse,
  Handover
};

inline std::string_view to_string(TaskCategory c)
{
  switch (c)
  {
    case TaskCategory::SpecificPosition: return "specific-position";
    case TaskCategory::ToolUse: return "tool-use";
    case TaskCategory::Handover: return "handover";
  }
  return "specific-position";
}

inline TaskCategory category_from_string(std::string_view s)
{
  if (s == "specific-position")
    return TaskCategory::SpecificPosition;
  if (s == "tool-use")
    return TaskCategory::ToolUse;
  if (s == "handover")
    return TaskCategory::Handover;
  fail(ErrorKind::ConfigError, "unknown task category '" + std::string(s) + "'");
}

// Whether a compliant contact must lie inside the target region or outside it.
enum class Polarity
{
  Require,
  Avoid
};

struct TaskSpec
{
  std::string description;
  TaskCategory category = TaskCategory::SpecificPosition;
  std::string target_region;
  Polarity polarity = Polarity::Require;

  bool operator==(const TaskSpec&) const = default;
};

inline nlohmann::json task_to_json(const TaskSpec& t)
{
  return {{"description", t.description},
          {"category", std::string(to_string(t.category))},
          {"target_region", t.target_region},
          {"polarity", t.polarity == Polarity::Require ? "require" : "avoid"}};
}

inline TaskSpec task_from_json(const nlohmann::json& j)
{
  TaskSpec t;
  try
  {
    t.description = j.at("description").get<std::string>();
    t.category = category_from_string(j.value("category", std::string("specific-position")));
    t.target_region = j.at("target_region").get<std::string>();
    const std::string pol = j.value("polarity", std::string("require"));
    if (pol != "require" && pol != "avoid")
      fail(ErrorKind::ConfigError, "polarity must be 'require' or 'avoid'");
    t.polarity = pol == "require" ? Polarity::Require : Polarity::Avoid;
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ConfigError, std::string("task: ") + e.what());
  }
  return t;
}

}  // namespace taskgrasp
