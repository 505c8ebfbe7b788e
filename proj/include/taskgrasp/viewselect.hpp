#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "taskgrasp/error.hpp"
#include "taskgrasp/scene.hpp"

namespace taskgrasp
{

struct DetectorScore
{
  std::size_t view_index = 0;
  double confidence = 0.0;  // [0, 1]
  bool failed = false;
  std::string failure;

  bool operator==(const DetectorScore&) const = default;
};

// Class-specific detection confidence of the prompted object in one view.
class Detector
{
public:
  virtual ~Detector() = default;
  virtual double confidence(const SceneObservation& view, std::size_t view_index,
                            std::string_view object_prompt) const = 0;
};

// Replays per-view scores annotated in the scene file, typically the analytic
// visibility of the task's target region. Views listed in `failing` throw.
class StubDetector : public Detector
{
public:
  explicit StubDetector(std::vector<double> annotated, std::vector<std::size_t> failing = {})
    : annotated_(std::move(annotated)), failing_(std::move(failing))
  {
  }

  double confidence(const SceneObservation&, std::size_t view_index, std::string_view) const override
  {
    for (auto f : failing_)
      if (f == view_index)
        fail(ErrorKind::DetectorFailure, "detector failed on view " + std::to_string(view_index));
    if (view_index >= annotated_.size())
      fail(ErrorKind::DetectorFailure, "no annotation for view " + std::to_string(view_index));
    return annotated_[view_index];
  }

private:
  std::vector<double> annotated_;
  std::vector<std::size_t> failing_;
};

// One score per view, in view order. A failing or out-of-range detector
// result scores 0 and is flagged rather than aborting the whole set.
inline std::vector<DetectorScore> score_views(const std::vector<SceneObservation>& views,
                                              std::string_view object_prompt, const Detector& detector)
{
  std::vector<DetectorScore> scores;
  for (std::size_t i = 0; i < views.size(); ++i)
  {
    DetectorScore s;
    s.view_index = i;
    try
    {
      const double c = detector.confidence(views[i], i, object_prompt);
      if (!(c >= 0.0 && c <= 1.0))
        fail(ErrorKind::DetectorFailure, "confidence outside [0, 1]");
      s.confidence = c;
    }
    catch (const Error& e)
    {
      if (e.kind() != ErrorKind::DetectorFailure)
        throw;
      s.failed = true;
      s.failure = e.what();
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

// Highest confidence wins; ties go to the lowest view index.
inline std::size_t select_view(const std::vector<DetectorScore>& scores)
{
  if (scores.empty())
    fail(ErrorKind::EmptyInput, "no views to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i].confidence > scores[best].confidence)
      best = i;
  return scores[best].view_index;
}

}  // namespace taskgrasp
