// Library walk-through: one built-in scene, every stage of the pipeline, and
// a ground-truth backend standing in for the vision-language model.

#include <iostream>

#include "taskgrasp/corpus.hpp"
#include "taskgrasp/harness.hpp"

int main()
{
  using namespace taskgrasp;
  const SceneFile sf = builtin_corpus().at(1);  // screwdriver, grasp the handle
  const TaskSpec& task = sf.tasks.front();

  PipelineConfig cfg;
  const auto inputs = prepare_inputs(sf, cfg, /*scene_seed=*/42);
  const auto [clusters, reps] = diversify_inputs(inputs, cfg, 42);
  std::cout << sf.name << ": " << inputs.candidates.size() << " candidates, " << inputs.feasible.size()
            << " feasible, " << reps.size() << " representatives\n";

  const OracleVlm vlm(OracleVlm::Mode::Omniscient);
  QueryContext ctx;
  ctx.object = &sf.scene.target();
  ctx.match_set = &inputs.feasible;
  ctx.world_cloud = &inputs.world_cloud;

  for (Strategy s : kAllStrategies)
  {
    const auto sel = select_grasp(inputs.obs, reps, task, s, vlm, ctx, cfg.select);
    if (!sel.ok())
    {
      std::cout << to_string(s) << ": " << sel.error_message << "\n";
      continue;
    }
    std::cout << to_string(s) << ": grasp " << sel.chosen->id << ", reply " << sel.audit.parsed
              << ", on the " << task.target_region << ": " << std::boolalpha
              << check_compliance(*sel.chosen, task, sf.scene.target()) << "\n";
  }

  const auto baseline = top_k(inputs.feasible, 1)[0];
  std::cout << "most confident grasp " << baseline.id << " on the " << task.target_region << ": " << std::boolalpha
            << check_compliance(baseline, task, sf.scene.target()) << "\n";
}
