#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/clustering.hpp"
#include "taskgrasp/compliance.hpp"
#include "taskgrasp/prompting.hpp"
#include "taskgrasp/scene_io.hpp"
#include "taskgrasp/task.hpp"
#include "taskgrasp/vlm.hpp"

namespace taskgrasp
{

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream of seeds per (purpose, index) from one run seed.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t stream, std::uint64_t index)
{
  return splitmix64(splitmix64(run_seed ^ splitmix64(stream + 1)) + index);
}

enum class CandidateOrder
{
  FilterFirst,  // feasibility filter, then keep the top prefilter_top_k
  TopKFirst     // keep the top prefilter_top_k, then filter
};

struct PipelineConfig
{
  int candidate_count = 0;  // 0: use the scene file's count
  CandidateOrder order = CandidateOrder::FilterFirst;
  int prefilter_top_k = 0;  // 0: keep every candidate
  ClusterConfig cluster;
  SelectConfig select;
  SyntheticGraspConfig synthetic;
  SuccessProxyConfig success;
  bool crop_table = true;
  // With a selected side view: keep the main camera's cloud for point matching.
  bool geometry_from_main_camera = false;

  void validate() const
  {
    if (candidate_count < 0 || prefilter_top_k < 0)
      fail(ErrorKind::ConfigError, "candidate counts must be non-negative");
    if (select.reprompt_limit < 0)
      fail(ErrorKind::ConfigError, "reprompt_limit must be >= 0");
    cluster.validate();
    select.style.validate();
    select.match.validate();
    select.grip.validate();
  }
};

// Everything before clustering: the frame, its cloud and the feasible grasps.
struct SceneInputs
{
  SceneObservation obs;
  PointCloud world_cloud;
  CandidateSet candidates;
  CandidateSet feasible;
};

inline SceneInputs prepare_inputs(const SceneFile& sf, const PipelineConfig& cfg, std::uint64_t scene_seed,
                                  std::optional<std::size_t> view = std::nullopt)
{
  SceneInputs in;
  in.obs = view ? observe_view(sf, *view) : observe(sf);
  const SceneObservation geometry = (view && cfg.geometry_from_main_camera) ? observe(sf) : SceneObservation{};
  const SceneObservation& geo = (view && cfg.geometry_from_main_camera) ? geometry : in.obs;
  in.world_cloud = world_cloud_of(geo, cfg.crop_table ? std::optional<double>(sf.scene.table_height) : std::nullopt);

  const auto& grip = cfg.select.grip;
  if (sf.grasps_path)
  {
    in.candidates = load_candidates((sf.base_dir / *sf.grasps_path).string(), grip);
  }
  else
  {
    auto syn = cfg.synthetic;
    syn.gripper = grip;
    const int n = cfg.candidate_count > 0 ? cfg.candidate_count : sf.synthetic_count;
    in.candidates = generate_synthetic(sf.scene.target(), n, derive_seed(scene_seed, 1, 0), syn);
  }
  const auto keep = static_cast<std::size_t>(cfg.prefilter_top_k);
  if (cfg.order == CandidateOrder::FilterFirst)
  {
    in.feasible = feasibility_filter(in.candidates, sf.scene, grip);
    if (keep > 0 && !in.feasible.empty())
      in.feasible = top_k(in.feasible, keep);
  }
  else
  {
    in.feasible = feasibility_filter(keep > 0 ? top_k(in.candidates, keep) : in.candidates, sf.scene, grip);
  }
  if (in.feasible.empty())
    fail(ErrorKind::NoFeasibleGrasp, "no candidate on '" + sf.scene.target().name + "' passes the feasibility filter");
  return in;
}

inline std::pair<ClusterResult, CandidateSet> diversify_inputs(const SceneInputs& in, const PipelineConfig& cfg,
                                                               std::uint64_t scene_seed)
{
  auto cc = cfg.cluster;
  cc.seed = derive_seed(scene_seed, 2, 0);
  return diversify(in.feasible, cc);
}

struct TrialOutcome
{
  int trial_id = 0;
  std::string scene;
  int task_index = 0;
  std::string task;
  TaskCategory category = TaskCategory::SpecificPosition;
  std::string strategy;  // strategy name or "baseline"
  std::optional<int> chosen_id;
  bool grasp_success = false;
  bool task_compliant = false;
  std::optional<std::string> error;
  std::optional<AuditRecord> audit;

  bool combined() const { return grasp_success && task_compliant; }
};

struct RateSummary
{
  int trials = 0;
  int grasp_successes = 0;
  int compliant = 0;
  int combined_successes = 0;
  int failures = 0;  // ran to completion but not a combined success
  int errors = 0;
  double grasp_success_rate = 0.0;
  double task_compliance_rate = 0.0;
  double combined_success_rate = 0.0;
};

// Rates from per-trial outcomes; combined success is counted per trial, never
// multiplied from the marginals.
inline RateSummary summarize(const std::vector<const TrialOutcome*>& trials)
{
  RateSummary s;
  s.trials = static_cast<int>(trials.size());
  for (const auto* t : trials)
  {
    s.grasp_successes += t->grasp_success;
    s.compliant += t->task_compliant;
    s.combined_successes += t->combined();
    if (t->error)
      ++s.errors;
    else if (!t->combined())
      ++s.failures;
  }
  if (s.trials > 0)
  {
    s.grasp_success_rate = static_cast<double>(s.grasp_successes) / s.trials;
    s.task_compliance_rate = static_cast<double>(s.compliant) / s.trials;
    s.combined_success_rate = static_cast<double>(s.combined_successes) / s.trials;
  }
  return s;
}

inline RateSummary summarize(const std::vector<TrialOutcome>& trials)
{
  std::vector<const TrialOutcome*> ptrs;
  for (const auto& t : trials)
    ptrs.push_back(&t);
  return summarize(ptrs);
}

inline constexpr const char* kBaselineName = "baseline";

struct EvaluationReport
{
  std::uint64_t seed = 0;
  RateSummary overall;  // pipeline trials only, baseline excluded
  std::vector<std::pair<std::string, RateSummary>> per_strategy;  // display order, baseline last
  std::map<std::string, RateSummary> per_category;
  std::vector<TrialOutcome> trials;
};

inline nlohmann::json summary_to_json(const RateSummary& s)
{
  return {{"trials", s.trials},
          {"grasp_successes", s.grasp_successes},
          {"compliant", s.compliant},
          {"combined_successes", s.combined_successes},
          {"failures", s.failures},
          {"errors", s.errors},
          {"grasp_success_rate", s.grasp_success_rate},
          {"task_compliance_rate", s.task_compliance_rate},
          {"combined_success_rate", s.combined_success_rate}};
}

inline nlohmann::json report_to_json(const EvaluationReport& r)
{
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& [name, s] : r.per_strategy)
  {
    auto j = summary_to_json(s);
    j["strategy"] = name;
    strategies.push_back(std::move(j));
  }
  nlohmann::json categories = nlohmann::json::object();
  for (const auto& [name, s] : r.per_category)
    categories[name] = summary_to_json(s);
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials)
    trials.push_back({{"trial_id", t.trial_id},
                      {"scene", t.scene},
                      {"task_index", t.task_index},
                      {"task", t.task},
                      {"category", std::string(to_string(t.category))},
                      {"strategy", t.strategy},
                      {"chosen_id", t.chosen_id ? nlohmann::json(*t.chosen_id) : nlohmann::json(nullptr)},
                      {"grasp_success", t.grasp_success},
                      {"task_compliant", t.task_compliant},
                      {"error", t.error ? nlohmann::json(*t.error) : nlohmann::json(nullptr)}});
  return {{"seed", r.seed},
          {"trial_count", r.trials.size()},
          {"overall", summary_to_json(r.overall)},
          {"strategies", strategies},
          {"categories", categories},
          {"trials", trials}};
}

inline std::string csv_rate(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string summary_csv_fields(const RateSummary& s)
{
  return std::to_string(s.trials) + "," + csv_rate(s.grasp_success_rate) + "," + csv_rate(s.task_compliance_rate) +
         "," + csv_rate(s.combined_success_rate) + "," + std::to_string(s.errors);
}

// One row per strategy plus the baseline row.
inline std::string report_to_csv(const EvaluationReport& r)
{
  std::string out = "strategy,trials,grasp_success_rate,task_compliance_rate,combined_success_rate,errors\n";
  for (const auto& [name, s] : r.per_strategy)
    out += name + "," + summary_csv_fields(s) + "\n";
  return out;
}

struct RunOptions
{
  std::uint64_t seed = 0;
  int jobs = 1;
  bool include_baseline = true;
  // Called once per finished pipeline trial, possibly from worker threads.
  std::function<void(const TrialOutcome&, const Selection&)> on_trial;
};

namespace detail
{
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn)
{
  const std::size_t workers = std::min<std::size_t>(std::max(1, jobs), n);
  if (workers <= 1)
  {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++)
        fn(i);
    });
  for (auto& t : pool)
    t.join();
}

struct PreparedScene
{
  const SceneInputs* inputs = nullptr;
  CandidateSet reps;
  std::optional<std::string> error;
};

inline std::vector<std::optional<SceneInputs>> prepare_all(const std::vector<SceneFile>& scenes,
                                                           const PipelineConfig& cfg, const RunOptions& opts,
                                                           std::vector<std::optional<std::string>>& errors)
{
  std::vector<std::optional<SceneInputs>> inputs(scenes.size());
  errors.assign(scenes.size(), std::nullopt);
  parallel_for(scenes.size(), opts.jobs, [&](std::size_t i) {
    try
    {
      inputs[i] = prepare_inputs(scenes[i], cfg, derive_seed(opts.seed, 0, i));
    }
    catch (const Error& e)
    {
      errors[i] = std::string(to_string(e.kind()));
    }
  });
  return inputs;
}

inline EvaluationReport run_prepared(const std::vector<SceneFile>& scenes,
                                     const std::vector<std::optional<SceneInputs>>& inputs,
                                     const std::vector<std::optional<std::string>>& input_errors,
                                     const std::vector<Strategy>& strategies, const VlmBackend& backend,
                                     const PipelineConfig& cfg, const RunOptions& opts)
{
  std::vector<PreparedScene> prepared(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i)
  {
    prepared[i].error = input_errors[i];
    if (!inputs[i])
      continue;
    prepared[i].inputs = &*inputs[i];
    try
    {
      prepared[i].reps = diversify_inputs(*inputs[i], cfg, derive_seed(opts.seed, 0, i)).second;
    }
    catch (const Error& e)
    {
      prepared[i].error = std::string(to_string(e.kind()));
    }
  }

  struct TrialSpec
  {
    std::size_t scene;
    std::size_t task;
    std::optional<Strategy> strategy;  // unset: baseline
  };
  std::vector<TrialSpec> specs;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (std::size_t t = 0; t < scenes[s].tasks.size(); ++t)
    {
      for (Strategy st : strategies)
        specs.push_back({s, t, st});
      if (opts.include_baseline)
        specs.push_back({s, t, std::nullopt});
    }

  EvaluationReport report;
  report.seed = opts.seed;
  report.trials.resize(specs.size());
  parallel_for(specs.size(), opts.jobs, [&](std::size_t i) {
    const auto& spec = specs[i];
    const auto& sf = scenes[spec.scene];
    const auto& task = sf.tasks[spec.task];
    const auto& obj = sf.scene.target();
    TrialOutcome& out = report.trials[i];
    out.trial_id = static_cast<int>(i);
    out.scene = sf.name;
    out.task_index = static_cast<int>(spec.task);
    out.task = task.description;
    out.category = task.category;
    out.strategy = spec.strategy ? std::string(to_string(*spec.strategy)) : kBaselineName;
    const auto& prep = prepared[spec.scene];
    if (prep.error)
    {
      out.error = prep.error;
      return;
    }
    const auto score = [&](const GraspCandidate& chosen) {
      out.chosen_id = chosen.id;
      out.grasp_success = grasp_success_proxy(chosen, obj, cfg.select.grip, cfg.success);
      out.task_compliant = check_compliance(chosen, task, obj);
    };
    if (!spec.strategy)
    {
      score(top_k(prep.inputs->feasible, 1)[0]);
      return;
    }
    QueryContext ctx;
    ctx.object = &obj;
    ctx.match_set = &prep.inputs->feasible;
    ctx.world_cloud = &prep.inputs->world_cloud;
    const auto sel = select_grasp(prep.inputs->obs, prep.reps, task, *spec.strategy, backend, ctx, cfg.select);
    out.audit = sel.audit;
    if (sel.ok())
      score(*sel.chosen);
    else
      out.error = std::string(to_string(*sel.error));
    if (opts.on_trial)
      opts.on_trial(out, sel);
  });

  std::vector<const TrialOutcome*> pipeline;
  std::map<std::string, std::vector<const TrialOutcome*>> by_strategy, by_category;
  for (const auto& t : report.trials)
  {
    by_strategy[t.strategy].push_back(&t);
    if (t.strategy == kBaselineName)
      continue;
    pipeline.push_back(&t);
    by_category[std::string(to_string(t.category))].push_back(&t);
  }
  report.overall = summarize(pipeline);
  for (Strategy st : strategies)
    report.per_strategy.emplace_back(std::string(to_string(st)), summarize(by_strategy[std::string(to_string(st))]));
  if (opts.include_baseline)
    report.per_strategy.emplace_back(kBaselineName, summarize(by_strategy[kBaselineName]));
  for (const auto& [name, list] : by_category)
    report.per_category[name] = summarize(list);
  return report;
}
}  // namespace detail

// Full pipeline per (scene, task, strategy) plus the most-confident-grasp
// baseline per (scene, task). Per-trial errors are recorded, never thrown.
inline EvaluationReport run_trials(const std::vector<SceneFile>& scenes, const std::vector<Strategy>& strategies,
                                   const VlmBackend& backend, const PipelineConfig& cfg, const RunOptions& opts = {})
{
  cfg.validate();
  std::vector<std::optional<std::string>> errors;
  const auto inputs = detail::prepare_all(scenes, cfg, opts, errors);
  return detail::run_prepared(scenes, inputs, errors, strategies, backend, cfg, opts);
}

struct KSweepRow
{
  int k = 0;
  RateSummary summary;
};

inline const std::vector<Strategy>& clustering_strategies()
{
  static const std::vector<Strategy> s = {Strategy::GSI, Strategy::CPSI, Strategy::GMI, Strategy::CPMI};
  return s;
}

// run_trials at each fixed K over the strategies that depend on clustering.
inline std::vector<KSweepRow> compare_k_sweep(const std::vector<SceneFile>& scenes, const std::vector<int>& k_values,
                                              const VlmBackend& backend, const PipelineConfig& cfg,
                                              const RunOptions& opts = {})
{
  if (k_values.empty())
    fail(ErrorKind::ConfigError, "k sweep needs at least one K");
  for (std::size_t i = 0; i < k_values.size(); ++i)
    if (k_values[i] < 1 || (i > 0 && k_values[i] <= k_values[i - 1]))
      fail(ErrorKind::ConfigError, "k values must be positive and strictly ascending");
  cfg.validate();
  RunOptions o = opts;
  o.include_baseline = false;
  std::vector<std::optional<std::string>> errors;
  const auto inputs = detail::prepare_all(scenes, cfg, o, errors);
  std::vector<KSweepRow> rows;
  for (int k : k_values)
  {
    PipelineConfig c = cfg;
    c.cluster.k = k;
    c.cluster.auto_k = false;
    const auto report = detail::run_prepared(scenes, inputs, errors, clustering_strategies(), backend, c, o);
    rows.push_back({k, report.overall});
  }
  return rows;
}

inline std::string k_sweep_to_csv(const std::vector<KSweepRow>& rows)
{
  std::string out = "k,trials,grasp_success_rate,task_compliance_rate,combined_success_rate,errors\n";
  for (const auto& r : rows)
    out += std::to_string(r.k) + "," + summary_csv_fields(r.summary) + "\n";
  return out;
}

}  // namespace taskgrasp
