#pragma once

// Command-line front end. run_cli() is the whole program so tests can drive
// it in-process with captured streams.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "taskgrasp/corpus.hpp"
#include "taskgrasp/harness.hpp"
#include "taskgrasp/scene_io.hpp"
#include "taskgrasp/viewselect.hpp"
#include "taskgrasp/vlm.hpp"
#include "taskgrasp/vlm_http.hpp"

namespace taskgrasp
{

namespace fs = std::filesystem;

struct BackendChoice
{
  std::optional<VlmEndpointConfig> endpoint;
  std::optional<std::string> script_path;
  std::optional<std::string> oracle;

  int count() const { return endpoint.has_value() + script_path.has_value() + oracle.has_value(); }
};

struct RunConfig
{
  std::optional<std::string> scene_path;
  std::optional<std::string> corpus_path;
  bool builtin_corpus = false;
  std::optional<TaskSpec> task;  // overrides the scene's own task
  std::size_t task_index = 0;
  Strategy strategy = Strategy::CPG;
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  std::vector<int> k_values = {1, 2, 3, 4, 5, 6};
  std::optional<SeedingMode> seeding;  // unset: k-means++, nested for sweep-k
  PipelineConfig pipeline;
  BackendChoice backend;
  std::string output_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool dump_queries = false;
};

namespace cli_detail
{
inline fs::path resolve(const fs::path& base, const std::string& p)
{
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline SeedingMode seeding_from_string(const std::string& s)
{
  if (s == "plusplus" || s == "kmeans++")
    return SeedingMode::PlusPlus;
  if (s == "nested")
    return SeedingMode::NestedRefinement;
  fail(ErrorKind::ConfigError, "unknown seeding '" + s + "' (plusplus, nested)");
}

inline CandidateOrder order_from_string(const std::string& s)
{
  if (s == "filter-first")
    return CandidateOrder::FilterFirst;
  if (s == "top-k-first")
    return CandidateOrder::TopKFirst;
  fail(ErrorKind::ConfigError, "unknown candidate order '" + s + "' (filter-first, top-k-first)");
}

inline std::vector<Strategy> strategies_from_list(const std::vector<std::string>& names)
{
  std::vector<Strategy> out;
  for (const auto& n : names)
    out.push_back(strategy_from_string(n));
  if (out.empty())
    fail(ErrorKind::ConfigError, "strategy list is empty");
  return out;
}

inline void set_k(ClusterConfig& c, const nlohmann::json& k)
{
  if (k.is_string() && k.get<std::string>() == "auto")
    c.auto_k = true;
  else
  {
    c.k = k.get<int>();
    c.auto_k = false;
  }
}

// Config file: paths are relative to the file's directory.
inline void apply_json(RunConfig& rc, const nlohmann::json& j, const fs::path& base)
{
  try
  {
    if (j.contains("scene"))
      rc.scene_path = resolve(base, j["scene"].get<std::string>()).string();
    if (j.contains("corpus"))
      rc.corpus_path = resolve(base, j["corpus"].get<std::string>()).string();
    rc.builtin_corpus = j.value("builtin_corpus", rc.builtin_corpus);
    if (j.contains("task"))
      rc.task = task_from_json(j["task"]);
    rc.task_index = j.value("task_index", rc.task_index);
    if (j.contains("strategy"))
      rc.strategy = strategy_from_string(j["strategy"].get<std::string>());
    if (j.contains("strategies"))
      rc.strategies = strategies_from_list(j["strategies"].get<std::vector<std::string>>());
    if (j.contains("k_values"))
      rc.k_values = j["k_values"].get<std::vector<int>>();
    rc.seed = j.value("seed", rc.seed);
    rc.jobs = j.value("jobs", rc.jobs);
    if (j.contains("output_dir"))
      rc.output_dir = resolve(base, j["output_dir"].get<std::string>()).string();
    rc.dump_queries = j.value("dump_queries", rc.dump_queries);

    auto& p = rc.pipeline;
    if (j.contains("clustering"))
    {
      const auto& c = j["clustering"];
      if (c.contains("k"))
        set_k(p.cluster, c["k"]);
      if (c.contains("seeding"))
        rc.seeding = seeding_from_string(c["seeding"].get<std::string>());
      p.cluster.auto_k_min = c.value("auto_k_min", p.cluster.auto_k_min);
      p.cluster.auto_k_max = c.value("auto_k_max", p.cluster.auto_k_max);
      p.cluster.max_iterations = c.value("max_iterations", p.cluster.max_iterations);
    }
    if (j.contains("candidates"))
    {
      const auto& c = j["candidates"];
      p.candidate_count = c.value("count", p.candidate_count);
      p.prefilter_top_k = c.value("prefilter_top_k", p.prefilter_top_k);
      if (c.contains("order"))
        p.order = order_from_string(c["order"].get<std::string>());
    }
    if (j.contains("gripper"))
    {
      auto& g = p.select.grip;
      g.max_width = j["gripper"].value("max_width", g.max_width);
      g.finger_length = j["gripper"].value("finger_length", g.finger_length);
    }
    if (j.contains("marker_style"))
    {
      const auto& m = j["marker_style"];
      auto& s = p.select.style;
      s.dot_radius_px = m.value("dot_radius_px", s.dot_radius_px);
      s.line_width_px = m.value("line_width_px", s.line_width_px);
      s.reference_width = m.value("reference_width", s.reference_width);
      if (m.contains("palette"))
      {
        s.palette.clear();
        for (const auto& e : m["palette"])
          s.palette.push_back({e.at("name").get<std::string>(), detail::rgb_from_json(e.at("color"))});
      }
    }
    if (j.contains("matching"))
    {
      auto& m = p.select.match;
      m.max_pixel_distance_px = j["matching"].value("max_pixel_distance_px", m.max_pixel_distance_px);
      m.reference_width = j["matching"].value("reference_width", m.reference_width);
    }
    if (j.contains("selection"))
    {
      const auto& s = j["selection"];
      p.select.reprompt_limit = s.value("reprompt_limit", p.select.reprompt_limit);
      p.select.fallback_to_top_confidence = s.value("fallback_to_top_confidence", p.select.fallback_to_top_confidence);
    }
    if (j.contains("success"))
    {
      p.success.max_normal_angle_deg = j["success"].value("max_normal_angle_deg", p.success.max_normal_angle_deg);
      p.success.contact_dilation = j["success"].value("contact_dilation", p.success.contact_dilation);
    }
    p.geometry_from_main_camera = j.value("geometry_from_main_camera", p.geometry_from_main_camera);
    if (j.contains("backend"))
    {
      const auto& b = j["backend"];
      rc.backend = {};
      if (b.contains("endpoint"))
        rc.backend.endpoint = endpoint_from_json(b["endpoint"]);
      if (b.contains("script"))
        rc.backend.script_path = resolve(base, b["script"].get<std::string>()).string();
      if (b.contains("oracle"))
        rc.backend.oracle = b["oracle"].get<std::string>();
    }
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ConfigError, std::string("config: ") + e.what());
  }
}

inline std::vector<std::string> split_list(const std::string& s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty())
      out.push_back(item);
  return out;
}

inline std::unique_ptr<VlmBackend> make_backend(const BackendChoice& b)
{
  if (b.count() != 1)
    fail(ErrorKind::ConfigError, "configure exactly one backend (--script, --oracle or an endpoint)");
  if (b.endpoint)
  {
    // Resolve the key now so a missing variable fails before any output.
    if (!b.endpoint->api_key_env_var_name.empty())
    {
      const char* key = std::getenv(b.endpoint->api_key_env_var_name.c_str());
      if (!key || !*key)
        fail(ErrorKind::AuthError, "environment variable " + b.endpoint->api_key_env_var_name + " is not set");
    }
    return std::make_unique<HttpVlm>(*b.endpoint);
  }
  if (b.script_path)
    return load_script(*b.script_path);
  return backend_from_json({{"oracle", *b.oracle}});
}

inline void make_output_dir(const std::string& dir)
{
  if (dir.empty())
    fail(ErrorKind::ConfigError, "an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
}

inline void check_output_dir(const std::string& dir)
{
  if (dir.empty())
    fail(ErrorKind::ConfigError, "an output directory is required (--out)");
  if (fs::exists(dir) && !fs::is_directory(dir))
    fail(ErrorKind::ConfigError, "output path " + dir + " exists and is not a directory");
}

inline void write_text(const fs::path& path, const std::string& text)
{
  std::ofstream out(path);
  out << text;
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + path.string());
}

inline PipelineConfig pipeline_for(const RunConfig& rc, SeedingMode default_seeding)
{
  PipelineConfig p = rc.pipeline;
  p.cluster.seeding = rc.seeding.value_or(default_seeding);
  return p;
}

inline TaskSpec resolve_task(const RunConfig& rc, const SceneFile& sf)
{
  TaskSpec t;
  if (rc.task)
    t = *rc.task;
  else if (rc.task_index < sf.tasks.size())
    t = sf.tasks[rc.task_index];
  else
    fail(ErrorKind::ConfigError, "scene '" + sf.name + "' has no task " + std::to_string(rc.task_index) +
                                     "; pass --task and --region");
  (void)sf.scene.target().region(t.target_region);
  return t;
}

inline std::vector<SceneFile> resolve_corpus(const RunConfig& rc)
{
  if (rc.builtin_corpus == rc.corpus_path.has_value())
    fail(ErrorKind::ConfigError, "pass exactly one of --corpus or --builtin-corpus");
  return rc.builtin_corpus ? builtin_corpus() : load_corpus(*rc.corpus_path);
}

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline nlohmann::json grasp_json(const GraspCandidate& c)
{
  return {{"id", c.id}, {"confidence", c.confidence}, {"contact", vec_json(c.contact)}, {"pose", pose_to_json(c.pose)}};
}

inline std::string fmt_vec(const Vec3& v)
{
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "[" << v.x() << ", " << v.y() << ", " << v.z() << "]";
  return s.str();
}

struct SelectRun
{
  const SceneFile* scene = nullptr;
  TaskSpec task;
  std::optional<std::size_t> view;
  nlohmann::json extra = nlohmann::json::object();
};

// Shared tail of `select` and `views`: pipeline on one frame, outputs under
// the output directory. Returns the exit status.
inline int run_select(const RunConfig& rc, const SelectRun& run, const VlmBackend& backend, std::ostream& out,
                      std::ostream& err)
{
  const auto& sf = *run.scene;
  const auto cfg = pipeline_for(rc, SeedingMode::PlusPlus);
  const std::uint64_t scene_seed = derive_seed(rc.seed, 0, 0);
  const fs::path dir(rc.output_dir);

  const auto inputs = prepare_inputs(sf, cfg, scene_seed, run.view);
  const auto [clusters, reps] = diversify_inputs(inputs, cfg, scene_seed);
  write_json_file((dir / "clusters.json").string(), cluster_result_to_json(clusters));

  const auto& obj = sf.scene.target();
  QueryContext ctx;
  ctx.object = &obj;
  ctx.match_set = &inputs.feasible;
  ctx.world_cloud = &inputs.world_cloud;
  const auto sel = select_grasp(inputs.obs, reps, run.task, rc.strategy, backend, ctx, cfg.select);

  if (!sel.bundle.images.empty() || !sel.bundle.prompt.empty())
    write_query_dump(dir / "query", sel.bundle);
  const auto audit_path = (dir / "audit.jsonl").string();
  std::error_code ec;
  fs::remove(audit_path, ec);
  append_audit(audit_path, sel.audit);

  if (!sel.ok())
  {
    err << "error: " << sel.error_message << "\n";
    return static_cast<int>(sel.error.value_or(ErrorKind::ModelError));
  }
  const auto& chosen = *sel.chosen;
  nlohmann::json j = {{"scene", sf.name},
                      {"task", task_to_json(run.task)},
                      {"strategy", std::string(to_string(rc.strategy))},
                      {"seed", rc.seed},
                      {"backend", backend.name()},
                      {"grasp", grasp_json(chosen)},
                      {"parsed_reply", sel.audit.parsed},
                      {"fallback_used", sel.audit.fallback_used},
                      {"task_compliant", check_compliance(chosen, run.task, obj)},
                      {"grasp_success_proxy", grasp_success_proxy(chosen, obj, cfg.select.grip, cfg.success)}};
  if (run.view)
    j["view"] = *run.view;
  for (const auto& [k, v] : run.extra.items())
    j[k] = v;
  write_json_file((dir / "chosen_grasp.json").string(), j);
  out << "chosen grasp " << chosen.id << " contact " << fmt_vec(chosen.contact) << " confidence " << std::fixed
      << std::setprecision(4) << chosen.confidence << "\n";
  return 0;
}
}  // namespace cli_detail

inline std::string exit_code_table()
{
  std::string t = "Exit codes:\n  0  success\n  1  unexpected internal error\n";
  for (int k = static_cast<int>(ErrorKind::ConfigError); k <= static_cast<int>(ErrorKind::IoError); ++k)
  {
    std::string code = std::to_string(k);
    t += "  " + code + std::string(3 - code.size(), ' ') + std::string(to_string(static_cast<ErrorKind>(k))) + "\n";
  }
  t += "Command-line usage errors exit with 2 (ConfigError).\n";
  return t;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Task-oriented grasp selection with vision-language model prompting", "taskgrasp"};
  app.footer(exit_code_table());
  app.require_subcommand(1);

  // Flag values, applied over the config file.
  std::string config_path, scene, corpus, task_text, category, region, strategy, strategies, k_values, k, seeding,
      script, oracle, endpoint_url, model, api_key_env, out_dir, order;
  bool builtin = false, avoid = false, dump = false, fallback = false, geometry_main = false;
  std::optional<std::size_t> task_index;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs, reprompt, count, top_k_opt;
  std::optional<double> timeout;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "JSON run config; flags override its values");
    c->add_option("--out", out_dir, "Output directory (every file is written below it)");
    c->add_option("--seed", seed, "Run seed; fixes every random choice");
    c->add_option("--k", k, "Cluster count, or 'auto' for silhouette selection");
    c->add_option("--seeding", seeding, "Cluster seeding: plusplus or nested");
    c->add_option("--candidates", count, "Synthetic candidates per scene");
    c->add_option("--prefilter-top-k", top_k_opt, "Keep only the most confident N candidates (0 = all)");
    c->add_option("--candidate-order", order, "filter-first or top-k-first");
  };
  auto add_scene = [&](CLI::App* c) {
    c->add_option("--scene", scene, "Scene file");
    c->add_option("--task", task_text, "Task description (overrides the scene's task)");
    c->add_option("--category", category, "specific-position, tool-use or handover");
    c->add_option("--region", region, "Target region name for --task");
    c->add_flag("--avoid", avoid, "The contact must avoid --region instead");
    c->add_option("--task-index", task_index, "Which of the scene's tasks to use");
  };
  auto add_backend = [&](CLI::App* c) {
    c->add_option("--script", script, "Scripted backend file");
    c->add_option("--oracle", oracle, "Ground-truth backend: omniscient or adversarial");
    c->add_option("--endpoint", endpoint_url, "Chat endpoint URL (http or https)");
    c->add_option("--model", model, "Model name sent to the endpoint");
    c->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    c->add_option("--timeout", timeout, "Per-request timeout in seconds");
    c->add_option("--reprompt-limit", reprompt, "Re-asks after an unreadable reply");
    c->add_flag("--fallback-top-confidence", fallback, "Use the most confident grasp when the reply is unusable");
  };
  auto add_corpus = [&](CLI::App* c) {
    c->add_option("--corpus", corpus, "Corpus manifest");
    c->add_flag("--builtin-corpus", builtin, "Use the ten built-in synthetic scenes");
    c->add_option("--jobs", jobs, "Parallel trials");
    c->add_flag("--dump-queries", dump, "Write each trial's query images and prompt");
  };

  auto* select = app.add_subcommand("select", "Choose a grasp for one scene and task");
  add_common(select);
  add_scene(select);
  add_backend(select);
  select->add_option("--strategy", strategy, "GSI, CPSI, GMI, CPMI or CPG");

  auto* evaluate = app.add_subcommand("evaluate", "Run every strategy and the baseline over a corpus");
  add_common(evaluate);
  add_backend(evaluate);
  add_corpus(evaluate);
  evaluate->add_option("--strategies", strategies, "Comma-separated strategy list");

  auto* sweep = app.add_subcommand("sweep-k", "Metrics per fixed K over the clustering strategies");
  add_common(sweep);
  add_backend(sweep);
  add_corpus(sweep);
  sweep->add_option("--k-values", k_values, "Comma-separated ascending K list (default 1..6)");

  auto* views = app.add_subcommand("views", "Pick the clearest camera view, then select a grasp on it");
  add_common(views);
  add_scene(views);
  add_backend(views);
  views->add_option("--strategy", strategy, "GSI, CPSI, GMI, CPMI or CPG");
  views->add_flag("--geometry-from-main-camera", geometry_main, "Match points against the main camera's cloud");

  auto* debug = app.add_subcommand("render-debug", "Dump the frame, cloud, candidates and every query bundle");
  add_common(debug);
  add_scene(debug);

  auto* export_corpus = app.add_subcommand("export-corpus", "Write the built-in scenes as scene files");
  export_corpus->add_option("--out", out_dir, "Output directory");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::ConfigError);
  }

  try
  {
    RunConfig rc;
    if (!config_path.empty())
      cli_detail::apply_json(rc, read_json_file(config_path), fs::path(config_path).parent_path());

    if (!scene.empty())
      rc.scene_path = scene;
    if (!corpus.empty())
      rc.corpus_path = corpus;
    if (builtin)
      rc.builtin_corpus = true;
    if (!task_text.empty() || !region.empty())
    {
      if (task_text.empty() || region.empty())
        fail(ErrorKind::ConfigError, "--task and --region go together");
      rc.task = TaskSpec{task_text, category.empty() ? TaskCategory::SpecificPosition : category_from_string(category),
                         region, avoid ? Polarity::Avoid : Polarity::Require};
    }
    if (task_index)
      rc.task_index = *task_index;
    if (!strategy.empty())
      rc.strategy = strategy_from_string(strategy);
    if (!strategies.empty())
      rc.strategies = cli_detail::strategies_from_list(cli_detail::split_list(strategies));
    if (!k_values.empty())
    {
      rc.k_values.clear();
      for (const auto& v : cli_detail::split_list(k_values))
      {
        try
        {
          rc.k_values.push_back(std::stoi(v));
        }
        catch (const std::exception&)
        {
          fail(ErrorKind::ConfigError, "bad K value '" + v + "'");
        }
      }
    }
    if (!k.empty())
    {
      if (k == "auto")
        cli_detail::set_k(rc.pipeline.cluster, "auto");
      else
      {
        try
        {
          cli_detail::set_k(rc.pipeline.cluster, std::stoi(k));
        }
        catch (const std::invalid_argument&)
        {
          fail(ErrorKind::ConfigError, "--k must be an integer or 'auto'");
        }
      }
    }
    if (!seeding.empty())
      rc.seeding = cli_detail::seeding_from_string(seeding);
    if (count)
      rc.pipeline.candidate_count = *count;
    if (top_k_opt)
      rc.pipeline.prefilter_top_k = *top_k_opt;
    if (!order.empty())
      rc.pipeline.order = cli_detail::order_from_string(order);
    if (seed)
      rc.seed = *seed;
    if (jobs)
      rc.jobs = *jobs;
    if (dump)
      rc.dump_queries = true;
    if (geometry_main)
      rc.pipeline.geometry_from_main_camera = true;
    if (reprompt)
      rc.pipeline.select.reprompt_limit = *reprompt;
    if (fallback)
      rc.pipeline.select.fallback_to_top_confidence = true;
    if (!out_dir.empty())
      rc.output_dir = out_dir;
    if (!script.empty() || !oracle.empty() || !endpoint_url.empty())
    {
      rc.backend = {};
      if (!script.empty())
        rc.backend.script_path = script;
      if (!oracle.empty())
        rc.backend.oracle = oracle;
      if (!endpoint_url.empty())
        rc.backend.endpoint = VlmEndpointConfig{endpoint_url, model, api_key_env};
    }
    if (rc.backend.endpoint)
    {
      if (!model.empty())
        rc.backend.endpoint->model_name = model;
      if (!api_key_env.empty())
        rc.backend.endpoint->api_key_env_var_name = api_key_env;
      if (timeout)
        rc.backend.endpoint->timeout_seconds = *timeout;
      rc.backend.endpoint->validate();
    }
    if (rc.jobs < 1)
      fail(ErrorKind::ConfigError, "--jobs must be >= 1");
    rc.pipeline.validate();

    if (export_corpus->parsed())
    {
      cli_detail::make_output_dir(rc.output_dir);
      const fs::path dir(rc.output_dir);
      nlohmann::json manifest = {{"format_version", 1}, {"scenes", nlohmann::json::array()}};
      for (const auto& sf : builtin_corpus())
      {
        write_json_file((dir / (sf.name + ".json")).string(), scene_file_to_json(sf));
        manifest["scenes"].push_back(sf.name + ".json");
      }
      write_json_file((dir / "manifest.json").string(), manifest);
      const auto ring = ring_view_scene();
      write_json_file((dir / (ring.name + ".json")).string(), scene_file_to_json(ring));
      out << "wrote " << manifest["scenes"].size() << " scenes, manifest.json and " << ring.name << ".json\n";
      return 0;
    }

    if (select->parsed() || views->parsed() || debug->parsed())
    {
      if (!rc.scene_path)
        fail(ErrorKind::ConfigError, "a scene file is required (--scene)");
      const auto sf = load_scene_file(*rc.scene_path);
      const auto task = cli_detail::resolve_task(rc, sf);
      cli_detail::check_output_dir(rc.output_dir);

      if (debug->parsed())
      {
        cli_detail::make_output_dir(rc.output_dir);
        const fs::path dir(rc.output_dir);
        const auto cfg = cli_detail::pipeline_for(rc, SeedingMode::PlusPlus);
        const std::uint64_t scene_seed = derive_seed(rc.seed, 0, 0);
        const auto inputs = prepare_inputs(sf, cfg, scene_seed);
        write_png((dir / "rgb.png").string(), inputs.obs.rgb);
        write_depth((dir / "depth.png").string(), (dir / "depth.json").string(), inputs.obs.depth,
                    DepthMeta{DepthMeta{}.depth_scale, inputs.obs.intrinsics});
        write_ply((dir / "cloud.ply").string(), inputs.world_cloud);
        save_candidates((dir / "candidates.json").string(), inputs.candidates);
        save_candidates((dir / "feasible.json").string(), inputs.feasible);
        const auto [clusters, reps] = diversify_inputs(inputs, cfg, scene_seed);
        write_json_file((dir / "clusters.json").string(), cluster_result_to_json(clusters));
        save_candidates((dir / "representatives.json").string(), reps);
        for (Strategy s : kAllStrategies)
        {
          try
          {
            write_query_dump(dir / ("query_" + std::string(to_string(s))),
                             build_query(inputs.obs, reps, task, s, cfg.select.style, cfg.select.grip));
          }
          catch (const Error& e)
          {
            err << "warning: " << to_string(s) << " query not built: " << e.what() << "\n";
          }
        }
        out << "candidates " << inputs.candidates.size() << ", feasible " << inputs.feasible.size()
            << ", representatives " << reps.size() << "\n";
        return 0;
      }

      const auto backend = cli_detail::make_backend(rc.backend);
      cli_detail::SelectRun run{&sf, task, std::nullopt, nlohmann::json::object()};
      if (views->parsed())
      {
        if (sf.views.empty())
          fail(ErrorKind::ConfigError, "scene '" + sf.name + "' has no views");
        std::vector<SceneObservation> frames;
        std::vector<double> annotated;
        for (std::size_t i = 0; i < sf.views.size(); ++i)
        {
          frames.push_back(observe_view(sf, i));
          annotated.push_back(sf.views[i].visibility.value_or(-1.0));
        }
        const auto scores = score_views(frames, sf.scene.target().name, StubDetector(annotated));
        const auto chosen = select_view(scores);
        cli_detail::make_output_dir(rc.output_dir);
        nlohmann::json vj = nlohmann::json::array();
        bool any_positive = false;
        for (const auto& s : scores)
        {
          out << "view " << s.view_index << ": " << std::fixed << std::setprecision(4) << s.confidence
              << (s.failed ? " (detector failed)" : "") << "\n";
          vj.push_back({{"view", s.view_index}, {"confidence", s.confidence}, {"failed", s.failed}});
          any_positive = any_positive || s.confidence > 0.0;
        }
        if (!any_positive)
          err << "warning: every view scored zero; using view " << chosen << "\n";
        out << "selected view " << chosen << "\n";
        write_json_file((fs::path(rc.output_dir) / "views.json").string(),
                        {{"scores", vj}, {"selected_view", chosen}});
        run.view = chosen;
        run.extra["view_scores"] = vj;
      }
      cli_detail::make_output_dir(rc.output_dir);
      return cli_detail::run_select(rc, run, *backend, out, err);
    }

    // evaluate and sweep-k
    const auto scenes = cli_detail::resolve_corpus(rc);
    cli_detail::check_output_dir(rc.output_dir);
    const auto backend = cli_detail::make_backend(rc.backend);
    const fs::path dir(rc.output_dir);
    RunOptions opts;
    opts.seed = rc.seed;
    opts.jobs = rc.jobs;

    if (sweep->parsed())
    {
      const auto cfg = cli_detail::pipeline_for(rc, SeedingMode::NestedRefinement);
      const auto rows = compare_k_sweep(scenes, rc.k_values, *backend, cfg, opts);
      cli_detail::make_output_dir(rc.output_dir);
      const auto csv = k_sweep_to_csv(rows);
      cli_detail::write_text(dir / "sweep_k.csv", csv);
      nlohmann::json j = {{"seed", rc.seed}, {"rows", nlohmann::json::array()}};
      for (const auto& r : rows)
      {
        auto s = summary_to_json(r.summary);
        s["k"] = r.k;
        j["rows"].push_back(s);
      }
      write_json_file((dir / "sweep_k.json").string(), j);
      out << csv;
      return 0;
    }

    const auto cfg = cli_detail::pipeline_for(rc, SeedingMode::PlusPlus);
    cli_detail::make_output_dir(rc.output_dir);
    if (rc.dump_queries)
      opts.on_trial = [&](const TrialOutcome& t, const Selection& sel) {
        const auto tdir = dir / "trials" / std::to_string(t.trial_id);
        write_query_dump(tdir, sel.bundle);
        write_json_file((tdir / "audit.json").string(), audit_to_json(sel.audit));
      };
    const auto report = run_trials(scenes, rc.strategies, *backend, cfg, opts);
    write_json_file((dir / "report.json").string(), report_to_json(report));
    const auto csv = report_to_csv(report);
    cli_detail::write_text(dir / "report.csv", csv);
    std::ofstream audit(dir / "audit.jsonl");
    for (const auto& t : report.trials)
      if (t.audit)
        audit << nlohmann::json{{"trial_id", t.trial_id}, {"scene", t.scene}, {"audit", audit_to_json(*t.audit)}}.dump()
              << '\n';
    if (!audit)
      fail(ErrorKind::IoError, "cannot write " + (dir / "audit.jsonl").string());
    out << csv;
    return 0;
  }
  catch (const Error& e)
  {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  }
  catch (const std::exception& e)
  {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace taskgrasp
