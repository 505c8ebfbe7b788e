// End-to-end acceptance suite. Each criterion is one test; the environment
// prints a PASS/FAIL line per criterion once everything has run.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "taskgrasp/cli.hpp"

using namespace taskgrasp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace
{
struct Verdict
{
  std::string title;
  bool passed = false;
  std::string detail;
};

std::map<int, Verdict>& verdicts()
{
  static std::map<int, Verdict> v;
  return v;
}

const std::map<int, std::string> kTitles = {
    {1, "projection round-trip"},
    {2, "clustering matches brute force"},
    {3, "representative is the cluster's confidence argmax"},
    {4, "contact-point matching matches brute force"},
    {5, "prompt bundle contracts (golden)"},
    {6, "reply parsing corpus"},
    {7, "end-to-end with ground-truth scripted backends"},
    {8, "view selection"},
    {9, "evaluate is deterministic"},
    {10, "nested K sweep is non-decreasing"},
};

void record(int n, const std::string& detail)
{
  verdicts()[n] = {kTitles.at(n), !::testing::Test::HasFailure(), detail};
}

class PrintVerdicts : public ::testing::Environment
{
public:
  void TearDown() override
  {
    std::cout << "\nAcceptance summary\n";
    for (const auto& [n, title] : kTitles)
    {
      const auto it = verdicts().find(n);
      if (it == verdicts().end())
        std::cout << "[SKIP] criterion " << n << ": " << title << "\n";
      else
        std::cout << (it->second.passed ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << title << " ("
                  << it->second.detail << ")\n";
    }
  }
};
[[maybe_unused]] const auto* const kEnv = ::testing::AddGlobalTestEnvironment(new PrintVerdicts);

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int prec = 3)
{
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

ErrorKind kind_of(auto&& fn)
{
  try
  {
    fn();
  }
  catch (const Error& e)
  {
    return e.kind();
  }
  return ErrorKind::IoError;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr)
{
  args.insert(args.begin(), "taskgrasp");
  std::vector<const char*> argv;
  for (const auto& a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text)
    *out_text = out.str();
  if (code != 0)
    std::cerr << err.str();
  return code;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Contact `c` with the gripper coming straight down, jaws closing along `closing`.
GraspCandidate downward(int id, const Vec3& c, double conf, const Vec3& closing = Vec3::UnitX())
{
  const GripperGeometry grip;
  Mat3 r;
  r.col(1) = closing.normalized();
  r.col(2) = -Vec3::UnitZ();
  r.col(0) = r.col(1).cross(r.col(2));
  return make_candidate(make_pose(r, c - r * Vec3(0, 0, grip.finger_length)), conf, id, grip);
}
}  // namespace

// 1 ------------------------------------------------------------------------
TEST(Acceptance, C01_ProjectionRoundTrip)
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> f(200, 1200), depth(0.05, 5.0);
  std::uniform_int_distribution<int> w(64, 640), h(48, 480);
  double worst = 0.0;
  int checked = 0;
  for (int cam = 0; cam < 10; ++cam)
  {
    CameraIntrinsics k;
    k.width = w(rng);
    k.height = h(rng);
    k.fx = f(rng);
    k.fy = f(rng);
    k.cx = std::uniform_real_distribution<double>(0, k.width)(rng);
    k.cy = std::uniform_real_distribution<double>(0, k.height)(rng);
    DepthImage d(k.width, k.height, 0.0);
    int set = 0;
    while (set < 100)
    {
      const int u = static_cast<int>(rng() % k.width), v = static_cast<int>(rng() % k.height);
      if (d.at(u, v) > 0)
        continue;
      d.at(u, v) = depth(rng);
      ++set;
    }
    const auto cloud = unproject(d, k);
    ASSERT_EQ(cloud.size(), 100u);
    for (std::size_t i = 0; i < cloud.size(); ++i)
    {
      const auto px = project(cloud.points[i], k);
      worst = std::max({worst, std::abs(px.u - cloud.pixels[i].u), std::abs(px.v - cloud.pixels[i].v)});
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  EXPECT_EQ(checked, 1000);
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(secs, 1.0);
  record(1, "1000 pixels, max error " + fmt(worst * 1e9, 3) + " npx, " + fmt(secs) + " s");
}

// 2 ------------------------------------------------------------------------
TEST(Acceptance, C02_ClusteringOracle)
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  double worst_inertia = 0.0, worst_sil = 0.0;
  for (int trial = 0; trial < 200; ++trial)
  {
    const int n = 3 + static_cast<int>(rng() % 10);  // 3..12
    const int k = 1 + static_cast<int>(rng() % 3);   // 1..3
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i)
      pts.emplace_back(u(rng), u(rng), u(rng));
    ClusterConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto res = kmeans_multi_restart(pts, k, cfg);
    worst_inertia = std::max(worst_inertia, std::abs(res.inertia - oracle::optimal_inertia(pts, k)));

    // Silhouette on the clustering found, or on a random 2-3 way split when k is 1.
    std::vector<int> labels = res.assignments;
    if (k == 1)
    {
      const int parts = 2 + static_cast<int>(rng() % 2);
      for (int i = 0; i < n; ++i)
        labels[i] = i < parts ? i : static_cast<int>(rng() % parts);
    }
    const double mine = silhouette(pts, labels);
    worst_sil = std::max(worst_sil, std::abs(mine - oracle::silhouette(pts, labels)));
  }
  const double secs = seconds_since(t0);
  EXPECT_LE(worst_inertia, 1e-9);
  EXPECT_LE(worst_sil, 1e-9);
  EXPECT_LT(secs, 30.0);
  record(2, "200 instances, max inertia gap " + fmt(worst_inertia * 1e12, 3) + "e-12, max silhouette gap " +
                fmt(worst_sil * 1e12, 3) + "e-12, " + fmt(secs) + " s");
}

// 3 ------------------------------------------------------------------------
TEST(Acceptance, C03_RepresentativeSelection)
{
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  int sets = 0, clusters = 0;
  for (int trial = 0; trial < 100; ++trial)
  {
    CandidateSet set;
    const int n = 4 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i)
    {
      // Coarse confidences so ties are common; shuffled ids.
      const double conf = static_cast<double>(1 + rng() % 10) / 10.0;
      set.candidates.push_back(fixtures::rep_at(static_cast<int>((i * 7919) % 1000), Vec3(u(rng), u(rng), u(rng)), conf));
    }
    ClusterConfig cfg;
    cfg.k = 1 + static_cast<int>(rng() % 5);
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto [result, reps] = diversify(set, cfg);

    for (int c = 0; c < result.k(); ++c)
    {
      const GraspCandidate* best = nullptr;
      for (const auto& cand : set.candidates)
      {
        if (result.cluster_of(cand.id) != c)
          continue;
        if (!best || cand.confidence > best->confidence ||
            (cand.confidence == best->confidence && cand.id < best->id))
          best = &cand;
      }
      ASSERT_NE(best, nullptr);
      EXPECT_EQ(result.representatives[c], best->id);
      ++clusters;
    }
    for (double scale : {0.5, 0.3, 0.01})
    {
      CandidateSet scaled = set;
      for (auto& cand : scaled.candidates)
        cand.confidence *= scale;
      EXPECT_EQ(diversify(scaled, cfg).first.representatives, result.representatives);
    }
    ++sets;
  }
  record(3, std::to_string(sets) + " sets, " + std::to_string(clusters) + " clusters, 3 rescalings each");
}

// 4 ------------------------------------------------------------------------
namespace
{
std::optional<std::size_t> exhaustive_match(const PixelPoint& px, const PointCloud& world, const CandidateSet& cands,
                                            const CameraIntrinsics& k, const Pose& cam, double threshold)
{
  const Pose to_cam = cam.inverse();
  double best_d = 1e300;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < world.size(); ++i)
  {
    const Vec3 p = to_cam.apply(world.points[i]);
    if (p.z() <= 0)
      continue;
    const double du = k.fx * p.x() / p.z() + k.cx - px.u, dv = k.fy * p.y() / p.z() + k.cy - px.v;
    const double d = std::sqrt(du * du + dv * dv);
    if (d < best_d)
    {
      best_d = d;
      best_i = i;
    }
  }
  if (best_d > threshold)
    return std::nullopt;
  double best_c = 1e300;
  std::size_t best = 0;
  for (std::size_t c = 0; c < cands.size(); ++c)
  {
    const double d = (cands[c].contact - world.points[best_i]).squaredNorm();
    if (d < best_c)
    {
      best_c = d;
      best = c;
    }
  }
  return best;
}
}  // namespace

TEST(Acceptance, C04_CpgMatchingOracle)
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-0.08, 0.08), ang(-0.5, 0.5);
  const auto k = fixtures::vga();
  int hits = 0, off_cases = 0, off_ok = 0;
  for (int scene = 0; scene < 100; ++scene)
  {
    // Object points near the optical axis 0.6-0.9 m away, seen from a random camera pose.
    const Pose cam = axis_angle_pose(Vec3(u(rng), u(rng), 1).normalized(), ang(rng), Vec3(u(rng), u(rng), u(rng)));
    PointCloud local;
    const int n = 50 + static_cast<int>(rng() % 4951);
    for (int i = 0; i < n; ++i)
      local.points.emplace_back(u(rng), u(rng), 0.75 + u(rng));
    const PointCloud world = transform_cloud(local, cam);
    CandidateSet reps;
    const int m = 1 + static_cast<int>(rng() % 8);
    for (int c = 0; c < m; ++c)
      reps.candidates.push_back(fixtures::rep_at(c, cam.apply(Vec3(u(rng), u(rng), 0.75 + u(rng))), 0.5));

    for (int q = 0; q < 10; ++q)
    {
      // On-object query: a projected point jittered by up to 5 px.
      const auto p = project(local.points[rng() % local.size()], k);
      const PixelPoint px{p.u + 10 * (u(rng) / 0.16), p.v + 10 * (u(rng) / 0.16)};
      const auto want = exhaustive_match(px, world, reps, k, cam, 20.0);
      ASSERT_TRUE(want.has_value());
      EXPECT_EQ(match_point_details(px, world, reps, k, cam).candidate_index, *want);
      ++hits;
    }
    for (const PixelPoint px : {PixelPoint{5, 5}, PixelPoint{634, 5}, PixelPoint{5, 474}, PixelPoint{634, 474}})
    {
      if (exhaustive_match(px, world, reps, k, cam, 20.0))
        continue;  // not a constructed off-object case
      ++off_cases;
      off_ok += kind_of([&] { match_point_to_grasp(px, world, reps, k, cam); }) == ErrorKind::VlmPointOffObject;
    }
  }
  const double secs = seconds_since(t0);
  EXPECT_GE(off_cases, 300);
  EXPECT_EQ(off_ok, off_cases);
  EXPECT_LT(secs, 10.0);
  record(4, std::to_string(hits) + " on-object queries exact, " + std::to_string(off_ok) + "/" +
                std::to_string(off_cases) + " off-object rejected, " + fmt(secs) + " s");
}

// 5 ------------------------------------------------------------------------
namespace
{
const char* const kTemplates[] = {
    "Given an image showing the object with different grasp candidates highlighted in red, green, and blue, your task "
    "is to analyze these grasp candidates based on the task description and choose the index of the grasp that would "
    "best accomplish the task.",
    "Given an image showing the object with different grasp candidates highlighted in red, green, and blue dots, your "
    "task is to analyze these grasp candidates based on the task description and choose the index of the grasp that "
    "would best accomplish the task.",
    "Given multiple images, each showing the object with a different grasp candidate highlighted in red, and a task "
    "description, your task is to analyze the grasp candidates in each image based on the task description and "
    "choose the index of the grasp that would best accomplish the task.",
    "Given multiple images, each showing the object with a different grasp candidate with a red dot, and a task "
    "description, your task is to analyze the grasp candidates in each image based on the task description and "
    "choose the index of the grasp that would best accomplish the task.",
    "Given an image of the scene and a task description, you should provide a point on the image where the robot "
    "should grasp the object to best accomplish the task.",
};

std::string expected_prompt(Strategy s, const std::string& task, std::size_t n, const MarkerStyle& style)
{
  std::string p = kTemplates[static_cast<int>(s)];
  p += "\nTask: " + task + "\n";
  if (s == Strategy::GSI || s == Strategy::CPSI)
  {
    for (std::size_t i = 0; i < n; ++i)
      p += (i ? ", grasp " : "Grasp ") + std::to_string(i + 1) + " is " + style.palette[i].name;
    p += ".\nAnswer with JSON: {\"choice\": <1-based index>}";
  }
  else if (s == Strategy::CPG)
    p += "The point must lie on the object, in pixel coordinates of the 640x480 image (u to the right, v "
         "downward).\nAnswer with JSON: {\"point\": [u, v]}";
  else
  {
    for (std::size_t i = 0; i < n; ++i)
      p += (i ? ", image " : "Image ") + std::to_string(i + 1) + " shows grasp " + std::to_string(i + 1);
    p += ".\nAnswer with JSON: {\"choice\": <1-based index>}";
  }
  return p;
}

fs::path golden_path() { return fs::path(TASKGRASP_TEST_DATA) / "golden" / "prompt_bundles.json"; }
}  // namespace

TEST(Acceptance, C05_PromptBundleContracts)
{
  const auto sf = builtin_corpus().front();  // mug
  const auto obs = observe(sf);
  const auto& mug = sf.scene.target();
  const auto task = sf.tasks.front();
  const MarkerStyle style;
  // Three well separated contacts on the mug: rim left, rim right, handle.
  CandidateSet all;
  all.candidates = {downward(4, mug.pose.apply(Vec3(-0.03, 0, 0.09)), 0.8),
                    downward(9, mug.pose.apply(Vec3(0.0, 0.03, 0.09)), 0.6, Vec3::UnitY()),
                    downward(2, mug.pose.apply(Vec3(0.045, 0, 0.075)), 0.4, Vec3::UnitY())};

  nlohmann::json actual = nlohmann::json::object();
  int bundles = 0;
  for (Strategy s : kAllStrategies)
    for (std::size_t n = 1; n <= 3; ++n)
    {
      CandidateSet reps;
      reps.candidates.assign(all.candidates.begin(), all.candidates.begin() + static_cast<long>(n));
      const auto b = build_query(obs, reps, task, s);
      const std::string key = std::string(to_string(s)) + "/" + std::to_string(n);
      ++bundles;

      // Live contract checks, independent of the golden file.
      EXPECT_EQ(b.prompt, expected_prompt(s, task.description, n, style)) << key;
      nlohmann::json images = nlohmann::json::array();
      if (s == Strategy::CPG)
      {
        ASSERT_EQ(b.images.size(), 1u);
        EXPECT_EQ(b.images[0].data, obs.rgb.data) << "CPG image must be the raw frame";
        EXPECT_TRUE(b.candidate_order.empty());
      }
      else
      {
        const bool single = s == Strategy::GSI || s == Strategy::CPSI;
        const bool dots = s == Strategy::CPSI || s == Strategy::CPMI;
        EXPECT_EQ(b.images.size(), single ? 1u : n) << key;
        std::vector<int> ids;
        for (const auto& c : reps.candidates)
          ids.push_back(c.id);
        EXPECT_EQ(b.candidate_order, ids) << key;
        for (std::size_t i = 0; i < b.images.size(); ++i)
        {
          nlohmann::json marks = nlohmann::json::object();
          for (std::size_t c = 0; c < 3; ++c)
          {
            const int comps = fixtures::components(b.images[i], style.palette[c].color);
            marks[style.palette[c].name] = comps;
            // Single image: colour c marks candidate c. Multi image: only red.
            const bool expected = single ? c < n : c == 0;
            if (!expected)
              EXPECT_EQ(comps, 0) << key << " image " << i << " " << style.palette[c].name;
            else if (dots)
              EXPECT_EQ(comps, 1) << key << " image " << i << " " << style.palette[c].name;
            else
              EXPECT_GE(comps, 1) << key << " image " << i << " " << style.palette[c].name;
          }
          images.push_back({{"markers", marks}, {"hash", image_hash(b.images[i])}});
        }
      }
      if (s == Strategy::CPG)
        images.push_back({{"hash", image_hash(b.images[0])}});
      actual[key] = {{"image_count", b.images.size()},
                     {"candidate_order", b.candidate_order},
                     {"prompt", b.prompt},
                     {"images", images}};
    }

  if (std::getenv("TASKGRASP_UPDATE_GOLDEN"))
  {
    fs::create_directories(golden_path().parent_path());
    std::ofstream(golden_path()) << actual.dump(2) << "\n";
  }
  ASSERT_TRUE(fs::exists(golden_path())) << "missing golden file; rerun with TASKGRASP_UPDATE_GOLDEN=1";
  const auto golden = nlohmann::json::parse(slurp(golden_path()));
  for (const auto& [key, value] : actual.items())
    EXPECT_EQ(golden.value(key, nlohmann::json()), value) << "golden mismatch for " << key;
  EXPECT_EQ(golden.size(), actual.size());
  record(5, std::to_string(bundles) + " bundles, 5 strategies x 1..3 candidates, checked against templates and golden file");
}

// 6 ------------------------------------------------------------------------
namespace
{
struct ParseCase
{
  std::string raw;
  Strategy strategy;
  std::size_t n;
  std::optional<int> choice;         // 1-based
  std::optional<PixelPoint> point;   // CPG
  std::optional<ErrorKind> error;
};

std::vector<ParseCase> parse_corpus()
{
  const auto GSI = Strategy::GSI, GMI = Strategy::GMI, CPMI = Strategy::CPMI, CPSI = Strategy::CPSI,
             CPG = Strategy::CPG;
  using E = ErrorKind;
  return {
      {"2", GSI, 3, 2, {}, {}},
      {"  3\n", GMI, 3, 3, {}, {}},
      {"I choose 1.", CPMI, 3, 1, {}, {}},
      {"grasp 2", GSI, 3, 2, {}, {}},
      {"Grasp #3 is best", GMI, 3, 3, {}, {}},
      {"The best option is candidate 1 because it avoids the blade.", CPSI, 3, 1, {}, {}},
      {"image 2", CPMI, 3, 2, {}, {}},
      {"{\"choice\": 2}", GSI, 3, 2, {}, {}},
      {"```json\n{\"choice\": 3}\n```", GMI, 3, 3, {}, {}},
      {"Looking at grasp 1 and grasp 3... {\"choice\": 3}", GSI, 3, 3, {}, {}},
      {"The green one.", GSI, 3, 2, {}, {}},
      {"BLUE", CPSI, 3, 3, {}, {}},
      {"red, definitely red", CPSI, 3, 1, {}, {}},
      {"red or blue", GSI, 3, {}, {}, E::AmbiguousReply},
      {"grasp 1 or grasp 2", GMI, 3, {}, {}, E::AmbiguousReply},
      {"1 or 2", CPMI, 3, {}, {}, E::AmbiguousReply},
      {"grasp 4", GSI, 3, {}, {}, E::IndexOutOfRange},
      {"{\"choice\": 0}", GMI, 2, {}, {}, E::IndexOutOfRange},
      {"I cannot tell.", GSI, 3, {}, {}, E::UnparseableReply},
      {"", GMI, 3, {}, {}, E::UnparseableReply},
      {"the red one", GMI, 3, {}, {}, E::UnparseableReply},  // colour words only mean something in one image
      {"{\"point\": [320, 240]}", CPG, 0, {}, PixelPoint{320, 240}, {}},
      {"{\"point\": [12.5, 40.25]}", CPG, 0, {}, PixelPoint{12.5, 40.25}, {}},
      {"(100, 200)", CPG, 0, {}, PixelPoint{100, 200}, {}},
      {"[ 17 , 33 ]", CPG, 0, {}, PixelPoint{17, 33}, {}},
      {"u=50, v=60", CPG, 0, {}, PixelPoint{50, 60}, {}},
      {"The handle is at u: 400 and v: 120.", CPG, 0, {}, PixelPoint{400, 120}, {}},
      {"(10, 10) or (20, 20)", CPG, 0, {}, {}, E::AmbiguousReply},
      {"{\"point\": [700, 10]}", CPG, 0, {}, {}, E::PointOutOfImage},
      {"somewhere on the handle", CPG, 0, {}, {}, E::UnparseableReply},
  };
}
}  // namespace

TEST(Acceptance, C06_ReplyParsingCorpus)
{
  const auto corpus = parse_corpus();
  ASSERT_EQ(corpus.size(), 30u);
  int agreed = 0, round_trips = 0;
  for (const auto& c : corpus)
  {
    bool ok = true;
    try
    {
      const auto r = parse_reply(c.raw, c.strategy, c.n, 640, 480);
      if (c.error)
        ok = false;
      else if (c.choice)
        ok = r.is_index() && r.index() + 1 == *c.choice;
      else
        ok = !r.is_index() && r.point() == *c.point;
      const auto again = parse_reply(canonical_reply(r.parsed), c.strategy, c.n, 640, 480);
      EXPECT_EQ(again.parsed, r.parsed) << "round trip of '" << c.raw << "'";
      round_trips += again.parsed == r.parsed;
    }
    catch (const Error& e)
    {
      ok = c.error && e.kind() == *c.error;
      if (!ok)
        ADD_FAILURE() << "'" << c.raw << "' threw " << to_string(e.kind());
    }
    EXPECT_TRUE(ok) << "'" << c.raw << "'";
    agreed += ok;
  }
  record(6, std::to_string(agreed) + "/30 replies as documented, " + std::to_string(round_trips) +
                " canonical round trips");
}

// 7 ------------------------------------------------------------------------
TEST(Acceptance, C07_EndToEndScripted)
{
  const auto t0 = Clock::now();
  const auto scenes = builtin_corpus();
  ASSERT_EQ(scenes.size(), 10u);
  const std::vector<Strategy> all(std::begin(kAllStrategies), std::end(kAllStrategies));
  PipelineConfig cfg;
  RunOptions opts;
  opts.seed = 2024;
  const auto good = run_trials(scenes, all, OracleVlm(OracleVlm::Mode::Omniscient), cfg, opts);
  const auto bad = run_trials(scenes, all, OracleVlm(OracleVlm::Mode::Adversarial), cfg, opts);

  std::ostringstream detail;
  double min_success = 1.0;
  for (std::size_t i = 0; i < all.size(); ++i)
  {
    const auto& [name, g] = good.per_strategy[i];
    const auto& b = bad.per_strategy[i].second;
    EXPECT_EQ(g.errors, 0) << name;
    EXPECT_DOUBLE_EQ(g.task_compliance_rate, 1.0) << name;
    EXPECT_GE(g.grasp_success_rate, 0.9) << name;
    EXPECT_DOUBLE_EQ(b.task_compliance_rate, 0.0) << name;
    min_success = std::min(min_success, g.grasp_success_rate);
  }

  // The corpus premise, checked independently: the most confident feasible
  // grasp misses the target region in at least 8 of 10 scenes.
  int misses = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s)
  {
    const auto in = prepare_inputs(scenes[s], cfg, derive_seed(opts.seed, 0, s));
    const GraspCandidate* top = &in.feasible[0];
    for (const auto& c : in.feasible.candidates)
      if (c.confidence > top->confidence || (c.confidence == top->confidence && c.id < top->id))
        top = &c;
    const auto& obj = scenes[s].scene.target();
    const auto& t = scenes[s].tasks.front();
    const bool inside = region_sdf(obj, obj.region(t.target_region), top->contact) <= 0.0;
    misses += (t.polarity == Polarity::Require) ? !inside : inside;
  }
  EXPECT_GE(misses, 8);
  const auto& baseline = good.per_strategy.back();
  ASSERT_EQ(baseline.first, kBaselineName);
  EXPECT_LT(baseline.second.task_compliance_rate, good.overall.task_compliance_rate);
  const double secs = seconds_since(t0);
  EXPECT_LT(secs, 120.0);
  detail << "omniscient compliance " << fmt(good.overall.task_compliance_rate) << ", min grasp success "
         << fmt(min_success) << ", adversarial " << fmt(bad.overall.task_compliance_rate) << ", baseline "
         << fmt(baseline.second.task_compliance_rate) << ", top grasp off target in " << misses << "/10, "
         << fmt(secs, 1) << " s";
  record(7, detail.str());
}

// 8 ------------------------------------------------------------------------
TEST(Acceptance, C08_ViewSelection)
{
  std::mt19937_64 rng(808);
  int vectors = 0;
  for (int t = 0; t < 50; ++t)
  {
    std::vector<DetectorScore> scores(1 + rng() % 8);
    for (std::size_t i = 0; i < scores.size(); ++i)
      scores[i] = {i, static_cast<double>(rng() % 5) / 4.0, false, ""};
    std::size_t want = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i].confidence > scores[want].confidence)
        want = i;
    EXPECT_EQ(select_view(scores), want);
    ++vectors;
  }

  const auto dir = fixtures::temp_dir("acceptance_views");
  ASSERT_EQ(run({"export-corpus", "--out", (dir / "corpus").string()}), 0);
  std::string out;
  ASSERT_EQ(run({"views", "--scene", (dir / "corpus" / "mug_ring.json").string(), "--oracle", "omniscient", "--out",
                 (dir / "o").string()},
                &out),
            0);
  const auto best = ring_view_scene().expected_best_view.value();
  EXPECT_NE(out.find("selected view " + std::to_string(best) + "\n"), std::string::npos) << out;
  record(8, std::to_string(vectors) + " random score vectors, ring scene picked view " + std::to_string(best));
}

// 9 ------------------------------------------------------------------------
TEST(Acceptance, C09_Determinism)
{
  const auto dir = fixtures::temp_dir("acceptance_determinism");
  std::ofstream(dir / "script.json") << R"({
    "rules": [{"strategy": "CPG", "respond": "{\"point\": [320, 300]}"},
              {"contains": "handle", "respond": "grasp 2"}],
    "default": "{\"choice\": 1}"})";
  for (const auto* sub : {"a", "b"})
    ASSERT_EQ(run({"evaluate", "--builtin-corpus", "--script", (dir / "script.json").string(), "--seed", "77",
                   "--out", (dir / sub).string()}),
              0);
  int identical = 0;
  for (const auto* f : {"report.json", "report.csv", "audit.jsonl"})
  {
    const auto a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
    identical += !a.empty() && a == slurp(dir / "b" / f);
  }
  record(9, std::to_string(identical) + "/3 output files byte-identical across two seeded runs");
}

// 10 -----------------------------------------------------------------------
TEST(Acceptance, C10_NestedKSweep)
{
  const auto scenes = builtin_corpus();
  PipelineConfig cfg;
  cfg.cluster.seeding = SeedingMode::NestedRefinement;
  std::ostringstream detail;
  for (std::uint64_t seed : {0u, 1u, 2u})
  {
    RunOptions opts;
    opts.seed = seed;
    const auto rows = compare_k_sweep(scenes, {1, 2, 3, 4, 5, 6}, OracleVlm(OracleVlm::Mode::Omniscient), cfg, opts);
    detail << (seed ? "; " : "") << "seed " << seed << ":";
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
      detail << " " << fmt(rows[i].summary.task_compliance_rate, 2);
      if (i > 0)
        EXPECT_GE(rows[i].summary.task_compliance_rate, rows[i - 1].summary.task_compliance_rate)
            << "seed " << seed << " K=" << rows[i].k;
    }
  }
  record(10, "compliance for K=1..6, " + detail.str());
}
