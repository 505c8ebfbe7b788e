#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"

namespace taskgrasp
{

enum class SeedingMode
{
  // Independent k-means++ seeding at every K.
  PlusPlus,
  // K+1 clustering splits one cluster of the K solution, so representatives
  // persist as K grows.
  NestedRefinement
};

struct ClusterConfig
{
  int k = 3;
  bool auto_k = false;
  int max_iterations = 100;
  double convergence_tol = 1e-6;  // meters
  std::uint64_t seed = 0;
  int auto_k_min = 2;
  int auto_k_max = 8;
  SeedingMode seeding = SeedingMode::PlusPlus;

  void validate() const
  {
    if (!auto_k && k < 1)
      fail(ErrorKind::ConfigError, "k must be >= 1");
    if (max_iterations < 1)
      fail(ErrorKind::ConfigError, "max_iterations must be >= 1");
    if (!(convergence_tol > 0.0))
      fail(ErrorKind::ConfigError, "convergence_tol must be positive");
    if (auto_k && (auto_k_min < 2 || auto_k_max < auto_k_min))
      fail(ErrorKind::ConfigError, "auto-K range must satisfy 2 <= min <= max");
  }
};

struct KMeansResult
{
  std::vector<int> assignments;  // per point
  std::vector<Vec3> centroids;
  double inertia = 0.0;
  int iterations = 0;
};

namespace detail
{
inline double partition_inertia(std::span<const Vec3> points, const std::vector<int>& labels,
                                const std::vector<Vec3>& centroids)
{
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    total += (points[i] - centroids[labels[i]]).squaredNorm();
  return total;
}

inline std::vector<Vec3> cluster_means(std::span<const Vec3> points, const std::vector<int>& labels, int k,
                                       const std::vector<Vec3>& fallback)
{
  std::vector<Vec3> sum(k, Vec3::Zero());
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i)
  {
    sum[labels[i]] += points[i];
    ++count[labels[i]];
  }
  for (int c = 0; c < k; ++c)
    sum[c] = count[c] > 0 ? Vec3(sum[c] / count[c]) : fallback[c];
  return sum;
}

// Moves points into empty clusters: the point farthest from its own centroid
// (ties: lowest index) among clusters that would stay non-empty.
inline void repair_empty(std::span<const Vec3> points, std::vector<int>& labels, std::vector<Vec3>& centroids)
{
  const int k = static_cast<int>(centroids.size());
  std::vector<int> count(k, 0);
  for (int l : labels)
    ++count[l];
  for (int c = 0; c < k; ++c)
  {
    if (count[c] > 0)
      continue;
    int best = -1;
    double best_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i)
    {
      if (count[labels[i]] < 2)
        continue;
      const double d = (points[i] - centroids[labels[i]]).squaredNorm();
      if (d > best_d)
      {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0)
      break;
    --count[labels[best]];
    labels[best] = c;
    count[c] = 1;
    centroids[c] = points[best];
  }
}

inline KMeansResult lloyd(std::span<const Vec3> points, std::vector<Vec3> centroids, const ClusterConfig& cfg)
{
  const int k = static_cast<int>(centroids.size());
  KMeansResult res;
  res.assignments.assign(points.size(), 0);
  for (int it = 0; it < cfg.max_iterations; ++it)
  {
    res.iterations = it + 1;
    for (std::size_t i = 0; i < points.size(); ++i)
    {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c)
      {
        const double d = (points[i] - centroids[c]).squaredNorm();
        if (d < best_d)
        {
          best_d = d;
          best = c;
        }
      }
      res.assignments[i] = best;
    }
    repair_empty(points, res.assignments, centroids);
    auto updated = cluster_means(points, res.assignments, k, centroids);
    double shift = 0.0;
    for (int c = 0; c < k; ++c)
      shift = std::max(shift, (updated[c] - centroids[c]).norm());
    centroids = std::move(updated);
    if (shift < cfg.convergence_tol)
      break;
  }
  res.centroids = std::move(centroids);
  res.inertia = partition_inertia(points, res.assignments, res.centroids);
  return res;
}

// k-means++ seeding; `first` forces the first seed (or -1 for a random one).
inline std::vector<Vec3> plus_plus_seeds(std::span<const Vec3> points, int k, std::mt19937_64& rng, int first = -1)
{
  const std::size_t n = points.size();
  std::vector<char> chosen(n, 0);
  std::vector<Vec3> seeds;
  std::size_t idx = first >= 0 ? static_cast<std::size_t>(first)
                               : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  seeds.push_back(points[idx]);
  chosen[idx] = 1;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = (points[i] - seeds[0]).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(seeds.size()) < k)
  {
    double total = 0.0;
    for (double d : d2)
      total += d;
    std::size_t pick = n;
    if (total > 0.0)
    {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
      {
        if (d2[i] <= 0.0)
          continue;
        acc += d2[i];
        pick = i;
        if (acc >= target)
          break;
      }
    }
    else
    {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i])
          pick = i;
    }
    chosen[pick] = 1;
    seeds.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points[i] - points[pick]).squaredNorm());
  }
  return seeds;
}

inline void check_k(std::size_t n, int k)
{
  if (k < 1)
    fail(ErrorKind::ConfigError, "k must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    fail(ErrorKind::TooFewPoints, "k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " points");
}
}  // namespace detail

// Lloyd iterations from seeded k-means++ initialisation.
inline KMeansResult kmeans(std::span<const Vec3> points, int k, const ClusterConfig& cfg)
{
  detail::check_k(points.size(), k);
  std::mt19937_64 rng(cfg.seed);
  return detail::lloyd(points, detail::plus_plus_seeds(points, k, rng), cfg);
}

// Lloyd from caller-supplied initial centroids.
inline KMeansResult kmeans_from_seeds(std::span<const Vec3> points, std::vector<Vec3> seeds, const ClusterConfig& cfg)
{
  detail::check_k(points.size(), static_cast<int>(seeds.size()));
  return detail::lloyd(points, std::move(seeds), cfg);
}

namespace detail
{
// Hartigan single-point moves: relocate a point whenever that strictly lowers
// the total inertia. Converges to a subset of Lloyd's fixed points.
inline void hartigan_refine(std::span<const Vec3> points, KMeansResult& res, int max_sweeps = 100)
{
  const int k = static_cast<int>(res.centroids.size());
  std::vector<int> count(k, 0);
  for (int l : res.assignments)
    ++count[l];
  for (int sweep = 0; sweep < max_sweeps; ++sweep)
  {
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i)
    {
      const int from = res.assignments[i];
      if (count[from] < 2)
        continue;
      const double nf = count[from];
      const double removal_gain = nf / (nf - 1.0) * (points[i] - res.centroids[from]).squaredNorm();
      int best = from;
      double best_cost = removal_gain;
      for (int c = 0; c < k; ++c)
      {
        if (c == from)
          continue;
        const double nc = count[c];
        const double cost = nc / (nc + 1.0) * (points[i] - res.centroids[c]).squaredNorm();
        if (cost < best_cost - 1e-15)
        {
          best_cost = cost;
          best = c;
        }
      }
      if (best == from)
        continue;
      const double nt = count[best];
      res.centroids[from] = (res.centroids[from] * nf - points[i]) / (nf - 1.0);
      res.centroids[best] = (res.centroids[best] * nt + points[i]) / (nt + 1.0);
      --count[from];
      ++count[best];
      res.assignments[i] = best;
      moved = true;
    }
    if (!moved)
      break;
  }
  res.centroids = cluster_means(points, res.assignments, k, res.centroids);
  res.inertia = partition_inertia(points, res.assignments, res.centroids);
}

inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n)
{
  const std::size_t k = idx.size();
  for (std::size_t i = k; i-- > 0;)
  {
    if (idx[i] < n - k + i)
    {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j)
        idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}
}  // namespace detail

// Multi-restart mode: one k-means++ run per point used as the first seed, plus
// (for small inputs) every k-subset of the points as initial centroids. Each
// run is polished with Hartigan moves; the lowest inertia wins (ties: first).
inline KMeansResult kmeans_multi_restart(std::span<const Vec3> points, int k, const ClusterConfig& cfg,
                                         std::size_t max_subset_restarts = 5000)
{
  detail::check_k(points.size(), k);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  auto consider = [&](std::vector<Vec3> seeds) {
    auto res = detail::lloyd(points, std::move(seeds), cfg);
    detail::hartigan_refine(points, res);
    if (res.inertia < best.inertia)
      best = std::move(res);
  };
  for (std::size_t s = 0; s < points.size(); ++s)
  {
    std::mt19937_64 rng(cfg.seed + s);
    consider(detail::plus_plus_seeds(points, k, rng, static_cast<int>(s)));
  }
  std::vector<std::size_t> idx(k);
  for (int i = 0; i < k; ++i)
    idx[i] = i;
  std::size_t runs = 0;
  do
  {
    std::vector<Vec3> seeds;
    for (auto i : idx)
      seeds.push_back(points[i]);
    consider(std::move(seeds));
  } while (++runs < max_subset_restarts && detail::next_combination(idx, points.size()));
  return best;
}

// Divisive chain: start from one cluster and repeatedly split the cluster
// holding the point farthest from its centroid, seeding the split with that
// centroid and that point. Every level refines the previous one.
inline KMeansResult kmeans_nested(std::span<const Vec3> points, int k, const ClusterConfig& cfg)
{
  detail::check_k(points.size(), k);
  const std::size_t n = points.size();
  KMeansResult res;
  res.assignments.assign(n, 0);
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points)
    mean += p;
  res.centroids = {mean / static_cast<double>(n)};
  for (int level = 1; level < k; ++level)
  {
    std::vector<int> count(level, 0);
    for (int l : res.assignments)
      ++count[l];
    int far = -1;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i)
    {
      if (count[res.assignments[i]] < 2)
        continue;
      const double d = (points[i] - res.centroids[res.assignments[i]]).squaredNorm();
      if (d > far_d)
      {
        far_d = d;
        far = static_cast<int>(i);
      }
    }
    const int parent = res.assignments[far];
    std::vector<std::size_t> members;
    std::vector<Vec3> sub;
    for (std::size_t i = 0; i < n; ++i)
      if (res.assignments[i] == parent)
      {
        members.push_back(i);
        sub.push_back(points[i]);
      }
    auto split = detail::lloyd(sub, {res.centroids[parent], points[far]}, cfg);
    for (std::size_t m = 0; m < members.size(); ++m)
      res.assignments[members[m]] = split.assignments[m] == 0 ? parent : level;
    res.centroids[parent] = split.centroids[0];
    res.centroids.push_back(split.centroids[1]);
    res.iterations += split.iterations;
  }
  res.inertia = detail::partition_inertia(points, res.assignments, res.centroids);
  return res;
}

inline KMeansResult cluster_points(std::span<const Vec3> points, int k, const ClusterConfig& cfg)
{
  return cfg.seeding == SeedingMode::NestedRefinement ? kmeans_nested(points, k, cfg) : kmeans(points, k, cfg);
}

// Mean silhouette over all points; singletons and a = b = 0 contribute 0.
inline double silhouette(std::span<const Vec3> points, std::span<const int> labels)
{
  if (points.size() != labels.size())
    fail(ErrorKind::DimensionMismatch, "one label per point is required");
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2)
    fail(ErrorKind::SingleCluster, "silhouette needs at least two clusters");
  auto slot = [&ids](int label) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), label) - ids.begin());
  };
  std::vector<std::size_t> sizes(ids.size(), 0);
  for (int l : labels)
    ++sizes[slot(l)];

  double total = 0.0;
  std::vector<double> dist_sum(ids.size());
  for (std::size_t i = 0; i < points.size(); ++i)
  {
    const std::size_t own = slot(labels[i]);
    if (sizes[own] == 1)
      continue;
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < points.size(); ++j)
      if (j != i)
        dist_sum[slot(labels[j])] += (points[i] - points[j]).norm();
    const double a = dist_sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ids.size(); ++c)
      if (c != own)
        b = std::min(b, dist_sum[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0)
      total += (b - a) / denom;
  }
  return total / static_cast<double>(points.size());
}

// Chooses K in the configured range (clipped to [2, n - 1]) by maximal mean
// silhouette; ties go to the smaller K.
inline int select_k(std::span<const Vec3> points, const ClusterConfig& cfg)
{
  const int n = static_cast<int>(points.size());
  if (n < 3)
    fail(ErrorKind::TooFewPoints, "auto-K needs at least 3 points");
  const int lo = std::max(cfg.auto_k_min, 2);
  const int hi = std::min(cfg.auto_k_max, n - 1);
  if (lo > hi)
    fail(ErrorKind::TooFewPoints, "auto-K range is empty for " + std::to_string(n) + " points");
  int best_k = lo;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = lo; k <= hi; ++k)
  {
    const auto res = cluster_points(points, k, cfg);
    const double score = silhouette(points, res.assignments);
    if (score > best_score)
    {
      best_score = score;
      best_k = k;
    }
  }
  return best_k;
}

struct ClusterResult
{
  std::vector<std::pair<int, int>> assignments;  // (candidate id, cluster index), input order
  std::vector<Vec3> centroids;
  std::vector<int> representatives;  // candidate id per cluster
  double inertia = 0.0;

  int k() const { return static_cast<int>(centroids.size()); }

  int cluster_of(int id) const
  {
    for (const auto& [cid, c] : assignments)
      if (cid == id)
        return c;
    return -1;
  }
};

inline nlohmann::json cluster_result_to_json(const ClusterResult& r)
{
  nlohmann::json centroids = nlohmann::json::array();
  for (const auto& c : r.centroids)
    centroids.push_back({c.x(), c.y(), c.z()});
  nlohmann::json assignments = nlohmann::json::array();
  for (const auto& [id, c] : r.assignments)
    assignments.push_back({{"id", id}, {"cluster", c}});
  return {{"k", r.k()},
          {"centroids", centroids},
          {"assignments", assignments},
          {"representatives", r.representatives},
          {"inertia", r.inertia}};
}

// Clusters contact points and keeps the most confident grasp of each cluster
// (ties: lower id). Representatives come back in cluster-index order.
inline std::pair<ClusterResult, CandidateSet> diversify(const CandidateSet& set, const ClusterConfig& cfg)
{
  cfg.validate();
  if (set.empty())
    fail(ErrorKind::EmptyInput, "cannot diversify an empty candidate set");
  const auto points = set.contacts();
  const int n = static_cast<int>(points.size());

  KMeansResult km;
  int k = cfg.auto_k ? (n >= 3 ? select_k(points, cfg) : n) : cfg.k;
  if (k >= n)
  {
    k = n;
    km.centroids = points;
    km.assignments.resize(n);
    for (int i = 0; i < n; ++i)
      km.assignments[i] = i;
  }
  else
  {
    km = cluster_points(points, k, cfg);
  }

  ClusterResult result;
  result.centroids = km.centroids;
  result.inertia = km.inertia;
  std::vector<const GraspCandidate*> best(k, nullptr);
  for (int i = 0; i < n; ++i)
  {
    const auto& cand = set[i];
    const int c = km.assignments[i];
    result.assignments.emplace_back(cand.id, c);
    if (!best[c] || confidence_order(cand, *best[c]))
      best[c] = &cand;
  }
  CandidateSet reps;
  reps.source = set.source;
  for (int c = 0; c < k; ++c)
  {
    result.representatives.push_back(best[c]->id);
    reps.candidates.push_back(*best[c]);
  }
  return {std::move(result), std::move(reps)};
}

}  // namespace taskgrasp
