#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"
#include "taskgrasp/image.hpp"

namespace taskgrasp
{

enum class ShapeKind
{
  Cylinder,
  Box,
  Sphere,
  Composite
};

inline std::string_view to_string(ShapeKind k)
{
  switch (k)
  {
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Box: return "box";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Composite: return "composite";
  }
  return "?";
}

inline ShapeKind shape_from_string(std::string_view s)
{
  if (s == "cylinder")
    return ShapeKind::Cylinder;
  if (s == "box")
    return ShapeKind::Box;
  if (s == "sphere")
    return ShapeKind::Sphere;
  if (s == "composite")
    return ShapeKind::Composite;
  fail(ErrorKind::ParseError, "unknown shape '" + std::string(s) + "'");
}

// Entry/exit of a line o + s*d through a convex solid, with outward normals.
struct Span
{
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  Vec3 n0 = Vec3::Zero();
  Vec3 n1 = Vec3::Zero();

  bool empty() const { return t0 > t1; }
};

namespace detail
{
inline Span intersect_spans(const Span& a, const Span& b)
{
  Span out;
  if (a.t0 >= b.t0)
  {
    out.t0 = a.t0;
    out.n0 = a.n0;
  }
  else
  {
    out.t0 = b.t0;
    out.n0 = b.n0;
  }
  if (a.t1 <= b.t1)
  {
    out.t1 = a.t1;
    out.n1 = a.n1;
  }
  else
  {
    out.t1 = b.t1;
    out.n1 = b.n1;
  }
  return out;
}

// Slab |x_axis| <= half along one coordinate axis.
inline Span slab_span(double o, double d, double half, const Vec3& axis)
{
  Span s;
  if (std::abs(d) < 1e-15)
  {
    if (std::abs(o) > half)
      s.t0 = 1.0, s.t1 = -1.0;
    return s;
  }
  double ta = (-half - o) / d;
  double tb = (half - o) / d;
  if (d > 0)
  {
    s.t0 = ta, s.n0 = -axis;
    s.t1 = tb, s.n1 = axis;
  }
  else
  {
    s.t0 = tb, s.n0 = axis;
    s.t1 = ta, s.n1 = -axis;
  }
  return s;
}

inline Span empty_span()
{
  Span s;
  s.t0 = 1.0;
  s.t1 = -1.0;
  return s;
}
}  // namespace detail

// A solid in its parent's frame. Dimensions: box = full extents (x, y, z);
// cylinder = (diameter, diameter, height) with its axis along local z;
// sphere = (diameter, diameter, diameter).
struct Primitive
{
  ShapeKind kind = ShapeKind::Box;
  Pose pose;
  Vec3 dims = Vec3::Constant(0.05);
  Rgb color{180, 180, 180};

  double radius() const { return dims.x() / 2.0; }

  void validate() const
  {
    if (kind == ShapeKind::Composite)
      fail(ErrorKind::ConfigError, "a primitive part cannot itself be composite");
    if (!(dims.array() > 0.0).all() || !dims.allFinite())
      fail(ErrorKind::ConfigError, "primitive dimensions must be positive");
    if (!pose.is_valid(1e-6))
      fail(ErrorKind::InvalidPose, "primitive pose is not a rigid transform");
  }

  double sdf_local(const Vec3& p) const
  {
    switch (kind)
    {
      case ShapeKind::Sphere: return p.norm() - radius();
      case ShapeKind::Box:
      {
        const Vec3 q = p.cwiseAbs() - dims / 2.0;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
      }
      case ShapeKind::Cylinder:
      {
        const double dr = std::hypot(p.x(), p.y()) - radius();
        const double dz = std::abs(p.z()) - dims.z() / 2.0;
        return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      }
      case ShapeKind::Composite: break;
    }
    return std::numeric_limits<double>::infinity();
  }

  // Signed distance from a point given in the parent frame.
  double sdf(const Vec3& p) const { return sdf_local(pose.inverse().apply(p)); }

  bool contains(const Vec3& p, double margin = 0.0) const { return sdf(p) <= margin; }

  Span span_local(const Vec3& o, const Vec3& d) const
  {
    using detail::intersect_spans;
    using detail::slab_span;
    switch (kind)
    {
      case ShapeKind::Box:
      {
        Span s = slab_span(o.x(), d.x(), dims.x() / 2.0, Vec3::UnitX());
        s = intersect_spans(s, slab_span(o.y(), d.y(), dims.y() / 2.0, Vec3::UnitY()));
        return intersect_spans(s, slab_span(o.z(), d.z(), dims.z() / 2.0, Vec3::UnitZ()));
      }
      case ShapeKind::Sphere:
      {
        const double a = d.squaredNorm();
        const double b = 2.0 * o.dot(d);
        const double c = o.squaredNorm() - radius() * radius();
        const double disc = b * b - 4 * a * c;
        if (a < 1e-30 || disc < 0)
          return detail::empty_span();
        const double sq = std::sqrt(disc);
        Span s;
        s.t0 = (-b - sq) / (2 * a);
        s.t1 = (-b + sq) / (2 * a);
        s.n0 = (o + s.t0 * d).normalized();
        s.n1 = (o + s.t1 * d).normalized();
        return s;
      }
      case ShapeKind::Cylinder:
      {
        Span side;
        const double r = radius();
        const double a = d.x() * d.x() + d.y() * d.y();
        const double c = o.x() * o.x() + o.y() * o.y() - r * r;
        if (a < 1e-30)
        {
          if (c > 0)
            return detail::empty_span();
        }
        else
        {
          const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
          const double disc = b * b - 4 * a * c;
          if (disc < 0)
            return detail::empty_span();
          const double sq = std::sqrt(disc);
          side.t0 = (-b - sq) / (2 * a);
          side.t1 = (-b + sq) / (2 * a);
          const Vec3 p0 = o + side.t0 * d;
          const Vec3 p1 = o + side.t1 * d;
          side.n0 = Vec3(p0.x(), p0.y(), 0).normalized();
          side.n1 = Vec3(p1.x(), p1.y(), 0).normalized();
        }
        return intersect_spans(side, slab_span(o.z(), d.z(), dims.z() / 2.0, Vec3::UnitZ()));
      }
      case ShapeKind::Composite: break;
    }
    return detail::empty_span();
  }

  // Line o + t*d in the parent frame.
  Span span(const Vec3& o, const Vec3& d) const
  {
    const Pose inv = pose.inverse();
    Span s = span_local(inv.apply(o), inv.rotate(d));
    s.n0 = pose.rotate(s.n0);
    s.n1 = pose.rotate(s.n1);
    return s;
  }

  // Axis-aligned bounds in the parent frame (conservative for curved solids).
  std::pair<Vec3, Vec3> bounds() const
  {
    const Vec3 half = dims / 2.0;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = 0; i < 8; ++i)
    {
      const Vec3 c((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(), (i & 4) ? half.z() : -half.z());
      const Vec3 w = pose.apply(c);
      lo = lo.cwiseMin(w);
      hi = hi.cwiseMax(w);
    }
    return {lo, hi};
  }

  // Deterministic, roughly uniform samples on the surface (parent frame).
  std::vector<Vec3> surface_samples(int per_side = 12) const
  {
    std::vector<Vec3> local;
    const int n = std::max(per_side, 2);
    auto lerp = [n](int i, double half) { return -half + (i + 0.5) * (2 * half) / n; };
    switch (kind)
    {
      case ShapeKind::Box:
      {
        const Vec3 h = dims / 2.0;
        for (int axis = 0; axis < 3; ++axis)
        {
          const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
          for (double sign : {-1.0, 1.0})
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < n; ++j)
              {
                Vec3 p;
                p[axis] = sign * h[axis];
                p[a1] = lerp(i, h[a1]);
                p[a2] = lerp(j, h[a2]);
                local.push_back(p);
              }
        }
        break;
      }
      case ShapeKind::Sphere:
      {
        const int count = 6 * n * n;
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < count; ++i)
        {
          const double z = 1.0 - 2.0 * (i + 0.5) / count;
          const double rr = std::sqrt(1.0 - z * z);
          const double phi = golden * i;
          local.push_back(radius() * Vec3(rr * std::cos(phi), rr * std::sin(phi), z));
        }
        break;
      }
      case ShapeKind::Cylinder:
      {
        const double r = radius(), hz = dims.z() / 2.0;
        const int ring = 4 * n;
        for (int i = 0; i < ring; ++i)
        {
          const double phi = 2 * std::numbers::pi * (i + 0.5) / ring;
          for (int j = 0; j < n; ++j)
            local.emplace_back(r * std::cos(phi), r * std::sin(phi), lerp(j, hz));
        }
        for (double sign : {-1.0, 1.0})
          for (int i = 0; i < ring; ++i)
          {
            const double phi = 2 * std::numbers::pi * (i + 0.5) / ring;
            for (int j = 0; j < n / 2; ++j)
            {
              const double rad = r * (j + 0.5) / (n / 2);
              local.emplace_back(rad * std::cos(phi), rad * std::sin(phi), sign * hz);
            }
          }
        break;
      }
      case ShapeKind::Composite: break;
    }
    for (auto& p : local)
      p = pose.apply(p);
    return local;
  }
};

struct LabeledRegion
{
  std::string name;
  Primitive volume;  // object frame
};

// An object on the table. Non-composite shapes carry a single implicit part.
struct PrimitiveObject
{
  std::string name;
  ShapeKind shape = ShapeKind::Box;
  Pose pose;  // object -> world
  Vec3 dimensions = Vec3::Constant(0.05);
  std::vector<Primitive> parts;  // composite only, object frame
  std::vector<LabeledRegion> regions;
  Rgb color{200, 120, 60};

  std::vector<Primitive> local_parts() const
  {
    if (shape == ShapeKind::Composite)
      return parts;
    Primitive p;
    p.kind = shape;
    p.dims = dimensions;
    p.color = color;
    return {p};
  }

  std::vector<Primitive> world_parts() const
  {
    auto out = local_parts();
    for (auto& p : out)
      p.pose = pose * p.pose;
    return out;
  }

  const LabeledRegion* find_region(std::string_view region) const
  {
    for (const auto& r : regions)
      if (r.name == region)
        return &r;
    return nullptr;
  }

  const LabeledRegion& region(std::string_view region_name) const
  {
    if (const auto* r = find_region(region_name))
      return *r;
    fail(ErrorKind::UnknownRegion, "object '" + name + "' has no region '" + std::string(region_name) + "'");
  }

  std::pair<Vec3, Vec3> local_bounds() const
  {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& p : local_parts())
    {
      auto [a, b] = p.bounds();
      lo = lo.cwiseMin(a);
      hi = hi.cwiseMax(b);
    }
    return {lo, hi};
  }

  void validate() const
  {
    if (!pose.is_valid(1e-6))
      fail(ErrorKind::InvalidPose, "object '" + name + "' pose is not a rigid transform");
    if (shape == ShapeKind::Composite)
    {
      if (parts.empty())
        fail(ErrorKind::ConfigError, "composite object '" + name + "' has no parts");
      for (const auto& p : parts)
        p.validate();
    }
    else if (!(dimensions.array() > 0.0).all())
    {
      fail(ErrorKind::ConfigError, "object '" + name + "' dimensions must be positive");
    }
    const auto [lo, hi] = local_bounds();
    constexpr double slack = 1e-3;
    for (const auto& r : regions)
    {
      r.volume.validate();
      const auto [rlo, rhi] = r.volume.bounds();
      if ((rlo.array() < lo.array() - slack).any() || (rhi.array() > hi.array() + slack).any())
        fail(ErrorKind::ConfigError, "region '" + r.name + "' exceeds the bounds of object '" + name + "'");
    }
  }

  // Signed distance of a world point to the union of parts.
  double sdf(const Vec3& world_point) const
  {
    const Vec3 p = pose.inverse().apply(world_point);
    double d = std::numeric_limits<double>::infinity();
    for (const auto& part : local_parts())
      d = std::min(d, part.sdf(p));
    return d;
  }

  // Maximal solid interval of the part union along the world line o + t*d
  // that contains (or lies nearest to) t = 0.
  std::optional<Span> chord(const Vec3& o, const Vec3& d) const
  {
    std::vector<Span> spans;
    for (const auto& part : world_parts())
    {
      Span s = part.span(o, d);
      if (!s.empty())
        spans.push_back(s);
    }
    if (spans.empty())
      return std::nullopt;
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.t0 < b.t0; });
    std::vector<Span> merged{spans.front()};
    for (std::size_t i = 1; i < spans.size(); ++i)
    {
      Span& cur = merged.back();
      if (spans[i].t0 <= cur.t1 + 1e-12)
      {
        if (spans[i].t1 > cur.t1)
        {
          cur.t1 = spans[i].t1;
          cur.n1 = spans[i].n1;
        }
      }
      else
      {
        merged.push_back(spans[i]);
      }
    }
    const Span* best = nullptr;
    double best_gap = std::numeric_limits<double>::infinity();
    for (const auto& s : merged)
    {
      const double gap = (s.t0 <= 0.0 && s.t1 >= 0.0) ? 0.0 : std::min(std::abs(s.t0), std::abs(s.t1));
      if (gap < best_gap)
      {
        best_gap = gap;
        best = &s;
      }
    }
    return *best;
  }
};

// Signed distance of a world point to a labeled region of `obj`.
inline double region_sdf(const PrimitiveObject& obj, const LabeledRegion& region, const Vec3& world_point)
{
  return region.volume.sdf(obj.pose.inverse().apply(world_point));
}

}  // namespace taskgrasp
