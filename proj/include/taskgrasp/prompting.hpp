#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskgrasp/candidates.hpp"
#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"
#include "taskgrasp/image.hpp"
#include "taskgrasp/scene.hpp"
#include "taskgrasp/task.hpp"

namespace taskgrasp
{

// The five ways of asking the model: grasps (wireframes) or contact points
// (dots), in a single image or one image per candidate, or letting the model
// point at the image directly.
enum class Strategy
{
  GSI,
  CPSI,
  GMI,
  CPMI,
  CPG
};

inline constexpr Strategy kAllStrategies[] = {Strategy::GSI, Strategy::CPSI, Strategy::GMI, Strategy::CPMI,
                                              Strategy::CPG};

inline std::string_view to_string(Strategy s)
{
  switch (s)
  {
    case Strategy::GSI: return "GSI";
    case Strategy::CPSI: return "CPSI";
    case Strategy::GMI: return "GMI";
    case Strategy::CPMI: return "CPMI";
    case Strategy::CPG: return "CPG";
  }
  return "GSI";
}

inline Strategy strategy_from_string(std::string_view s)
{
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Strategy st : kAllStrategies)
    if (up == to_string(st))
      return st;
  fail(ErrorKind::ConfigError, "unknown strategy '" + std::string(s) + "' (GSI, CPSI, GMI, CPMI, CPG)");
}

inline bool is_single_image(Strategy s) { return s == Strategy::GSI || s == Strategy::CPSI; }
inline bool is_multi_image(Strategy s) { return s == Strategy::GMI || s == Strategy::CPMI; }
inline bool uses_wireframe(Strategy s) { return s == Strategy::GSI || s == Strategy::GMI; }

struct PaletteEntry
{
  std::string name;
  Rgb color;
};

struct MarkerStyle
{
  std::vector<PaletteEntry> palette = {
      {"red", {255, 0, 0}},       {"green", {0, 255, 0}},    {"blue", {0, 0, 255}},
      {"yellow", {255, 255, 0}},  {"magenta", {255, 0, 255}}, {"cyan", {0, 255, 255}},
      {"orange", {255, 165, 0}},  {"purple", {128, 0, 128}},
  };
  int dot_radius_px = 6;
  int line_width_px = 3;
  int reference_width = 640;  // sizes above are for this image width

  void validate() const
  {
    if (palette.empty())
      fail(ErrorKind::ConfigError, "marker palette must not be empty");
    if (dot_radius_px < 0 || line_width_px < 1 || reference_width < 1)
      fail(ErrorKind::ConfigError, "marker sizes must be non-negative (line width >= 1)");
  }

  // Sizes scaled proportionally to an image of the given width.
  MarkerStyle scaled_to(int width) const
  {
    MarkerStyle s = *this;
    const double f = static_cast<double>(width) / reference_width;
    s.dot_radius_px = static_cast<int>(std::lround(dot_radius_px * f));
    s.line_width_px = std::max(1, static_cast<int>(std::lround(line_width_px * f)));
    s.reference_width = width;
    return s;
  }

  Rgb color(std::size_t i) const { return palette.at(i).color; }
};

// Filled disc at the rounded coordinate. Returns a new image.
inline RgbImage draw_dot(const RgbImage& img, const PixelCoord& at, Rgb color, const MarkerStyle& style)
{
  if (!std::isfinite(at.u) || !std::isfinite(at.v))
    fail(ErrorKind::OutOfBounds, "dot coordinate is not finite");
  const long cu = std::lround(at.u);
  const long cv = std::lround(at.v);
  if (cu < 0 || cv < 0 || cu >= img.width || cv >= img.height)
    fail(ErrorKind::OutOfBounds, "dot at (" + std::to_string(cu) + ", " + std::to_string(cv) + ") is outside the " +
                                     std::to_string(img.width) + "x" + std::to_string(img.height) + " image");
  RgbImage out = img;
  const long r = style.dot_radius_px;
  for (long v = cv - r; v <= cv + r; ++v)
    for (long u = cu - r; u <= cu + r; ++u)
      if ((u - cu) * (u - cu) + (v - cv) * (v - cv) <= r * r && out.contains(static_cast<int>(u), static_cast<int>(v)))
        out.set(static_cast<int>(u), static_cast<int>(v), color);
  return out;
}

namespace detail
{
// Liang-Barsky clip of a segment to [0, w-1] x [0, h-1].
inline std::optional<Segment2> clip_segment(const Segment2& s, int w, int h)
{
  const double dx = s.b.u - s.a.u;
  const double dy = s.b.v - s.a.v;
  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {s.a.u, (w - 1) - s.a.u, s.a.v, (h - 1) - s.a.v};
  for (int i = 0; i < 4; ++i)
  {
    if (p[i] == 0.0)
    {
      if (q[i] < 0.0)
        return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0)
      t0 = std::max(t0, r);
    else
      t1 = std::min(t1, r);
    if (t0 > t1)
      return std::nullopt;
  }
  return Segment2{{s.a.u + t0 * dx, s.a.v + t0 * dy}, {s.a.u + t1 * dx, s.a.v + t1 * dy}};
}

// Square brush of `width` pixels centred on (u, v).
inline void stamp(RgbImage& img, int u, int v, int width, Rgb color)
{
  const int lo = -(width - 1) / 2;
  for (int dv = lo; dv < lo + width; ++dv)
    for (int du = lo; du < lo + width; ++du)
      if (img.contains(u + du, v + dv))
        img.set(u + du, v + dv, color);
}
}  // namespace detail

// Bresenham lines of line_width_px; anything outside the image is clipped.
inline RgbImage draw_wireframe(const RgbImage& img, std::span<const Segment2> segments, Rgb color,
                               const MarkerStyle& style)
{
  RgbImage out = img;
  for (const auto& seg : segments)
  {
    if (!std::isfinite(seg.a.u) || !std::isfinite(seg.a.v) || !std::isfinite(seg.b.u) || !std::isfinite(seg.b.v))
      continue;
    const auto clipped = detail::clip_segment(seg, img.width, img.height);
    if (!clipped)
      continue;
    int x0 = static_cast<int>(std::lround(clipped->a.u)), y0 = static_cast<int>(std::lround(clipped->a.v));
    const int x1 = static_cast<int>(std::lround(clipped->b.u)), y1 = static_cast<int>(std::lround(clipped->b.v));
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true)
    {
      detail::stamp(out, x0, y0, style.line_width_px, color);
      if (x0 == x1 && y0 == y1)
        break;
      const int e2 = 2 * err;
      if (e2 >= dy)
      {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx)
      {
        err += dx;
        y0 += sy;
      }
    }
  }
  return out;
}

// Wireframe segments for a grasp given in the camera frame, with the 3D
// segments clipped to the space in front of the camera before projection.
inline std::vector<Segment2> clipped_wireframe(const GraspPose& g_cam, const GripperGeometry& grip,
                                               const CameraIntrinsics& intr, double near = 1e-3)
{
  const auto kp = world_keypoints(g_cam, grip);
  using K = GripperGeometry;
  const std::pair<std::size_t, std::size_t> edges[] = {
      {K::Base, K::LeftRoot}, {K::Base, K::RightRoot}, {K::LeftRoot, K::LeftTip}, {K::RightRoot, K::RightTip}};
  std::vector<Segment2> out;
  for (auto [i, j] : edges)
  {
    Vec3 a = kp[i], b = kp[j];
    if (a.z() < near && b.z() < near)
      continue;
    if (a.z() < near)
      a = a + (b - a) * ((near - a.z()) / (b.z() - a.z()));
    else if (b.z() < near)
      b = b + (a - b) * ((near - b.z()) / (a.z() - b.z()));
    out.push_back({project(a, intr), project(b, intr)});
  }
  return out;
}

struct QueryBundle
{
  std::vector<RgbImage> images;
  std::string prompt;
  Strategy strategy = Strategy::GSI;
  std::vector<int> candidate_order;  // candidate ids in display order, empty for CPG
};

namespace detail
{
inline std::string_view instruction_text(Strategy s)
{
  switch (s)
  {
    case Strategy::GSI:
      return "Given an image showing the object with different grasp candidates highlighted in red, green, and blue, "
             "your task is to analyze these grasp candidates based on the task description and choose the index of "
             "the grasp that would best accomplish the task.";
    case Strategy::CPSI:
      return "Given an image showing the object with different grasp candidates highlighted in red, green, and blue "
             "dots, your task is to analyze these grasp candidates based on the task description and choose the "
             "index of the grasp that would best accomplish the task.";
    case Strategy::GMI:
      return "Given multiple images, each showing the object with a different grasp candidate highlighted in red, "
             "and a task description, your task is to analyze the grasp candidates in each image based on the task "
             "description and choose the index of the grasp that would best accomplish the task.";
    case Strategy::CPMI:
      return "Given multiple images, each showing the object with a different grasp candidate with a red dot, and a "
             "task description, your task is to analyze the grasp candidates in each image based on the task "
             "description and choose the index of the grasp that would best accomplish the task.";
    case Strategy::CPG:
      return "Given an image of the scene and a task description, you should provide a point on the image where the "
             "robot should grasp the object to best accomplish the task.";
  }
  return "";
}
}  // namespace detail

inline std::string answer_format_line(Strategy s)
{
  return s == Strategy::CPG ? "Answer with JSON: {\"point\": [u, v]}"
                            : "Answer with JSON: {\"choice\": <1-based index>}";
}

inline std::string build_prompt(Strategy s, const std::string& task_description, std::size_t n_candidates,
                                const MarkerStyle& style, int width, int height)
{
  std::string p(detail::instruction_text(s));
  p += "\nTask: " + task_description + "\n";
  if (is_single_image(s))
  {
    for (std::size_t i = 0; i < n_candidates; ++i)
      p += (i == 0 ? "Grasp " : ", grasp ") + std::to_string(i + 1) + " is " + style.palette.at(i).name;
    p += ".\n";
  }
  else if (is_multi_image(s))
  {
    for (std::size_t i = 0; i < n_candidates; ++i)
      p += (i == 0 ? "Image " : ", image ") + std::to_string(i + 1) + " shows grasp " + std::to_string(i + 1);
    p += ".\n";
  }
  else
  {
    p += "The point must lie on the object, in pixel coordinates of the " + std::to_string(width) + "x" +
         std::to_string(height) + " image (u to the right, v downward).\n";
  }
  p += answer_format_line(s);
  return p;
}

// Annotated images and prompt for one query. `reps` are in world frame; the
// observation's camera pose maps camera to world. The input is never modified.
inline QueryBundle build_query(const SceneObservation& obs, const CandidateSet& reps, const TaskSpec& task,
                               Strategy strategy, const MarkerStyle& base_style = {},
                               const GripperGeometry& grip = {})
{
  base_style.validate();
  const auto& intr = obs.intrinsics;
  QueryBundle b;
  b.strategy = strategy;
  if (strategy == Strategy::CPG)
  {
    b.images.push_back(obs.rgb);
    b.prompt = build_prompt(strategy, task.description, 0, base_style, obs.rgb.width, obs.rgb.height);
    return b;
  }
  if (reps.empty())
    fail(ErrorKind::EmptyInput, "no candidates to show");
  if (is_single_image(strategy) && reps.size() > base_style.palette.size())
    fail(ErrorKind::TooManyCandidates, std::to_string(reps.size()) + " candidates but only " +
                                           std::to_string(base_style.palette.size()) + " marker colours");
  const MarkerStyle style = base_style.scaled_to(obs.rgb.width);
  const Pose world_to_cam = obs.camera_pose.inverse();

  auto annotate = [&](RgbImage img, const GraspCandidate& c, Rgb color) {
    if (uses_wireframe(strategy))
    {
      const auto segs = clipped_wireframe(world_to_cam * c.pose, grip, intr);
      return draw_wireframe(img, segs, color, style);
    }
    return draw_dot(img, project(world_to_cam.apply(c.contact), intr), color, style);
  };

  if (is_single_image(strategy))
  {
    RgbImage img = obs.rgb;
    for (std::size_t i = 0; i < reps.size(); ++i)
      img = annotate(std::move(img), reps[i], style.color(i));
    b.images.push_back(std::move(img));
  }
  else
  {
    for (const auto& c : reps)
      b.images.push_back(annotate(obs.rgb, c, style.color(0)));
  }
  for (const auto& c : reps)
    b.candidate_order.push_back(c.id);
  b.prompt = build_prompt(strategy, task.description, reps.size(), style, obs.rgb.width, obs.rgb.height);
  return b;
}

// PNGs, prompt.txt and order.json for offline inspection.
inline void write_query_dump(const std::filesystem::path& dir, const QueryBundle& b)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < b.images.size(); ++i)
    write_png((dir / ("image_" + std::to_string(i + 1) + ".png")).string(), b.images[i]);
  std::ofstream prompt(dir / "prompt.txt");
  prompt << b.prompt << '\n';
  std::ofstream order(dir / "order.json");
  order << nlohmann::json{{"strategy", std::string(to_string(b.strategy))}, {"candidate_order", b.candidate_order}}
               .dump(2)
        << '\n';
  if (!prompt || !order)
    fail(ErrorKind::IoError, "cannot write query dump under " + dir.string());
}

struct ChosenIndex
{
  int index = 0;  // 0-based into candidate_order
  bool operator==(const ChosenIndex&) const = default;
};

struct PixelPoint
{
  double u = 0.0;
  double v = 0.0;
  bool operator==(const PixelPoint&) const = default;
};

struct VlmReply
{
  std::string raw_text;
  std::variant<ChosenIndex, PixelPoint> parsed;

  bool is_index() const { return std::holds_alternative<ChosenIndex>(parsed); }
  int index() const { return std::get<ChosenIndex>(parsed).index; }
  PixelPoint point() const { return std::get<PixelPoint>(parsed); }
};

// The form the prompt asks for; parse_reply maps it back to the same value.
inline std::string canonical_reply(const std::variant<ChosenIndex, PixelPoint>& v)
{
  if (const auto* c = std::get_if<ChosenIndex>(&v))
    return nlohmann::json{{"choice", c->index + 1}}.dump();
  const auto& p = std::get<PixelPoint>(v);
  return nlohmann::json{{"point", {p.u, p.v}}}.dump();
}

namespace detail
{
// Every balanced {...} substring that parses as a JSON object.
inline std::vector<nlohmann::json> json_objects_in(std::string_view text)
{
  std::vector<nlohmann::json> out;
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1))
  {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i)
    {
      const char ch = text[i];
      if (in_string)
      {
        if (ch == '\\')
          ++i;
        else if (ch == '"')
          in_string = false;
        continue;
      }
      if (ch == '"')
        in_string = true;
      else if (ch == '{')
        ++depth;
      else if (ch == '}' && --depth == 0)
      {
        auto j = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (j.is_object())
        {
          out.push_back(std::move(j));
          start = i;
        }
        break;
      }
    }
  }
  return out;
}

inline std::optional<double> json_number(const nlohmann::json& j)
{
  if (j.is_number())
    return j.get<double>();
  return std::nullopt;
}

// Digit runs that stand alone: not part of a word, identifier or decimal.
inline std::vector<long> bare_integers(std::string_view text)
{
  std::vector<long> out;
  auto wordish = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  std::size_t i = 0;
  while (i < text.size())
  {
    if (!std::isdigit(static_cast<unsigned char>(text[i])))
    {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
      ++j;
    const bool before_ok = i == 0 || (!wordish(text[i - 1]) &&
                                      !(text[i - 1] == '.' && i >= 2 && std::isdigit(static_cast<unsigned char>(text[i - 2]))));
    const bool after_ok = j == text.size() || (!wordish(text[j]) && !(text[j] == '.' && j + 1 < text.size() &&
                                                                      std::isdigit(static_cast<unsigned char>(text[j + 1]))));
    if (before_ok && after_ok && j - i <= 9)
    {
      long v = std::stol(std::string(text.substr(i, j - i)));
      if (i > 0 && text[i - 1] == '-')
        v = -v;
      out.push_back(v);
    }
    i = j;
  }
  return out;
}

template <typename T>
std::optional<T> unanimous(const std::vector<T>& found, const std::string& what)
{
  if (found.empty())
    return std::nullopt;
  for (const auto& f : found)
    if (!(f == found.front()))
      fail(ErrorKind::AmbiguousReply, "reply names conflicting " + what);
  return found.front();
}

inline ChosenIndex checked_index(long one_based, std::size_t n)
{
  if (one_based < 1 || static_cast<std::size_t>(one_based) > n)
    fail(ErrorKind::IndexOutOfRange,
         "choice " + std::to_string(one_based) + " is outside 1.." + std::to_string(n));
  return {static_cast<int>(one_based - 1)};
}
}  // namespace detail

// Turns a model reply into a choice or a pixel. Formats are tried in a fixed
// order of strictness (JSON, keyword, colour word, bare number for choices;
// JSON, u=/v=, bracketed pair for points). The first format that matches at
// all decides; conflicting matches within it are ambiguous.
inline VlmReply parse_reply(const std::string& raw, Strategy strategy, std::size_t n_candidates, int width,
                            int height, const MarkerStyle& style = {})
{
  VlmReply reply;
  reply.raw_text = raw;
  const auto objects = detail::json_objects_in(raw);

  if (strategy == Strategy::CPG)
  {
    static const std::string num = R"(([-+]?\d+(?:\.\d+)?))";
    static const std::regex uv_re(R"(\bu\s*[=:]\s*)" + num + R"(\s*[,;]?\s*(?:and\s+)?v\s*[=:]\s*)" + num,
                                  std::regex::icase);
    static const std::regex pair_re(R"([\(\[]\s*)" + num + R"(\s*,\s*)" + num + R"(\s*[\)\]])");
    std::vector<PixelPoint> found;
    for (const auto& j : objects)
    {
      if (!j.contains("point"))
        continue;
      const auto& p = j["point"];
      if (p.is_array() && p.size() == 2 && detail::json_number(p[0]) && detail::json_number(p[1]))
        found.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    for (const std::regex* re : {&uv_re, &pair_re})
    {
      if (!found.empty())
        break;
      for (auto it = std::sregex_iterator(raw.begin(), raw.end(), *re); it != std::sregex_iterator(); ++it)
        found.push_back({std::stod((*it)[1].str()), std::stod((*it)[2].str())});
    }
    const auto pt = detail::unanimous(found, "points");
    if (!pt)
      fail(ErrorKind::UnparseableReply, "no pixel coordinate found in reply");
    if (!(pt->u >= 0.0 && pt->u < width && pt->v >= 0.0 && pt->v < height))
      fail(ErrorKind::PointOutOfImage, "point outside the " + std::to_string(width) + "x" + std::to_string(height) +
                                           " image");
    reply.parsed = *pt;
    return reply;
  }

  std::vector<long> found;
  for (const auto& j : objects)
  {
    if (!j.contains("choice"))
      continue;
    const auto n = detail::json_number(j["choice"]);
    if (n && std::floor(*n) == *n && std::abs(*n) < 1e9)
      found.push_back(static_cast<long>(*n));
  }
  if (found.empty())
  {
    static const std::regex kw_re(R"(\b(?:grasp|candidate|image|index|option)\s*(?:#|no\.|number)?\s*(\d{1,9})\b)",
                                  std::regex::icase);
    for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kw_re); it != std::sregex_iterator(); ++it)
      found.push_back(std::stol((*it)[1].str()));
  }
  if (found.empty() && is_single_image(strategy))
  {
    std::string lower = raw;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    // Record (position, index) so the conflict message is stable.
    std::vector<std::pair<std::size_t, long>> hits;
    for (std::size_t i = 0; i < style.palette.size(); ++i)
    {
      const std::regex word_re("\\b" + style.palette[i].name + "\\b");
      for (auto it = std::sregex_iterator(lower.begin(), lower.end(), word_re); it != std::sregex_iterator(); ++it)
        hits.emplace_back(static_cast<std::size_t>(it->position()), static_cast<long>(i + 1));
    }
    std::sort(hits.begin(), hits.end());
    for (const auto& h : hits)
      found.push_back(h.second);
  }
  if (found.empty())
    found = detail::bare_integers(raw);
  const auto choice = detail::unanimous(found, "choices");
  if (!choice)
    fail(ErrorKind::UnparseableReply, "no grasp index found in reply");
  reply.parsed = detail::checked_index(*choice, n_candidates);
  return reply;
}

}  // namespace taskgrasp
