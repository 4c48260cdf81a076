#include "bubbleview/maps.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "bubbleview/error.hpp"
#include "bubbleview/imaging.hpp"

namespace bubbleview {

std::string_view to_string(PointKind k) {
  switch (k) {
    case PointKind::click: return "click";
    case PointKind::move_sample: return "move_sample";
    case PointKind::fixation: return "fixation";
  }
  return "?";
}

std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::raw: return "raw";
    case Normalization::probability: return "probability";
    case Normalization::zscore: return "zscore";
  }
  return "?";
}

std::vector<std::string> PointSet::participants() const {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& p : points)
    if (seen.insert(p.participant_id).second) ids.push_back(p.participant_id);
  return ids;
}

PointSet PointSet::subset(std::span<const std::string> participant_ids) const {
  const std::unordered_set<std::string> keep(participant_ids.begin(), participant_ids.end());
  PointSet out{width, height, kind, {}};
  for (const auto& p : points)
    if (keep.count(p.participant_id)) out.points.push_back(p);
  return out;
}

PointSet PointSet::only(const std::string& participant_id) const {
  PointSet out{width, height, kind, {}};
  for (const auto& p : points)
    if (p.participant_id == participant_id) out.points.push_back(p);
  return out;
}

PointSet PointSet::without(const std::string& participant_id) const {
  PointSet out{width, height, kind, {}};
  for (const auto& p : points)
    if (p.participant_id != participant_id) out.points.push_back(p);
  return out;
}

void validate_point_set(const PointSet& pts) {
  std::vector<std::string> v;
  if (pts.width <= 0 || pts.height <= 0) v.emplace_back("point set dimensions must be positive");
  std::map<std::string, double> last_t;
  for (std::size_t i = 0; i < pts.points.size(); ++i) {
    const auto& p = pts.points[i];
    if (!(p.x >= 0.0 && p.x < pts.width && p.y >= 0.0 && p.y < pts.height))
      v.push_back("point " + std::to_string(i) + " out of bounds");
    if (!(p.t_ms >= 0.0)) v.push_back("point " + std::to_string(i) + " has negative time");
    auto [it, fresh] = last_t.try_emplace(p.participant_id, p.t_ms);
    if (!fresh) {
      if (p.t_ms < it->second)
        v.push_back("point " + std::to_string(i) + " goes back in time for participant " + p.participant_id);
      it->second = p.t_ms;
    }
  }
  if (!v.empty()) throw ValidationError(std::move(v));
}

int pixel_index(double coord, int n) {
  return std::clamp(static_cast<int>(std::lround(coord)), 0, n - 1);
}

AttentionMap::AttentionMap(int width, int height, Normalization norm, double fill)
    : width_(width), height_(height), norm_(norm),
      values_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
  if (width <= 0 || height <= 0) throw ValidationError({"map dimensions must be positive"});
}

AttentionMap::AttentionMap(int width, int height, Normalization norm, std::vector<double> values)
    : width_(width), height_(height), norm_(norm), values_(std::move(values)) {
  if (width <= 0 || height <= 0) throw ValidationError({"map dimensions must be positive"});
  if (values_.size() != static_cast<std::size_t>(width) * height)
    throw Error(ErrorCode::dimension_mismatch, "map values do not match dimensions");
}

double AttentionMap::max_value() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double AttentionMap::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

AttentionMap to_probability(const AttentionMap& map) {
  const double total = map.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::empty_point_set, "map has no mass to normalize");
  AttentionMap out(map.width(), map.height(), Normalization::probability, map.values());
  for (auto& v : out.values()) v /= total;
  return out;
}

AttentionMap build_map(const PointSet& pts, const MapParams& params,
                       std::optional<std::span<const std::string>> participants) {
  validate_map_params(params);
  if (pts.width <= 0 || pts.height <= 0) throw ValidationError({"point set dimensions must be positive"});

  std::unordered_set<std::string> keep;
  if (participants) keep.insert(participants->begin(), participants->end());

  AttentionMap impulses(pts.width, pts.height, Normalization::raw);
  std::size_t used = 0;
  for (const auto& p : pts.points) {
    if (participants && !keep.count(p.participant_id)) continue;
    impulses.at(pixel_index(p.x, pts.width), pixel_index(p.y, pts.height)) += 1.0;
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::empty_point_set, "no points to build a map from");

  const auto kernel = gaussian_kernel(params.map_sigma_px);
  convolve_plane(impulses.values(), pts.width, pts.height, kernel);
  return to_probability(impulses);
}

AttentionMap zscore(const AttentionMap& map) {
  const auto& v = map.values();
  if (v.empty()) throw Error(ErrorCode::zero_variance, "empty map");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) throw Error(ErrorCode::zero_variance, "map is constant");

  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) throw Error(ErrorCode::zero_variance, "map has zero variance");

  AttentionMap out(map.width(), map.height(), Normalization::zscore, v);
  for (auto& x : out.values()) x = (x - mean) / sd;
  return out;
}

AttentionMap mean_map(std::span<const AttentionMap> maps) {
  if (maps.empty()) throw ValidationError({"mean_map needs at least one map"});
  const int w = maps.front().width(), h = maps.front().height();
  AttentionMap acc(w, h, Normalization::raw);
  for (const auto& m : maps) {
    if (m.width() != w || m.height() != h)
      throw Error(ErrorCode::dimension_mismatch, "maps differ in size");
    for (std::size_t i = 0; i < acc.values().size(); ++i) acc.values()[i] += m.values()[i];
  }
  for (auto& x : acc.values()) x /= static_cast<double>(maps.size());
  return to_probability(acc);
}

AttentionMap mirror_horizontal(const AttentionMap& map) {
  AttentionMap out = map;
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) out.at(map.width() - 1 - x, y) = map.at(x, y);
  return out;
}

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

Normalization parse_normalization(const std::string& s) {
  if (s == "raw") return Normalization::raw;
  if (s == "probability") return Normalization::probability;
  if (s == "zscore") return Normalization::zscore;
  throw ValidationError({"unknown normalization '" + s + "'"});
}

}  // namespace

void write_map(std::ostream& out, const AttentionMap& map) {
  out << map.width() << ' ' << map.height() << ' ' << to_string(map.normalization()) << '\n';
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (x) out << ' ';
      out << shortest(map.at(x, y));
    }
    out << '\n';
  }
}

AttentionMap read_map(std::istream& in) {
  int w = 0, h = 0;
  std::string norm;
  if (!(in >> w >> h >> norm)) throw ValidationError({"malformed map header"});
  if (w <= 0 || h <= 0) throw ValidationError({"map dimensions must be positive"});
  std::vector<double> values(static_cast<std::size_t>(w) * h);
  std::string tok;
  for (auto& v : values) {
    if (!(in >> tok)) throw ValidationError({"map grid truncated"});
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw ValidationError({"bad map value '" + tok + "'"});
  }
  return AttentionMap(w, h, parse_normalization(norm), std::move(values));
}

void save_map(const std::filesystem::path& path, const AttentionMap& map) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  write_map(out, map);
}

AttentionMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_map(in);
}

}  // namespace bubbleview
