#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bubbleview/config.hpp"

namespace bubbleview {

enum class PointKind { click, move_sample, fixation };

std::string_view to_string(PointKind k);

struct Point {
  double x = 0.0;
  double y = 0.0;
  double t_ms = 0.0;
  std::string participant_id;

  bool operator==(const Point&) const = default;
};

/// Attention points on one image, in stimulus pixel coordinates.
struct PointSet {
  int width = 0;
  int height = 0;
  PointKind kind = PointKind::click;
  std::vector<Point> points;

  /// Distinct participant ids in order of first appearance.
  std::vector<std::string> participants() const;
  PointSet subset(std::span<const std::string> participant_ids) const;
  PointSet only(const std::string& participant_id) const;
  PointSet without(const std::string& participant_id) const;

  bool operator==(const PointSet&) const = default;
};

/// Throws ValidationError on out-of-bounds points or time going backwards for a
/// participant.
void validate_point_set(const PointSet& pts);

/// Nearest-pixel index along an axis of length n, clamped to [0, n-1].
int pixel_index(double coord, int n);

enum class Normalization { raw, probability, zscore };

std::string_view to_string(Normalization n);

class AttentionMap {
 public:
  AttentionMap() = default;
  AttentionMap(int width, int height, Normalization norm = Normalization::raw, double fill = 0.0);
  AttentionMap(int width, int height, Normalization norm, std::vector<double> values);

  int width() const { return width_; }
  int height() const { return height_; }
  Normalization normalization() const { return norm_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  double max_value() const;
  double sum() const;

  bool operator==(const AttentionMap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  Normalization norm_ = Normalization::raw;
  std::vector<double> values_;
};

/// Impulses at nearest pixels, Gaussian-blurred with map_sigma_px (3-sigma
/// truncation, edge replication), normalized to sum 1. When `participants`
/// is given only their points are used. Throws EmptyPointSet if nothing is
/// left.
AttentionMap build_map(const PointSet& pts, const MapParams& params,
                       std::optional<std::span<const std::string>> participants = std::nullopt);

/// Population z-score. Throws ZeroVariance for constant maps.
AttentionMap zscore(const AttentionMap& map);

/// Rescales a nonnegative map to sum 1.
AttentionMap to_probability(const AttentionMap& map);

AttentionMap mean_map(std::span<const AttentionMap> maps);

AttentionMap mirror_horizontal(const AttentionMap& map);

// Text grid: "width height normalization" then one row of values per line.
void write_map(std::ostream& out, const AttentionMap& map);
AttentionMap read_map(std::istream& in);
void save_map(const std::filesystem::path& path, const AttentionMap& map);
AttentionMap load_map(const std::filesystem::path& path);

}  // namespace bubbleview
