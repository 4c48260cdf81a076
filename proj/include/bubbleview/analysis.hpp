#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bubbleview/maps.hpp"

namespace bubbleview {

// ---------------------------------------------------------------------------
// Participant-limit extrapolation: f(n) = a * n^b + c with b <= 0.

struct PowerFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double rss = 0.0;
  std::pair<double, double> c_ci95{0.0, 0.0};
  std::uint64_t seed = 0;
  int resamples = 0;
};

struct FitSample {
  double n = 0.0;
  double score = 0.0;
};

struct FitOptions {
  double b_min = -3.0;
  int grid_points = 61;
  int bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
};

/// Variable projection: for each b the (a, c) pair is the exact linear
/// least-squares solution, and b is found by a grid scan over [b_min, 0]
/// refined with Brent's method. The interval for c comes from a seeded
/// residual bootstrap. Needs at least 4 distinct n.
PowerFit fit_power(std::span<const FitSample> samples, const FitOptions& opts = {});

/// Least-squares (a, c, rss) for a fixed exponent b.
struct LinearPart {
  double a = 0.0;
  double c = 0.0;
  double rss = 0.0;
};
LinearPart fit_linear_part(std::span<const FitSample> samples, double b);

/// "1.31 in the limit (95% C.I. [1.312, 1.315])"
std::string format_limit(const PowerFit& fit);

void write_fit_csv(std::ostream& out, const PowerFit& fit);

// ---------------------------------------------------------------------------
// Element importance.

struct Box {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> inside;  ///< row-major, nonzero = inside
};

struct ElementAnnotation {
  std::string element_id;
  std::string label;
  std::variant<Box, Mask> region;
};

struct ElementScore {
  std::string element_id;
  std::string label;
  double score = 0.0;
};

/// Max of the max-normalized map inside each element's region.
std::vector<ElementScore> element_importance(const AttentionMap& map,
                                             std::span<const ElementAnnotation> elements);

/// Reads {"image_id": ..., "elements": [{"element_id", "label", "box": [x, y, w, h]} |
/// {"element_id", "label", "mask": "relative/path.png"}]}.
std::vector<ElementAnnotation> load_annotations(const std::filesystem::path& path);

struct Correlations {
  double pearson = 0.0;
  double spearman = 0.0;
};

double pearson(std::span<const double> a, std::span<const double> b);
/// 1-based ranks; ties share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> v);
Correlations rank_correlation(std::span<const double> a, std::span<const double> b);

struct LabelScore {
  std::string label;
  double mean_score = 0.0;
  int count = 0;
};

/// Groups by label (first-appearance order) and averages. Labels missing from
/// an image simply contribute nothing.
std::vector<LabelScore> aggregate_element_scores(
    std::span<const std::pair<std::string, double>> per_image);

// ---------------------------------------------------------------------------
// Center bias.

/// Column means of the mean map, scaled to peak 1.
std::vector<double> center_bias_profile(std::span<const AttentionMap> maps);

// ---------------------------------------------------------------------------
// Cost model.

struct CostModel {
  double rate_per_min = 0.1;
  double time_per_image_s = 10.0;
  int images_per_task = 17;
  int participants_lo = 10;
  int participants_hi = 15;
  /// Overrides the rate-times-time task price when set.
  std::optional<double> task_price;
};

struct CostEstimate {
  double task_cost_exact = 0.0;  ///< rate * time * images (or the override)
  double task_cost = 0.0;        ///< rounded up to the next $0.10 unless overridden
  double per_image_lo = 0.0;
  double per_image_hi = 0.0;
};

CostEstimate estimate_cost(const CostModel& model);

/// "$0.18", half away from zero at the cent.
std::string format_dollars(double amount);

/// Table with one row per model: task, time/image, images/task, cost/task,
/// participants, cost/image.
void write_cost_table(std::ostream& out, std::span<const std::pair<std::string, CostModel>> rows);

}  // namespace bubbleview
