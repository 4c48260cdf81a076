#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bubbleview/maps.hpp"

namespace bubbleview {

/// Pearson correlation over paired cells. Throws ZeroVariance if either map
/// is constant.
double cc(const AttentionMap& pred, const AttentionMap& gt);

/// Mean of zscore(pred) at each fixation's nearest pixel.
double nss(const AttentionMap& pred, const PointSet& fixations);

/// Leave-one-observer-out NSS, averaged over observers.
double ioc(const PointSet& gt, const MapParams& params);

double normalized_nss(double nss_val, double ioc_val);

/// Integer percent, rounding half away from zero: 0.8944 -> "89%".
std::string format_percent(double fraction);

struct MetricReport {
  std::string image_id;
  double cc = 0.0;
  double nss = 0.0;
  double ioc_nss = 0.0;
  double normalized_nss = 0.0;
  int n_pred_participants = 0;
  int n_gt_observers = 0;
};

struct ImageData {
  std::string image_id;
  PointSet pred;  ///< clicks or move samples
  PointSet gt;    ///< fixations
};

struct DatasetOptions {
  int n_pred = 0;  ///< participants per split; <= 0 means all
  int n_splits = 10;
  std::uint64_t seed = 0;
  bool skip_errors = false;
};

struct DatasetReport {
  std::vector<MetricReport> per_image;
  MetricReport aggregate;
  std::uint64_t seed = 0;
  int n_splits = 0;
  std::vector<std::string> warnings;
  std::vector<std::string> skipped;  ///< "image_id: reason"
};

/// CC and NSS of the map built from `participants` (all when nullopt)
/// against the full ground truth. IOC is left at zero.
MetricReport score_image(const ImageData& image, const MapParams& params,
                         std::optional<std::span<const std::string>> participants = std::nullopt);

/// Per image: scores averaged over n_splits random n_pred-participant subsets
/// (one full evaluation when n_pred covers everyone), IOC from the fixations.
/// Aggregate is the unweighted mean over images.
DatasetReport dataset_report(const std::vector<ImageData>& images, const MapParams& params,
                             const DatasetOptions& opts);

/// Mean NSS over images for each participant count in `ns`.
struct CurvePoint {
  int n = 0;
  double score = 0.0;
};
std::vector<CurvePoint> nss_curve(const std::vector<ImageData>& images, const MapParams& params,
                                  const std::vector<int>& ns, int n_splits, std::uint64_t seed);

void write_report_csv(std::ostream& out, const DatasetReport& report);

}  // namespace bubbleview
