#include "bubbleview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "bubbleview/error.hpp"
#include "bubbleview/random.hpp"

namespace bubbleview {

double cc(const AttentionMap& pred, const AttentionMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw Error(ErrorCode::dimension_mismatch, "cc: maps differ in size");
  const auto& a = pred.values();
  const auto& b = gt.values();
  const double n = static_cast<double>(a.size());

  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorCode::zero_variance, "cc: constant map");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double nss(const AttentionMap& pred, const PointSet& fixations) {
  if (fixations.points.empty()) throw Error(ErrorCode::empty_point_set, "nss: no fixations");
  if (fixations.width != pred.width() || fixations.height != pred.height())
    throw Error(ErrorCode::dimension_mismatch, "nss: fixations and map differ in size");
  const AttentionMap z = zscore(pred);
  double acc = 0.0;
  for (const auto& p : fixations.points)
    acc += z.at(pixel_index(p.x, z.width()), pixel_index(p.y, z.height()));
  return acc / static_cast<double>(fixations.points.size());
}

double ioc(const PointSet& gt, const MapParams& params) {
  const auto observers = gt.participants();
  if (observers.size() < 2) throw ValidationError({"ioc needs at least 2 observers"});
  double acc = 0.0;
  for (const auto& o : observers)
    acc += nss(build_map(gt.without(o), params), gt.only(o));
  return acc / static_cast<double>(observers.size());
}

double normalized_nss(double nss_val, double ioc_val) {
  if (!(ioc_val > 0.0)) throw ValidationError({"ioc must be positive to normalize NSS"});
  return nss_val / ioc_val;
}

std::string format_percent(double fraction) {
  // Round the decimal representation rather than the binary product so that
  // e.g. 0.285 formats as 29%.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", fraction * 100.0);
  const double pct = std::round(std::strtod(buf, nullptr));
  std::snprintf(buf, sizeof buf, "%.0f%%", pct == 0.0 ? 0.0 : pct);
  return buf;
}

MetricReport score_image(const ImageData& image, const MapParams& params,
                         std::optional<std::span<const std::string>> participants) {
  MetricReport r;
  r.image_id = image.image_id;
  const AttentionMap pred = build_map(image.pred, params, participants);
  const AttentionMap fix = build_map(image.gt, params);
  r.cc = cc(pred, fix);
  r.nss = nss(pred, image.gt);
  r.n_pred_participants =
      participants ? static_cast<int>(participants->size()) : static_cast<int>(image.pred.participants().size());
  r.n_gt_observers = static_cast<int>(image.gt.participants().size());
  return r;
}

namespace {

std::vector<std::string> sorted_participants(const PointSet& pts) {
  auto ids = pts.participants();
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Mean CC/NSS over random subsets of size n (a single evaluation when n
// covers all participants).
MetricReport score_subsets(const ImageData& image, const MapParams& params,
                           const std::vector<std::string>& everyone, std::size_t n, int n_splits,
                           std::uint64_t seed) {
  if (n >= everyone.size()) return score_image(image, params);
  std::mt19937_64 rng(seed);
  MetricReport acc;
  acc.image_id = image.image_id;
  const int splits = std::max(n_splits, 1);
  for (int s = 0; s < splits; ++s) {
    const auto chosen = sample_without_replacement(everyone, n, rng);
    const auto r = score_image(image, params, std::span<const std::string>(chosen));
    acc.cc += r.cc;
    acc.nss += r.nss;
    acc.n_gt_observers = r.n_gt_observers;
  }
  acc.cc /= splits;
  acc.nss /= splits;
  acc.n_pred_participants = static_cast<int>(n);
  return acc;
}

}  // namespace

DatasetReport dataset_report(const std::vector<ImageData>& images, const MapParams& params,
                             const DatasetOptions& opts) {
  if (images.empty()) throw ValidationError({"dataset_report needs at least one image"});
  DatasetReport report;
  report.seed = opts.seed;
  report.n_splits = opts.n_splits;

  for (const auto& image : images) {
    try {
      const auto everyone = sorted_participants(image.pred);
      if (everyone.empty()) throw Error(ErrorCode::empty_point_set, "no prediction participants");
      std::size_t n = everyone.size();
      if (opts.n_pred > 0) {
        if (static_cast<std::size_t>(opts.n_pred) > everyone.size())
          report.warnings.push_back(image.image_id + ": n_pred " + std::to_string(opts.n_pred) +
                                    " capped at " + std::to_string(everyone.size()));
        else
          n = static_cast<std::size_t>(opts.n_pred);
      }
      MetricReport r = score_subsets(image, params, everyone, n, opts.n_splits,
                                     derive_seed(opts.seed, image.image_id));
      r.ioc_nss = ioc(image.gt, params);
      r.normalized_nss = normalized_nss(r.nss, r.ioc_nss);
      report.per_image.push_back(std::move(r));
    } catch (const Error& e) {
      if (!opts.skip_errors) throw Error(e.code(), image.image_id + ": " + e.what());
      report.skipped.push_back(image.image_id + ": " + e.what());
    }
  }
  if (report.per_image.empty()) throw Error(ErrorCode::empty_point_set, "every image was skipped");

  MetricReport& agg = report.aggregate;
  agg.image_id = "AGGREGATE";
  int max_pred = 0;
  double gt_total = 0.0;
  for (const auto& r : report.per_image) {
    agg.cc += r.cc;
    agg.nss += r.nss;
    agg.ioc_nss += r.ioc_nss;
    max_pred = std::max(max_pred, r.n_pred_participants);
    gt_total += r.n_gt_observers;
  }
  const double k = static_cast<double>(report.per_image.size());
  agg.cc /= k;
  agg.nss /= k;
  agg.ioc_nss /= k;
  agg.normalized_nss = normalized_nss(agg.nss, agg.ioc_nss);
  agg.n_pred_participants = opts.n_pred > 0 ? std::min(opts.n_pred, max_pred) : max_pred;
  agg.n_gt_observers = static_cast<int>(std::lround(gt_total / k));
  return report;
}

std::vector<CurvePoint> nss_curve(const std::vector<ImageData>& images, const MapParams& params,
                                  const std::vector<int>& ns, int n_splits, std::uint64_t seed) {
  if (images.empty()) throw ValidationError({"nss_curve needs at least one image"});
  std::vector<CurvePoint> curve;
  for (int n : ns) {
    if (n < 1) throw ValidationError({"participant counts must be positive"});
    double acc = 0.0;
    for (const auto& image : images) {
      const auto everyone = sorted_participants(image.pred);
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), everyone.size());
      const auto s = derive_seed(derive_seed(seed, image.image_id), static_cast<std::uint64_t>(n));
      acc += score_subsets(image, params, everyone, take, n_splits, s).nss;
    }
    curve.push_back({n, acc / static_cast<double>(images.size())});
  }
  return curve;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_row(std::ostream& out, const MetricReport& r) {
  out << r.image_id << ',' << r.n_pred_participants << ',' << num(r.cc) << ',' << num(r.nss) << ','
      << num(r.ioc_nss) << ',' << num(r.normalized_nss) << '\n';
}

}  // namespace

void write_report_csv(std::ostream& out, const DatasetReport& report) {
  out << "image_id,n_pred,cc,nss,ioc_nss,normalized_nss\n";
  for (const auto& r : report.per_image) write_row(out, r);
  write_row(out, report.aggregate);
}

}  // namespace bubbleview
