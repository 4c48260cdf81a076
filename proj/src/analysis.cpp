#include "bubbleview/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "bubbleview/error.hpp"
#include "bubbleview/imaging.hpp"

namespace bubbleview {

namespace {

void check_region(const ElementAnnotation& e, int w, int h) {
  const std::string who = "element '" + e.element_id + "'";
  if (const auto* box = std::get_if<Box>(&e.region)) {
    if (box->width <= 0 || box->height <= 0)
      throw ValidationError({who + " has an empty box"});
    if (box->x < 0 || box->y < 0 || box->x + box->width > w || box->y + box->height > h)
      throw Error(ErrorCode::out_of_bounds, who + " lies outside the map");
  } else {
    const auto& mask = std::get<Mask>(e.region);
    if (mask.width != w || mask.height != h)
      throw Error(ErrorCode::out_of_bounds, who + " mask does not match the map size");
    if (mask.inside.size() != static_cast<std::size_t>(w) * h)
      throw ValidationError({who + " mask buffer has the wrong size"});
    if (std::none_of(mask.inside.begin(), mask.inside.end(), [](auto v) { return v != 0; }))
      throw ValidationError({who + " has an empty mask"});
  }
}

}  // namespace

std::vector<ElementScore> element_importance(const AttentionMap& map,
                                             std::span<const ElementAnnotation> elements) {
  if (map.values().empty()) throw ValidationError({"element_importance needs a nonempty map"});
  const double peak = map.max_value();
  auto normalized = [&](int x, int y) { return peak > 0.0 ? map.at(x, y) / peak : 0.0; };

  std::vector<ElementScore> out;
  for (const auto& e : elements) {
    check_region(e, map.width(), map.height());
    double best = 0.0;
    if (const auto* box = std::get_if<Box>(&e.region)) {
      for (int y = box->y; y < box->y + box->height; ++y)
        for (int x = box->x; x < box->x + box->width; ++x) best = std::max(best, normalized(x, y));
    } else {
      const auto& mask = std::get<Mask>(e.region);
      for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
          if (mask.inside[static_cast<std::size_t>(y) * mask.width + x])
            best = std::max(best, normalized(x, y));
    }
    out.push_back({e.element_id, e.label, best});
  }
  return out;
}

std::vector<ElementAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open annotations " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }

  std::vector<ElementAnnotation> out;
  try {
    for (const auto& el : j.at("elements")) {
      ElementAnnotation a;
      a.element_id = el.at("element_id").get<std::string>();
      a.label = el.at("label").get<std::string>();
      if (el.contains("box")) {
        const auto b = el.at("box").get<std::vector<int>>();
        if (b.size() != 4) throw ValidationError({"element '" + a.element_id + "': box needs 4 numbers"});
        a.region = Box{b[0], b[1], b[2], b[3]};
      } else if (el.contains("mask")) {
        const auto img = read_png(path.parent_path() / el.at("mask").get<std::string>());
        Mask m{img.width, img.height, std::vector<std::uint8_t>(static_cast<std::size_t>(img.width) * img.height)};
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x)
            m.inside[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, 0) > 0.0 ? 1 : 0;
        a.region = std::move(m);
      } else {
        throw ValidationError({"element '" + a.element_id + "' needs a box or a mask"});
      }
      out.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::dimension_mismatch, "score lists differ in length");
  if (a.empty()) throw ValidationError({"empty score lists"});
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorCode::zero_variance, "constant score list");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

Correlations rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::dimension_mismatch, "score lists differ in length");
  if (a.size() < 3) throw ValidationError({"rank_correlation needs at least 3 pairs"});
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return {pearson(a, b), pearson(ra, rb)};
}

std::vector<LabelScore> aggregate_element_scores(
    std::span<const std::pair<std::string, double>> per_image) {
  if (per_image.empty()) throw ValidationError({"no element scores to aggregate"});
  std::vector<LabelScore> out;
  std::map<std::string, std::size_t> slot;
  for (const auto& [label, score] : per_image) {
    auto [it, fresh] = slot.try_emplace(label, out.size());
    if (fresh) out.push_back({label, 0.0, 0});
    out[it->second].mean_score += score;
    out[it->second].count += 1;
  }
  for (auto& ls : out) ls.mean_score /= ls.count;
  return out;
}

std::vector<double> center_bias_profile(std::span<const AttentionMap> maps) {
  const AttentionMap mean = mean_map(maps);
  std::vector<double> profile(static_cast<std::size_t>(mean.width()), 0.0);
  for (int x = 0; x < mean.width(); ++x) {
    double acc = 0.0;
    for (int y = 0; y < mean.height(); ++y) acc += mean.at(x, y);
    profile[static_cast<std::size_t>(x)] = acc / mean.height();
  }
  const double peak = *std::max_element(profile.begin(), profile.end());
  if (!(peak > 0.0)) throw Error(ErrorCode::zero_variance, "center bias profile has no mass");
  for (auto& v : profile) v /= peak;
  return profile;
}

CostEstimate estimate_cost(const CostModel& model) {
  std::vector<std::string> v;
  if (!(model.rate_per_min > 0.0)) v.emplace_back("rate_per_min must be positive");
  if (!(model.time_per_image_s > 0.0)) v.emplace_back("time_per_image_s must be positive");
  if (model.images_per_task < 1) v.emplace_back("images_per_task must be positive");
  if (model.participants_lo < 0 || model.participants_hi < model.participants_lo)
    v.emplace_back("participants range must satisfy 0 <= lo <= hi");
  if (model.task_price && !(*model.task_price >= 0.0)) v.emplace_back("task_price must be nonnegative");
  if (!v.empty()) throw ValidationError(std::move(v));

  CostEstimate est;
  if (model.task_price) {
    est.task_cost_exact = *model.task_price;
    est.task_cost = *model.task_price;
  } else {
    est.task_cost_exact = model.rate_per_min * (model.time_per_image_s / 60.0) * model.images_per_task;
    // Next multiple of $0.10; the slack absorbs representation error in
    // products that are exact multiples.
    est.task_cost = std::ceil(est.task_cost_exact * 10.0 - 1e-9) / 10.0;
  }
  const double per_participant = est.task_cost / model.images_per_task;
  est.per_image_lo = per_participant * model.participants_lo;
  est.per_image_hi = per_participant * model.participants_hi;
  return est;
}

std::string format_dollars(double amount) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", amount * 100.0);
  const double cents = std::round(std::strtod(buf, nullptr));
  std::snprintf(buf, sizeof buf, "$%.2f", (cents == 0.0 ? 0.0 : cents) / 100.0);
  return buf;
}

void write_cost_table(std::ostream& out, std::span<const std::pair<std::string, CostModel>> rows) {
  out << "Task | Time/image | Images/task | Cost/task | Participants | Cost/image\n";
  for (const auto& [name, model] : rows) {
    const auto est = estimate_cost(model);
    char time[32];
    std::snprintf(time, sizeof time, "%g sec", model.time_per_image_s);
    out << name << " | " << time << " | " << model.images_per_task << " | "
        << format_dollars(est.task_cost) << " | " << model.participants_lo << "-" << model.participants_hi
        << " | " << format_dollars(est.per_image_lo) << "-" << format_dollars(est.per_image_hi) << '\n';
  }
}

}  // namespace bubbleview
