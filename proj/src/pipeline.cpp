#include "bubbleview/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bubbleview/analysis.hpp"
#include "bubbleview/error.hpp"
#include "bubbleview/imaging.hpp"
#include "bubbleview/maps.hpp"
#include "bubbleview/metrics.hpp"
#include "bubbleview/parallel.hpp"
#include "bubbleview/service.hpp"

namespace bubbleview {

using nlohmann::json;
namespace fs = std::filesystem;

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  static const std::set<std::string> known = {
      "config", "log", "stimuli", "fixations", "annotations", "dataset_tag", "map_sigma_px", "policy",
      "seed", "n_pred", "n_splits", "bootstrap_resamples", "heatmap_alpha", "out", "jobs"};
  std::vector<std::string> problems;
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) problems.push_back("unknown manifest field '" + key + "'");
  for (const char* key : {"config", "log", "stimuli", "seed", "out"})
    if (!j.contains(key)) problems.push_back(std::string("missing manifest field '") + key + "'");
  if (!problems.empty()) throw ValidationError(std::move(problems));

  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  RunManifest m;
  try {
    m.config = resolve(j.at("config").get<std::string>());
    m.log = resolve(j.at("log").get<std::string>());
    m.stimuli = resolve(j.at("stimuli").get<std::string>());
    if (j.contains("fixations") && !j["fixations"].is_null()) m.fixations = resolve(j["fixations"].get<std::string>());
    if (j.contains("annotations") && !j["annotations"].is_null())
      m.annotations = resolve(j["annotations"].get<std::string>());
    m.dataset_tag = j.value("dataset_tag", std::string());
    if (j.contains("map_sigma_px")) m.map_params.map_sigma_px = j["map_sigma_px"].get<double>();
    else if (!m.dataset_tag.empty()) m.map_params = dataset_map_params(m.dataset_tag);
    else throw ValidationError({"manifest needs map_sigma_px or a known dataset_tag"});
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      for (const auto& [key, _] : p.items())
        if (key != "min_clicks_per_image" && key != "participant_outlier_sd")
          throw ValidationError({"unknown policy field '" + key + "'"});
      m.policy.min_clicks_per_image = p.value("min_clicks_per_image", m.policy.min_clicks_per_image);
      if (p.contains("participant_outlier_sd")) {
        if (p["participant_outlier_sd"].is_null()) m.policy.participant_outlier_sd.reset();
        else m.policy.participant_outlier_sd = p["participant_outlier_sd"].get<double>();
      }
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_pred = j.value("n_pred", 0);
    m.n_splits = j.value("n_splits", 10);
    m.bootstrap_resamples = j.value("bootstrap_resamples", 1000);
    m.heatmap_alpha = j.value("heatmap_alpha", 0.6);
    m.out = resolve(j.at("out").get<std::string>());
    m.jobs = j.value("jobs", 1);
  } catch (const json::exception& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  validate_map_params(m.map_params);
  return m;
}

PreprocessSummary run_preprocess(const fs::path& stimuli_dir, double sigma_px, const fs::path& cache_dir, int jobs) {
  if (!(sigma_px > 0.0)) throw ValidationError({"sigma must be positive"});
  if (!fs::is_directory(stimuli_dir)) throw Error(ErrorCode::io, "not a directory: " + stimuli_dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(stimuli_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  const BlurCache cache(cache_dir);
  enum class Outcome { blurred, hit, failed };
  std::vector<Outcome> outcome(files.size());
  std::vector<std::string> reason(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    try {
      outcome[i] = cache.ensure(files[i].stem().string(), files[i], sigma_px) ? Outcome::blurred : Outcome::hit;
    } catch (const std::exception& e) {
      outcome[i] = Outcome::failed;
      reason[i] = e.what();
    }
  });

  PreprocessSummary summary;
  const fs::path index = cache.path_for("index", sigma_px).parent_path() / "index.csv";
  fs::create_directories(index.parent_path());
  std::ofstream idx(index);
  idx << "image_id,sigma_px,path\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string id = files[i].stem().string();
    switch (outcome[i]) {
      case Outcome::blurred: ++summary.blurred; break;
      case Outcome::hit: ++summary.cache_hits; break;
      case Outcome::failed: summary.failures.push_back(files[i].filename().string() + ": " + reason[i]); continue;
    }
    idx << id << ',' << sigma_token(sigma_px) << ',' << cache.path_for(id, sigma_px).filename().string() << '\n';
  }
  return summary;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class Outputs {
 public:
  Outputs(const RunManifest& m, AnalyzeSummary& summary)
      : dir_(m.out), summary_(summary),
        header_("# seed=" + std::to_string(m.seed) + " policy=" + describe(m.policy) +
                " map_sigma_px=" + num(m.map_params.map_sigma_px) + "\n") {
    fs::create_directories(dir_);
  }

  std::ofstream open(const std::string& name) {
    const fs::path p = dir_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
    out << header_;
    summary_.written.push_back(p);
    return out;
  }

  fs::path path(const std::string& name) {
    const fs::path p = dir_ / name;
    fs::create_directories(p.parent_path());
    summary_.written.push_back(p);
    return p;
  }

  const std::string& header() const { return header_; }

 private:
  fs::path dir_;
  AnalyzeSummary& summary_;
  std::string header_;
};

struct ClickData {
  std::string image_id;
  std::optional<FilteredPoints> points;
  std::optional<AttentionMap> map;
  std::string error;
};

std::vector<ClickData> collect_clicks(const RunManifest& m, const ExperimentConfig& cfg, const EventLog& log) {
  std::vector<ClickData> clicks(cfg.image_ids.size());
  parallel_for(clicks.size(), m.jobs, [&](std::size_t i) {
    ClickData& d = clicks[i];
    d.image_id = cfg.image_ids[i];
    try {
      d.points = to_pointset(log, cfg.experiment_id, d.image_id, m.policy);
      d.map = build_map(d.points->points, m.map_params);
    } catch (const Error& e) {
      d.error = e.what();
    }
  });
  return clicks;
}

void write_heatmaps(const RunManifest& m, const std::vector<ClickData>& clicks, Outputs& out) {
  for (const auto& d : clicks) {
    if (!d.map) continue;
    {
      auto grid = out.open("maps/" + d.image_id + "_clicks.txt");
      write_map(grid, *d.map);
    }
    const Image base = read_png(m.stimuli / (d.image_id + ".png"));
    write_png(out.path("heatmaps/" + d.image_id + "_clicks.png"), render_heatmap(*d.map, base, m.heatmap_alpha));
  }
}

std::optional<std::vector<double>> profile_if_uniform(const std::vector<AttentionMap>& maps) {
  if (maps.empty()) return std::nullopt;
  for (const auto& mp : maps)
    if (mp.width() != maps.front().width() || mp.height() != maps.front().height()) return std::nullopt;
  return center_bias_profile(maps);
}

}  // namespace

AnalyzeSummary run_export_heatmaps(const RunManifest& m) {
  AnalyzeSummary summary;
  const ExperimentConfig cfg = load_config(m.config);
  const EventLog log(m.log, make_catalog({cfg}, m.stimuli), EventLog::Mode::read_only);
  Outputs out(m, summary);
  const auto clicks = collect_clicks(m, cfg, log);
  for (const auto& d : clicks)
    if (!d.error.empty()) summary.failures.push_back(d.image_id + ": " + d.error);
  write_heatmaps(m, clicks, out);
  return summary;
}

AnalyzeSummary run_analyze(const RunManifest& m) {
  AnalyzeSummary summary;
  const ExperimentConfig cfg = load_config(m.config);
  const Catalog catalog = make_catalog({cfg}, m.stimuli);
  const EventLog log(m.log, catalog, EventLog::Mode::read_only);
  Outputs out(m, summary);

  const auto clicks = collect_clicks(m, cfg, log);
  {
    auto f = out.open("filtering.csv");
    f << "image_id,total_points,kept_points,removed_fraction,removed_participants\n";
    for (const auto& d : clicks) {
      if (!d.error.empty()) {
        summary.failures.push_back(d.image_id + ": " + d.error);
        continue;
      }
      std::string removed;
      for (const auto& id : d.points->removed_participants) removed += (removed.empty() ? "" : " ") + id;
      f << d.image_id << ',' << d.points->total_points << ',' << d.points->kept_points << ','
        << num(d.points->removed_fraction) << ',' << removed << '\n';
    }
  }
  write_heatmaps(m, clicks, out);

  // Ground truth.
  std::map<std::string, PointSet> fixations;
  if (m.fixations) {
    auto imported = import_fixations(*m.fixations, m.dataset_tag, catalog.images);
    for (auto& w : imported.warnings) summary.warnings.push_back(w);
    fixations = std::move(imported.by_image);
  } else {
    summary.warnings.push_back("no fixations given; metrics unavailable");
  }

  std::vector<ImageData> paired;
  for (const auto& d : clicks) {
    auto it = fixations.find(d.image_id);
    if (d.points && it != fixations.end()) paired.push_back({d.image_id, d.points->points, it->second});
  }

  if (!paired.empty()) {
    DatasetOptions opts{m.n_pred, m.n_splits, m.seed, /*skip_errors=*/true};
    const DatasetReport report = dataset_report(paired, m.map_params, opts);
    for (const auto& w : report.warnings) summary.warnings.push_back(w);
    for (const auto& s : report.skipped) summary.warnings.push_back("skipped " + s);
    auto f = out.open("metrics.csv");
    write_report_csv(f, report);
    summary.metrics_available = true;

    std::size_t fewest = SIZE_MAX;
    for (const auto& img : paired) fewest = std::min(fewest, img.pred.participants().size());
    std::vector<int> ns;
    for (int n = 1; n <= static_cast<int>(fewest); ++n) ns.push_back(n);
    const auto curve = nss_curve(paired, m.map_params, ns, m.n_splits, m.seed);
    {
      auto c = out.open("nss_curve.csv");
      c << "n,nss\n";
      for (const auto& p : curve) c << p.n << ',' << num(p.score) << '\n';
    }
    if (curve.size() >= 4) {
      std::vector<FitSample> samples;
      for (const auto& p : curve) samples.push_back({static_cast<double>(p.n), p.score});
      FitOptions fo;
      fo.seed = m.seed;
      fo.bootstrap_resamples = m.bootstrap_resamples;
      const PowerFit fit = fit_power(samples, fo);
      auto pf = out.open("power_fit.csv");
      write_fit_csv(pf, fit);
      pf << "# " << format_limit(fit) << '\n';
    } else {
      summary.warnings.push_back("fewer than 4 participant counts; power fit omitted");
    }
  } else if (m.fixations) {
    summary.warnings.push_back("no image has both clicks and fixations; metrics unavailable");
  }

  // Element importance.
  if (m.annotations) {
    auto f = out.open("elements.csv");
    f << "image_id,element_id,label,click_score,fixation_score\n";
    std::vector<std::pair<std::string, double>> by_label;
    std::vector<std::string> corr_rows;
    double p_sum = 0.0, s_sum = 0.0;
    int corr_n = 0;
    for (const auto& d : clicks) {
      const fs::path ann = *m.annotations / (d.image_id + ".json");
      if (!d.map || !fs::exists(ann)) continue;
      const auto elements = load_annotations(ann);
      const auto click_scores = element_importance(*d.map, elements);
      std::optional<std::vector<ElementScore>> fix_scores;
      if (auto it = fixations.find(d.image_id); it != fixations.end())
        fix_scores = element_importance(build_map(it->second, m.map_params), elements);
      for (std::size_t i = 0; i < click_scores.size(); ++i) {
        f << d.image_id << ',' << click_scores[i].element_id << ',' << click_scores[i].label << ','
          << num(click_scores[i].score) << ',' << (fix_scores ? num((*fix_scores)[i].score) : "") << '\n';
        by_label.emplace_back(click_scores[i].label, click_scores[i].score);
      }
      if (fix_scores && click_scores.size() >= 3) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < click_scores.size(); ++i) {
          a.push_back(click_scores[i].score);
          b.push_back((*fix_scores)[i].score);
        }
        try {
          const auto c = rank_correlation(a, b);
          corr_rows.push_back(d.image_id + ',' + num(c.pearson) + ',' + num(c.spearman));
          p_sum += c.pearson;
          s_sum += c.spearman;
          ++corr_n;
        } catch (const Error& e) {
          summary.warnings.push_back(d.image_id + ": element correlation undefined (" + e.what() + ")");
        }
      }
    }
    if (!by_label.empty()) {
      auto g = out.open("element_labels.csv");
      g << "label,mean_click_score,count\n";
      for (const auto& ls : aggregate_element_scores(by_label))
        g << ls.label << ',' << num(ls.mean_score) << ',' << ls.count << '\n';
    }
    if (corr_n > 0) {
      auto g = out.open("element_correlation.csv");
      g << "image_id,pearson,spearman\n";
      for (const auto& r : corr_rows) g << r << '\n';
      g << "MEAN," << num(p_sum / corr_n) << ',' << num(s_sum / corr_n) << '\n';
    }
  }

  // Center bias.
  std::vector<AttentionMap> click_maps, fix_maps;
  for (const auto& d : clicks)
    if (d.map) click_maps.push_back(*d.map);
  for (const auto& img : paired) fix_maps.push_back(build_map(img.gt, m.map_params));
  const auto click_profile = profile_if_uniform(click_maps);
  const auto fix_profile = profile_if_uniform(fix_maps);
  if (click_profile) {
    auto f = out.open("center_bias.csv");
    f << "x,clicks,fixations\n";
    for (std::size_t x = 0; x < click_profile->size(); ++x)
      f << x << ',' << num((*click_profile)[x]) << ','
        << (fix_profile && fix_profile->size() == click_profile->size() ? num((*fix_profile)[x]) : "") << '\n';
  } else if (!click_maps.empty()) {
    summary.warnings.push_back("images differ in size; center-bias profile omitted");
  }
  return summary;
}

}  // namespace bubbleview
