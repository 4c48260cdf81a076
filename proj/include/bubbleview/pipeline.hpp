#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bubbleview/config.hpp"
#include "bubbleview/store.hpp"

namespace bubbleview {

/// Everything one analysis run depends on. Relative paths in a manifest file
/// resolve against the manifest's directory.
struct RunManifest {
  std::filesystem::path config;
  std::filesystem::path log;
  std::filesystem::path stimuli;
  std::optional<std::filesystem::path> fixations;
  std::optional<std::filesystem::path> annotations;
  std::string dataset_tag;
  MapParams map_params;
  FilterPolicy policy;
  std::uint64_t seed = 0;
  int n_pred = 0;
  int n_splits = 10;
  int bootstrap_resamples = 1000;
  double heatmap_alpha = 0.6;
  std::filesystem::path out;
  int jobs = 1;
};

RunManifest load_manifest(const std::filesystem::path& path);

struct PreprocessSummary {
  int blurred = 0;
  int cache_hits = 0;
  std::vector<std::string> failures;  ///< "file: reason"
};

/// Blurs every PNG in `stimuli_dir` at `sigma_px` into the cache and writes
/// `index.csv` next to the cached files. Unreadable images are listed and
/// skipped.
PreprocessSummary run_preprocess(const std::filesystem::path& stimuli_dir, double sigma_px,
                                 const std::filesystem::path& cache_dir, int jobs);

struct AnalyzeSummary {
  bool metrics_available = false;
  std::vector<std::string> warnings;
  std::vector<std::string> failures;  ///< images that produced no click map
  std::vector<std::filesystem::path> written;
};

/// store -> maps -> metrics -> analysis. Without fixations the click-only
/// outputs (maps, heatmaps, element scores, click profile) are still written.
AnalyzeSummary run_analyze(const RunManifest& manifest);

/// Click maps as text grids and heatmap overlays only.
AnalyzeSummary run_export_heatmaps(const RunManifest& manifest);

}  // namespace bubbleview
