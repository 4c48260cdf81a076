#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bubbleview/config.hpp"
#include "bubbleview/imaging.hpp"
#include "bubbleview/maps.hpp"
#include "bubbleview/store.hpp"
#include "oracles.hpp"

namespace fixture {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

oracle::Grid grid(const bubbleview::AttentionMap& m);
std::vector<oracle::Pt> pts(const bubbleview::PointSet& ps);

/// Standard normal via Box-Muller; same stream on every platform.
double gaussian(std::mt19937_64& rng);

bubbleview::AttentionMap random_map(int w, int h, std::mt19937_64& rng);
bubbleview::Image random_image(int w, int h, int channels, std::mt19937_64& rng);
/// `per_observer` points for each of `observers` participants "o0", "o1", ...
bubbleview::PointSet random_points(int w, int h, int observers, int per_observer, std::mt19937_64& rng,
                                   bubbleview::PointKind kind = bubbleview::PointKind::fixation);

/// Smooth RGB gradient stimulus.
void write_stimulus(const fs::path& path, int w, int h);
void write_stimuli(const fs::path& dir, const std::vector<std::string>& ids, int w, int h);

bubbleview::ExperimentConfig click_config(const std::string& id, std::vector<std::string> images);
bubbleview::Catalog catalog_for(const bubbleview::ExperimentConfig& cfg, int w, int h);

using Clicks = std::vector<std::pair<double, double>>;

/// One complete session over the first images_per_session images of `cfg`, in
/// config order, with `clicks[image]` on each (missing images get none).
void append_session(bubbleview::EventLog& log, const bubbleview::ExperimentConfig& cfg, const std::string& session_id,
                    const std::string& participant_id, const std::map<std::string, Clicks>& clicks);

/// Two-component Gaussian mixture over a w x h image.
struct Mixture {
  int width = 96;
  int height = 72;
  struct Component {
    double weight, mx, my, sx, sy;
  };
  std::vector<Component> components{{0.6, 30.0, 28.0, 8.0, 7.0}, {0.4, 66.0, 46.0, 9.0, 8.0}};

  std::pair<double, double> draw(std::mt19937_64& rng) const;
};

/// `per_observer` mixture draws for each of `observers` participants.
bubbleview::PointSet mixture_points(const Mixture& mix, int observers, int per_observer, std::mt19937_64& rng,
                                    bubbleview::PointKind kind = bubbleview::PointKind::fixation);

/// Everything the analysis pipeline reads, laid out in `dir`.
struct EndToEnd {
  fs::path manifest;
  fs::path out;
  bubbleview::ExperimentConfig config;
};

EndToEnd write_end_to_end(const fs::path& dir, std::uint64_t seed, int click_participants = 15,
                          int clicks_each = 20, int fixation_observers = 15, int fixations_each = 10,
                          double map_sigma_px = 6.0);

std::string slurp(const fs::path& p);

}  // namespace fixture
