#include "fixtures.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bubbleview/random.hpp"

namespace fixture {

using namespace bubbleview;

TempDir::TempDir() {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    char name[64];
    std::snprintf(name, sizeof name, "bubbleview-test-%016llx", static_cast<unsigned long long>(rng()));
    path_ = fs::temp_directory_path() / name;
    if (fs::create_directory(path_)) return;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

oracle::Grid grid(const AttentionMap& m) { return {m.width(), m.height(), m.values()}; }

std::vector<oracle::Pt> pts(const PointSet& ps) {
  std::vector<oracle::Pt> out;
  for (const auto& p : ps.points) out.push_back({p.x, p.y, p.participant_id});
  return out;
}

double gaussian(std::mt19937_64& rng) {
  const double r = std::sqrt(-2.0 * std::log(1.0 - uniform_unit(rng)));
  return r * std::cos(2.0 * M_PI * uniform_unit(rng));
}

AttentionMap random_map(int w, int h, std::mt19937_64& rng) {
  AttentionMap m(w, h);
  for (auto& v : m.values()) v = uniform_unit(rng);
  return m;
}

Image random_image(int w, int h, int channels, std::mt19937_64& rng) {
  Image img(w, h, channels);
  for (auto& v : img.pixels) v = uniform_unit(rng);
  return img;
}

PointSet random_points(int w, int h, int observers, int per_observer, std::mt19937_64& rng, PointKind kind) {
  PointSet ps{w, h, kind, {}};
  for (int o = 0; o < observers; ++o)
    for (int i = 0; i < per_observer; ++i)
      ps.points.push_back({uniform_unit(rng) * w, uniform_unit(rng) * h, 100.0 * i, "o" + std::to_string(o)});
  return ps;
}

void write_stimulus(const fs::path& path, int w, int h) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<double>(x) / w;
      img.at(x, y, 1) = static_cast<double>(y) / h;
      img.at(x, y, 2) = 0.5 + 0.5 * std::sin(0.3 * x) * std::cos(0.2 * y);
    }
  write_png(path, img);
}

void write_stimuli(const fs::path& dir, const std::vector<std::string>& ids, int w, int h) {
  fs::create_directories(dir);
  for (const auto& id : ids) write_stimulus(dir / (id + ".png"), w, h);
}

ExperimentConfig click_config(const std::string& id, std::vector<std::string> images) {
  ExperimentConfig cfg;
  cfg.experiment_id = id;
  cfg.task_type = TaskType::free_view;
  cfg.blur_sigma_px = 4.0;
  cfg.bubble_radius_px = 6.0;
  cfg.time_limit_s = 10.0;
  cfg.images_per_session = static_cast<int>(images.size());
  cfg.image_ids = std::move(images);
  return cfg;
}

Catalog catalog_for(const ExperimentConfig& cfg, int w, int h) {
  Catalog c;
  c.experiments[cfg.experiment_id] = cfg;
  for (const auto& id : cfg.image_ids) c.images[id] = {w, h};
  return c;
}

void append_session(EventLog& log, const ExperimentConfig& cfg, const std::string& session_id,
                    const std::string& participant_id, const std::map<std::string, Clicks>& clicks) {
  std::vector<std::string> order(cfg.image_ids.begin(), cfg.image_ids.begin() + cfg.images_per_session);
  std::vector<EventRecord> batch;
  std::int64_t seq = 0;
  auto add = [&](EventKind kind, const std::string& image, double t) -> EventRecord& {
    EventRecord e;
    e.session_id = session_id;
    e.participant_id = participant_id;
    e.experiment_id = cfg.experiment_id;
    e.image_id = image;
    e.seq = ++seq;
    e.kind = kind;
    e.t_ms = t;
    batch.push_back(e);
    return batch.back();
  };
  add(EventKind::session_begin, "", 1.0e12).text = nlohmann::json(order).dump();
  const EventKind kind = cfg.mouse_modality == MouseModality::move ? EventKind::move_sample : EventKind::click;
  for (const auto& image : order) {
    add(EventKind::image_begin, image, 0.0);
    double t = 0.0;
    if (auto it = clicks.find(image); it != clicks.end())
      for (const auto& [x, y] : it->second) {
        auto& e = add(kind, image, t += 250.0);
        e.x = x;
        e.y = y;
      }
    add(EventKind::image_end, image, t + 250.0);
  }
  add(EventKind::session_end, "", 0.0);
  log.append_batch(batch);
}

std::pair<double, double> Mixture::draw(std::mt19937_64& rng) const {
  for (;;) {
    double u = uniform_unit(rng);
    const Component* c = &components.back();
    for (const auto& comp : components) {
      if (u < comp.weight) {
        c = &comp;
        break;
      }
      u -= comp.weight;
    }
    // Box-Muller
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform_unit(rng)));
    const double th = 2.0 * M_PI * uniform_unit(rng);
    const double x = c->mx + c->sx * r * std::cos(th);
    const double y = c->my + c->sy * r * std::sin(th);
    if (x >= 0 && x < width && y >= 0 && y < height) return {x, y};
  }
}

PointSet mixture_points(const Mixture& mix, int observers, int per_observer, std::mt19937_64& rng, PointKind kind) {
  PointSet ps{mix.width, mix.height, kind, {}};
  for (int o = 0; o < observers; ++o)
    for (int i = 0; i < per_observer; ++i) {
      const auto [x, y] = mix.draw(rng);
      ps.points.push_back({x, y, 100.0 * i, "o" + std::to_string(o)});
    }
  return ps;
}

EndToEnd write_end_to_end(const fs::path& dir, std::uint64_t seed, int click_participants, int clicks_each,
                          int fixation_observers, int fixations_each, double map_sigma_px) {
  const Mixture mix;
  const std::string image = "mixture";
  fs::create_directories(dir);
  write_stimuli(dir / "stimuli", {image}, mix.width, mix.height);

  EndToEnd e;
  e.config = click_config("e2e", {image});
  save_config(e.config, dir / "config.json");

  std::mt19937_64 rng(seed);
  {
    EventLog log(dir / "events.jsonl", catalog_for(e.config, mix.width, mix.height));
    for (int p = 0; p < click_participants; ++p) {
      Clicks c;
      for (int i = 0; i < clicks_each; ++i) c.push_back(mix.draw(rng));
      char sid[16], pid[16];
      std::snprintf(sid, sizeof sid, "s%02d", p);
      std::snprintf(pid, sizeof pid, "p%02d", p);
      append_session(log, e.config, sid, pid, {{image, c}});
    }
  }
  {
    std::ofstream f(dir / "fixations.csv");
    f << "image_id,observer_id,x,y,t_ms\n";
    f.precision(17);
    for (int o = 0; o < fixation_observers; ++o)
      for (int i = 0; i < fixations_each; ++i) {
        const auto [x, y] = mix.draw(rng);
        f << image << ",obs" << o << ',' << x << ',' << y << ',' << 300 * i << '\n';
      }
  }
  e.out = dir / "out";
  nlohmann::json m = {{"config", "config.json"},  {"log", "events.jsonl"}, {"stimuli", "stimuli"},
                      {"fixations", "fixations.csv"}, {"map_sigma_px", map_sigma_px}, {"seed", seed},
                      {"n_splits", 10},               {"out", "out"}};
  e.manifest = dir / "manifest.json";
  std::ofstream(e.manifest) << m.dump(2) << '\n';
  return e;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fixture
