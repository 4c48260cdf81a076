#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "bubbleview/error.hpp"
#include "bubbleview/pipeline.hpp"
#include "fixtures.hpp"

using namespace bubbleview;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = fixture::slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("preprocess is idempotent and keyed by sigma") {
  fixture::TempDir dir;
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("img" + std::to_string(i));
  fixture::write_stimuli(dir / "stim", ids, 24, 16);
  std::ofstream(dir / "stim" / "img3.png", std::ios::trunc) << "garbage";

  const auto first = run_preprocess(dir / "stim", 2.0, dir / "cache", 2);
  CHECK(first.blurred == 9);
  CHECK(first.cache_hits == 0);
  REQUIRE(first.failures.size() == 1);
  CHECK(first.failures[0].find("img3.png") == 0);

  const auto warm = run_preprocess(dir / "stim", 2.0, dir / "cache", 1);
  CHECK(warm.blurred == 0);
  CHECK(warm.cache_hits == 9);

  const auto other = run_preprocess(dir / "stim", 5.0, dir / "cache", 1);
  CHECK(other.blurred == 9);
  CHECK(fs::exists(dir / "cache" / "sigma_2" / "index.csv"));
  CHECK(fs::exists(dir / "cache" / "sigma_5" / "index.csv"));
  CHECK_THROWS_AS(run_preprocess(dir / "stim", 0.0, dir / "cache", 1), ValidationError);
}

TEST_CASE("analyze writes every artifact with seed and policy") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 1234);
  const auto m = load_manifest(e2e.manifest);
  CHECK(m.seed == 1234);
  CHECK(m.map_params.map_sigma_px == 6.0);
  const auto s = run_analyze(m);
  CHECK(s.metrics_available);
  CHECK(s.failures.empty());
  for (const char* f : {"filtering.csv", "metrics.csv", "nss_curve.csv", "power_fit.csv", "center_bias.csv",
                        "maps/mixture_clicks.txt", "heatmaps/mixture_clicks.png"})
    CHECK_MESSAGE(fs::exists(e2e.out / f), f);
  for (const auto& [name, text] : read_outputs(e2e.out)) {
    if (name.ends_with(".png") || name.ends_with(".txt")) continue;
    CHECK_MESSAGE(text.rfind("# seed=1234 policy=", 0) == 0, name);
  }
}

TEST_CASE("analyze is deterministic and independent of the worker count") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 99);
  auto m = load_manifest(e2e.manifest);
  run_analyze(m);
  const auto first = read_outputs(e2e.out);
  fs::remove_all(e2e.out);
  m.jobs = 3;
  run_analyze(m);
  CHECK(read_outputs(e2e.out) == first);
}

TEST_CASE("missing fixations still produce click outputs") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 5);
  auto m = load_manifest(e2e.manifest);
  m.fixations.reset();
  const auto s = run_analyze(m);
  CHECK_FALSE(s.metrics_available);
  CHECK_FALSE(fs::exists(e2e.out / "metrics.csv"));
  CHECK(fs::exists(e2e.out / "maps/mixture_clicks.txt"));
  CHECK(fs::exists(e2e.out / "center_bias.csv"));
  CHECK(std::any_of(s.warnings.begin(), s.warnings.end(),
                    [](const std::string& w) { return w.find("metrics unavailable") != std::string::npos; }));
}

TEST_CASE("n_pred beyond the participants is capped with a warning") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 5, 5, 10, 4, 8);
  auto m = load_manifest(e2e.manifest);
  m.n_pred = 50;
  const auto s = run_analyze(m);
  CHECK(std::any_of(s.warnings.begin(), s.warnings.end(),
                    [](const std::string& w) { return w.find("capped") != std::string::npos; }));
}

TEST_CASE("element annotations produce element tables") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 8);
  fs::create_directories(dir / "ann");
  nlohmann::json ann = {{"image_id", "mixture"},
                        {"elements",
                         {{{"element_id", "left"}, {"label", "title"}, {"box", {20, 18, 20, 20}}},
                          {{"element_id", "right"}, {"label", "data"}, {"box", {56, 36, 20, 20}}},
                          {{"element_id", "corner"}, {"label", "legend"}, {"box", {0, 60, 12, 12}}},
                          {{"element_id", "top"}, {"label", "axis"}, {"box", {70, 0, 26, 8}}}}}};
  std::ofstream(dir / "ann" / "mixture.json") << ann.dump();
  auto m = load_manifest(e2e.manifest);
  m.annotations = dir / "ann";
  run_analyze(m);
  const auto elements = fixture::slurp(e2e.out / "elements.csv");
  CHECK(elements.find("mixture,left,title,1,") != std::string::npos);
  CHECK(fs::exists(e2e.out / "element_labels.csv"));
  CHECK(fs::exists(e2e.out / "element_correlation.csv"));
}

TEST_CASE("manifests are strict") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 1);
  auto j = nlohmann::json::parse(fixture::slurp(e2e.manifest));
  j["colour"] = "blue";
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK_THROWS_AS(load_manifest(dir / "bad.json"), ValidationError);
  j.erase("colour");
  j.erase("map_sigma_px");
  j["dataset_tag"] = "osie";
  std::ofstream(dir / "tag.json") << j.dump();
  CHECK(load_manifest(dir / "tag.json").map_params.map_sigma_px == 10.0);
  j.erase("dataset_tag");
  std::ofstream(dir / "none.json") << j.dump();
  CHECK_THROWS_AS(load_manifest(dir / "none.json"), ValidationError);
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), Error);
}
