#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <sys/wait.h>

#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int rc;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(BUBBLEVIEW_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  std::array<char, 4096> buf{};
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0;) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = fixture::slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("cost prints per-image ranges") {
  auto r = cli("cost");
  CHECK(r.rc == 0);
  CHECK(r.out.find("$0.18-$0.26") != std::string::npos);
  r = cli("cost --time-per-image-s 30");
  CHECK(r.out.find("$0.53-$0.79") != std::string::npos);
  r = cli("cost --participants-lo 0 --participants-hi 0");
  CHECK(r.rc == 0);
  CHECK(r.out.find("$0.00") != std::string::npos);
}

TEST_CASE("bad arguments exit with 2") {
  CHECK(cli("").rc == 2);
  CHECK(cli("cost --images-per-task 0").rc == 2);
  CHECK(cli("cost --rate-per-min abc").rc == 2);
  CHECK(cli("no-such-command").rc == 2);
}

TEST_CASE("preprocess reports unreadable stimuli as partial failure") {
  fixture::TempDir dir;
  fixture::write_stimuli(dir / "stim", {"ok1", "ok2"}, 20, 16);
  std::ofstream(dir / "stim" / "broken.png") << "not a png";
  const auto r = cli("preprocess --stimuli " + (dir / "stim").string() + " --sigma 2 --out " + (dir / "cache").string());
  CHECK(r.rc == 3);
  CHECK(r.out.find("blurred 2") != std::string::npos);
  CHECK(fs::exists(dir / "cache" / "sigma_2" / "index.csv"));
}

TEST_CASE("analyze is byte-identical across runs") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 7, 6, 8, 6, 6);
  REQUIRE(cli("analyze " + e2e.manifest.string()).rc == 0);
  const auto first = snapshot(e2e.out);
  CHECK(first.count("metrics.csv") == 1);
  CHECK(first.count("nss_curve.csv") == 1);
  fs::remove_all(e2e.out);
  REQUIRE(cli("analyze " + e2e.manifest.string()).rc == 0);
  CHECK(snapshot(e2e.out) == first);
}

TEST_CASE("analyze flags override the manifest policy") {
  fixture::TempDir dir;
  const auto e2e = fixture::write_end_to_end(dir.path(), 8, 5, 4, 5, 4);
  REQUIRE(cli("analyze " + e2e.manifest.string() + " --min-clicks-per-image 2 --no-outlier-rule").rc == 0);
  const auto head = fixture::slurp(e2e.out / "filtering.csv");
  CHECK(head.find("min_clicks_per_image=2") != std::string::npos);
}

TEST_CASE("missing manifest exits with 4") {
  fixture::TempDir dir;
  CHECK(cli("analyze " + (dir / "nope.json").string()).rc == 4);
}

TEST_CASE("malformed manifest exits with 2") {
  fixture::TempDir dir;
  std::ofstream(dir / "m.json") << R"({"config": "c.json", "unknown_field": 1})";
  CHECK(cli("analyze " + (dir / "m.json").string()).rc == 2);
}
