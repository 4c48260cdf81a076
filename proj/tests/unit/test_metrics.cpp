#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bubbleview/error.hpp"
#include "bubbleview/metrics.hpp"
#include "fixtures.hpp"

using namespace bubbleview;

TEST_CASE("cc identities") {
  std::mt19937_64 rng(21);
  const auto m = fixture::random_map(8, 8, rng);
  CHECK(std::abs(cc(m, m) - 1.0) <= 1e-9);
  AttentionMap neg = m;
  for (auto& v : neg.values()) v = 3.0 - v;
  CHECK(std::abs(cc(m, neg) + 1.0) <= 1e-9);
}

TEST_CASE("cc matches the two-pass oracle") {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 50; ++i) {
    const auto a = fixture::random_map(8, 8, rng), b = fixture::random_map(8, 8, rng);
    CHECK(std::abs(cc(a, b) - oracle::pearson_cells(fixture::grid(a), fixture::grid(b))) <= 1e-9);
  }
}

TEST_CASE("cc is invariant to positive affine maps and rejects constants") {
  std::mt19937_64 rng(23);
  const auto a = fixture::random_map(10, 6, rng), b = fixture::random_map(10, 6, rng);
  AttentionMap a2 = a;
  for (auto& v : a2.values()) v = 4.5 * v + 0.25;
  CHECK(std::abs(cc(a2, b) - cc(a, b)) <= 1e-12);
  CHECK_THROWS_AS(cc(a, AttentionMap(10, 6, Normalization::raw, 1.0)), Error);
  CHECK_THROWS_AS(cc(a, AttentionMap(10, 5)), Error);
}

TEST_CASE("nss examples") {
  AttentionMap m(3, 3, Normalization::raw, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  PointSet at9{3, 3, PointKind::fixation, {{2, 2, 0, "o"}}};
  CHECK(nss(m, at9) == doctest::Approx(1.5492).epsilon(1e-4));

  PointSet every{3, 3, PointKind::fixation, {}};
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) every.points.push_back({double(x), double(y), 0, "o"});
  CHECK(std::abs(nss(m, every)) <= 1e-9);

  PointSet argmax{3, 3, PointKind::fixation, {{2, 2, 0, "a"}, {2.2, 1.9, 0, "b"}}};
  CHECK(nss(m, argmax) == doctest::Approx(zscore(m).at(2, 2)).epsilon(1e-12));

  CHECK_THROWS_AS(nss(m, PointSet{3, 3, PointKind::fixation, {}}), Error);
  CHECK_THROWS_AS(nss(AttentionMap(3, 3, Normalization::raw, 2.0), at9), Error);
}

TEST_CASE("nss matches the oracle and is affine invariant") {
  std::mt19937_64 rng(24);
  for (int i = 0; i < 50; ++i) {
    const auto m = fixture::random_map(16, 12, rng);
    const auto f = fixture::random_points(16, 12, 3, 4, rng);
    const double v = nss(m, f);
    CHECK(std::abs(v - oracle::nss(fixture::grid(m), fixture::pts(f))) <= 1e-9);
    AttentionMap scaled = m;
    for (auto& x : scaled.values()) x = 0.01 * x + 7.0;
    CHECK(std::abs(nss(scaled, f) - v) <= 1e-9);
  }
}

TEST_CASE("self prediction is positive") {
  std::mt19937_64 rng(25);
  const auto f = fixture::random_points(40, 30, 5, 8, rng);
  CHECK(nss(build_map(f, {3.0}), f) > 0.0);
}

TEST_CASE("ioc of identical single fixations is the single-point peak z-score") {
  PointSet gt{30, 30, PointKind::fixation, {{12, 14, 0, "a"}, {12, 14, 0, "b"}, {12, 14, 0, "c"}}};
  const auto single = build_map(gt.only("a"), {4.0});
  CHECK(ioc(gt, {4.0}) == doctest::Approx(zscore(single).at(12, 14)).epsilon(1e-12));
}

TEST_CASE("ioc matches the naive leave-one-out and ignores labels") {
  std::mt19937_64 rng(26);
  for (int observers = 2; observers <= 4; ++observers) {
    const auto gt = fixture::random_points(24, 18, observers, 5, rng);
    const double v = ioc(gt, {4.0});
    CHECK(std::abs(v - oracle::ioc(fixture::pts(gt), 24, 18, 4.0)) <= 1e-9);
    PointSet renamed = gt;
    for (auto& p : renamed.points) p.participant_id = "z" + std::to_string(observers - (p.participant_id[1] - '0'));
    CHECK(ioc(renamed, {4.0}) == v);
  }
  CHECK_THROWS_AS(ioc(fixture::random_points(10, 10, 1, 5, rng), {4.0}), Error);
}

TEST_CASE("normalized NSS formatting") {
  CHECK(format_percent(normalized_nss(1.27, 1.42)) == "89%");
  CHECK(format_percent(normalized_nss(1.20, 1.33)) == "90%");
  CHECK(format_percent(normalized_nss(2.61, 3.35)) == "78%");
  CHECK(format_percent(normalized_nss(1.5, 1.5)) == "100%");
  CHECK(format_percent(0.125) == "13%");
  CHECK(format_percent(-0.125) == "-13%");
  CHECK(normalized_nss(1.27, 1.42) == 1.27 / 1.42);
  CHECK_THROWS_AS(normalized_nss(1.0, 0.0), Error);
  CHECK_THROWS_AS(normalized_nss(1.0, -2.0), Error);
}

namespace {

ImageData image_data(const std::string& id, std::mt19937_64& rng, int participants = 6) {
  const fixture::Mixture mix;
  return {id, fixture::mixture_points(mix, participants, 8, rng, PointKind::click),
          fixture::mixture_points(mix, 4, 6, rng)};
}

}  // namespace

TEST_CASE("dataset report with all participants equals a single evaluation") {
  std::mt19937_64 rng(27);
  const std::vector<ImageData> imgs{image_data("a", rng)};
  const auto single = score_image(imgs[0], {4.0});
  for (int splits : {1, 7}) {
    const auto r = dataset_report(imgs, {4.0}, {6, splits, 99, false});
    CHECK(r.per_image[0].cc == single.cc);
    CHECK(r.per_image[0].nss == single.nss);
  }
  const auto all = dataset_report(imgs, {4.0}, {0, 10, 5, false});
  CHECK(all.per_image[0].nss == single.nss);
  CHECK(all.per_image[0].ioc_nss == ioc(imgs[0].gt, {4.0}));
  CHECK(all.per_image[0].normalized_nss == all.per_image[0].nss / all.per_image[0].ioc_nss);
}

TEST_CASE("dataset aggregate is the unweighted mean of images") {
  std::mt19937_64 rng(28);
  const std::vector<ImageData> imgs{image_data("a", rng), image_data("b", rng, 9)};
  const auto r = dataset_report(imgs, {4.0}, {3, 10, 1, false});
  REQUIRE(r.per_image.size() == 2);
  CHECK(r.aggregate.cc == doctest::Approx((r.per_image[0].cc + r.per_image[1].cc) / 2).epsilon(1e-15));
  CHECK(r.aggregate.nss == doctest::Approx((r.per_image[0].nss + r.per_image[1].nss) / 2).epsilon(1e-15));
  CHECK(r.aggregate.image_id == "AGGREGATE");
}

TEST_CASE("dataset report is reproducible and independent of image order") {
  std::mt19937_64 rng(29);
  std::vector<ImageData> imgs{image_data("a", rng), image_data("b", rng), image_data("c", rng)};
  const auto r1 = dataset_report(imgs, {4.0}, {3, 10, 42, false});
  const auto r2 = dataset_report(imgs, {4.0}, {3, 10, 42, false});
  std::ostringstream s1, s2;
  write_report_csv(s1, r1);
  write_report_csv(s2, r2);
  CHECK(s1.str() == s2.str());
  std::swap(imgs[0], imgs[2]);
  const auto r3 = dataset_report(imgs, {4.0}, {3, 10, 42, false});
  CHECK(r3.per_image[2].nss == r1.per_image[0].nss);
  const auto r4 = dataset_report(imgs, {4.0}, {3, 10, 43, false});
  CHECK(r4.per_image[0].nss != r3.per_image[0].nss);
}

TEST_CASE("n_pred above the available participants is capped with a warning") {
  std::mt19937_64 rng(30);
  const std::vector<ImageData> imgs{image_data("a", rng, 4)};
  const auto r = dataset_report(imgs, {4.0}, {10, 10, 1, false});
  CHECK_FALSE(r.warnings.empty());
  CHECK(r.per_image[0].n_pred_participants == 4);
  CHECK(r.per_image[0].nss == score_image(imgs[0], {4.0}).nss);
}

TEST_CASE("per-image errors carry the image id unless skipped") {
  std::mt19937_64 rng(31);
  std::vector<ImageData> imgs{image_data("good", rng), image_data("bad", rng)};
  imgs[1].gt = fixture::mixture_points(fixture::Mixture{}, 1, 5, rng);  // one observer: IOC undefined
  try {
    dataset_report(imgs, {4.0}, {0, 10, 1, false});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  const auto r = dataset_report(imgs, {4.0}, {0, 10, 1, true});
  CHECK(r.per_image.size() == 1);
  CHECK(r.skipped.size() == 1);
}

TEST_CASE("report CSV layout") {
  std::mt19937_64 rng(32);
  const std::vector<ImageData> imgs{image_data("a", rng)};
  std::ostringstream out;
  write_report_csv(out, dataset_report(imgs, {4.0}, {0, 10, 1, false}));
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "image_id,n_pred,cc,nss,ioc_nss,normalized_nss");
  CHECK(lines[1].rfind("a,6,", 0) == 0);
  CHECK(lines[2].rfind("AGGREGATE,", 0) == 0);
}

TEST_CASE("nss curve is one mean per participant count") {
  std::mt19937_64 rng(33);
  const std::vector<ImageData> imgs{image_data("a", rng), image_data("b", rng)};
  const auto curve = nss_curve(imgs, {4.0}, {1, 2, 6}, 10, 5);
  REQUIRE(curve.size() == 3);
  CHECK(curve[2].n == 6);
  const double full = (score_image(imgs[0], {4.0}).nss + score_image(imgs[1], {4.0}).nss) / 2;
  CHECK(curve[2].score == doctest::Approx(full).epsilon(1e-15));
}
