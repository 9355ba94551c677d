#include <doctest.h>

#include "atbseg/fsutil.hpp"
#include "atbseg/phantom.hpp"
#include "atbseg/rasterize.hpp"
#include "support/oracles.hpp"

using namespace atbseg;

namespace {

bool segments_intersect(const Point& a, const Point& b, const Point& c, const Point& d) {
  auto cross = [](const Point& o, const Point& p, const Point& q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  auto on = [](const Point& p, const Point& q, const Point& r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  return (d1 == 0 && on(c, d, a)) || (d2 == 0 && on(c, d, b)) || (d3 == 0 && on(a, b, c)) ||
         (d4 == 0 && on(a, b, d));
}

/// Brute force over all pairs of non-adjacent edges.
bool simple_by_brute_force(const std::vector<Point>& p) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n])) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("subjects are deterministic and distinct across seeds") {
  CHECK(generate_subject(1) == generate_subject(1));
  const auto a = generate_subject(1), b = generate_subject(2);
  double max_diff = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto n = std::min(a.control_points[c].size(), b.control_points[c].size());
    for (std::size_t i = 0; i < n; ++i) {
      max_diff = std::max({max_diff, std::abs(a.control_points[c][i].x - b.control_points[c][i].x),
                           std::abs(a.control_points[c][i].y - b.control_points[c][i].y)});
    }
  }
  CHECK(max_diff > 0.01);
}

TEST_CASE("anatomy polygons are simple, large enough and well formed") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto a = generate_subject(seed);
    REQUIRE_NOTHROW(a.validate());
    CHECK(a.intensity.tissue_mean > a.intensity.air_mean);
    CHECK(a.intensity.noise_sigma < 0.2);
    for (const auto& poly : a.control_points) {
      REQUIRE(poly.size() >= 6);
      REQUIRE(simple_by_brute_force(poly));
      REQUIRE(std::abs(oracle::shoelace(poly)) >= 0.05);
    }
  }
}

TEST_CASE("is_simple_polygon agrees with the brute-force oracle") {
  Rng rng(11);
  int simple = 0, complex = 0;
  for (int i = 0; i < 400; ++i) {
    std::vector<Point> p;
    const int n = 4 + static_cast<int>(rng.below(5));
    for (int k = 0; k < n; ++k) p.push_back({rng.uniform(), rng.uniform()});
    const bool expected = simple_by_brute_force(p);
    REQUIRE(is_simple_polygon(p) == expected);
    (expected ? simple : complex)++;
  }
  CHECK(simple > 20);
  CHECK(complex > 20);
}

TEST_CASE("zero motion reproduces the anatomy and identical frames") {
  const auto anatomy = generate_subject(9);
  const auto profile = corpus_a_profile();
  MotionSpec still;
  still.amplitude = 0.0;
  const auto one = generate_clip(anatomy, profile, 1, still);
  for (int c = 0; c < 3; ++c) {
    const auto& got = one.annotations[0].contours[c];
    REQUIRE(got.size() == anatomy.control_points[c].size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].x == quantize_coordinate(anatomy.control_points[c][i].x * 68));
      CHECK(got[i].y == quantize_coordinate(anatomy.control_points[c][i].y * 68));
    }
  }
  const auto five = generate_clip(anatomy, profile, 5, still);
  for (int t = 1; t < 5; ++t) CHECK(five.frames[t].pixels == five.frames[0].pixels);
}

TEST_CASE("moving clips change over time and stay deterministic") {
  const auto anatomy = generate_subject(10);
  MotionSpec motion;
  motion.phase_seed = 4;
  const auto a = generate_clip(anatomy, corpus_b_profile(), 6, motion);
  const auto b = generate_clip(anatomy, corpus_b_profile(), 6, motion);
  CHECK(a == b);
  CHECK_FALSE(a.annotations[0] == a.annotations[1]);
  CHECK(a.frames[0].pixels.width == 84);
}

TEST_CASE("rendered tissue is brighter than air and masks regenerate exactly") {
  const auto anatomy = generate_subject(12);
  const auto clip = generate_clip(anatomy, corpus_a_profile(), 4, MotionSpec{});
  for (std::size_t t = 0; t < clip.size(); ++t) {
    const auto masks = masks_from_contours(clip.annotations[t], 68, 68);
    double in = 0, out = 0;
    int n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < masks[0].size(); ++i) {
      const bool tissue = masks[0].values[i] || masks[1].values[i] || masks[2].values[i];
      (tissue ? in : out) += clip.frames[t].pixels.values[i];
      (tissue ? n_in : n_out)++;
      REQUIRE((clip.frames[t].pixels.values[i] >= 0.0f && clip.frames[t].pixels.values[i] <= 1.0f));
    }
    CHECK(in / n_in - out / n_out >= 0.5 * (anatomy.intensity.tissue_mean - anatomy.intensity.air_mean));
  }
}

TEST_CASE("phantom mask areas match the shoelace area") {
  const auto anatomy = generate_subject(13);
  const auto clip = generate_clip(anatomy, corpus_b_profile(), 3, MotionSpec{});
  for (const auto& cs : clip.annotations) {
    const auto masks = masks_from_contours(cs, 84, 84);
    for (int c = 0; c < 3; ++c) {
      const double area = std::abs(oracle::shoelace(cs.contours[c]));
      if (area < 100) continue;
      const double pixels = std::count(masks[c].values.begin(), masks[c].values.end(), 1);
      CHECK(std::abs(pixels - area) <= 0.02 * area);
    }
  }
}

TEST_CASE("invalid motion and anatomy are rejected") {
  MotionSpec m;
  m.amplitude = 0.2;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = MotionSpec{};
  m.period = 1;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  auto a = generate_subject(1);
  a.intensity.air_mean = 0.9;
  CHECK_THROWS_AS(a.validate(), ValidationError);
  CHECK_THROWS_AS(generate_clip(generate_subject(1), corpus_a_profile(), 0, MotionSpec{}), ConfigError);
}

TEST_CASE("benchmark corpora have the documented shape") {
  const auto a = build_phantom_corpus_a();
  CHECK(a.name == "phantomA");
  REQUIRE(a.subjects.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(a.subjects[i].id == "P" + std::to_string(i + 1));
    REQUIRE(a.subjects[i].videos.size() == 15);
    for (const auto& v : a.subjects[i].videos) {
      CHECK(v.size() >= 36);
      CHECK(v.size() <= 44);
    }
  }
  const auto b = build_phantom_corpus_b();
  CHECK(b.name == "phantomB");
  REQUIRE(b.subjects.size() == 2);
  CHECK(b.subjects[0].id == "Q1");
  CHECK(b.subjects[1].id == "Q2");
  for (const auto& s : b.subjects) {
    REQUIRE(s.videos.size() == 2);
    CHECK(s.videos[0].size() == 91);
    CHECK(s.videos[1].size() == 69);
  }
}

TEST_CASE("benchmark suite writes identical manifests for the same seed") {
  const auto d1 = oracle::temp_dir("suite1");
  const auto d2 = oracle::temp_dir("suite2");
  const auto s1 = generate_benchmark_suite(d1, 7);
  const auto s2 = generate_benchmark_suite(d2, 7);
  CHECK(read_file(s1.manifest_a) == read_file(s2.manifest_a));
  CHECK(read_file(s1.manifest_b) == read_file(s2.manifest_b));
  CHECK(read_file(d1 / "phantomB/Q2/v02/f0069.png") == read_file(d2 / "phantomB/Q2/v02/f0069.png"));
  const auto loaded = load_corpus(s1.manifest_b);
  CHECK(loaded == build_phantom_corpus_b(7));
}
