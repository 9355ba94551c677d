#include "atbseg/phantom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "atbseg/random.hpp"
#include "atbseg/rasterize.hpp"

namespace atbseg {
namespace {

constexpr double kLow = 0.1;    // control points stay inside [kLow, kHigh]
constexpr double kHigh = 0.89;  // so that amplitude <= 0.1 keeps contours in frame
constexpr double kMinAreaFraction = 0.05;

struct ShapeTemplate {
  double cx, cy, rx, ry;
};

constexpr std::array<ShapeTemplate, 3> kTemplates = {{
    {0.45, 0.26, 0.22, 0.12},  // upper
    {0.42, 0.66, 0.20, 0.14},  // tongue / jaw
    {0.74, 0.52, 0.10, 0.24},  // posterior wall
}};

std::vector<Point> star_polygon(Rng& rng, const ShapeTemplate& t) {
  const double cx = t.cx + rng.uniform(-0.04, 0.04);
  const double cy = t.cy + rng.uniform(-0.04, 0.04);
  const double rx = t.rx * rng.uniform(0.85, 1.15);
  const double ry = t.ry * rng.uniform(0.85, 1.15);
  const double rot = rng.uniform(-0.15, 0.15);
  const int n = 8 + static_cast<int>(rng.below(5));
  const double start = rng.uniform(0.0, 2.0 * std::numbers::pi / n);
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double theta = start + 2.0 * std::numbers::pi * (i + rng.uniform(-0.3, 0.3)) / n;
    const double f = rng.uniform(0.8, 1.05);
    const double ex = rx * f * std::cos(theta);
    const double ey = ry * f * std::sin(theta);
    pts.push_back({cx + ex * std::cos(rot) - ey * std::sin(rot), cy + ex * std::sin(rot) + ey * std::cos(rot)});
  }
  return pts;
}

bool acceptable(const std::vector<Point>& pts) {
  for (const auto& p : pts) {
    if (p.x < kLow || p.x > kHigh || p.y < kLow || p.y > kHigh) return false;
  }
  return std::abs(polygon_area(pts)) >= kMinAreaFraction && is_simple_polygon(pts);
}

int orientation(const Point& a, const Point& b, const Point& c) {
  const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return (v > 0) - (v < 0);
}

bool within_box(const Point& a, const Point& b, const Point& p) {
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
         p.y <= std::max(a.y, b.y);
}

bool segments_touch(const Point& a, const Point& b, const Point& c, const Point& d) {
  const int o1 = orientation(a, b, c), o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a), o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && within_box(a, b, c)) || (o2 == 0 && within_box(a, b, d)) ||
         (o3 == 0 && within_box(c, d, a)) || (o4 == 0 && within_box(c, d, b));
}

std::uint64_t coordinate_hash(const std::array<Polyline, 3>& contours) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (const auto& line : contours) {
    for (const auto& p : line) {
      h = mix64(h ^ std::bit_cast<std::uint64_t>(p.x));
      h = mix64(h ^ std::bit_cast<std::uint64_t>(p.y));
    }
  }
  return h;
}

const Point& extreme(const Polyline& line, auto better) {
  return *std::min_element(line.begin(), line.end(), better);
}

std::map<std::string, Point> landmarks_for(const std::array<Polyline, 3>& c) {
  auto by_x = [](const Point& a, const Point& b) { return a.x < b.x; };
  auto by_x_desc = [](const Point& a, const Point& b) { return a.x > b.x; };
  auto by_y_desc = [](const Point& a, const Point& b) { return a.y > b.y; };
  return {{"UL", extreme(c[0], by_x)},
          {"VEL", extreme(c[0], by_x_desc)},
          {"LL", extreme(c[1], by_x)},
          {"TB", extreme(c[1], by_x_desc)},
          {"GLTB", extreme(c[2], by_y_desc)}};
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

Grid<double> blur(const Grid<double>& in, double sigma) {
  const int r = 3;
  const auto k = gaussian_kernel(sigma, r);
  Grid<double> tmp(in.width, in.height), out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in(std::clamp(x + i, 0, in.width - 1), y);
      tmp(x, y) = s;
    }
  }
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp(x, std::clamp(y + i, 0, in.height - 1));
      out(x, y) = s;
    }
  }
  return out;
}

}  // namespace

bool is_simple_polygon(std::span<const Point> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const Point& a = polygon[i];
      const Point& b = polygon[(i + 1) % n];
      const Point& c = polygon[j];
      const Point& d = polygon[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex: reject folding back.
        const Point& shared = (j == i + 1) ? b : a;
        const Point& p = (j == i + 1) ? a : b;
        const Point& q = (j == i + 1) ? d : c;
        if (orientation(p, shared, q) == 0 && ((q.x - shared.x) * (p.x - shared.x) + (q.y - shared.y) * (p.y - shared.y)) > 0) {
          return false;
        }
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

void PhantomAnatomy::validate() const {
  if (!(intensity.tissue_mean > intensity.air_mean)) throw ValidationError("tissue_mean must exceed air_mean");
  if (!(intensity.noise_sigma >= 0.0 && intensity.noise_sigma < 0.2)) {
    throw ValidationError("noise_sigma must be in [0, 0.2)");
  }
  for (const auto& pts : control_points) {
    if (pts.size() < 6) throw ValidationError("anatomy contour needs at least 6 control points");
    if (!is_simple_polygon(pts)) throw ValidationError("anatomy contour is not a simple polygon");
  }
}

void MotionSpec::validate() const {
  if (!(amplitude >= 0.0 && amplitude <= 0.1)) throw ValidationError("motion amplitude must be in [0, 0.1]");
  if (period <= 1) throw ValidationError("motion period must exceed 1 frame");
}

PhantomAnatomy generate_subject(std::uint64_t seed) {
  PhantomAnatomy anatomy;
  anatomy.subject_seed = seed;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(hash_seed({seed, c, attempt}));
      auto pts = star_polygon(rng, kTemplates[c]);
      if (acceptable(pts)) {
        anatomy.control_points[c] = std::move(pts);
        break;
      }
    }
  }
  Rng rng(hash_seed({seed, 0x1a7e45ULL}));
  anatomy.intensity.tissue_mean = rng.uniform(0.65, 0.85);
  anatomy.intensity.air_mean = rng.uniform(0.05, 0.2);
  anatomy.intensity.noise_sigma = rng.uniform(0.02, 0.05);
  return anatomy;
}

VideoClip generate_clip(const PhantomAnatomy& anatomy, const CorpusProfile& profile, int n_frames,
                        const MotionSpec& motion, const std::string& subject_id, int video_index) {
  if (n_frames < 1) throw ConfigError("generate_clip: n_frames must be >= 1");
  profile.validate();
  motion.validate();
  anatomy.validate();

  std::array<double, 3> direction{}, phase{};
  Rng motion_rng(hash_seed({anatomy.subject_seed, motion.phase_seed}));
  for (std::size_t c = 0; c < 3; ++c) {
    direction[c] = motion_rng.uniform(0.0, 2.0 * std::numbers::pi);
    phase[c] = motion_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  const int w = profile.frame_width;
  const int h = profile.frame_height;
  const auto& in = anatomy.intensity;
  VideoClip clip;
  clip.subject = subject_id;
  clip.video_index = video_index;
  for (int t = 0; t < n_frames; ++t) {
    const double time = static_cast<double>(t) * profile.subsample_stride;
    ContourSet cs;
    for (std::size_t c = 0; c < 3; ++c) {
      const double s = motion.amplitude * std::sin(2.0 * std::numbers::pi * time / motion.period + phase[c]);
      const double dx = s * std::cos(direction[c]);
      const double dy = s * std::sin(direction[c]);
      for (const auto& p : anatomy.control_points[c]) {
        cs.contours[c].push_back({quantize_coordinate((p.x + dx) * w), quantize_coordinate((p.y + dy) * h)});
      }
    }
    cs.landmarks = landmarks_for(cs.contours);

    const auto masks = masks_from_contours(cs, w, h);
    Grid<double> base(w, h);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const bool tissue = masks[0].values[i] || masks[1].values[i] || masks[2].values[i];
      base.values[i] = tissue ? in.tissue_mean : in.air_mean;
    }
    const auto smooth = blur(base, 1.0);
    // Noise depends on the frame geometry, so identical geometry renders identically.
    Rng noise(hash_seed({anatomy.subject_seed, motion.phase_seed, coordinate_hash(cs.contours)}));
    Frame frame;
    frame.subject = subject_id;
    frame.video_index = video_index;
    frame.frame_index = t + 1;
    frame.pixels = ImageGrid(w, h);
    for (std::size_t i = 0; i < smooth.size(); ++i) {
      const double v = std::clamp(smooth.values[i] + in.noise_sigma * noise.normal(), 0.0, 1.0);
      frame.pixels.values[i] = static_cast<float>(std::lround(v * 255.0) / 255.0);
    }
    clip.frames.push_back(std::move(frame));
    clip.annotations.push_back(std::move(cs));
  }
  return clip;
}

namespace {

MotionSpec clip_motion(std::uint64_t seed, const CorpusProfile& profile) {
  Rng rng(seed);
  MotionSpec m;
  m.amplitude = 0.03;
  m.period = std::max(2, static_cast<int>(std::lround(profile.frame_rate * rng.uniform(0.35, 0.7))));
  m.phase_seed = rng.next();
  return m;
}

Subject phantom_subject(const std::string& id, std::uint64_t seed, const CorpusProfile& profile,
                        const std::vector<int>& clip_lengths) {
  const auto anatomy = generate_subject(seed);
  Subject s;
  s.id = id;
  for (std::size_t v = 0; v < clip_lengths.size(); ++v) {
    const auto motion = clip_motion(hash_seed({seed, 0x4d0710ULL, v}), profile);
    s.videos.push_back(generate_clip(anatomy, profile, clip_lengths[v], motion, id, static_cast<int>(v) + 1));
  }
  return s;
}

}  // namespace

Corpus build_phantom_corpus_a(std::uint64_t master_seed) {
  Corpus corpus;
  corpus.name = "phantomA";
  corpus.profile = corpus_a_profile();
  for (int i = 1; i <= 6; ++i) {
    const auto seed = hash_seed({master_seed, 'A', static_cast<std::uint64_t>(i)});
    Rng lengths(hash_seed({seed, 0x1e9ULL}));
    std::vector<int> clip_lengths(15);
    for (auto& n : clip_lengths) n = 36 + static_cast<int>(lengths.below(9));
    corpus.subjects.push_back(phantom_subject("P" + std::to_string(i), seed, corpus.profile, clip_lengths));
  }
  return corpus;
}

Corpus build_phantom_corpus_b(std::uint64_t master_seed) {
  Corpus corpus;
  corpus.name = "phantomB";
  corpus.profile = corpus_b_profile();
  for (int i = 1; i <= 2; ++i) {
    const auto seed = hash_seed({master_seed, 'B', static_cast<std::uint64_t>(i)});
    corpus.subjects.push_back(phantom_subject("Q" + std::to_string(i), seed, corpus.profile, {91, 69}));
  }
  return corpus;
}

BenchmarkSuite generate_benchmark_suite(const std::filesystem::path& out_dir, std::uint64_t master_seed) {
  BenchmarkSuite suite;
  suite.manifest_a = save_corpus(build_phantom_corpus_a(master_seed), out_dir / "phantomA");
  suite.manifest_b = save_corpus(build_phantom_corpus_b(master_seed), out_dir / "phantomB");
  return suite;
}

}  // namespace atbseg
