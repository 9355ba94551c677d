#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "atbseg/corpus.hpp"

namespace atbseg {

struct IntensityParams {
  double tissue_mean = 0.75;
  double air_mean = 0.1;
  double noise_sigma = 0.03;
  friend bool operator==(const IntensityParams&, const IntensityParams&) = default;
};

/// A synthetic subject: three star-shaped tissue polygons in normalized
/// [0,1]^2 image coordinates (C1 upper structure, C2 tongue/jaw, C3 posterior wall).
struct PhantomAnatomy {
  std::uint64_t subject_seed = 0;
  std::array<std::vector<Point>, 3> control_points;
  IntensityParams intensity;

  void validate() const;
  friend bool operator==(const PhantomAnatomy&, const PhantomAnatomy&) = default;
};

/// Each contour oscillates rigidly along its own direction; `amplitude` is a
/// fraction of the image width and `period` is measured in acquired frames.
struct MotionSpec {
  double amplitude = 0.03;
  int period = 12;
  std::uint64_t phase_seed = 0;

  void validate() const;
};

PhantomAnatomy generate_subject(std::uint64_t seed);

/// Renders n_frames frames with annotations. Frame t samples the motion at
/// acquired-frame time t * profile.subsample_stride.
VideoClip generate_clip(const PhantomAnatomy& anatomy, const CorpusProfile& profile, int n_frames,
                        const MotionSpec& motion, const std::string& subject_id = "P1",
                        int video_index = 1);

/// True when no two non-adjacent edges touch and adjacent edges only share their vertex.
bool is_simple_polygon(std::span<const Point> polygon);

inline constexpr std::uint64_t kDefaultMasterSeed = 20240917;

/// "phantomA": corpusA profile, subjects P1..P6 with 15 clips of 36-44 frames.
Corpus build_phantom_corpus_a(std::uint64_t master_seed = kDefaultMasterSeed);
/// "phantomB": corpusB profile, subjects Q1, Q2 with clips of 91 and 69 frames.
Corpus build_phantom_corpus_b(std::uint64_t master_seed = kDefaultMasterSeed);

struct BenchmarkSuite {
  std::filesystem::path manifest_a;
  std::filesystem::path manifest_b;
};

/// Writes <out_dir>/phantomA and <out_dir>/phantomB.
BenchmarkSuite generate_benchmark_suite(const std::filesystem::path& out_dir,
                                        std::uint64_t master_seed = kDefaultMasterSeed);

}  // namespace atbseg
