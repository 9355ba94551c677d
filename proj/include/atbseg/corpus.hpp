#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atbseg/grid.hpp"

namespace atbseg {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Polyline = std::vector<Point>;

/// Acquisition parameters of one corpus.
struct CorpusProfile {
  std::string name;
  int frame_width = 0;
  int frame_height = 0;
  double pixel_spacing = 0.0;  // mm per pixel
  double frame_rate = 0.0;     // frames per second
  int subsample_stride = 1;    // every stride-th acquired frame is kept

  void validate() const;
  friend bool operator==(const CorpusProfile&, const CorpusProfile&) = default;
};

/// 68x68, 2.9 mm, 23.18 fps, every frame kept.
CorpusProfile corpus_a_profile();
/// 84x84, 2.4 mm, 83.277 fps, one frame in four kept.
CorpusProfile corpus_b_profile();
/// Looks up "corpusA" / "corpusB".
std::optional<CorpusProfile> named_profile(std::string_view name);

inline constexpr std::array<std::string_view, 5> kLandmarkNames = {"GLTB", "TB", "VEL", "LL", "UL"};

struct ContourSet {
  std::array<Polyline, 3> contours;  // C1, C2, C3
  std::map<std::string, Point> landmarks;

  const Polyline& c1() const { return contours[0]; }
  const Polyline& c2() const { return contours[1]; }
  const Polyline& c3() const { return contours[2]; }

  /// Throws ValidationError on short polylines, out-of-bounds coordinates or missing landmarks.
  void validate(int width, int height) const;
  friend bool operator==(const ContourSet&, const ContourSet&) = default;
};

struct MaskTriple {
  std::array<BinaryGrid, 3> masks;

  BinaryGrid& operator[](std::size_t i) { return masks[i]; }
  const BinaryGrid& operator[](std::size_t i) const { return masks[i]; }
  int width() const { return masks[0].width; }
  int height() const { return masks[0].height; }
  friend bool operator==(const MaskTriple&, const MaskTriple&) = default;
};

struct Frame {
  ImageGrid pixels;  // intensities in [0, 1]
  std::string subject;
  int video_index = 1;
  int frame_index = 1;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct VideoClip {
  std::string subject;
  int video_index = 1;
  std::vector<Frame> frames;
  std::vector<ContourSet> annotations;  // parallel to frames

  std::size_t size() const { return frames.size(); }
  friend bool operator==(const VideoClip&, const VideoClip&) = default;
};

struct Subject {
  std::string id;
  std::vector<VideoClip> videos;  // ordered by video_index

  const VideoClip* video(int index) const;
  friend bool operator==(const Subject&, const Subject&) = default;
};

struct Corpus {
  std::string name;
  CorpusProfile profile;
  std::vector<Subject> subjects;

  const Subject* subject(std::string_view id) const;
  const Subject& require_subject(std::string_view id) const;
  std::size_t frame_count() const;

  /// Full structural validation; throws ValidationError.
  void validate() const;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

bool is_valid_subject_id(std::string_view id);

/// Rounds a coordinate to the 3-decimal grid used by the annotation format.
double quantize_coordinate(double v);

/// Reads a manifest and everything it references. Relative paths resolve against
/// the manifest's directory.
Corpus load_corpus(const std::filesystem::path& manifest_path);

/// Writes <dir>/manifest.json plus one PNG and one annotation JSON per frame.
/// Output bytes depend only on the corpus contents.
std::filesystem::path save_corpus(const Corpus& corpus, const std::filesystem::path& directory);

std::string annotation_to_json(const ContourSet& cs);
ContourSet annotation_from_json(std::string_view text);

}  // namespace atbseg
