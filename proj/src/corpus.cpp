#include "atbseg/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "atbseg/fsutil.hpp"
#include "atbseg/png_io.hpp"

namespace atbseg {

namespace fs = std::filesystem;
using nlohmann::json;

void CorpusProfile::validate() const {
  if (frame_width < 16 || frame_height < 16) {
    throw ValidationError("profile " + name + ": frame dimensions must be at least 16x16");
  }
  if (!(pixel_spacing > 0.0)) throw ValidationError("profile " + name + ": pixel_spacing must be positive");
  if (!(frame_rate > 0.0)) throw ValidationError("profile " + name + ": frame_rate must be positive");
  if (subsample_stride < 1) throw ValidationError("profile " + name + ": subsample_stride must be >= 1");
}

CorpusProfile corpus_a_profile() { return {"corpusA", 68, 68, 2.9, 23.18, 1}; }
CorpusProfile corpus_b_profile() { return {"corpusB", 84, 84, 2.4, 83.277, 4}; }

std::optional<CorpusProfile> named_profile(std::string_view name) {
  if (name == "corpusA") return corpus_a_profile();
  if (name == "corpusB") return corpus_b_profile();
  return std::nullopt;
}

void ContourSet::validate(int width, int height) const {
  for (std::size_t i = 0; i < contours.size(); ++i) {
    const auto& line = contours[i];
    const auto id = "c" + std::to_string(i + 1);
    if (line.size() < 3) throw ValidationError(id + ": needs at least 3 vertices");
    for (const auto& p : line) {
      if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
        throw ValidationError(id + ": vertex out of bounds");
      }
    }
  }
  for (auto key : kLandmarkNames) {
    if (!landmarks.count(std::string(key))) throw ValidationError("missing landmark " + std::string(key));
  }
}

const VideoClip* Subject::video(int index) const {
  for (const auto& v : videos) {
    if (v.video_index == index) return &v;
  }
  return nullptr;
}

const Subject* Corpus::subject(std::string_view id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const Subject& Corpus::require_subject(std::string_view id) const {
  const auto* s = subject(id);
  if (!s) throw ConfigError("corpus " + name + " has no subject " + std::string(id));
  return *s;
}

std::size_t Corpus::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects) {
    for (const auto& v : s.videos) n += v.frames.size();
  }
  return n;
}

bool is_valid_subject_id(std::string_view id) {
  static const std::regex pattern("^[A-Za-z]+[0-9]+$");
  return std::regex_match(id.begin(), id.end(), pattern);
}

void Corpus::validate() const {
  profile.validate();
  std::set<std::string> ids;
  for (const auto& s : subjects) {
    if (!is_valid_subject_id(s.id)) throw ValidationError("invalid subject id '" + s.id + "'");
    if (!ids.insert(s.id).second) throw ValidationError("duplicate subject id " + s.id);
    std::set<int> videos;
    for (const auto& v : s.videos) {
      const auto where = s.id + " video " + std::to_string(v.video_index);
      if (!videos.insert(v.video_index).second) throw ValidationError("duplicate " + where);
      if (v.frames.empty()) throw ValidationError(where + ": no frames");
      if (v.frames.size() != v.annotations.size()) {
        throw ValidationError(where + ": " + std::to_string(v.frames.size()) + " frames but " +
                              std::to_string(v.annotations.size()) + " annotations");
      }
      int last = 0;
      for (std::size_t i = 0; i < v.frames.size(); ++i) {
        const auto& f = v.frames[i];
        if (f.frame_index <= last) throw ValidationError(where + ": frame indices not increasing");
        last = f.frame_index;
        if (f.pixels.width != profile.frame_width || f.pixels.height != profile.frame_height) {
          throw ValidationError(where + " frame " + std::to_string(f.frame_index) + ": " +
                                std::to_string(f.pixels.width) + "x" + std::to_string(f.pixels.height) +
                                " does not match profile " + profile.name + " (" +
                                std::to_string(profile.frame_width) + "x" +
                                std::to_string(profile.frame_height) + ")");
        }
        for (float p : f.pixels.values) {
          if (!(p >= 0.0f && p <= 1.0f)) throw ValidationError(where + ": intensity outside [0,1]");
        }
        try {
          v.annotations[i].validate(profile.frame_width, profile.frame_height);
        } catch (const ValidationError& e) {
          throw ValidationError(where + " frame " + std::to_string(f.frame_index) + ": " + e.what());
        }
      }
    }
  }
}

double quantize_coordinate(double v) { return std::round(v * 1000.0) / 1000.0; }

namespace {

void append_coord(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  out += buf;
}

void append_point(std::string& out, const Point& p) {
  out += '[';
  append_coord(out, p.x);
  out += ", ";
  append_coord(out, p.y);
  out += ']';
}

Point point_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(what + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json profile_to_json(const CorpusProfile& p) {
  return json{{"name", p.name},
              {"frame_width", p.frame_width},
              {"frame_height", p.frame_height},
              {"pixel_spacing", p.pixel_spacing},
              {"frame_rate", p.frame_rate},
              {"subsample_stride", p.subsample_stride}};
}

CorpusProfile profile_from_json(const json& j) {
  CorpusProfile p;
  try {
    p.name = j.at("name").get<std::string>();
    p.frame_width = j.at("frame_width").get<int>();
    p.frame_height = j.at("frame_height").get<int>();
    p.pixel_spacing = j.at("pixel_spacing").get<double>();
    p.frame_rate = j.at("frame_rate").get<double>();
    p.subsample_stride = j.value("subsample_stride", 1);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest profile: ") + e.what());
  }
  p.validate();
  return p;
}

std::string two_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", v);
  return buf;
}

std::string four_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", v);
  return buf;
}

}  // namespace

std::string annotation_to_json(const ContourSet& cs) {
  std::string out = "{\n";
  for (std::size_t i = 0; i < 3; ++i) {
    out += "  \"c" + std::to_string(i + 1) + "\": [";
    for (std::size_t k = 0; k < cs.contours[i].size(); ++k) {
      if (k) out += ", ";
      append_point(out, cs.contours[i][k]);
    }
    out += "],\n";
  }
  out += "  \"landmarks\": {";
  bool first = true;
  for (auto key : kLandmarkNames) {
    auto it = cs.landmarks.find(std::string(key));
    if (it == cs.landmarks.end()) continue;
    if (!first) out += ", ";
    first = false;
    out += "\"" + std::string(key) + "\": ";
    append_point(out, it->second);
  }
  out += "}\n}\n";
  return out;
}

ContourSet annotation_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("annotation: ") + e.what());
  }
  ContourSet cs;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto key = "c" + std::to_string(i + 1);
    if (!j.contains(key) || !j[key].is_array()) throw ValidationError("annotation: missing " + key);
    for (const auto& p : j[key]) cs.contours[i].push_back(point_from_json(p, key));
  }
  if (!j.contains("landmarks") || !j["landmarks"].is_object()) {
    throw ValidationError("annotation: missing landmarks");
  }
  for (const auto& [name, value] : j["landmarks"].items()) {
    cs.landmarks[name] = point_from_json(value, "landmark " + name);
  }
  return cs;
}

Corpus load_corpus(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw IngestionError("missing manifest: " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + manifest_path.string() + ": " + e.what());
  }

  Corpus corpus;
  corpus.name = manifest.value("name", manifest_path.parent_path().filename().string());
  if (!manifest.contains("profile")) throw ValidationError("manifest: missing profile");
  corpus.profile = profile_from_json(manifest["profile"]);
  const double max_value8 = 255.0;
  const double max_value16 = 65535.0;

  try {
    for (const auto& sj : manifest.value("subjects", json::array())) {
      Subject subject;
      subject.id = sj.at("id").get<std::string>();
      for (const auto& vj : sj.value("videos", json::array())) {
        VideoClip clip;
        clip.subject = subject.id;
        clip.video_index = vj.at("index").get<int>();
        int position = 0;
        for (const auto& fj : vj.value("frames", json::array())) {
          ++position;
          if (!fj.contains("image") || !fj.contains("annotation")) {
            throw ValidationError("manifest: frame entry needs image and annotation");
          }
          const auto image_path = base / fj["image"].get<std::string>();
          const auto annotation_path = base / fj["annotation"].get<std::string>();
          if (!fs::exists(image_path)) throw IngestionError("missing file: " + image_path.string());
          if (!fs::exists(annotation_path)) throw IngestionError("missing file: " + annotation_path.string());

          const auto img = png::read_gray(image_path);
          Frame frame;
          frame.subject = subject.id;
          frame.video_index = clip.video_index;
          frame.frame_index = fj.value("index", position);
          frame.pixels = ImageGrid(img.width, img.height);
          const double scale = img.bit_depth == 16 ? max_value16 : max_value8;
          for (std::size_t i = 0; i < img.samples.size(); ++i) {
            frame.pixels.values[i] = static_cast<float>(img.samples[i] / scale);
          }
          clip.frames.push_back(std::move(frame));
          clip.annotations.push_back(annotation_from_json(read_file(annotation_path)));
        }
        subject.videos.push_back(std::move(clip));
      }
      corpus.subjects.push_back(std::move(subject));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + manifest_path.string() + ": " + e.what());
  }
  corpus.validate();
  return corpus;
}

fs::path save_corpus(const Corpus& corpus, const fs::path& directory) {
  corpus.validate();
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec || !fs::is_directory(directory)) throw IngestionError("cannot create directory " + directory.string());

  json subjects = json::array();
  for (const auto& s : corpus.subjects) {
    json videos = json::array();
    for (const auto& v : s.videos) {
      const auto rel_dir = fs::path(s.id) / ("v" + two_digits(v.video_index));
      fs::create_directories(directory / rel_dir, ec);
      if (ec) throw IngestionError("cannot create directory " + (directory / rel_dir).string());
      json frames = json::array();
      for (std::size_t i = 0; i < v.frames.size(); ++i) {
        const auto& f = v.frames[i];
        const auto stem = "f" + four_digits(f.frame_index);
        const auto image_rel = rel_dir / (stem + ".png");
        const auto annotation_rel = rel_dir / (stem + ".json");

        png::GrayImage img;
        img.width = f.pixels.width;
        img.height = f.pixels.height;
        img.bit_depth = 8;
        img.samples.resize(f.pixels.size());
        for (std::size_t k = 0; k < f.pixels.size(); ++k) {
          img.samples[k] = static_cast<std::uint16_t>(std::lround(f.pixels.values[k] * 255.0));
        }
        png::write_gray(directory / image_rel, img);
        write_file_atomic(directory / annotation_rel, annotation_to_json(v.annotations[i]));
        frames.push_back(json{{"index", f.frame_index},
                              {"image", image_rel.generic_string()},
                              {"annotation", annotation_rel.generic_string()}});
      }
      videos.push_back(json{{"index", v.video_index}, {"frames", std::move(frames)}});
    }
    subjects.push_back(json{{"id", s.id}, {"videos", std::move(videos)}});
  }
  json manifest{{"name", corpus.name}, {"profile", profile_to_json(corpus.profile)}, {"subjects", subjects}};
  const auto path = directory / "manifest.json";
  write_file_atomic(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace atbseg
