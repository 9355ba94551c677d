#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "atbseg/checkpoint.hpp"
#include "atbseg/cli.hpp"
#include "atbseg/eval.hpp"
#include "atbseg/phantom.hpp"
#include "atbseg/rasterize.hpp"
#include "atbseg/train.hpp"

namespace py = pybind11;
using namespace atbseg;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

template <typename T, typename A>
Grid<T> to_grid(const A& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Grid<T> g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  const auto* p = a.data();
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = static_cast<T>(p[i]);
  return g;
}

BinaryGrid to_mask(const U8Array& a) {
  auto g = to_grid<std::uint8_t>(a);
  for (auto& v : g.values) v = v ? 1 : 0;
  return g;
}

template <typename T>
py::array_t<T> to_array(const Grid<T>& g) {
  py::array_t<T> out({g.height, g.width});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> stack_masks(const MaskTriple& m) {
  py::array_t<std::uint8_t> out({3, m.height(), m.width()});
  auto* p = out.mutable_data();
  for (const auto& g : m.masks) p = std::copy(g.values.begin(), g.values.end(), p);
  return out;
}

std::vector<Point> to_points(const std::vector<std::pair<double, double>>& xy) {
  std::vector<Point> pts;
  pts.reserve(xy.size());
  for (const auto& [x, y] : xy) pts.push_back({x, y});
  return pts;
}

std::vector<ImageGrid> to_frames(const F32Array& a) {
  if (a.ndim() != 3) throw ShapeError("expected frames shaped (N, H, W)");
  const int n = static_cast<int>(a.shape(0)), h = static_cast<int>(a.shape(1)), w = static_cast<int>(a.shape(2));
  std::vector<ImageGrid> frames(static_cast<std::size_t>(n), ImageGrid(w, h));
  const float* p = a.data();
  for (auto& f : frames) {
    std::copy(p, p + f.values.size(), f.values.begin());
    p += f.values.size();
  }
  return frames;
}

ModelConfig make_config(const std::string& architecture, int width, int height, int stages, int base_channels,
                        int kernel_size, int pool_factor, std::uint64_t seed, bool auto_pad) {
  ModelConfig c;
  c.variant = parse_architecture(architecture);
  c.input_width = width;
  c.input_height = height;
  c.stages = stages;
  c.base_channels = base_channels;
  c.kernel_size = kernel_size;
  c.pool_factor = pool_factor;
  c.seed = seed;
  c.auto_pad = auto_pad;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_atbseg, m) {
  m.doc() = "Air-tissue boundary segmentation with low-resource adaptation";

  auto base = py::register_exception<Error>(m, "AtbsegError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  m.def(
      "contour_to_mask",
      [](const std::vector<std::pair<double, double>>& polygon, int width, int height) {
        return to_array(contour_to_mask(to_points(polygon), width, height));
      },
      py::arg("polygon"), py::arg("width"), py::arg("height"),
      "Even-odd fill of a closed polygon sampled at pixel centers; returns uint8 (height, width).");
  m.def(
      "polygon_area", [](const std::vector<std::pair<double, double>>& p) { return polygon_area(to_points(p)); },
      py::arg("polygon"));
  m.def(
      "pca", [](const U8Array& pred, const U8Array& gt) { return pca(to_mask(pred), to_mask(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "dice", [](const U8Array& pred, const U8Array& gt) { return dice(to_mask(pred), to_mask(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "resize_frame",
      [](const F32Array& frame, int width, int height) {
        return to_array(resize_frame(to_grid<float>(frame), width, height));
      },
      py::arg("frame"), py::arg("width"), py::arg("height"));
  m.def(
      "resize_mask",
      [](const U8Array& mask, int width, int height) { return to_array(resize_mask(to_mask(mask), width, height)); },
      py::arg("mask"), py::arg("width"), py::arg("height"));

  m.def(
      "phantom_clip",
      [](std::uint64_t subject_seed, int n_frames, const std::string& profile, double amplitude, int period) {
        const auto prof = named_profile(profile);
        if (!prof) throw ConfigError("unknown profile '" + profile + "'");
        MotionSpec motion;
        motion.amplitude = amplitude;
        motion.period = period;
        const auto clip = generate_clip(generate_subject(subject_seed), *prof, n_frames, motion);
        py::list frames;
        for (std::size_t i = 0; i < clip.frames.size(); ++i) {
          frames.append(py::make_tuple(to_array(clip.frames[i].pixels),
                                       stack_masks(masks_from_contours(clip.annotations[i], prof->frame_width,
                                                                       prof->frame_height))));
        }
        return frames;
      },
      py::arg("subject_seed"), py::arg("n_frames"), py::arg("profile") = "corpusA", py::arg("amplitude") = 0.03,
      py::arg("period") = 12, "List of (image float32 (H, W), masks uint8 (3, H, W)) for one synthetic clip.");
  m.def(
      "write_benchmark_suite",
      [](const std::filesystem::path& out, std::uint64_t seed) {
        const auto s = generate_benchmark_suite(out, seed);
        return py::make_tuple(s.manifest_a, s.manifest_b);
      },
      py::arg("out_dir"), py::arg("seed") = kDefaultMasterSeed);

  py::class_<SegModel>(m, "SegModel")
      .def(py::init([](const std::string& architecture, int width, int height, int stages, int base_channels,
                       int kernel_size, int pool_factor, std::uint64_t seed, bool auto_pad) {
             return build_model(
                 make_config(architecture, width, height, stages, base_channels, kernel_size, pool_factor, seed, auto_pad));
           }),
           py::arg("architecture") = "segnet-style", py::arg("width") = 64, py::arg("height") = 64,
           py::arg("stages") = 3, py::arg("base_channels") = 16, py::arg("kernel_size") = 3, py::arg("pool_factor") = 2,
           py::arg("seed") = 0, py::arg("auto_pad") = false)
      .def_property_readonly("parameter_count", &SegModel::parameter_count)
      .def_property_readonly("config", [](const SegModel& s) { return model_config_to_json(s.config()).dump(); })
      .def_property_readonly("parameter_names",
                             [](const SegModel& s) {
                               std::vector<std::string> names;
                               for (const auto& p : s.parameter_info()) names.push_back(p.name);
                               return names;
                             })
      .def(
          "forward",
          [](const SegModel& s, const F32Array& frames) {
            const auto grids = to_frames(frames);
            const auto preds = forward(s, grids);
            const int h = s.config().input_height, w = s.config().input_width;
            py::array_t<float> out({static_cast<int>(preds.size()), 3, h, w});
            float* p = out.mutable_data();
            for (const auto& t : preds) {
              for (const auto& g : t.p) p = std::copy(g.values.begin(), g.values.end(), p);
            }
            return out;
          },
          py::arg("frames"), "Tissue probabilities (N, 3, H, W) for frames (N, H, W).")
      .def(
          "predict",
          [](const SegModel& s, const F32Array& frame) { return stack_masks(predict_masks(s, to_grid<float>(frame))); },
          py::arg("frame"))
      .def(
          "save",
          [](const SegModel& s, const std::filesystem::path& stem) { return save_checkpoint(s, CheckpointMeta{}, stem); },
          py::arg("stem"))
      .def_static(
          "load", [](const std::filesystem::path& sidecar) { return load_checkpoint(sidecar).model; },
          py::arg("sidecar"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the atbseg command line in-process; returns (exit_code, stdout, stderr).");
}
