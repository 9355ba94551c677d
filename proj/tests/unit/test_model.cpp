#include <doctest.h>

#include <cmath>

#include "atbseg/model.hpp"
#include "support/oracles.hpp"

using namespace atbseg;

namespace {

ModelConfig tiny(Architecture arch, int size = 16) {
  ModelConfig c;
  c.variant = arch;
  c.input_width = size;
  c.input_height = size;
  c.stages = 2;
  c.base_channels = 4;
  c.seed = 17;
  return c;
}

std::size_t expected_parameters(const ModelConfig& c) {
  auto ch = [&](int s) { return static_cast<std::size_t>(c.base_channels) << s; };
  const bool unet = c.variant == Architecture::UNetStyle;
  std::size_t n = 0;
  for (int s = 0; s < c.stages; ++s) {
    const std::size_t in = s == 0 ? 1 : ch(s - 1);
    n += in * ch(s) * 9 + 2 * ch(s);     // conv a + norm
    n += ch(s) * ch(s) * 9 + 2 * ch(s);  // conv b + norm
  }
  std::size_t head = 0;
  for (int s = 0; s < c.stages; ++s) {
    const std::size_t from = s == c.stages - 1 ? ch(s) : ch(s + 1);
    head += from * ch(s) * 4;                                // 2x2 transposed conv
    head += (unet ? 2 : 1) * ch(s) * ch(s) * 9 + 2 * ch(s);  // conv a + norm
    head += ch(s) * ch(s) * 9 + 2 * ch(s);                   // conv b + norm
  }
  head += ch(0) * 2 + 2;  // 1x1 conv to two classes
  return n + 3 * head;
}

std::vector<ImageGrid> random_frames(Rng& rng, int n, int w, int h) {
  std::vector<ImageGrid> out;
  for (int i = 0; i < n; ++i) {
    ImageGrid g(w, h);
    for (auto& v : g.values) v = static_cast<float>(rng.uniform());
    out.push_back(g);
  }
  return out;
}

std::vector<MaskTriple> random_targets(Rng& rng, int n, int w, int h) {
  std::vector<MaskTriple> out(static_cast<std::size_t>(n));
  for (auto& m : out) {
    for (auto& g : m.masks) g = oracle::random_mask(rng, w, h, 0.4);
  }
  return out;
}

PredictionTriple constant_prediction(int w, int h, float p) {
  PredictionTriple out;
  for (auto& g : out.p) {
    g = ProbabilityGrid(w, h);
    std::fill(g.values.begin(), g.values.end(), p);
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  auto c = tiny(Architecture::SegNetStyle, 68);
  c.stages = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.stages = 2;
  CHECK_NOTHROW(c.validate());
  c.stages = 3;
  c.auto_pad = true;
  CHECK_NOTHROW(c.validate());
  CHECK(c.padded_width() == 72);
  c.stages = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(Architecture::SegNetStyle);
  c.base_channels = 2;
  CHECK_THROWS_AS(build_model(c), ConfigError);
  CHECK(parse_architecture("unet-style") == Architecture::UNetStyle);
  CHECK(to_string(Architecture::SegNetStyle) == "segnet-style");
  CHECK_THROWS_AS(parse_architecture("resnet"), ConfigError);
}

TEST_CASE("parameter counts follow the layer arithmetic") {
  for (auto arch : {Architecture::SegNetStyle, Architecture::UNetStyle}) {
    for (int stages : {2, 3}) {
      for (int base : {4, 8}) {
        auto c = tiny(arch, 32);
        c.stages = stages;
        c.base_channels = base;
        CHECK(build_model(c).parameter_count() == expected_parameters(c));
      }
    }
  }
  const auto seg = build_model(tiny(Architecture::SegNetStyle));
  const auto unet = build_model(tiny(Architecture::UNetStyle));
  CHECK(unet.parameter_count() > seg.parameter_count());
}

TEST_CASE("building is deterministic in the seed") {
  const auto a = build_model(tiny(Architecture::UNetStyle));
  const auto b = build_model(tiny(Architecture::UNetStyle));
  CHECK(a.parameter_count() == b.parameter_count());
  CHECK(a.parameters() == b.parameters());
  auto other = tiny(Architecture::UNetStyle);
  other.seed = 18;
  CHECK(build_model(other).parameters() != a.parameters());
}

TEST_CASE("three independent heads are present") {
  const auto m = build_model(tiny(Architecture::SegNetStyle));
  int outs = 0;
  for (const auto& p : m.parameter_info()) {
    if (p.name.find(".out.weight") != std::string::npos) {
      ++outs;
      CHECK(p.shape[0] == 2);
    }
  }
  CHECK(outs == 3);
}

TEST_CASE("forward keeps dims, stays in [0,1] and treats batch items independently") {
  Rng rng(1);
  for (auto arch : {Architecture::SegNetStyle, Architecture::UNetStyle}) {
    auto c = tiny(arch, 20);
    c.stages = 2;
    c.auto_pad = true;
    const auto m = build_model(c);
    auto frames = random_frames(rng, 1, 20, 20);
    frames.push_back(frames[0]);
    const auto preds = forward(m, frames);
    REQUIRE(preds.size() == 2);
    for (int h = 0; h < 3; ++h) {
      CHECK(preds[0].p[h].width == 20);
      CHECK(preds[0].p[h].height == 20);
      CHECK(preds[0].p[h] == preds[1].p[h]);
      for (float v : preds[0].p[h].values) REQUIRE((std::isfinite(v) && v >= 0.0f && v <= 1.0f));
    }
    CHECK(forward(m, frames)[0].p[0] == preds[0].p[0]);
  }
}

TEST_CASE("forward rejects mismatched frame dims") {
  Rng rng(2);
  const auto m = build_model(tiny(Architecture::SegNetStyle));
  const auto frames = random_frames(rng, 1, 20, 16);
  CHECK_THROWS_AS(forward(m, frames), ShapeError);
}

TEST_CASE("thresholding is p >= 0.5 with ties to tissue") {
  CHECK(threshold_predictions(constant_prediction(5, 5, 0.9f))[0].values == std::vector<std::uint8_t>(25, 1));
  CHECK(threshold_predictions(constant_prediction(5, 5, 0.1f))[1].values == std::vector<std::uint8_t>(25, 0));
  CHECK(threshold_predictions(constant_prediction(5, 5, 0.5f))[2].values == std::vector<std::uint8_t>(25, 1));
  Rng rng(3);
  PredictionTriple p = constant_prediction(9, 7, 0.0f);
  for (auto& g : p.p) {
    for (auto& v : g.values) v = static_cast<float>(rng.uniform());
  }
  const auto masks = threshold_predictions(p);
  for (int h = 0; h < 3; ++h) {
    for (std::size_t i = 0; i < p.p[h].size(); ++i) REQUIRE(masks[h].values[i] == (p.p[h].values[i] >= 0.5f ? 1 : 0));
  }
}

TEST_CASE("loss analytic values and scalar oracle") {
  Rng rng(4);
  const auto targets = random_targets(rng, 2, 4, 4);
  std::vector<PredictionTriple> half{constant_prediction(4, 4, 0.5f), constant_prediction(4, 4, 0.5f)};
  CHECK(bce_loss(half, targets) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-9));

  std::vector<PredictionTriple> perfect(2);
  for (int i = 0; i < 2; ++i) {
    for (int h = 0; h < 3; ++h) {
      perfect[i].p[h] = ProbabilityGrid(4, 4);
      for (std::size_t k = 0; k < 16; ++k) perfect[i].p[h].values[k] = targets[i][h].values[k] ? 1.0f : 0.0f;
    }
  }
  CHECK(bce_loss(perfect, targets) <= 3.0 * -std::log(1.0 - 1e-7) * (1 + 1e-9));

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PredictionTriple> p(3);
    for (auto& t : p) {
      for (auto& g : t.p) {
        g = ProbabilityGrid(4, 4);
        for (auto& v : g.values) v = static_cast<float>(rng.uniform());
      }
    }
    p[0].p[0].values[0] = 0.0f;  // exercises the clamp
    const auto tg = random_targets(rng, 3, 4, 4);
    const double expected = oracle::bce(p, tg);
    REQUIRE(bce_loss(p, tg) == doctest::Approx(expected).epsilon(1e-6));
  }
  CHECK_THROWS_AS(bce_loss(half, random_targets(rng, 2, 5, 4)), ShapeError);
}

TEST_CASE("gradient vanishes at a clamped perfect fit") {
  auto m = build_model(tiny(Architecture::UNetStyle));
  for (std::size_t i = 0; i < m.parameter_info().size(); ++i) {
    const auto& name = m.parameter_info()[i].name;
    if (name.find(".out.weight") != std::string::npos) std::fill(m.parameters()[i].begin(), m.parameters()[i].end(), 0.0f);
    if (name.find(".out.bias") != std::string::npos) m.parameters()[i] = {-40.0f, 40.0f};
  }
  Rng rng(5);
  const auto frames = random_frames(rng, 2, 16, 16);
  std::vector<MaskTriple> ones(2);
  for (auto& t : ones) {
    for (auto& g : t.masks) {
      g = BinaryGrid(16, 16);
      std::fill(g.values.begin(), g.values.end(), 1);
    }
  }
  const auto grads = gradient(m, frames, ones);
  double norm = 0.0;
  for (const auto& [name, g] : grads) {
    for (float v : g) norm += static_cast<double>(v) * v;
  }
  CHECK(std::sqrt(norm) < 1e-5);
}

TEST_CASE("duplicating the batch leaves the mean-reduced gradient unchanged") {
  Rng rng(6);
  const auto m = build_model(tiny(Architecture::SegNetStyle));
  const auto frames = random_frames(rng, 1, 16, 16);
  const auto targets = random_targets(rng, 1, 16, 16);
  const auto single = gradient(m, frames, targets);
  const std::vector<ImageGrid> two{frames[0], frames[0]};
  const std::vector<MaskTriple> two_t{targets[0], targets[0]};
  const auto doubled = gradient(m, two, two_t);
  for (const auto& [name, g] : single) {
    const auto& d = doubled.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(d[i] == doctest::Approx(g[i]).epsilon(1e-4).scale(1e-2));
  }
}

TEST_CASE("analytic gradients agree with finite differences") {
  Rng rng(7);
  for (auto arch : {Architecture::SegNetStyle, Architecture::UNetStyle}) {
    const auto net = build_model(tiny(arch)).cast<double>();
    nn::Tensor4<double> input(2, 1, 16, 16), targets(2, 3, 16, 16);
    for (auto& v : input.data) v = rng.uniform();
    for (auto& v : targets.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (const auto& r : oracle::finite_difference_check(net, input, targets, 1e-6, 50, 3)) {
      INFO(r.tensor);
      CHECK(r.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("running statistics move toward batch statistics") {
  auto m = build_model(tiny(Architecture::SegNetStyle));
  Rng rng(8);
  auto input = pack_frames<float>(random_frames(rng, 2, 16, 16));
  auto targets = pack_masks<float>(random_targets(rng, 2, 16, 16));
  SegModel::BatchStatistics stats;
  m.loss_and_gradient(input, targets, nullptr, &stats);
  const auto before = m.buffers();
  m.update_running_statistics(stats);
  // First normalization layer: running mean starts at 0, running var at 1.
  for (std::size_t c = 0; c < before[0].size(); ++c) {
    CHECK(m.buffers()[0][c] == doctest::Approx(0.9 * before[0][c] + 0.1 * stats.mean[0][c]));
    CHECK(m.buffers()[1][c] == doctest::Approx(0.9 * before[1][c] + 0.1 * stats.var[0][c]));
  }
}
