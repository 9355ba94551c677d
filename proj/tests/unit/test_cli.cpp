#include <doctest.h>

#include <sstream>

#include "atbseg/cli.hpp"
#include "atbseg/eval.hpp"
#include "atbseg/train.hpp"
#include "atbseg/fsutil.hpp"
#include "atbseg/phantom.hpp"
#include "atbseg/png_io.hpp"
#include "atbseg/rasterize.hpp"
#include "support/oracles.hpp"

using namespace atbseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2)); }

fs::path mini_corpus(const fs::path& dir) {
  Corpus c;
  c.name = "mini";
  c.profile = corpus_a_profile();
  std::uint64_t seed = 70;
  auto add = [&](const std::string& id, std::vector<int> lengths) {
    Subject s;
    s.id = id;
    const auto anatomy = generate_subject(seed++);
    for (std::size_t v = 0; v < lengths.size(); ++v) {
      MotionSpec m;
      m.phase_seed = v + 1;
      s.videos.push_back(generate_clip(anatomy, c.profile, lengths[v], m, id, static_cast<int>(v) + 1));
    }
    c.subjects.push_back(std::move(s));
  };
  add("F1", {2, 2, 2});
  add("M1", {2, 2, 2});
  add("P5", {8, 3});
  return save_corpus(c, dir);
}

json tiny_model() {
  return {{"input_width", 16}, {"input_height", 16}, {"stages", 2}, {"base_channels", 4}};
}

}  // namespace

TEST_CASE("help and argument errors") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"grid", "--help"}).code == kExitOk);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"adapt", "--registry", "x"}).code == kExitConfig);
}

TEST_CASE("exit codes by failure kind") {
  CHECK(exit_code_for(TrainingError("x", {})) == kExitDivergence);
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(DataError("x")) == kExitData);
  CHECK(exit_code_for(ValidationError("x")) == kExitData);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
}

TEST_CASE("grid config errors exit 2 and name the field") {
  const auto dir = oracle::temp_dir("cli_badgrid");
  write_json(dir / "grid.json", {{"corpus", "nowhere/manifest.json"}, {"groups", json::array({json::array({"F1"})})}, {"splits", {"2:1", "x"}}});
  const auto r = run({"grid", "--config", (dir / "grid.json").string(), "--registry", (dir / "reg").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("/splits/1") != std::string::npos);
}

TEST_CASE("missing corpus exits 3") {
  const auto dir = oracle::temp_dir("cli_nocorpus");
  write_json(dir / "grid.json", {{"corpus", "nowhere/manifest.json"}, {"groups", json::array({json::array({"F1"})})}, {"splits", {"2:1"}}});
  const auto r = run({"grid", "--config", (dir / "grid.json").string(), "--registry", (dir / "reg").string()});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("nowhere") != std::string::npos);
}

TEST_CASE("rasterize writes three binary PNGs") {
  const auto dir = oracle::temp_dir("cli_raster");
  const auto clip = generate_clip(generate_subject(3), corpus_a_profile(), 1, MotionSpec{});
  write_file_atomic(dir / "a.json", annotation_to_json(clip.annotations[0]));
  const auto r = run({"rasterize", "--annotation", (dir / "a.json").string(), "--profile", "corpusA", "--out",
                      (dir / "masks").string()});
  REQUIRE(r.code == kExitOk);
  const auto expected = masks_from_contours(clip.annotations[0], 68, 68);
  for (int m = 0; m < 3; ++m) {
    const auto img = png::read_gray(dir / "masks" / ("m" + std::to_string(m + 1) + ".png"));
    REQUIRE(img.samples.size() == expected.masks[m].values.size());
    for (std::size_t i = 0; i < img.samples.size(); ++i) {
      CHECK(img.samples[i] == (expected.masks[m].values[i] ? 255 : 0));
    }
  }
  CHECK(run({"rasterize", "--annotation", (dir / "a.json").string(), "--out", (dir / "m2").string()}).code ==
        kExitConfig);
  CHECK(run({"rasterize", "--annotation", (dir / "missing.json").string(), "--profile", "corpusA", "--out",
             (dir / "m3").string()})
            .code == kExitData);
}

TEST_CASE("synth is seed-deterministic") {
  const auto dir = oracle::temp_dir("cli_synth");
  REQUIRE(run({"synth", "--out", (dir / "a").string(), "--seed", "7"}).code == kExitOk);
  REQUIRE(run({"synth", "--out", (dir / "b").string(), "--seed", "7"}).code == kExitOk);
  REQUIRE(run({"synth", "--out", (dir / "c").string(), "--seed", "8"}).code == kExitOk);
  const auto a = load_corpus(dir / "a" / "phantomA" / "manifest.json");
  CHECK(a == load_corpus(dir / "b" / "phantomA" / "manifest.json"));
  CHECK_FALSE(a == load_corpus(dir / "c" / "phantomA" / "manifest.json"));
  CHECK(read_file(dir / "a" / "phantomB" / "manifest.json") == read_file(dir / "b" / "phantomB" / "manifest.json"));
}

TEST_CASE("grid, adapt, matched, eval and report run end to end") {
  const auto dir = oracle::temp_dir("cli_e2e");
  const auto manifest = mini_corpus(dir / "corpus");
  write_json(dir / "grid.json", {{"corpus", "corpus/manifest.json"},
                                 {"groups", json::array({json::array({"F1", "M1"})})},
                                 {"splits", {"2:1"}},
                                 {"model", tiny_model()},
                                 {"train", {{"max_epochs", 2}}},
                                 {"seed", 4}});
  write_json(dir / "protocol.json", {{"manifest", "corpus/manifest.json"},
                                     {"subjects", {"P5"}},
                                     {"rule", "corpusB"},
                                     {"pool_frames", 5},
                                     {"frame_counts", {1, 2}},
                                     {"rounds", 2},
                                     {"seed", 9},
                                     {"finetune", {{"max_epochs", 2}}},
                                     {"matched_train", {{"max_epochs", 2}}},
                                     {"matched_model", tiny_model()}});
  const auto reg = (dir / "reg").string();

  auto g = run({"grid", "--config", (dir / "grid.json").string(), "--registry", reg});
  REQUIRE_MESSAGE(g.code == kExitOk, g.err);
  CHECK(fs::exists(dir / "reg" / "registry.json"));
  CHECK(fs::exists(dir / "reg" / "segnet-style" / "F1M1_2.json"));
  g = run({"grid", "--config", (dir / "grid.json").string(), "--registry", reg});
  CHECK(g.out.find("skipped 1") != std::string::npos);

  const auto a = run({"adapt", "--registry", reg, "--pool", (dir / "protocol.json").string(), "--out",
                      (dir / "out" / "adapt.csv").string(), "--include-base"});
  REQUIRE_MESSAGE(a.code == kExitOk, a.err);
  const auto records = read_metrics_csv(dir / "out" / "adapt.csv");
  CHECK(records.size() == (1 + 2 * 2) * 3);
  CHECK(fs::exists(dir / "reg" / "adapted" / "segnet-style" / "F1M1_2" / "k2_r2.json"));

  const auto bad = run({"adapt", "--registry", reg, "--pool", (dir / "protocol.json").string(), "--frames", "1,9",
                        "--out", (dir / "x.csv").string()});
  CHECK(bad.code == kExitConfig);

  const auto m = run({"matched", "--pool", (dir / "protocol.json").string(), "--out",
                      (dir / "out" / "matched.csv").string(), "--checkpoint", (dir / "matched").string()});
  REQUIRE_MESSAGE(m.code == kExitOk, m.err);
  const auto matched = read_metrics_csv(dir / "out" / "matched.csv");
  REQUIRE(matched.size() == 3);
  CHECK(matched[0].k == -1);

  const auto e = run({"eval", "--checkpoint", (dir / "matched.json").string(), "--pool",
                      (dir / "protocol.json").string(), "--out", (dir / "out" / "eval.csv").string(), "--name",
                      "matched", "--k", "-1"});
  REQUIRE_MESSAGE(e.code == kExitOk, e.err);
  CHECK(read_file(dir / "out" / "eval.csv") == read_file(dir / "out" / "matched.csv"));

  const auto rep = run({"report", "--records", (dir / "out" / "adapt.csv").string(), "--matched",
                        (dir / "out" / "matched.csv").string(), "--out", (dir / "report").string()});
  REQUIRE_MESSAGE(rep.code == kExitOk, rep.err);
  for (int mask = 1; mask <= 3; ++mask) {
    CHECK(fs::exists(dir / "report" / ("mask" + std::to_string(mask) + "_dice.svg")));
  }
  CHECK(fs::exists(dir / "report" / "summary.csv"));
  CHECK(run({"report", "--records", (dir / "out" / "adapt.csv").string(), "--matched",
             (dir / "out" / "adapt.csv").string(), "--out", (dir / "r2").string()})
            .code == kExitData);
}
