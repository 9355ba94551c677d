#include "atbseg/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "atbseg/checkpoint.hpp"
#include "atbseg/fsutil.hpp"
#include "atbseg/phantom.hpp"
#include "atbseg/png_io.hpp"
#include "atbseg/protocol.hpp"
#include "atbseg/rasterize.hpp"
#include "atbseg/report.hpp"

namespace atbseg {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const TrainingError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  return kExitFailure;
}

fs::path cache_dir() {
  if (const char* env = std::getenv("ATBSEG_CACHE"); env && *env) return env;
  return ".atbseg-cache";
}

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string(what) + ": '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " must list at least one value");
  return out;
}

void write_mask_png(const BinaryGrid& mask, const fs::path& path) {
  png::GrayImage img{mask.width, mask.height, 8, {}};
  img.samples.reserve(mask.values.size());
  for (auto v : mask.values) img.samples.push_back(v ? 255 : 0);
  png::write_gray(path, img);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-resource adaptation toolkit for rtMRI air-tissue boundary segmentation", "atbseg"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Write the phantomA / phantomB benchmark corpora");
  fs::path synth_out;
  std::uint64_t synth_seed = kDefaultMasterSeed;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Master seed");

  auto* raster = app.add_subcommand("rasterize", "Rasterize an annotation file into three mask PNGs");
  fs::path raster_annotation, raster_out;
  int raster_w = 0, raster_h = 0;
  std::string raster_profile;
  raster->add_option("--annotation", raster_annotation, "Annotation JSON")->required();
  raster->add_option("--width", raster_w, "Grid width");
  raster->add_option("--height", raster_h, "Grid height");
  raster->add_option("--profile", raster_profile, "corpusA or corpusB (sets width and height)");
  raster->add_option("--out", raster_out, "Output directory")->required();

  auto* grid = app.add_subcommand("grid", "Pretrain the base-model grid into a registry");
  fs::path grid_config;
  std::string grid_registry;
  int grid_jobs = 1;
  grid->add_option("--config", grid_config, "Grid config JSON")->required();
  grid->add_option("--registry", grid_registry, "Registry directory");
  grid->add_option("--jobs", grid_jobs, "Parallel training jobs")->check(CLI::PositiveNumber);

  auto* adapt = app.add_subcommand("adapt", "Fine-tune registry models on a few target frames");
  fs::path adapt_registry, adapt_pool, adapt_out;
  std::string adapt_frames, adapt_arch, adapt_names;
  int adapt_rounds = 0, adapt_jobs = 1;
  bool adapt_base = false, adapt_no_ckpt = false;
  adapt->add_option("--registry", adapt_registry, "Registry directory")->required();
  adapt->add_option("--pool", adapt_pool, "Protocol JSON")->required();
  adapt->add_option("--frames", adapt_frames, "Comma-separated frame counts");
  adapt->add_option("--rounds", adapt_rounds, "Rounds per frame count");
  adapt->add_option("--architecture", adapt_arch, "segnet-style or unet-style");
  adapt->add_option("--models", adapt_names, "Comma-separated registry names");
  adapt->add_option("--out", adapt_out, "Metric CSV to write")->required();
  adapt->add_option("--jobs", adapt_jobs, "Parallel fine-tuning jobs")->check(CLI::PositiveNumber);
  adapt->add_flag("--include-base", adapt_base, "Also score the unadapted base models (k = 0)");
  adapt->add_flag("--no-checkpoints", adapt_no_ckpt, "Do not save adapted weights");

  auto* matched = app.add_subcommand("matched", "Train and score the matched-condition benchmark model");
  fs::path matched_pool, matched_out, matched_ckpt;
  matched->add_option("--pool", matched_pool, "Protocol JSON")->required();
  matched->add_option("--out", matched_out, "Metric CSV to write")->required();
  matched->add_option("--checkpoint", matched_ckpt, "Checkpoint stem (default: cache dir)");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a protocol test set");
  fs::path eval_ckpt, eval_pool, eval_out;
  std::string eval_name = "model";
  int eval_k = kBaseK, eval_round = 0;
  bool eval_pooled = false;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint sidecar JSON")->required();
  eval->add_option("--pool", eval_pool, "Protocol JSON")->required();
  eval->add_option("--out", eval_out, "Metric CSV to write")->required();
  eval->add_option("--name", eval_name, "Model name for the CSV");
  eval->add_option("--k", eval_k, "Frame count recorded in the CSV");
  eval->add_option("--round", eval_round, "Round recorded in the CSV");
  eval->add_flag("--pooled", eval_pooled, "Pool pixels over frames instead of averaging per frame");

  auto* report = app.add_subcommand("report", "Aggregate metric records into tables and SVG figures");
  fs::path report_records, report_matched, report_out;
  std::string report_metric = "dice";
  report->add_option("--records", report_records, "Metric CSV")->required();
  report->add_option("--matched", report_matched, "Matched-condition metric CSV")->required();
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("--metric", report_metric, "dice or pca");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*synth) {
      const auto suite = generate_benchmark_suite(synth_out, synth_seed);
      out << suite.manifest_a.string() << "\n" << suite.manifest_b.string() << "\n";
    } else if (*raster) {
      if (!raster_profile.empty()) {
        const auto profile = named_profile(raster_profile);
        if (!profile) throw ConfigError("unknown profile '" + raster_profile + "'");
        raster_w = profile->frame_width;
        raster_h = profile->frame_height;
      }
      if (raster_w <= 0 || raster_h <= 0) throw ConfigError("rasterize needs --profile or --width and --height");
      const auto contours = annotation_from_json(read_file(raster_annotation));
      contours.validate(raster_w, raster_h);
      const auto masks = masks_from_contours(contours, raster_w, raster_h);
      fs::create_directories(raster_out);
      for (int m = 0; m < 3; ++m) {
        const auto path = raster_out / ("m" + std::to_string(m + 1) + ".png");
        write_mask_png(masks.masks[m], path);
        out << path.string() << "\n";
      }
    } else if (*grid) {
      const auto config = load_grid_config(grid_config);
      const fs::path dir = !grid_registry.empty() ? fs::path(grid_registry)
                           : config.registry     ? *config.registry
                                                 : cache_dir() / "registry";
      const auto corpus = load_corpus(config.corpus);
      Registry registry(dir);
      GridOptions options;
      options.jobs = grid_jobs;
      options.on_entry = [&](const GridJob& job, const RegistryEntry& entry, bool skipped) {
        out << (skipped ? "skip  " : "train ") << to_string(job.architecture) << " " << job.name
            << " best_epoch=" << entry.best_epoch << " val_loss=" << entry.val_loss << "\n";
      };
      const auto outcome = pretrain_grid(corpus, config.grid, registry, options);
      out << "trained " << outcome.trained << ", skipped " << outcome.skipped << ", registry " << dir.string()
          << "\n";
    } else if (*adapt) {
      auto spec = load_protocol_spec(adapt_pool);
      if (!adapt_frames.empty()) spec.frame_counts = parse_int_list(adapt_frames, "--frames");
      if (adapt_rounds > 0) spec.rounds = adapt_rounds;
      spec.validate();
      if (!fs::exists(adapt_registry / "registry.json")) {
        throw ConfigError("no registry at " + adapt_registry.string());
      }
      Registry registry(adapt_registry);
      auto entries = registry.entries();
      std::vector<std::string> wanted;
      if (!adapt_names.empty()) {
        std::stringstream ss(adapt_names);
        for (std::string name; std::getline(ss, name, ',');) wanted.push_back(name);
      }
      std::optional<Architecture> arch;
      if (!adapt_arch.empty()) arch = parse_architecture(adapt_arch);
      std::vector<RegistryEntry> chosen;
      for (const auto& e : entries) {
        if (arch && e.architecture != *arch) continue;
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), e.name) == wanted.end()) continue;
        chosen.push_back(e);
      }
      if (chosen.empty()) throw ConfigError("no registry entries match the selection");
      for (const auto& e : chosen) {
        if (e.architecture != chosen.front().architecture) {
          throw ConfigError("registry holds several architectures; pass --architecture");
        }
      }
      const auto corpus = load_corpus(spec.manifest);
      const auto data = load_protocol_data(corpus, spec);
      std::vector<NamedModel> bases;
      for (const auto& e : chosen) bases.push_back({e.name, registry.load(e).model});
      AdaptOptions options;
      options.jobs = adapt_jobs;
      options.include_base = adapt_base;
      if (!adapt_no_ckpt) options.checkpoint_dir = adapt_registry / "adapted" / to_string(chosen.front().architecture);
      options.log = [&](const std::string& line) { out << line << "\n" << std::flush; };
      const auto records = adapt_models(bases, data, spec, options);
      if (adapt_out.has_parent_path()) fs::create_directories(adapt_out.parent_path());
      write_file_atomic(adapt_out, metrics_to_csv(records));
      out << "wrote " << records.size() << " rows to " << adapt_out.string() << "\n";
    } else if (*matched) {
      const auto spec = load_protocol_spec(matched_pool);
      const auto corpus = load_corpus(spec.manifest);
      const auto data = load_protocol_data(corpus, spec);
      TrainHooks hooks;
      hooks.on_epoch = [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " train_loss=" << r.train_loss << " val_loss=" << r.val_loss << "\n";
      };
      const auto outcome = run_matched(corpus, spec, data, hooks);
      const auto& best = outcome.result.best();
      const fs::path stem = matched_ckpt.empty() ? cache_dir() / "matched" / corpus.name : matched_ckpt;
      save_checkpoint(outcome.result.model, {best.epoch, best.val_loss, best.val_dice, {{"subjects", spec.subjects}}},
                      stem);
      if (matched_out.has_parent_path()) fs::create_directories(matched_out.parent_path());
      write_file_atomic(matched_out, metrics_to_csv(outcome.records));
      for (const auto& r : outcome.records) out << "mask " << r.mask_id << " pca=" << r.pca << " dice=" << r.dice << "\n";
    } else if (*eval) {
      const auto spec = load_protocol_spec(eval_pool);
      const auto corpus = load_corpus(spec.manifest);
      const auto data = load_protocol_data(corpus, spec);
      const auto loaded = load_checkpoint(eval_ckpt);
      const auto records = evaluate_model(loaded.model, data.test, {eval_name, eval_k, eval_round},
                                          eval_pooled ? Averaging::Pooled : Averaging::PerFrame);
      if (eval_out.has_parent_path()) fs::create_directories(eval_out.parent_path());
      write_file_atomic(eval_out, metrics_to_csv(records));
      for (const auto& r : records) out << "mask " << r.mask_id << " pca=" << r.pca << " dice=" << r.dice << "\n";
    } else if (*report) {
      const auto records = read_metrics_csv(report_records);
      const auto matched_records = read_metrics_csv(report_matched);
      const auto files = write_report(records, matched_records, report_out, parse_report_metric(report_metric));
      out << summary_to_csv(files.summary);
      for (const auto& f : files.figures) out << f.string() << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace atbseg
