#include "nifm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nifm/config.hpp"
#include "nifm/error.hpp"
#include "nifm/report.hpp"

namespace nifm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Defaults, then the config file, then --set overrides; the result is parsed
// again so that unknown keys and bad values are rejected in one place.
template <typename T, typename ToJson, typename FromJson>
T resolve(const std::string& config_path, const std::vector<std::string>& overrides, const T& defaults,
          ToJson to_json, FromJson from_json) {
  T value = config_path.empty() ? defaults : from_json(read_json_file(config_path));
  json j = to_json(value);
  for (const auto& o : overrides) apply_override(j, o);
  return from_json(j);
}

void echo(std::ostream& out, const std::string& command, const json& config) {
  out << json{{"command", command}, {"config", config}}.dump(2) << '\n';
}

// Uses manifest.json when present and the class-directory layout otherwise.
// An unlabelled layout has no splits, so every split name selects all of it.
DatasetManifest load_data(const fs::path& dir, const std::string& split) {
  const DatasetManifest all =
      fs::exists(dir / "manifest.json") ? load_manifest(dir / "manifest.json") : load_wxsod_layout(dir);
  bool labelled = false;
  for (const auto& e : all.entries) labelled = labelled || !e.split.empty();
  DatasetManifest chosen = split == "all" || !labelled ? all : all.with_split(split);
  if (chosen.entries.empty()) throw DataError("no images in split '" + split + "' of " + dir.string());
  return chosen;
}

fs::path default_loss_log(const fs::path& ckpt) {
  fs::path p = ckpt;
  p.replace_filename(ckpt.stem().string() + "_loss.csv");
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

json summary(const MetricReport& r) {
  json j;
  const auto v = r.scalars();
  for (std::size_t k = 0; k < v.size(); ++k) j[kMetricNames[k]] = v[k];
  return j;
}

std::string cell_tag(DecoderKind d, NifmVariant v) { return to_string(d) + "_" + to_string(v); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weather-noise salient object detection toolkit", "nifm"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, ckpt, indicator_mode = "correct";
  // Options with different defaults per subcommand need their own storage.
  std::string train_split = "train", eval_split = "test", export_split = "test";
  std::string features_out = "features.csv", experiment_out = "experiment";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::uint64_t indicator_seed = 0;
  std::size_t resolution = 384, runs = 20, warmup = 3, stage = 4, image_size = 64;
  std::string seeds_text;

  auto add_overrides = [&](CLI::App* sub, const char* example) {
    sub->add_option("--set", overrides, std::string("Override a config value by dotted path, e.g. --set ") + example +
                                            " (repeatable)")
        ->always_capture_default(false)
        ->default_str("");
  };

  auto* gen = app.add_subcommand("generate-data", "Render the synthetic multi-weather dataset");
  gen->add_option("--config", config_path, "Dataset config (JSON)");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--seed", seed, "Dataset seed (overrides the config)");
  add_overrides(gen, "image_size=32");

  auto* tr = app.add_subcommand("train", "Train one model and write its checkpoint");
  tr->add_option("--config", config_path, "Training config (JSON)");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", out_path, "Checkpoint path (JSON manifest; the blob is written next to it)")->required();
  tr->add_option("--split", train_split, "Split to train on ('all' for every entry)");
  add_overrides(tr, "adam.base_lr=0.0005");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and write metrics.csv plus curves");
  ev->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--indicator-mode", indicator_mode, "correct | shuffled | fixed:<Class>");
  ev->add_option("--indicator-seed", indicator_seed, "Seed of the shuffled indicator assignment");
  ev->add_option("--split", eval_split, "Split to evaluate ('all' for every entry)");
  ev->add_option("--image-size", image_size, "Evaluation resolution");
  ev->add_option("--out", out_path, "Output directory")->required();

  auto* co = app.add_subcommand("count-ops", "Report parameters, MACs and FPS of a model");
  co->add_option("--config", config_path, "Training config (JSON); its model section is used");
  co->add_option("--resolution", resolution, "Square input resolution, divisible by 32");
  co->add_option("--runs", runs, "Timed forward passes (0 skips timing)");
  co->add_option("--warmup", warmup, "Untimed forward passes before timing");
  add_overrides(co, "model.nifm_variant=disabled");

  auto* ex = app.add_subcommand("export-features", "Export pooled stage features and their separation score");
  ex->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  ex->add_option("--data", data_dir, "Dataset directory")->required();
  ex->add_option("--stage", stage, "Encoder stage 1..5");
  ex->add_option("--indicator-mode", indicator_mode, "correct | shuffled | fixed:<Class>");
  ex->add_option("--indicator-seed", indicator_seed, "Seed of the shuffled indicator assignment");
  ex->add_option("--split", export_split, "Split to export ('all' for every entry)");
  ex->add_option("--image-size", image_size, "Input resolution");
  ex->add_option("--out", features_out, "Feature CSV path");

  auto* xp = app.add_subcommand("experiment", "Train baseline and variants over seeds and compare them");
  xp->add_option("--config", config_path, "Experiment config (JSON)");
  xp->add_option("--seeds", seeds_text, "Comma-separated seeds (overrides the config)");
  xp->add_option("--data", data_dir, "Existing dataset directory (generated under --out when omitted)");
  xp->add_option("--out", experiment_out, "Output directory");
  add_overrides(xp, "train.epochs=5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) {
      DatasetConfig cfg = resolve(config_path, overrides, DatasetConfig::desk_default(), dataset_config_to_json,
                                  dataset_config_from_json);
      if (seed) cfg.seed = *seed;
      echo(out, "generate-data", dataset_config_to_json(cfg));
      const DatasetManifest m = generate_dataset(cfg, out_path);
      out << "wrote " << m.entries.size() << " images to " << out_path << '\n';
    } else if (tr->parsed()) {
      const TrainConfig cfg =
          resolve(config_path, overrides, TrainConfig{}, train_config_to_json, train_config_from_json);
      echo(out, "train", train_config_to_json(cfg));
      const auto samples = load_samples(load_data(data_dir, train_split), cfg.image_size);
      ensure_parent(out_path);
      const TrainResult r = train(cfg, samples, {fs::path(out_path), default_loss_log(out_path)});
      for (const auto& e : r.log)
        out << "epoch " << e.epoch << " loss " << csv_number(e.mean_loss) << " lr " << csv_number(e.lr) << '\n';
      out << "wrote " << out_path << '\n';
    } else if (ev->parsed()) {
      const IndicatorPolicy policy = IndicatorPolicy::parse(indicator_mode, indicator_seed);
      echo(out, "eval",
           {{"ckpt", ckpt}, {"data", data_dir}, {"split", eval_split}, {"indicator_mode", policy.to_string()},
            {"indicator_seed", indicator_seed}, {"image_size", image_size}, {"out", out_path}});
      const Model model = load_checkpoint(ckpt);
      const auto samples = load_samples(load_data(data_dir, eval_split), image_size);
      const auto reports = evaluate_model(model, samples, policy);
      const MetricReport overall = aggregate(reports);
      std::vector<std::string> names;
      for (const auto& s : samples) names.push_back(s.id);
      fs::create_directories(out_path);
      write_metrics_csv(fs::path(out_path) / "metrics.csv", names, reports, overall);
      write_curve_csvs(out_path, overall);
      out << summary(overall).dump(2) << '\n';
    } else if (co->parsed()) {
      const TrainConfig cfg =
          resolve(config_path, overrides, TrainConfig{}, train_config_to_json, train_config_from_json);
      echo(out, "count-ops", {{"model", train_config_to_json(cfg)["model"]}, {"resolution", resolution}});
      const CostReport c = count_ops(cfg.model, resolution, runs, warmup);
      out << json{{"params", c.params}, {"macs", c.macs}, {"resolution", c.resolution}, {"fps", c.fps}}.dump(2)
          << '\n';
    } else if (ex->parsed()) {
      const IndicatorPolicy policy = IndicatorPolicy::parse(indicator_mode, indicator_seed);
      echo(out, "export-features",
           {{"ckpt", ckpt}, {"data", data_dir}, {"split", export_split}, {"stage", stage},
            {"indicator_mode", policy.to_string()}, {"indicator_seed", indicator_seed}, {"image_size", image_size},
            {"out", features_out}});
      const Model model = load_checkpoint(ckpt);
      const auto samples = load_samples(load_data(data_dir, export_split), image_size);
      const FeatureTable table = export_features(model, samples, stage, policy);
      const double score = silhouette_score(table.features, table.labels);
      ensure_parent(features_out);
      write_feature_csv(features_out, table);
      out << json{{"stage", stage}, {"images", table.ids.size()}, {"silhouette", score}}.dump(2) << '\n';
    } else if (xp->parsed()) {
      ExperimentFile cfg =
          resolve(config_path, overrides, ExperimentFile{}, experiment_file_to_json, experiment_file_from_json);
      if (!seeds_text.empty()) {
        cfg.experiment.seeds.clear();
        for (const auto& s : CLI::detail::split(seeds_text, ',')) {
          try {
            cfg.experiment.seeds.push_back(std::stoull(s));
          } catch (const std::exception&) {
            throw ConfigError("seed '" + s + "' is not a nonnegative integer");
          }
        }
      }
      echo(out, "experiment", experiment_file_to_json(cfg));
      const fs::path root = experiment_out;
      fs::path data = data_dir;
      if (data.empty()) {
        data = root / "data";
        generate_dataset(cfg.dataset, data);
      }
      const auto train_samples = load_samples(load_data(data, "train"), cfg.experiment.train.image_size);
      const auto test_samples = load_samples(load_data(data, "test"), cfg.experiment.train.image_size);
      const auto cells = run_experiment(cfg.experiment, train_samples, test_samples, &out);

      fs::create_directories(root);
      std::ofstream table(root / "cells.csv");
      table << "decoder,variant,seed,seconds";
      for (const char* n : kMetricNames) table << ',' << n;
      table << '\n';
      for (const auto& c : cells) {
        table << to_string(c.decoder) << ',' << to_string(c.variant) << ',' << c.seed << ','
              << csv_number(c.seconds);
        for (double v : c.metrics.scalars()) table << ',' << csv_number(v);
        table << '\n';
        write_loss_log(root / ("loss_" + cell_tag(c.decoder, c.variant) + "_seed" + std::to_string(c.seed) + ".csv"),
                       c.log);
      }
      if (!table) throw IoError("failed writing cell table", (root / "cells.csv").string());
      for (auto d : cfg.experiment.decoders)
        for (auto v : cfg.experiment.variants) {
          if (v == NifmVariant::Disabled) continue;
          const auto rows = compare(cells, d, v);
          write_comparison_csv(root / ("comparison_" + cell_tag(d, v) + ".csv"), rows);
          out << cell_tag(d, v) << ": mae " << csv_number(rows[0].baseline) << " -> " << csv_number(rows[0].variant)
              << " (" << csv_number(rows[0].delta_pct) << "%)\n";
        }
    }
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nifm
