#include "cli.hpp"

#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gmseg/commands.hpp"
#include "gmseg/errors.hpp"

namespace gmseg {

namespace {

std::optional<PixelSize> parse_pixel_size(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  if (v.size() != 3) throw InvalidConfigError("--pixel-size takes three values: row col thickness");
  return PixelSize{v[0], v[1], v[2]};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gmseg: gray-matter segmentation with dilated convolutions"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", version_string());

  std::string config_path, checkpoint, input, output, prediction, info_file;
  std::vector<std::string> gold;
  std::optional<double> tau;
  std::string distance_mode = "per-slice";
  std::vector<double> pixel_size;
  std::size_t preview_count = 4;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("-c,--config", config_path, "Train config (TOML-style)")->required();

  auto* predict = app.add_subcommand("predict", "Segment a volume with a trained checkpoint");
  predict->add_option("-m,--model", checkpoint, "Checkpoint file")->required();
  predict->add_option("-i,--input", input, "Input volume (.nii, .nii.gz or PGM stack directory)")->required();
  predict->add_option("-o,--output", output, "Output mask volume")->required();
  predict->add_option("--tau", tau, "Binarization threshold (default: checkpoint value, else 0.999)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a predicted mask volume against gold masks");
  evaluate->add_option("-p,--prediction", prediction, "Predicted mask volume")->required();
  evaluate->add_option("-g,--gold", gold, "Gold volume or mask volume; repeat for several raters")->required();
  evaluate->add_option("-o,--output", output, "Report file (.csv or .json)");
  evaluate->add_option("--distance-mode", distance_mode, "per-slice or pooled")
      ->check(CLI::IsMember({"per-slice", "pooled"}));
  evaluate->add_option("--pixel-size", pixel_size, "Override spacing: row col thickness (mm)")->expected(3);

  auto* info = app.add_subcommand("info", "Summarize a checkpoint or train config");
  info->add_option("file", info_file, "Checkpoint or config file")->required();

  auto* preview = app.add_subcommand("augment-preview", "Write before/after PGM pairs of augmented slices");
  preview->add_option("-c,--config", config_path, "Train config providing augmentation settings")->required();
  preview->add_option("-i,--input", input, "Input volume")->required();
  preview->add_option("-o,--output", output, "Output directory")->required();
  preview->add_option("-n,--count", preview_count, "Number of slices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      cmd_train(config_path, out);
    } else if (*predict) {
      cmd_predict(checkpoint, input, output, tau, out);
    } else if (*evaluate) {
      EvaluateOptions options;
      options.distance_mode = distance_mode == "pooled" ? DistanceMode::Pooled : DistanceMode::PerSlice;
      options.pixel_size = parse_pixel_size(pixel_size);
      std::vector<std::filesystem::path> gold_paths(gold.begin(), gold.end());
      cmd_evaluate(prediction, gold_paths, output, options, out);
    } else if (*info) {
      cmd_info(info_file, out);
    } else if (*preview) {
      cmd_augment_preview(config_path, input, output, preview_count, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace gmseg
