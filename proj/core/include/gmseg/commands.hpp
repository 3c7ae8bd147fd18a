#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "gmseg/config.hpp"
#include "gmseg/metrics.hpp"
#include "gmseg/train.hpp"

namespace gmseg {

const char* version_string();
/// Version of the run-log layout.
inline constexpr int kLogFormatVersion = 1;

struct TrainOutcome {
  std::vector<EpochRecord> curve;
  std::optional<std::size_t> best_epoch;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::size_t train_slices = 0;
  std::size_t validation_slices = 0;
};

/// Loads the config, applies GMDL_SEED, trains, and writes train.log,
/// best.gmdl and final.gmdl into the output directory.
TrainOutcome cmd_train(const std::filesystem::path& config_path, std::ostream& console);
/// Same as cmd_train with an already loaded config (no environment lookup).
TrainOutcome run_training(const TrainConfig& config, std::ostream& console);

/// Resample -> crop -> normalize with the checkpoint's preprocessing
/// settings, eval-mode inference per slice, threshold, then undo crop and
/// resampling. Writes a mask volume in the input's format.
void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                 const std::filesystem::path& output, std::optional<double> tau, std::ostream& console);

struct EvaluateOptions {
  DistanceMode distance_mode = DistanceMode::PerSlice;
  std::optional<PixelSize> pixel_size;  // overrides the spacing read from files
};

/// Each gold path is either a volume whose sidecar lists rater masks (every
/// rater is used) or a mask volume (one rater). Missing gold paths are
/// skipped with a note as long as one remains. Rows carry the subject of the
/// first gold volume.
MetricReport cmd_evaluate(const std::filesystem::path& prediction, const std::vector<std::filesystem::path>& gold,
                          const std::filesystem::path& output, const EvaluateOptions& options,
                          std::ostream& console);

/// Summary of a checkpoint or a train config.
void cmd_info(const std::filesystem::path& file, std::ostream& out);

/// Writes before/after PGM pairs for up to `count` slices of the prepared
/// input volume.
void cmd_augment_preview(const std::filesystem::path& config_path, const std::filesystem::path& input,
                         const std::filesystem::path& output_dir, std::size_t count, std::ostream& console);

/// 2 for data/config errors, 3 for numerical failures.
int exit_code_for(const std::exception& error);

}  // namespace gmseg
