#include "gmseg/commands.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gmseg/checkpoint.hpp"
#include "gmseg/errors.hpp"
#include "gmseg/log.hpp"
#include "gmseg/report.hpp"
#include "gmseg/volume.hpp"

#ifndef GMSEG_VERSION
#define GMSEG_VERSION "0.0.0"
#endif

namespace gmseg {

namespace fs = std::filesystem;

const char* version_string() { return GMSEG_VERSION; }

namespace {

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v, "%.9g") : "nan"; }

// ---- data preparation ----

struct PreparedData {
  std::vector<TrainingSlice> train;
  std::vector<TrainingSlice> validation;
  std::string summary;
};

PreparedData prepare_training_data(const TrainConfig& config) {
  if (config.volumes.empty()) throw InvalidConfigError("data.volumes is empty; nothing to train on");
  std::vector<PreparedVolume> prepared;
  for (const auto& path : config.volumes) {
    try {
      auto vol = read_volume(path);
      if (vol.raters.empty()) warn(path.string() + ": volume has no rater masks");
      prepared.push_back(prepare_volume(vol, config.preprocess));
    } catch (const Error& e) {
      // rethrow with file context, preserving the error category
      const std::string msg = path.string() + ": " + e.what();
      if (dynamic_cast<const SchemaError*>(&e)) throw SchemaError(msg);
      if (dynamic_cast<const UnsupportedFormatError*>(&e)) throw UnsupportedFormatError(msg);
      if (dynamic_cast<const DimensionError*>(&e)) throw DimensionError(msg);
      if (dynamic_cast<const DegenerateInputError*>(&e)) throw DegenerateInputError(msg);
      if (dynamic_cast<const IoError*>(&e)) throw;
      throw IoError(msg);
    }
  }
  PreparedData data;
  std::ostringstream summary;
  switch (config.split.scheme) {
    case SplitScheme::None: {
      for (const auto& p : prepared) {
        auto s = training_slices(p.volume);
        data.train.insert(data.train.end(), s.begin(), s.end());
      }
      summary << "split none: " << prepared.size() << " volume(s) all used for training";
      break;
    }
    case SplitScheme::PerSubject: {
      std::vector<std::string> sites;
      for (const auto& p : prepared) sites.push_back(p.volume.site.empty() ? p.volume.subject : p.volume.site);
      const auto split = split_by_subject(sites, config.split.holdout_per_site);
      for (auto i : split.train) {
        auto s = training_slices(prepared[i].volume);
        data.train.insert(data.train.end(), s.begin(), s.end());
      }
      for (auto i : split.validation) {
        auto s = training_slices(prepared[i].volume);
        data.validation.insert(data.validation.end(), s.begin(), s.end());
      }
      summary << "split subject: " << split.train.size() << " training subject(s), " << split.validation.size()
              << " validation subject(s)";
      break;
    }
    case SplitScheme::EvenlySpaced: {
      std::vector<std::pair<std::size_t, std::size_t>> all;  // (volume, slice)
      for (std::size_t v = 0; v < prepared.size(); ++v) {
        for (std::size_t s = 0; s < prepared[v].volume.num_slices(); ++s) all.emplace_back(v, s);
      }
      const auto split = split_evenly_spaced(all.size(), config.split.train_count, config.split.validation_count,
                                             config.split.test_count);
      auto gather = [&](const std::vector<std::size_t>& idx, std::vector<TrainingSlice>& out) {
        for (auto i : idx) {
          const auto [v, s] = all[i];
          const auto& vol = prepared[v].volume;
          TrainingSlice ts;
          ts.image = vol.slices[s];
          ts.subject = vol.subject;
          ts.slice_index = s;
          for (std::size_t r = 0; r < vol.raters.size(); ++r) {
            if (vol.raters[r][s]) {
              ts.masks.push_back(*vol.raters[r][s]);
              ts.rater_ids.push_back(r);
            }
          }
          if (ts.masks.empty()) {
            warn(vol.subject + " slice " + std::to_string(s) + " has no rater mask; skipped");
            continue;
          }
          out.push_back(std::move(ts));
        }
      };
      gather(split.train, data.train);
      gather(split.validation, data.validation);
      summary << "split evenly_spaced: " << split.train.size() << " train / " << split.validation.size()
              << " validation / " << split.test.size() << " test slice(s) of " << all.size();
      break;
    }
  }
  data.summary = summary.str();
  return data;
}

Provenance base_provenance(const TrainConfig& c) {
  Provenance p;
  p["gmseg_version"] = version_string();
  p["seed"] = std::to_string(c.seed);
  p["epochs"] = std::to_string(c.epochs);
  p["config_hash"] = config_hash(c);
  p["tau"] = fmt(c.tau);
  p["dice_epsilon"] = fmt(c.dice_epsilon);
  p["preprocess.resample"] = c.preprocess.resample ? "true" : "false";
  p["preprocess.target_row_mm"] = fmt(c.preprocess.target_row_mm);
  p["preprocess.target_col_mm"] = fmt(c.preprocess.target_col_mm);
  p["preprocess.crop_height"] = std::to_string(c.preprocess.crop_height);
  p["preprocess.crop_width"] = std::to_string(c.preprocess.crop_width);
  return p;
}

void write_diagnostics(const fs::path& path, const std::string& what, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::trunc);
  out << "error: " << what << "\n";
  for (const auto& l : lines) out << l << "\n";
}

template <Scalar T>
TrainOutcome train_typed(const TrainConfig& config, std::ostream& console) {
  const auto data = prepare_training_data(config);
  fs::create_directories(config.output_dir);
  TrainOutcome outcome;
  outcome.log_path = config.output_dir / "train.log";
  outcome.best_checkpoint = config.output_dir / "best.gmdl";
  outcome.final_checkpoint = config.output_dir / "final.gmdl";
  outcome.train_slices = data.train.size();
  outcome.validation_slices = data.validation.size();

  std::ofstream log(outcome.log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + outcome.log_path.string());
  log << "# gmseg train log\n"
      << "# gmseg_version = " << version_string() << "\n"
      << "# log_format = " << kLogFormatVersion << "\n"
      << "# checkpoint_format = " << kCheckpointVersion << "\n"
      << "# seed = " << config.seed << "\n"
      << "# config_hash = " << config_hash(config) << "\n"
      << "# overrides:\n";
  for (const auto& o : config.overrides) log << "#   " << o << "\n";
  log << "# config:\n";
  {
    std::istringstream text(train_config_to_text(config));
    std::string line;
    while (std::getline(text, line)) log << "#   " << line << "\n";
  }
  log << "# " << data.summary << "\n"
      << "# train_slices = " << data.train.size() << " validation_slices = " << data.validation.size() << "\n";
  log.flush();
  console << data.summary << "; " << data.train.size() << " training slice(s), " << data.validation.size()
          << " validation slice(s)\n";

  auto network = build_network<T>(effective_model_config(config), config.seed);
  AdamState<T> optimizer;
  const Provenance base = base_provenance(config);

  TrainLoopOptions opt;
  opt.epochs = config.epochs;
  opt.batches_per_epoch = config.batches_per_epoch;
  opt.batch_size = config.batch_size;
  opt.schedule = {config.eta0, config.epochs, config.power};
  opt.dice_epsilon = config.dice_epsilon;
  opt.tau = config.tau;
  opt.augment = config.augment;
  opt.seed = config.seed;

  std::optional<double> best_score;
  auto save = [&](const fs::path& path, const char* role, std::size_t completed, const std::optional<double>& dsc) {
    Provenance p = base;
    p["role"] = role;
    p["epochs_completed"] = std::to_string(completed);
    p["val_dsc"] = fmt_opt(dsc);
    if (outcome.best_epoch) p["best_epoch"] = std::to_string(*outcome.best_epoch);
    save_checkpoint(path, network, optimizer.initialized() ? &optimizer : nullptr, p);
  };

  const EpochCallback<T> on_epoch = [&](const EpochRecord& rec, Network<T>&, AdamState<T>&) {
    char line[256];
    std::snprintf(line, sizeof line, "epoch %zu lr %.9g loss %.9g val_dsc %s", rec.epoch, rec.lr, rec.loss,
                  fmt_opt(rec.val_dsc).c_str());
    log << line << "\n";
    log.flush();
    console << line << "\n";
    // Best = highest validation DSC, ties to the later epoch. Without a
    // validation score every epoch counts as a tie.
    const double score = rec.val_dsc.value_or(-1.0);
    if (!best_score || score >= *best_score) {
      best_score = score;
      outcome.best_epoch = rec.epoch;
      save(outcome.best_checkpoint, "best", rec.epoch + 1, rec.val_dsc);
    }
  };

  try {
    outcome.curve = train_loop<T>(network, optimizer, data.train, data.validation, opt, on_epoch);
  } catch (const NumericalError& e) {
    std::vector<std::string> lines;
    for (const auto& p : network.parameters()) {
      double norm = 0.0;
      bool finite = true;
      for (T v : p.tensor.data()) {
        finite = finite && std::isfinite(static_cast<double>(v));
        norm += static_cast<double>(v) * v;
      }
      lines.push_back(p.name + " norm " + fmt(std::sqrt(norm), "%.9g") + (finite ? "" : " (non-finite)"));
    }
    write_diagnostics(config.output_dir / "diagnostics.txt", e.what(), lines);
    log << "# aborted: " << e.what() << "\n";
    throw;
  }
  if (config.epochs == 0) {
    save(outcome.best_checkpoint, "best", 0, std::nullopt);
  }
  save(outcome.final_checkpoint, "final", outcome.curve.size(),
       outcome.curve.empty() ? std::nullopt : outcome.curve.back().val_dsc);
  log << "# best_epoch = " << (outcome.best_epoch ? std::to_string(*outcome.best_epoch) : "none") << "\n";
  return outcome;
}

PreprocessConfig preprocess_from(const Provenance& p) {
  PreprocessConfig c;
  auto get = [&p](const char* key) -> const std::string* {
    auto it = p.find(key);
    return it == p.end() ? nullptr : &it->second;
  };
  try {
    if (auto* v = get("preprocess.resample")) c.resample = *v == "true";
    if (auto* v = get("preprocess.target_row_mm")) c.target_row_mm = std::stod(*v);
    if (auto* v = get("preprocess.target_col_mm")) c.target_col_mm = std::stod(*v);
    if (auto* v = get("preprocess.crop_height")) c.crop_height = std::stoul(*v);
    if (auto* v = get("preprocess.crop_width")) c.crop_width = std::stoul(*v);
  } catch (const std::logic_error&) {
    throw SchemaError("checkpoint provenance holds malformed preprocessing settings");
  }
  return c;
}

template <Scalar T>
std::vector<Mask> infer_volume(const fs::path& checkpoint, const Volume& vol, std::optional<double>& tau,
                               PreparedVolume& prepared) {
  auto loaded = load_checkpoint<T>(checkpoint);
  if (!tau) {
    auto it = loaded.provenance.find("tau");
    tau = it == loaded.provenance.end() ? 0.999 : std::stod(it->second);
  }
  prepared = prepare_volume(vol, preprocess_from(loaded.provenance));
  return predict_masks(loaded.network, std::span<const Image>(prepared.volume.slices), *tau, 1);
}

Mask binarize_slice(const Image& img) {
  Mask m(img.height, img.width);
  for (std::size_t i = 0; i < img.size(); ++i) m.values[i] = img.values[i] != 0.0f ? 1 : 0;
  return m;
}

std::string volume_dims(const Volume& v) {
  return std::to_string(v.num_slices()) + "x" + dims_string(v.height(), v.width());
}

}  // namespace

TrainOutcome run_training(const TrainConfig& config, std::ostream& console) {
  config.validate();
  if (config.precision == Precision::Float64) return train_typed<double>(config, console);
  return train_typed<float>(config, console);
}

TrainOutcome cmd_train(const fs::path& config_path, std::ostream& console) {
  TrainConfig config = load_train_config(config_path);
  if (apply_seed_override(config, std::getenv("GMDL_SEED"))) {
    console << "seed overridden by GMDL_SEED: " << config.seed << "\n";
  }
  return run_training(config, console);
}

void cmd_predict(const fs::path& checkpoint, const fs::path& input, const fs::path& output,
                 std::optional<double> tau, std::ostream& console) {
  if (tau && !(*tau >= 0.0 && *tau <= 1.0)) throw InvalidConfigError("--tau must lie in [0, 1]");
  const auto info = read_checkpoint_info(checkpoint);
  const Volume vol = read_volume(input);
  PreparedVolume prepared;
  const auto masks = info.precision == Precision::Float64 ? infer_volume<double>(checkpoint, vol, tau, prepared)
                                                          : infer_volume<float>(checkpoint, vol, tau, prepared);
  std::vector<Mask> restored;
  restored.reserve(masks.size());
  for (const auto& m : masks) {
    restored.push_back(restore_geometry(m, prepared));
    if (restored.back().height != vol.height() || restored.back().width != vol.width()) {
      throw InternalError("predicted mask geometry does not match the input volume");
    }
  }
  VolumeFormat format = detect_volume_format(input);
  const std::string out_name = output.string();
  if (out_name.size() > 7 && out_name.ends_with(".nii.gz")) {
    format = VolumeFormat::NiftiGz;
  } else if (out_name.ends_with(".nii")) {
    format = VolumeFormat::Nifti;
  }
  write_mask_volume(output, restored, vol.pixel_size, format);
  std::size_t fg = 0;
  for (const auto& m : restored) {
    for (auto v : m.values) fg += v;
  }
  console << "predicted " << restored.size() << " slice(s) at tau " << fmt(*tau, "%.9g") << ", " << fg
          << " foreground pixel(s) -> " << output.string() << "\n";
}

MetricReport cmd_evaluate(const fs::path& prediction, const std::vector<fs::path>& gold,
                          const fs::path& output, const EvaluateOptions& options, std::ostream& console) {
  if (gold.empty()) throw InvalidConfigError("evaluate needs at least one gold path");
  const Volume pred_vol = read_volume(prediction);
  std::vector<Mask> pred;
  for (const auto& s : pred_vol.slices) pred.push_back(binarize_slice(s));

  MetricReport report;
  std::vector<std::vector<std::optional<Mask>>> raters;
  std::optional<PixelSize> gold_spacing;
  std::string subject;
  for (const auto& path : gold) {
    if (!fs::exists(path)) {
      const std::string note = "gold path " + path.string() + " not found; skipped";
      warn(note);
      report.notes.push_back(note);
      continue;
    }
    const Volume g = read_volume(path);
    if (g.num_slices() != pred_vol.num_slices() || g.height() != pred_vol.height() ||
        g.width() != pred_vol.width()) {
      throw DimensionError("geometry mismatch: prediction " + prediction.string() + " is " + volume_dims(pred_vol) +
                           ", gold " + path.string() + " is " + volume_dims(g));
    }
    if (!gold_spacing) gold_spacing = g.pixel_size;
    if (subject.empty()) subject = g.subject;
    if (!g.raters.empty()) {
      for (const auto& r : g.raters) raters.push_back(r);
    } else {
      std::vector<std::optional<Mask>> r;
      for (const auto& s : g.slices) r.emplace_back(binarize_slice(s));
      raters.push_back(std::move(r));
    }
  }
  if (raters.empty()) throw IoError("no gold masks could be read");
  if (raters.size() > 4) {
    throw InvalidConfigError("at most 4 gold raters are supported, got " + std::to_string(raters.size()));
  }
  if (report.notes.size() > 0) {
    report.notes.push_back("evaluated " + std::to_string(raters.size()) + " available rater(s)");
  }
  const PixelSize spacing = options.pixel_size.value_or(gold_spacing.value_or(pred_vol.pixel_size));
  // Rows are named after the gold subject; the prediction is usually a derived file.
  if (subject.empty()) subject = pred_vol.subject;
  report.rows = evaluate_volume(pred, raters, spacing, subject, options.distance_mode);
  for (const auto& row : report.rows) {
    if (row.distance_skips > 0) {
      report.notes.push_back("rater " + std::to_string(row.rater) + ": distance metrics skipped on " +
                             std::to_string(row.distance_skips) + " slice(s) with one empty mask");
    }
  }
  compute_aggregates(report);
  if (!output.empty()) write_report(output, report);
  const auto& names = metric_names();
  for (const auto& row : report.rows) {
    console << row.subject << " rater " << row.rater << ":";
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      console << " " << names[m] << "=" << (row.values[m] ? fmt(*row.values[m], "%.6g") : "NA");
    }
    console << "\n";
  }
  return report;
}

void cmd_info(const fs::path& file, std::ostream& out) {
  if (file.empty()) throw InvalidConfigError("info needs a file argument");
  if (!fs::exists(file)) throw IoError("no such file: " + file.string());
  if (fs::is_directory(file)) throw IoError(file.string() + " is a directory");
  if (is_checkpoint_file(file)) {
    const auto info = read_checkpoint_info(file);
    out << "file: " << file.string() << "\n"
        << "type: checkpoint (format " << info.version << ", "
        << (info.precision == Precision::Float64 ? "float64" : "float32") << ", " << info.file_size
        << " bytes)\n"
        << "model: " << model_kind(info.model) << "\n";
    std::istringstream text(model_config_to_text(info.model));
    std::string line;
    while (std::getline(text, line)) {
      if (line.rfind("model =", 0) != 0) out << "  " << line << "\n";
    }
    out << "param_count: " << info.param_count << "\n"
        << "optimizer_state: " << (info.has_optimizer ? "present" : "absent") << "\n"
        << "provenance:\n";
    for (const auto& [k, v] : info.provenance) out << "  " << k << " = " << v << "\n";
    return;
  }
  const TrainConfig config = load_train_config(file);
  const ModelConfig model = effective_model_config(config);
  out << "file: " << file.string() << "\n"
      << "type: train config (profile " << config.profile << ")\n"
      << "model: " << model_kind(model) << "\n";
  std::istringstream text(model_config_to_text(model));
  std::string line;
  while (std::getline(text, line)) {
    if (line.rfind("model =", 0) != 0) out << "  " << line << "\n";
  }
  out << "param_count: " << analytic_param_count(model) << "\n"
      << "seed: " << config.seed << "\n"
      << "epochs: " << config.epochs << " x " << config.batches_per_epoch << " batches of " << config.batch_size
      << "\n"
      << "config_hash: " << config_hash(config) << "\n";
}

void cmd_augment_preview(const fs::path& config_path, const fs::path& input, const fs::path& output_dir,
                         std::size_t count, std::ostream& console) {
  TrainConfig config = load_train_config(config_path);
  apply_seed_override(config, std::getenv("GMDL_SEED"));
  const auto prepared = prepare_volume(read_volume(input), config.preprocess);
  const auto& vol = prepared.volume;
  fs::create_directories(output_dir);
  const Rng root = Rng(config.seed).split(11).split(config.augment.seed);
  const std::size_t n = std::min(count, vol.num_slices());
  for (std::size_t s = 0; s < n; ++s) {
    Mask mask(vol.height(), vol.width());
    for (const auto& r : vol.raters) {
      if (r[s]) {
        mask = *r[s];
        break;
      }
    }
    Rng rng = root.split(s);
    const auto [img, m] = augment_pair(vol.slices[s], mask, config.augment, rng);
    char name[64];
    std::snprintf(name, sizeof name, "slice_%03zu", s);
    write_pgm_preview(output_dir / (std::string(name) + "_before.pgm"), vol.slices[s]);
    write_pgm_preview(output_dir / (std::string(name) + "_after.pgm"), img);
    write_pgm8(output_dir / (std::string(name) + "_mask_before.pgm"), mask);
    write_pgm8(output_dir / (std::string(name) + "_mask_after.pgm"), m);
  }
  console << "wrote " << n << " before/after pair(s) to " << output_dir.string() << "\n";
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const NumericalError*>(&error)) return 3;
  return 2;
}

}  // namespace gmseg
