#include "gmseg/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gmseg/errors.hpp"

namespace gmseg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return k.front() != '.' && k.back() != '.';
}

class ValueParser {
 public:
  ValueParser(std::string_view text, const std::string& where) : s_(text), where_(where) {}

  ConfigValue parse_all(int line) {
    ConfigValue v = parse(line);
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw InvalidConfigError(where_ + ": " + msg); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  ConfigValue parse(int line) {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    ConfigValue v;
    v.line = line;
    const char c = s_[pos_];
    if (c == '"') {
      ++pos_;
      std::string out;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
          const char n = s_[pos_ + 1];
          out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
          pos_ += 2;
        } else {
          out += s_[pos_++];
        }
      }
      if (pos_ >= s_.size()) fail("unterminated string");
      ++pos_;
      v.raw = out;
      v.value = out;
      return v;
    }
    if (c == '[') {
      ++pos_;
      ConfigValue::Array items;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        v.value = items;
        return v;
      }
      for (;;) {
        items.push_back(parse(line));
        skip_ws();
        if (pos_ >= s_.size()) fail("unterminated array");
        if (s_[pos_] == ',') {
          ++pos_;
          skip_ws();
          if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            break;
          }
          continue;
        }
        if (s_[pos_] == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in array");
      }
      v.value = items;
      return v;
    }
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[end]))) {
      ++end;
    }
    const std::string token(s_.substr(pos_, end - pos_));
    pos_ = end;
    v.raw = token;
    if (token == "true" || token == "false") {
      v.value = token == "true";
      return v;
    }
    double d = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), d);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(d)) {
      fail("cannot parse value '" + token + "' (strings must be quoted)");
    }
    v.value = d;
    return v;
  }

  std::string_view s_;
  std::string where_;
  std::size_t pos_ = 0;
};

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

ConfigDocument parse_config_text(std::string_view text, const std::string& source) {
  ConfigDocument doc;
  doc.source = source;
  std::istringstream in{std::string(text)};
  std::string raw_line, section;
  int line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidConfigError(where + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!valid_key(section)) throw InvalidConfigError(where + ": invalid section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!valid_key(key)) throw InvalidConfigError(where + ": invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    ValueParser parser(std::string_view(line).substr(eq + 1), where);
    ConfigValue value = parser.parse_all(line_no);
    if (!doc.entries.emplace(full, std::move(value)).second) {
      throw InvalidConfigError(where + ": duplicate key '" + full + "'");
    }
  }
  return doc;
}

ConfigDocument parse_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// TrainConfig

namespace {

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

class Reader {
 public:
  Reader(const ConfigDocument& doc) : doc_(doc) {}

  const ConfigValue* find(const std::string& key) {
    auto it = doc_.entries.find(key);
    if (it == doc_.entries.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  [[noreturn]] void fail(const std::string& key, const ConfigValue& v, const std::string& msg) const {
    throw InvalidConfigError(doc_.source + ":" + std::to_string(v.line) + ": " + key + " " + msg);
  }

  bool read(const std::string& key, double& out) {
    const auto* v = find(key);
    if (!v) return false;
    if (const auto* d = std::get_if<double>(&v->value)) {
      out = *d;
      return true;
    }
    fail(key, *v, "must be a number");
  }

  bool read(const std::string& key, std::size_t& out) {
    const auto* v = find(key);
    if (!v) return false;
    const auto* d = std::get_if<double>(&v->value);
    if (!d || *d < 0 || std::floor(*d) != *d || *d > 1e15) fail(key, *v, "must be a non-negative integer");
    out = static_cast<std::size_t>(*d);
    return true;
  }

  bool read_u64(const std::string& key, std::uint64_t& out) {
    const auto* v = find(key);
    if (!v) return false;
    if (!std::holds_alternative<double>(v->value)) fail(key, *v, "must be a non-negative integer");
    const auto& raw = v->raw;
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), out);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) fail(key, *v, "must be a non-negative integer");
    return true;
  }

  bool read(const std::string& key, bool& out) {
    const auto* v = find(key);
    if (!v) return false;
    if (const auto* b = std::get_if<bool>(&v->value)) {
      out = *b;
      return true;
    }
    fail(key, *v, "must be true or false");
  }

  bool read(const std::string& key, std::string& out) {
    const auto* v = find(key);
    if (!v) return false;
    if (const auto* s = std::get_if<std::string>(&v->value)) {
      out = *s;
      return true;
    }
    fail(key, *v, "must be a quoted string");
  }

  bool read_numbers(const std::string& key, std::vector<double>& out, std::size_t expected = 0) {
    const auto* v = find(key);
    if (!v) return false;
    const auto* a = std::get_if<ConfigValue::Array>(&v->value);
    if (!a) fail(key, *v, "must be an array of numbers");
    out.clear();
    for (const auto& item : *a) {
      const auto* d = std::get_if<double>(&item.value);
      if (!d) fail(key, *v, "must be an array of numbers");
      out.push_back(*d);
    }
    if (expected && out.size() != expected) fail(key, *v, "must have " + std::to_string(expected) + " entries");
    return true;
  }

  bool read_strings(const std::string& key, std::vector<std::string>& out) {
    const auto* v = find(key);
    if (!v) return false;
    const auto* a = std::get_if<ConfigValue::Array>(&v->value);
    if (!a) fail(key, *v, "must be an array of strings");
    out.clear();
    for (const auto& item : *a) {
      const auto* s = std::get_if<std::string>(&item.value);
      if (!s) fail(key, *v, "must be an array of strings");
      out.push_back(*s);
    }
    return true;
  }

  void check_unused() const {
    for (const auto& [key, value] : doc_.entries) {
      if (!used_.count(key)) {
        throw InvalidConfigError(doc_.source + ":" + std::to_string(value.line) + ": unknown key '" + key + "'");
      }
    }
  }

  std::vector<std::string> used_keys() const { return {used_.begin(), used_.end()}; }

 private:
  const ConfigDocument& doc_;
  std::set<std::string> used_;
};

std::size_t positive_int(double v, const char* what) {
  if (!(v >= 1) || std::floor(v) != v) throw InvalidConfigError(std::string(what) + " must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string split_scheme_name(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::None: return "none";
    case SplitScheme::PerSubject: return "subject";
    case SplitScheme::EvenlySpaced: return "evenly_spaced";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidConfigError("train.batch_size must be positive");
  if (batches_per_epoch == 0) throw InvalidConfigError("train.batches_per_epoch must be positive");
  if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw InvalidConfigError("train.eta0 must be positive");
  if (!(power >= 0.0) || !std::isfinite(power)) throw InvalidConfigError("train.power must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidConfigError("train.dropout must lie in [0, 1)");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw InvalidConfigError("train.bn_momentum must lie in (0, 1]");
  if (!(dice_epsilon > 0.0) || !std::isfinite(dice_epsilon)) {
    throw InvalidConfigError("train.dice_epsilon must be positive");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidConfigError("train.tau must lie in [0, 1]");
  augment.validate();
  if (!(preprocess.target_row_mm > 0.0) || !(preprocess.target_col_mm > 0.0)) {
    throw InvalidConfigError("data.target_mm entries must be positive");
  }
  if (preprocess.crop_height == 0 || preprocess.crop_width == 0) {
    throw InvalidConfigError("data.crop entries must be positive");
  }
  std::visit([](const auto& m) { m.validate(); }, model);
}

TrainConfig default_train_config(std::string_view profile) {
  TrainConfig c;
  if (profile == "scgm") {
    c.profile = "scgm";
  } else if (profile == "exvivo") {
    c.profile = "exvivo";
    c.epochs = 600;
    c.split.scheme = SplitScheme::EvenlySpaced;
  } else {
    throw InvalidConfigError("unknown profile '" + std::string(profile) + "' (expected scgm or exvivo)");
  }
  return c;
}

TrainConfig train_config_from_document(const ConfigDocument& doc, const fs::path& base_dir) {
  Reader r(doc);
  std::string profile = "scgm";
  r.read("profile", profile);
  TrainConfig c = default_train_config(profile);

  std::string kind = "aspp";
  r.read("model.kind", kind);
  if (kind == "aspp") {
    AsppConfig a;
    r.read("model.base_width", a.base_width);
    r.read("model.branch_width", a.branch_width);
    r.read("model.head_width", a.head_width);
    std::vector<double> dil;
    if (r.read_numbers("model.dilations", dil)) {
      a.dilations.clear();
      for (double d : dil) a.dilations.push_back(static_cast<int>(positive_int(d, "model.dilations")));
    }
    double bd = a.block_b_dilation;
    if (r.read("model.block_b_dilation", bd)) a.block_b_dilation = static_cast<int>(positive_int(bd, "model.block_b_dilation"));
    c.model = a;
  } else if (kind == "unet") {
    UnetConfig u;
    r.read("model.depth", u.depth);
    r.read("model.base_width", u.base_width);
    c.model = u;
  } else {
    throw InvalidConfigError(doc.source + ": model.kind must be \"aspp\" or \"unet\", got \"" + kind + "\"");
  }

  r.read("train.batch_size", c.batch_size);
  r.read("train.eta0", c.eta0);
  r.read("train.epochs", c.epochs);
  r.read("train.batches_per_epoch", c.batches_per_epoch);
  r.read("train.power", c.power);
  r.read("train.dropout", c.dropout);
  r.read("train.bn_momentum", c.bn_momentum);
  r.read("train.dice_epsilon", c.dice_epsilon);
  r.read("train.tau", c.tau);
  r.read_u64("train.seed", c.seed);
  std::string precision = "float32";
  if (r.read("train.precision", precision)) {
    if (precision == "float32") {
      c.precision = Precision::Float32;
    } else if (precision == "float64") {
      c.precision = Precision::Float64;
    } else {
      throw InvalidConfigError(doc.source + ": train.precision must be \"float32\" or \"float64\"");
    }
  }

  auto& a = c.augment;
  r.read("augment.rotation", a.rotation);
  r.read("augment.shift", a.shift);
  r.read("augment.scale", a.scale);
  r.read("augment.flip", a.flip);
  r.read("augment.intensity_shift", a.intensity_shift);
  r.read("augment.noise", a.noise);
  r.read("augment.elastic", a.elastic);
  r.read("augment.rotation_max_deg", a.rotation_max_deg);
  r.read("augment.shift_max_px", a.shift_max_px);
  std::vector<double> range;
  if (r.read_numbers("augment.scale_range", range, 2)) {
    a.scale_min = range[0];
    a.scale_max = range[1];
  }
  r.read("augment.flip_prob", a.flip_prob);
  r.read("augment.intensity_shift_max", a.intensity_shift_max);
  r.read("augment.noise_std", a.noise_std);
  r.read("augment.elastic_alpha", a.elastic_alpha);
  r.read("augment.elastic_sigma", a.elastic_sigma);
  r.read_u64("augment.seed", a.seed);

  auto& p = c.preprocess;
  r.read("data.resample", p.resample);
  std::vector<double> pair;
  if (r.read_numbers("data.target_mm", pair, 2)) {
    p.target_row_mm = pair[0];
    p.target_col_mm = pair[1];
  }
  if (r.read_numbers("data.crop", pair, 2)) {
    p.crop_height = positive_int(pair[0], "data.crop");
    p.crop_width = positive_int(pair[1], "data.crop");
  }
  std::vector<std::string> vols;
  if (r.read_strings("data.volumes", vols)) {
    for (const auto& v : vols) {
      fs::path path(v);
      c.volumes.push_back(path.is_relative() && !base_dir.empty() ? base_dir / path : path);
    }
  }

  std::string scheme;
  if (r.read("split.scheme", scheme)) {
    if (scheme == "none") {
      c.split.scheme = SplitScheme::None;
    } else if (scheme == "subject") {
      c.split.scheme = SplitScheme::PerSubject;
    } else if (scheme == "evenly_spaced") {
      c.split.scheme = SplitScheme::EvenlySpaced;
    } else {
      throw InvalidConfigError(doc.source + ": split.scheme must be \"none\", \"subject\" or \"evenly_spaced\"");
    }
  }
  r.read("split.holdout_per_site", c.split.holdout_per_site);
  r.read("split.train_count", c.split.train_count);
  r.read("split.validation_count", c.split.validation_count);
  r.read("split.test_count", c.split.test_count);

  std::string out_dir;
  if (r.read("output.dir", out_dir)) {
    fs::path path(out_dir);
    c.output_dir = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  } else if (!base_dir.empty()) {
    c.output_dir = base_dir / c.output_dir;
  }

  r.check_unused();
  for (const auto& key : r.used_keys()) {
    const auto& v = doc.entries.at(key);
    if (const auto* s = std::get_if<std::string>(&v.value)) {
      c.overrides.push_back(key + " = " + quote(*s));
    } else if (std::holds_alternative<ConfigValue::Array>(v.value)) {
      std::string items;
      for (const auto& item : std::get<ConfigValue::Array>(v.value)) {
        items += (items.empty() ? "" : ", ") +
                 (std::holds_alternative<std::string>(item.value) ? quote(item.raw) : item.raw);
      }
      c.overrides.push_back(key + " = [" + items + "]");
    } else {
      c.overrides.push_back(key + " = " + v.raw);
    }
  }
  // Widths and regularisation shared with the model config.
  std::visit(
      [&c](auto& m) {
        m.dropout_rate = c.dropout;
        m.bn_momentum = c.bn_momentum;
      },
      c.model);
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  const auto doc = parse_config_file(path);
  return train_config_from_document(doc, path.parent_path());
}

bool apply_seed_override(TrainConfig& config, const char* env_value) {
  if (env_value == nullptr || *env_value == '\0') return false;
  const std::string s(env_value);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidConfigError("GMDL_SEED must be a non-negative integer, got '" + s + "'");
  }
  config.overrides.push_back("train.seed = " + s + "  # from GMDL_SEED");
  const bool changed = seed != config.seed;
  config.seed = seed;
  return changed;
}

ModelConfig effective_model_config(const TrainConfig& config) {
  ModelConfig m = config.model;
  std::visit(
      [&config](auto& c) {
        c.dropout_rate = config.dropout;
        c.bn_momentum = config.bn_momentum;
      },
      m);
  return m;
}

std::string train_config_to_text(const TrainConfig& c) {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "profile = " << quote(c.profile) << "\n\n[model]\n";
  if (const auto* a = std::get_if<AsppConfig>(&c.model)) {
    out << "kind = \"aspp\"\n"
        << "base_width = " << a->base_width << "\n"
        << "branch_width = " << a->branch_width << "\n"
        << "head_width = " << a->head_width << "\n"
        << "dilations = [";
    for (std::size_t i = 0; i < a->dilations.size(); ++i) out << (i ? ", " : "") << a->dilations[i];
    out << "]\nblock_b_dilation = " << a->block_b_dilation << "\n";
  } else {
    const auto& u = std::get<UnetConfig>(c.model);
    out << "kind = \"unet\"\n"
        << "depth = " << u.depth << "\n"
        << "base_width = " << u.base_width << "\n";
  }
  out << "\n[train]\n"
      << "batch_size = " << c.batch_size << "\n"
      << "eta0 = " << fmt_double(c.eta0) << "\n"
      << "epochs = " << c.epochs << "\n"
      << "batches_per_epoch = " << c.batches_per_epoch << "\n"
      << "power = " << fmt_double(c.power) << "\n"
      << "dropout = " << fmt_double(c.dropout) << "\n"
      << "bn_momentum = " << fmt_double(c.bn_momentum) << "\n"
      << "dice_epsilon = " << fmt_double(c.dice_epsilon) << "\n"
      << "tau = " << fmt_double(c.tau) << "\n"
      << "seed = " << c.seed << "\n"
      << "precision = " << (c.precision == Precision::Float32 ? "\"float32\"" : "\"float64\"") << "\n";
  const auto& a = c.augment;
  out << "\n[augment]\n"
      << "rotation = " << b(a.rotation) << "\n"
      << "shift = " << b(a.shift) << "\n"
      << "scale = " << b(a.scale) << "\n"
      << "flip = " << b(a.flip) << "\n"
      << "intensity_shift = " << b(a.intensity_shift) << "\n"
      << "noise = " << b(a.noise) << "\n"
      << "elastic = " << b(a.elastic) << "\n"
      << "rotation_max_deg = " << fmt_double(a.rotation_max_deg) << "\n"
      << "shift_max_px = " << fmt_double(a.shift_max_px) << "\n"
      << "scale_range = [" << fmt_double(a.scale_min) << ", " << fmt_double(a.scale_max) << "]\n"
      << "flip_prob = " << fmt_double(a.flip_prob) << "\n"
      << "intensity_shift_max = " << fmt_double(a.intensity_shift_max) << "\n"
      << "noise_std = " << fmt_double(a.noise_std) << "\n"
      << "elastic_alpha = " << fmt_double(a.elastic_alpha) << "\n"
      << "elastic_sigma = " << fmt_double(a.elastic_sigma) << "\n"
      << "seed = " << a.seed << "\n";
  const auto& p = c.preprocess;
  out << "\n[data]\n"
      << "resample = " << b(p.resample) << "\n"
      << "target_mm = [" << fmt_double(p.target_row_mm) << ", " << fmt_double(p.target_col_mm) << "]\n"
      << "crop = [" << p.crop_height << ", " << p.crop_width << "]\n"
      << "volumes = [";
  for (std::size_t i = 0; i < c.volumes.size(); ++i) out << (i ? ", " : "") << quote(c.volumes[i].string());
  out << "]\n\n[split]\n"
      << "scheme = " << quote(split_scheme_name(c.split.scheme)) << "\n"
      << "holdout_per_site = " << c.split.holdout_per_site << "\n"
      << "train_count = " << c.split.train_count << "\n"
      << "validation_count = " << c.split.validation_count << "\n"
      << "test_count = " << c.split.test_count << "\n"
      << "\n[output]\n"
      << "dir = " << quote(c.output_dir.string()) << "\n";
  return out.str();
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const TrainConfig& config) { return fnv1a_hex(train_config_to_text(config)); }

}  // namespace gmseg
