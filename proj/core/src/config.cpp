#include "descatter3d/config.hpp"

#include <fstream>

#include "descatter3d/errors.hpp"

namespace descatter3d {

using nlohmann::json;

namespace {

json default_doc() {
  return json{
      {"phantom",
       {{"dims", {128, 128, 32}},
        {"pitch_um", {0.35, 0.35, 1.0}},
        {"depth_offset_um", 0.0},
        {"n_dendrites", 3},
        {"dendrite_radius_um", {0.8, 1.2}},
        {"n_spines", 16},
        {"spine_length_um", {1.2, 2.5}},
        {"spine_radius_um", {0.3, 0.5}},
        {"shaft_intensity", 1.0},
        {"spine_intensity", 0.8},
        {"seed", 1}}},
      {"scatter",
       {{"ell_s_um", 50.0},
        {"sigma_b_um", 0.3},
        {"sigma_s0_um", 2.0},
        {"k_s", 0.15},
        {"truncation_sigmas", 4.0},
        {"max_kernel_radius", 256},
        {"backend", "auto"}}},
      {"noise", {{"gain", 50.0}, {"seed", 2}}},
      {"dataset",
       {{"cubes_per_volume", 134},
        {"cube_dims", {128, 128, 64}},
        {"train_fraction", 0.95},
        {"normalize_percentile", 99.9},
        {"seed", 3},
        {"sources", json::array()}}},
      {"network",
       {{"n_stages", 4},
        {"base_channels", 16},
        {"convs_per_stage", 2},
        {"input_dims", {128, 128, 64}},
        {"residual", true},
        {"init_seed", 4}}},
      {"train",
       {{"max_epochs", 30},
        {"steps_per_epoch", 300},
        {"batch_size", 3},
        {"lr", 1e-4},
        {"early_stop_patience", 3},
        {"early_stop_min_delta", 1e-4},
        {"seed", 5},
        {"checkpoint_dir", "checkpoints"}}},
      {"tiling", {{"overlap", {16, 16, 8}}, {"blend", "center_crop"}}},
      {"eval",
       {{"min_protrusion_um", 0.75},
        {"min_consecutive_planes", 2},
        {"contrast_ratio", 2.0},
        {"annulus_inner_um", 1.5},
        {"annulus_outer_um", 3.0},
        {"min_prominence", 0.1}}}};
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Merges user values over the defaults, rejecting keys the defaults do not
// know about. `sources` entries are validated against a fixed record shape.
void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) {
    throw ConfigError("config: expected an object at '" + (path.empty() ? "<root>" : path) + "'");
  }
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      throw ConfigError("config: unknown key '" + key_path + "'");
    }
    json& slot = base[it.key()];
    if (key_path == "dataset.sources") {
      if (!it.value().is_array()) {
        throw ConfigError("config: 'dataset.sources' must be an array");
      }
      for (const auto& entry : it.value()) {
        if (!entry.is_object() || !entry.contains("truth") || !entry.contains("input") ||
            entry.size() != 2 || !entry["truth"].is_string() || !entry["input"].is_string()) {
          throw ConfigError(
              "config: each dataset.sources entry needs exactly {truth, input} strings");
        }
      }
      slot = it.value();
      continue;
    }
    if (slot.is_object()) {
      merge_into(slot, it.value(), key_path);
      continue;
    }
    if (!same_kind(slot, it.value())) {
      throw ConfigError("config: type mismatch at '" + key_path + "'");
    }
    slot = it.value();
  }
}

template <typename T>
T get_at(const json& doc, const char* section, const char* key) {
  try {
    return doc.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value at '") + section + "." + key +
                      "': " + e.what());
  }
}

std::array<double, 2> get_range(const json& doc, const char* section, const char* key) {
  const auto v = get_at<std::vector<double>>(doc, section, key);
  if (v.size() != 2) {
    throw ConfigError(std::string("config: '") + section + "." + key +
                      "' must be a [min, max] pair");
  }
  return {v[0], v[1]};
}

std::array<int, 3> get_dims(const json& doc, const char* section, const char* key) {
  const auto v = get_at<std::vector<int>>(doc, section, key);
  if (v.size() != 3) {
    throw ConfigError(std::string("config: '") + section + "." + key +
                      "' must have three entries");
  }
  return {v[0], v[1], v[2]};
}

}  // namespace

PipelineConfig PipelineConfig::defaults() { return PipelineConfig(default_doc()); }

PipelineConfig PipelineConfig::from_text(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  json doc = default_doc();
  merge_into(doc, user, "");
  return PipelineConfig(std::move(doc));
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_text(text);
}

void PipelineConfig::apply_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: --set expects key.path=value, got '" + assignment + "'");
  }
  const std::string key_path = assignment.substr(0, eq);
  const std::string value_text = assignment.substr(eq + 1);

  json* slot = &doc_;
  std::size_t start = 0;
  while (start <= key_path.size()) {
    const std::size_t dot = key_path.find('.', start);
    const std::string key = key_path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!slot->is_object() || !slot->contains(key)) {
      throw ConfigError("config: unknown key '" + key_path + "'");
    }
    slot = &(*slot)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::exception&) {
    value = value_text;  // bare strings need no quoting on the command line
  }
  if (!same_kind(*slot, value)) {
    throw ConfigError("config: type mismatch at '" + key_path + "'");
  }
  *slot = value;
}

std::string PipelineConfig::echo() const { return doc_.dump(2) + "\n"; }

PhantomSpec PipelineConfig::phantom() const {
  PhantomSpec s;
  s.dims = get_dims(doc_, "phantom", "dims");
  const auto pitch = get_at<std::vector<double>>(doc_, "phantom", "pitch_um");
  if (pitch.size() != 3) throw ConfigError("config: 'phantom.pitch_um' must have three entries");
  for (int a = 0; a < 3; ++a) s.pitch[a] = static_cast<float>(pitch[a]);
  s.depth_offset = static_cast<float>(get_at<double>(doc_, "phantom", "depth_offset_um"));
  s.n_dendrites = get_at<int>(doc_, "phantom", "n_dendrites");
  s.dendrite_radius_um = get_range(doc_, "phantom", "dendrite_radius_um");
  s.n_spines = get_at<int>(doc_, "phantom", "n_spines");
  s.spine_length_um = get_range(doc_, "phantom", "spine_length_um");
  s.spine_radius_um = get_range(doc_, "phantom", "spine_radius_um");
  s.shaft_intensity = get_at<double>(doc_, "phantom", "shaft_intensity");
  s.spine_intensity = get_at<double>(doc_, "phantom", "spine_intensity");
  s.seed = get_at<std::uint64_t>(doc_, "phantom", "seed");
  return s;
}

ScatterParams PipelineConfig::scatter() const {
  ScatterParams p;
  p.ell_s = get_at<double>(doc_, "scatter", "ell_s_um");
  p.sigma_b = get_at<double>(doc_, "scatter", "sigma_b_um");
  p.sigma_s0 = get_at<double>(doc_, "scatter", "sigma_s0_um");
  p.k_s = get_at<double>(doc_, "scatter", "k_s");
  p.truncation = get_at<double>(doc_, "scatter", "truncation_sigmas");
  p.max_kernel_radius = get_at<int>(doc_, "scatter", "max_kernel_radius");
  return p;
}

ConvBackend PipelineConfig::scatter_backend() const {
  const auto b = get_at<std::string>(doc_, "scatter", "backend");
  if (b == "auto") return ConvBackend::kAuto;
  if (b == "direct") return ConvBackend::kDirect;
  if (b == "fft") return ConvBackend::kFft;
  throw ConfigError("config: 'scatter.backend' must be auto, direct, or fft");
}

NoiseParams PipelineConfig::noise() const {
  NoiseParams n;
  n.gain = get_at<double>(doc_, "noise", "gain");
  n.seed = get_at<std::uint64_t>(doc_, "noise", "seed");
  return n;
}

DatasetConfig PipelineConfig::dataset() const {
  DatasetConfig d;
  d.cubes_per_volume = get_at<int>(doc_, "dataset", "cubes_per_volume");
  d.cube_dims = get_dims(doc_, "dataset", "cube_dims");
  d.train_fraction = get_at<double>(doc_, "dataset", "train_fraction");
  d.normalize_percentile = get_at<double>(doc_, "dataset", "normalize_percentile");
  d.seed = get_at<std::uint64_t>(doc_, "dataset", "seed");
  for (const auto& entry : doc_.at("dataset").at("sources")) {
    d.sources.emplace_back(entry.at("truth").get<std::string>(),
                           entry.at("input").get<std::string>());
  }
  return d;
}

NetworkConfig PipelineConfig::network() const {
  NetworkConfig c;
  c.n_stages = get_at<int>(doc_, "network", "n_stages");
  c.base_channels = get_at<int>(doc_, "network", "base_channels");
  c.convs_per_stage = get_at<int>(doc_, "network", "convs_per_stage");
  c.input_dims = get_dims(doc_, "network", "input_dims");
  c.residual = get_at<bool>(doc_, "network", "residual");
  c.init_seed = get_at<std::uint64_t>(doc_, "network", "init_seed");
  return c;
}

TrainConfig PipelineConfig::train() const {
  TrainConfig t;
  t.max_epochs = get_at<int>(doc_, "train", "max_epochs");
  t.steps_per_epoch = get_at<int>(doc_, "train", "steps_per_epoch");
  t.batch_size = get_at<int>(doc_, "train", "batch_size");
  t.lr = get_at<double>(doc_, "train", "lr");
  t.early_stop_patience = get_at<int>(doc_, "train", "early_stop_patience");
  t.early_stop_min_delta = get_at<double>(doc_, "train", "early_stop_min_delta");
  t.seed = get_at<std::uint64_t>(doc_, "train", "seed");
  t.checkpoint_dir = get_at<std::string>(doc_, "train", "checkpoint_dir");
  return t;
}

TilingConfig PipelineConfig::tiling() const {
  TilingConfig t;
  t.overlap = get_dims(doc_, "tiling", "overlap");
  const auto b = get_at<std::string>(doc_, "tiling", "blend");
  if (b == "center_crop") {
    t.blend = BlendMode::kCenterCrop;
  } else if (b == "hann") {
    t.blend = BlendMode::kHann;
  } else {
    throw ConfigError("config: 'tiling.blend' must be center_crop or hann");
  }
  return t;
}

SpineCriteria PipelineConfig::eval_criteria() const {
  SpineCriteria c;
  c.min_protrusion_um = get_at<double>(doc_, "eval", "min_protrusion_um");
  c.min_consecutive_planes = get_at<int>(doc_, "eval", "min_consecutive_planes");
  c.contrast_ratio = get_at<double>(doc_, "eval", "contrast_ratio");
  c.annulus_inner_um = get_at<double>(doc_, "eval", "annulus_inner_um");
  c.annulus_outer_um = get_at<double>(doc_, "eval", "annulus_outer_um");
  c.min_prominence = get_at<double>(doc_, "eval", "min_prominence");
  return c;
}

}  // namespace descatter3d
