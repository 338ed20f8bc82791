#include "descatter3d/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "descatter3d/config.hpp"
#include "descatter3d/errors.hpp"
#include "descatter3d/image_png.hpp"
#include "descatter3d/metrics.hpp"
#include "descatter3d/rng.hpp"
#include "descatter3d/threading.hpp"

namespace descatter3d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  int threads = 0;  // 0: env fallback, then 1
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", opts.config_path, "Pipeline config JSON");
    cmd->add_option("--set", opts.overrides, "Override a config key: section.key=value");
  }
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--threads", opts.threads, "Worker threads (env DESCATTER3D_THREADS)");
}

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig cfg = opts.config_path.empty() ? PipelineConfig::defaults()
                                                : PipelineConfig::from_file(opts.config_path);
  for (const std::string& o : opts.overrides) cfg.apply_override(o);
  return cfg;
}

void apply_threads(const CommonOpts& opts) {
  int n = opts.threads;
  if (n <= 0) {
    if (const char* env = std::getenv("DESCATTER3D_THREADS")) n = std::atoi(env);
  }
  set_thread_count(n > 0 ? n : 1);
}

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return "missing";
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  char hex[32];
  std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(buf.data(), buf.size())));
  return hex;
}

void write_run_json(const std::string& out_dir, const std::string& command,
                    const PipelineConfig* cfg, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json run{{"command", command}, {"version", kVersion}};
  if (cfg) run["config"] = cfg->doc();
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[p] = file_hash(p);
  for (const auto& p : outputs) out[fs::path(p).filename().string()] = file_hash(p);
  run["inputs"] = std::move(in);
  run["outputs"] = std::move(out);
  std::ofstream f(fs::path(out_dir) / "run.json", std::ios::trunc);
  if (!f) throw FormatError("cannot write run.json in " + out_dir);
  f << run.dump(2) << "\n";
}

std::array<int, 3> parse_dims(const std::string& text) {
  std::array<int, 3> dims{};
  if (std::sscanf(text.c_str(), "%dx%dx%d", &dims[0], &dims[1], &dims[2]) != 3) {
    throw ConfigError("expected dims as NXxNYxNZ, got '" + text + "'");
  }
  return dims;
}

std::vector<std::array<double, 3>> parse_polyline(const std::string& text) {
  std::vector<std::array<double, 3>> pts;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t colon = text.find(':', start);
    const std::string part =
        text.substr(start, colon == std::string::npos ? colon : colon - start);
    std::array<double, 3> p{};
    if (std::sscanf(part.c_str(), "%lf,%lf,%lf", &p[0], &p[1], &p[2]) != 3) {
      throw ConfigError("expected polyline point as x,y,z (um), got '" + part + "'");
    }
    pts.push_back(p);
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  return pts;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return CounterRng::stream(seed, salt).next_u64();
}

// ---------------------------------------------------------------------------
// Command bodies

int run_phantom(const CommonOpts& opts, std::ostream& out) {
  apply_threads(opts);
  const PipelineConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  auto [vol, ann] = generate_phantom(cfg.phantom());
  const std::string vol_path = (fs::path(opts.out_dir) / "truth.dvol").string();
  const std::string ann_path = (fs::path(opts.out_dir) / "annotations.csv").string();
  const std::string dend_path = (fs::path(opts.out_dir) / "dendrites.csv").string();
  save_volume(vol, vol_path);
  save_annotations(ann, ann_path, dend_path);
  write_run_json(opts.out_dir, "phantom", &cfg, {}, {vol_path, ann_path, dend_path});
  out << "phantom: " << vol.dims[0] << "x" << vol.dims[1] << "x" << vol.dims[2] << ", "
      << ann.spines.size() << " spines -> " << vol_path << "\n";
  return 0;
}

int run_simulate(const CommonOpts& opts, const std::string& in_path, std::ostream& out) {
  apply_threads(opts);
  const PipelineConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  const Volume truth = load_volume(in_path);
  const Volume tfm = apply_forward_model(truth, cfg.scatter(), cfg.noise(),
                                         cfg.scatter_backend());
  const std::string out_path = (fs::path(opts.out_dir) / "tfm.dvol").string();
  save_volume(tfm, out_path);
  write_run_json(opts.out_dir, "simulate", &cfg, {in_path}, {out_path});
  out << "simulate: " << in_path << " -> " << out_path << "\n";
  return 0;
}

int run_dataset(const CommonOpts& opts, const std::vector<std::string>& pair_args,
                std::ostream& out) {
  apply_threads(opts);
  const PipelineConfig cfg = resolve_config(opts);
  DatasetConfig dcfg = cfg.dataset();
  for (const std::string& pair : pair_args) {
    const std::size_t sep = pair.find(':');
    if (sep == std::string::npos) {
      throw ConfigError("--pair expects truth.dvol:input.dvol, got '" + pair + "'");
    }
    dcfg.sources.emplace_back(pair.substr(0, sep), pair.substr(sep + 1));
  }
  if (dcfg.sources.empty()) {
    throw ConfigError("dataset: no sources (use --pair or dataset.sources in the config)");
  }

  std::vector<CubePair> cubes;
  std::vector<std::string> inputs;
  for (std::size_t s = 0; s < dcfg.sources.size(); ++s) {
    const auto& [truth_path, input_path] = dcfg.sources[s];
    inputs.push_back(truth_path);
    inputs.push_back(input_path);
    const Volume truth = load_volume(truth_path);
    const Volume input = load_volume(input_path);
    if (truth.dims != input.dims) {
      throw InvalidDims("dataset: source pair dims differ for " + truth_path);
    }
    // One shared scale per source pair keeps the linearity between the two.
    const float scale = positive_percentile(truth, dcfg.normalize_percentile);
    Volume truth_n = truth, input_n = input;
    for (float& v : truth_n.data) v = std::min(std::max(v / scale, 0.f), 2.f);
    for (float& v : input_n.data) v = std::min(std::max(v / scale, 0.f), 2.f);

    auto batch = extract_cubes(input_n, truth_n, dcfg.cubes_per_volume, dcfg.cube_dims,
                               derive_seed(dcfg.seed, s), static_cast<int>(s));
    for (auto& c : batch) cubes.push_back(std::move(c));
  }

  const DatasetManifest manifest =
      make_manifest(cubes, dcfg.cube_dims, dcfg.train_fraction, dcfg.seed,
                    dcfg.normalize_percentile);
  save_dataset(opts.out_dir, manifest, cubes);
  write_run_json(opts.out_dir, "dataset", &cfg, inputs,
                 {(fs::path(opts.out_dir) / "manifest.json").string()});
  out << "dataset: " << cubes.size() << " cubes (" << manifest.train_count() << " train, "
      << manifest.val_count() << " val) -> " << opts.out_dir << "\n";
  if (!manifest.warning.empty()) out << "warning: " << manifest.warning << "\n";
  return 0;
}

int run_train(const CommonOpts& opts, const std::string& dataset_dir, const std::string& resume,
              std::ostream& out) {
  apply_threads(opts);
  const PipelineConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);

  CubeStore store = CubeStore::open(dataset_dir);
  TrainConfig tcfg = cfg.train();
  if (fs::path(tcfg.checkpoint_dir).is_relative()) {
    tcfg.checkpoint_dir = (fs::path(opts.out_dir) / tcfg.checkpoint_dir).string();
  }

  TrainOutcome outcome;
  if (resume.empty()) {
    NetworkConfig ncfg = cfg.network();
    ncfg.input_dims = store.manifest().cube_dims;  // the dataset fixes the input size
    Network net(ncfg);
    outcome = train(store, net, tcfg);
  } else {
    outcome = resume_train(store, resume, tcfg);
  }

  write_run_json(opts.out_dir, "train", &cfg, {dataset_dir + "/manifest.json"},
                 {outcome.best_checkpoint,
                  (fs::path(tcfg.checkpoint_dir) / "log.csv").string()});
  out << "train: stop=" << outcome.log.stop_reason << " best_val=" << outcome.best_val
      << " best_epoch=" << outcome.best_epoch << " -> " << outcome.best_checkpoint << "\n";
  return 0;
}

int run_infer(const CommonOpts& opts, const std::string& net_path, const std::string& in_path,
              std::ostream& out) {
  apply_threads(opts);
  const PipelineConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);

  LoadedCheckpoint ck = load_checkpoint(net_path);
  const Volume vol = load_volume(in_path);
  const auto [normalized, scale] = normalize_volume(vol, cfg.dataset().normalize_percentile);

  const auto tile = ck.net.config().input_dims;
  std::array<int, 3> padded{};
  for (int a = 0; a < 3; ++a) padded[a] = std::max(vol.dims[a], tile[a]);
  const TilingConfig tiling = cfg.tiling();
  const TilingPlan plan = plan_tiles(padded, tile, tiling.overlap, tiling.blend);

  const Volume result = reconstruct(normalized, ck.net, plan);
  const std::string out_path = (fs::path(opts.out_dir) / "output.dvol").string();
  save_volume(result, out_path);
  {
    std::ofstream pf(fs::path(opts.out_dir) / "plan.json", std::ios::trunc);
    pf << plan_to_json(plan).dump(2) << "\n";
  }
  write_run_json(opts.out_dir, "infer", &cfg, {net_path, in_path},
                 {out_path, (fs::path(opts.out_dir) / "plan.json").string()});
  out << "infer: " << in_path << " (scale " << scale << ", " << plan.tiles.size()
      << " tiles) -> " << out_path << "\n";
  return 0;
}

int run_eval(const CommonOpts& opts, const std::string& mode, const std::string& vol_path,
             const std::string& ann_path, const std::string& dend_path,
             const std::string& ref_path, const std::string& truth_path,
             const std::string& measured_path, const std::string& net_path, std::ostream& out) {
  apply_threads(opts);
  const PipelineConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  const SpineCriteria crit = cfg.eval_criteria();

  if (mode == "recall") {
    if (vol_path.empty() || ann_path.empty() || dend_path.empty()) {
      throw ConfigError("eval --mode recall needs --vol, --ann, and --dendrites");
    }
    const Volume vol = load_volume(vol_path);
    const AnnotationSet ann = load_annotations(ann_path, dend_path);
    const RecallReport report = spine_visibility(vol, ann, crit);
    const std::string csv = (fs::path(opts.out_dir) / "recall.csv").string();
    write_recall_csv(report, csv);
    write_run_json(opts.out_dir, "eval", &cfg, {vol_path, ann_path, dend_path}, {csv});
    out << "recall: " << report.visible << "/" << report.total << " ("
        << format_percent(report.visible, report.total) << ") -> " << csv << "\n";
    return 0;
  }

  if (mode == "fidelity") {
    if (vol_path.empty() || ref_path.empty()) {
      throw ConfigError("eval --mode fidelity needs --vol and --ref");
    }
    const Volume vol = load_volume(vol_path);
    const Volume ref = load_volume(ref_path);
    const Fidelity f = fidelity(vol, ref);
    const std::string csv = (fs::path(opts.out_dir) / "fidelity.csv").string();
    std::ofstream cf(csv, std::ios::trunc);
    char line[96];
    std::snprintf(line, sizeof(line), "nrmse,psnr_db\n%.9g,%.9g\n", f.nrmse, f.psnr);
    cf << line;
    cf.close();
    write_run_json(opts.out_dir, "eval", &cfg, {vol_path, ref_path}, {csv});
    out << "fidelity: nrmse=" << f.nrmse << " psnr=" << f.psnr << " dB -> " << csv << "\n";
    return 0;
  }

  if (mode == "fp") {
    if (truth_path.empty() || measured_path.empty() || net_path.empty() || ann_path.empty() ||
        dend_path.empty()) {
      throw ConfigError("eval --mode fp needs --truth, --measured, --net, --ann, --dendrites");
    }
    const Volume truth = load_volume(truth_path);
    const Volume measured = load_volume(measured_path);
    const AnnotationSet ann = load_annotations(ann_path, dend_path);
    LoadedCheckpoint ck = load_checkpoint(net_path);
    const auto tile = ck.net.config().input_dims;
    std::array<int, 3> padded{};
    for (int a = 0; a < 3; ++a) padded[a] = std::max(truth.dims[a], tile[a]);
    const TilingConfig tiling = cfg.tiling();
    const TilingPlan plan = plan_tiles(padded, tile, tiling.overlap, tiling.blend);

    const FalsePositiveReport report = false_positive_check(
        truth, measured, ck.net, plan, ann, cfg.scatter(), cfg.noise(), crit);

    const std::string meas_csv = (fs::path(opts.out_dir) / "fp_measured_candidates.csv").string();
    const std::string synth_csv =
        (fs::path(opts.out_dir) / "fp_synthetic_candidates.csv").string();
    write_candidates_csv(report.measured.candidates, "measured", meas_csv);
    write_candidates_csv(report.synthetic.candidates, "synthetic", synth_csv);
    write_run_json(opts.out_dir, "eval", &cfg,
                   {truth_path, measured_path, net_path, ann_path, dend_path},
                   {meas_csv, synth_csv});
    out << "fp: measured " << report.measured.candidates.size() << " candidates (recall "
        << format_percent(report.measured.recall.visible, report.measured.recall.total)
        << "), synthetic " << report.synthetic.candidates.size() << " candidates (recall "
        << format_percent(report.synthetic.recall.visible, report.synthetic.recall.total)
        << ")\n";
    return 0;
  }

  throw ConfigError("eval: unknown mode '" + mode + "' (recall, fidelity, fp)");
}

int run_profile(const CommonOpts& opts, const std::string& vol_path, const std::string& line,
                double half_width, int samples, std::ostream& out) {
  apply_threads(opts);
  fs::create_directories(opts.out_dir);
  const Volume vol = load_volume(vol_path);
  const auto profile = intensity_profile(vol, parse_polyline(line), half_width, samples);
  const std::string csv = (fs::path(opts.out_dir) / "profile.csv").string();
  write_profile_csv(profile, csv);
  write_run_json(opts.out_dir, "profile", nullptr, {vol_path}, {csv});
  out << "profile: " << samples << " samples -> " << csv << "\n";
  return 0;
}

int run_time(const std::string& mode, const std::string& dims_text, double dwell_us,
             double exposure_ms, std::ostream& out) {
  const std::array<int, 3> dims = parse_dims(dims_text);
  double seconds = 0.0;
  if (mode == "pstpm") {
    if (!(dwell_us > 0.0)) throw ConfigError("time --mode pstpm needs --dwell-us > 0");
    seconds = acquisition_time_s(AcquisitionMode::kPstpm, dims, dwell_us * 1e-6);
  } else if (mode == "tfm") {
    if (!(exposure_ms > 0.0)) throw ConfigError("time --mode tfm needs --exposure-ms > 0");
    seconds = acquisition_time_s(AcquisitionMode::kTfm, dims, exposure_ms * 1e-3);
  } else {
    throw ConfigError("time: unknown mode '" + mode + "' (pstpm, tfm)");
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f s\n", seconds);
  out << buf;
  return 0;
}

int run_render(const CommonOpts& opts, const std::string& vol_path, int z, const std::string& name,
               double lo_pct, double hi_pct, std::ostream& out) {
  apply_threads(opts);
  fs::create_directories(opts.out_dir);
  const Volume vol = load_volume(vol_path);
  const std::string png_name = name.empty() ? ("slice_z" + std::to_string(z) + ".png") : name;
  const std::string png = (fs::path(opts.out_dir) / png_name).string();
  render_slice(vol, z, png, lo_pct, hi_pct);
  write_run_json(opts.out_dir, "render", nullptr, {vol_path}, {png});
  out << "render: z=" << z << " -> " << png << "\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"descatter3d: simulate, learn, and evaluate de-scattering for temporal "
               "focusing microscopy volumes"};
  app.require_subcommand(1);

  CommonOpts phantom_opts;
  auto* cmd_phantom = app.add_subcommand("phantom", "Generate an annotated dendrite phantom");
  add_common(cmd_phantom, phantom_opts);

  CommonOpts sim_opts;
  std::string sim_in;
  auto* cmd_sim = app.add_subcommand("simulate", "Apply the forward scattering model");
  add_common(cmd_sim, sim_opts);
  cmd_sim->add_option("--in", sim_in, "Ground-truth .dvol")->required();

  CommonOpts ds_opts;
  std::vector<std::string> ds_pairs;
  auto* cmd_ds = app.add_subcommand("dataset", "Cut paired training cubes from volume pairs");
  add_common(cmd_ds, ds_opts);
  cmd_ds->add_option("--pair", ds_pairs, "Source pair truth.dvol:input.dvol (repeatable)");

  CommonOpts train_opts;
  std::string train_dataset, train_resume;
  auto* cmd_train = app.add_subcommand("train", "Train the 3D encoder-decoder");
  add_common(cmd_train, train_opts);
  cmd_train->add_option("--dataset", train_dataset, "Dataset directory")->required();
  cmd_train->add_option("--resume", train_resume, "Checkpoint to resume from");

  CommonOpts infer_opts;
  std::string infer_net, infer_in;
  auto* cmd_infer = app.add_subcommand("infer", "Tiled inference over a volume");
  add_common(cmd_infer, infer_opts);
  cmd_infer->add_option("--net", infer_net, "Checkpoint .dnet")->required();
  cmd_infer->add_option("--in", infer_in, "Input .dvol")->required();

  CommonOpts eval_opts;
  std::string eval_mode = "recall";
  std::string eval_vol, eval_ann, eval_dend, eval_ref, eval_truth, eval_measured, eval_net;
  auto* cmd_eval = app.add_subcommand("eval", "Score spine recall, fidelity, or false positives");
  add_common(cmd_eval, eval_opts);
  cmd_eval->add_option("--mode", eval_mode, "recall | fidelity | fp");
  cmd_eval->add_option("--vol", eval_vol, "Volume to score");
  cmd_eval->add_option("--ann", eval_ann, "Spine annotations CSV");
  cmd_eval->add_option("--dendrites", eval_dend, "Dendrite axes CSV");
  cmd_eval->add_option("--ref", eval_ref, "Reference volume (fidelity)");
  cmd_eval->add_option("--truth", eval_truth, "Ground-truth volume (fp)");
  cmd_eval->add_option("--measured", eval_measured, "Measured input volume (fp)");
  cmd_eval->add_option("--net", eval_net, "Checkpoint (fp)");

  CommonOpts prof_opts;
  std::string prof_vol, prof_line;
  double prof_half_width = 0.5;
  int prof_samples = 100;
  auto* cmd_prof = app.add_subcommand("profile", "Normalized intensity profile along a line");
  add_common(cmd_prof, prof_opts, false);
  cmd_prof->add_option("--vol", prof_vol, "Volume .dvol")->required();
  cmd_prof->add_option("--line", prof_line, "Polyline x,y,z:x,y,z (um)")->required();
  cmd_prof->add_option("--half-width", prof_half_width, "Perpendicular half width (um)");
  cmd_prof->add_option("--samples", prof_samples, "Sample count");

  std::string time_mode, time_dims;
  double time_dwell_us = 0.0, time_exposure_ms = 0.0;
  auto* cmd_time = app.add_subcommand("time", "Acquisition-time calculator");
  cmd_time->add_option("--mode", time_mode, "pstpm | tfm")->required();
  cmd_time->add_option("--dims", time_dims, "Stack dims NXxNYxNZ")->required();
  cmd_time->add_option("--dwell-us", time_dwell_us, "PSTPM dwell per pixel (us)");
  cmd_time->add_option("--exposure-ms", time_exposure_ms, "TFM exposure per plane (ms)");

  CommonOpts render_opts;
  std::string render_vol, render_name;
  int render_z = 0;
  double render_lo = 0.1, render_hi = 99.9;
  auto* cmd_render = app.add_subcommand("render", "Write one z slice as 8-bit PNG");
  add_common(cmd_render, render_opts, false);
  cmd_render->add_option("--vol", render_vol, "Volume .dvol")->required();
  cmd_render->add_option("--z", render_z, "Plane index")->required();
  cmd_render->add_option("--name", render_name, "Output file name");
  cmd_render->add_option("--lo-pct", render_lo, "Low percentile of the display window");
  cmd_render->add_option("--hi-pct", render_hi, "High percentile of the display window");

  // CLI11's vector overload consumes arguments back to front.
  std::vector<std::string> argv_copy(args.rbegin(), args.rend());
  try {
    app.parse(argv_copy);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (cmd_phantom->parsed()) return run_phantom(phantom_opts, out);
    if (cmd_sim->parsed()) return run_simulate(sim_opts, sim_in, out);
    if (cmd_ds->parsed()) return run_dataset(ds_opts, ds_pairs, out);
    if (cmd_train->parsed()) return run_train(train_opts, train_dataset, train_resume, out);
    if (cmd_infer->parsed()) return run_infer(infer_opts, infer_net, infer_in, out);
    if (cmd_eval->parsed()) {
      return run_eval(eval_opts, eval_mode, eval_vol, eval_ann, eval_dend, eval_ref, eval_truth,
                      eval_measured, eval_net, out);
    }
    if (cmd_prof->parsed()) {
      return run_profile(prof_opts, prof_vol, prof_line, prof_half_width, prof_samples, out);
    }
    if (cmd_time->parsed()) {
      return run_time(time_mode, time_dims, time_dwell_us, time_exposure_ms, out);
    }
    if (cmd_render->parsed()) {
      return run_render(render_opts, render_vol, render_z, render_name, render_lo, render_hi, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace descatter3d
