#include "vecmap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "vecmap/io.hpp"
#include "vecmap/rng.hpp"

namespace vecmap::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t train_seed_for(std::uint64_t base, int index) {
  return derive_seed(base, 0x7811, static_cast<std::uint64_t>(index));
}
std::uint64_t val_seed_for(std::uint64_t base, int index) {
  return derive_seed(base, 0xa153, static_cast<std::uint64_t>(index));
}

}  // namespace

void generate_dataset(const GenDataConfig& cfg) {
  if (fs::exists(cfg.out_dir) && !fs::is_empty(cfg.out_dir) && !cfg.force)
    throw Error("output directory not empty (use --force): " + cfg.out_dir.string());
  fs::create_directories(cfg.out_dir / "scenes");
  fs::create_directories(cfg.out_dir / "obs");

  json manifest;
  manifest["generator_version"] = kGeneratorVersion;
  manifest["noise_sigma"] = cfg.observe.noise_sigma;
  manifest["frame"] = json{{"x_min", cfg.frame.x_min}, {"x_max", cfg.frame.x_max},
                           {"y_min", cfg.frame.y_min}, {"y_max", cfg.frame.y_max},
                           {"grid_h", cfg.frame.grid_h}, {"grid_w", cfg.frame.grid_w},
                           {"cell_size", cfg.frame.cell_size}};
  json entries = json::array();

  auto emit = [&](std::uint64_t seed, const std::string& split) {
    const Scene scene = generate_scene(seed, cfg.difficulty, cfg.frame, cfg.generator);
    const ObservationGrid obs = observe(scene, derive_seed(seed, 0x0b57), cfg.observe);
    const std::string scene_rel = "scenes/" + std::to_string(seed) + ".json";
    const std::string obs_rel = "obs/" + std::to_string(seed) + ".csv";
    io::write_text_file(cfg.out_dir / scene_rel, io::scene_to_json(scene));
    io::write_observation_csv(obs, cfg.out_dir / obs_rel);
    entries.push_back(json{{"seed", seed},
                           {"split", split},
                           {"difficulty", difficulty_name(cfg.difficulty)},
                           {"scene", scene_rel},
                           {"obs", obs_rel}});
  };

  for (int i = 0; i < cfg.n_train; ++i) emit(train_seed_for(cfg.seed, i), "train");
  for (int i = 0; i < cfg.n_val; ++i) emit(val_seed_for(cfg.seed, i), "val");

  manifest["scenes"] = std::move(entries);
  io::write_text_file(cfg.out_dir / "manifest.json", manifest.dump(1));
}

Manifest load_manifest(const fs::path& dataset_dir) {
  const json j = json::parse(io::read_text_file(dataset_dir / "manifest.json"));
  Manifest m;
  m.generator_version = j.at("generator_version");
  m.noise_sigma = j.at("noise_sigma");
  const json& f = j.at("frame");
  m.frame.x_min = f.at("x_min");
  m.frame.x_max = f.at("x_max");
  m.frame.y_min = f.at("y_min");
  m.frame.y_max = f.at("y_max");
  m.frame.grid_h = f.at("grid_h");
  m.frame.grid_w = f.at("grid_w");
  m.frame.cell_size = f.at("cell_size");
  for (const auto& e : j.at("scenes")) {
    ManifestEntry me;
    me.seed = e.at("seed");
    me.split = e.at("split");
    const auto d = difficulty_from_name(e.at("difficulty"));
    if (!d) throw Error("unknown difficulty in manifest");
    me.difficulty = *d;
    me.scene_path = e.at("scene");
    me.obs_path = e.at("obs");
    m.entries.push_back(std::move(me));
  }
  return m;
}

std::vector<SceneSample> load_split(const fs::path& dataset_dir, const std::string& split) {
  const Manifest m = load_manifest(dataset_dir);
  std::vector<SceneSample> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    SceneSample s;
    s.scene = io::scene_from_json(io::read_text_file(dataset_dir / e.scene_path));
    s.obs = io::read_observation_csv(dataset_dir / e.obs_path);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SceneSample> make_dataset(int count, Difficulty difficulty,
                                      std::uint64_t seed_base, const MapFrame& frame,
                                      const ObserveOptions& observe_opts,
                                      const GeneratorOptions& generator) {
  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(seed_base, 0xd47a, static_cast<std::uint64_t>(i));
    SceneSample s;
    s.scene = generate_scene(seed, difficulty, frame, generator);
    s.obs = observe(s.scene, derive_seed(seed, 0x0b57), observe_opts);
    out.push_back(std::move(s));
  }
  return out;
}

SamplingResult run_sampling(const DenoiserNet& net, std::span<const SceneSample> scenes,
                            const SamplerConfig& sampler, const NoiseSchedule& schedule,
                            std::uint64_t seed) {
  SamplingResult result;
  result.samples.resize(scenes.size());
  double decode_total = 0.0, encode_total = 0.0;
  long sample_count = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const LatentGrid cond = net.encode(scenes[i].obs);
    const auto t1 = std::chrono::steady_clock::now();
    encode_total += std::chrono::duration<double>(t1 - t0).count();
    auto& per_scene = result.samples[i];
    per_scene.reserve(static_cast<std::size_t>(sampler.n));
    for (int s = 0; s < sampler.n; ++s) {
      const std::uint64_t stream =
          derive_seed(seed, scenes[i].scene.seed, static_cast<std::uint64_t>(s));
      const auto s0 = std::chrono::steady_clock::now();
      per_scene.push_back(sample_map(net, cond, sampler, schedule, stream));
      const auto s1 = std::chrono::steady_clock::now();
      decode_total += std::chrono::duration<double>(s1 - s0).count();
      ++sample_count;
    }
  }
  result.decode_seconds_per_sample = sample_count > 0 ? decode_total / sample_count : 0.0;
  result.encode_seconds_per_scene =
      scenes.empty() ? 0.0 : encode_total / static_cast<double>(scenes.size());
  return result;
}

void write_samples(const fs::path& out_dir, std::span<const SceneSample> scenes,
                   const SamplingResult& sampling, const MapFrame& frame) {
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const fs::path scene_dir = out_dir / std::to_string(scenes[i].scene.seed);
    fs::create_directories(scene_dir);
    for (std::size_t s = 0; s < sampling.samples[i].size(); ++s) {
      const fs::path file = scene_dir / ("sample_" + std::to_string(s) + ".json");
      io::write_text_file(file, io::vector_map_to_json(sampling.samples[i][s], frame));
    }
  }
}

std::vector<std::vector<VectorMap>> load_samples(const fs::path& dir,
                                                 std::span<const SceneSample> scenes) {
  std::vector<std::vector<VectorMap>> out(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const fs::path scene_dir = dir / std::to_string(scenes[i].scene.seed);
    for (int s = 0;; ++s) {
      const fs::path file = scene_dir / ("sample_" + std::to_string(s) + ".json");
      if (!fs::exists(file)) break;
      out[i].push_back(io::vector_map_from_json(io::read_text_file(file)));
    }
    if (out[i].empty()) throw Error("no samples for scene " + std::to_string(scenes[i].scene.seed));
  }
  return out;
}

EvalReport evaluate_samples(std::span<const SceneSample> scenes,
                            const std::vector<std::vector<VectorMap>>& samples,
                            const EvalConfig& cfg) {
  if (scenes.empty() || samples.size() != scenes.size())
    throw Error("evaluation inputs misaligned");
  const MapFrame& frame = scenes[0].scene.frame;
  const GaussianKernel kernel = make_gaussian_kernel(cfg.kernel_size, cfg.kernel_sigma);
  const bool writing = !cfg.out_dir.empty();
  if (writing) fs::create_directories(cfg.out_dir);

  EvalReport report;
  report.n_samples = static_cast<int>(samples[0].size());

  std::vector<VectorMap> first_samples, gts;
  std::vector<ClassProbMap> agg_first, agg_all;
  std::vector<SceneVisibilityInput> vis_inputs;
  std::vector<VisibilityMask> masks(scenes.size());
  std::vector<UncertaintyMap> umaps(scenes.size());

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& per_scene = samples[i];
    if (per_scene.empty()) throw Error("scene without samples");
    first_samples.push_back(per_scene[0]);
    gts.push_back(scenes[i].scene.gt);

    std::vector<ClassProbMap> probs;
    probs.reserve(per_scene.size());
    for (const auto& s : per_scene)
      probs.push_back(per_sample_probability(s, frame, kernel, cfg.score_filter));
    agg_first.push_back(probs[0]);
    agg_all.push_back(aggregate(probs));
    umaps[i] = uncertainty(probs);
    masks[i] = ray_trace(scenes[i].scene.occupancy, scenes[i].scene.ego_cell);
    vis_inputs.push_back({scenes[i].scene.seed, &umaps[i].u, &masks[i],
                          &scenes[i].scene.drivable});

    if (writing && cfg.write_maps) {
      const fs::path mdir = cfg.out_dir / "maps" / std::to_string(scenes[i].scene.seed);
      fs::create_directories(mdir);
      const auto& agg = agg_all.back();
      for (int c = 0; c < kNumClasses; ++c) {
        const std::string base = std::string("dc_") + class_name(static_cast<MapClass>(c));
        io::write_pgm(agg.prob[static_cast<std::size_t>(c)], mdir / (base + ".pgm"));
        io::write_csv(agg.prob[static_cast<std::size_t>(c)], mdir / (base + ".csv"));
      }
      const double umax = umaps[i].u.maxCoeff();
      io::write_pgm(umaps[i].u, mdir / "u.pgm", 0.0, umax > 0 ? umax : 1.0);
      io::write_csv(umaps[i].u, mdir / "u.csv");
      io::write_pgm(masks[i].visible.cast<double>(), mdir / "visibility.pgm");
      json meta{{"n_samples", report.n_samples},
                {"kernel_size", cfg.kernel_size},
                {"kernel_sigma", cfg.kernel_sigma},
                {"score_filter", cfg.score_filter},
                {"variance", "population"},
                {"u_scale_max", umax}};
      io::write_text_file(mdir / "metadata.json", meta.dump(1));
    }
  }

  report.ap = evaluate_ap(first_samples, gts, frame);
  const std::vector<double> grid = default_b_grid(cfg.roc_grid);
  report.roc_single = roc_curve(agg_first, gts, frame, grid);
  report.roc_aggregated = roc_curve(agg_all, gts, frame, grid);

  if (scenes.size() >= 2) {
    try {
      report.visibility = compare_uncertainty(vis_inputs, /*paired=*/true);
      report.has_visibility = true;
    } catch (const Error&) {
      report.has_visibility = false;
    }
  }

  if (writing) {
    write_ap_csv(cfg.out_dir / "metrics.csv", report.ap);
    write_roc_csv(cfg.out_dir / "roc_n1.csv", report.roc_single);
    write_roc_csv(cfg.out_dir / ("roc_n" + std::to_string(report.n_samples) + ".csv"),
                  report.roc_aggregated);
    for (int c = 0; c < kNumClasses; ++c) {
      const auto cls = static_cast<MapClass>(c);
      try {
        const RocResult rc = roc_curve_class(agg_all, gts, cls, frame, grid);
        write_roc_csv(cfg.out_dir / (std::string("roc_") + class_name(cls) + ".csv"), rc);
      } catch (const Error&) {
        // class absent in this split
      }
    }
    if (report.has_visibility)
      write_visibility_json(cfg.out_dir / "visibility_stats.json", report.visibility);

    std::ofstream summary(cfg.out_dir / "summary.txt");
    summary << "scenes: " << scenes.size() << "\n";
    summary << "samples per scene: " << report.n_samples << "\n";
    summary << "mAP (single sample): " << report.ap.mAP << "\n";
    summary << "AUC n=1: " << report.roc_single.auc << "\n";
    summary << "AUC n=" << report.n_samples << ": " << report.roc_aggregated.auc << "\n";
    summary << "AUC gain: " << report.roc_aggregated.auc - report.roc_single.auc << "\n";
    if (report.has_visibility) {
      summary << "mean uncertainty visible: " << report.visibility.grand_mean_visible << "\n";
      summary << "mean uncertainty invisible: " << report.visibility.grand_mean_invisible
              << "\n";
      summary << "invisible/visible ratio: " << report.visibility.ratio << "\n";
      summary << "one-sided p: " << report.visibility.p_value << "\n";
    }
  }
  return report;
}

const char* ablation_axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::k: return "k";
    case AblationAxis::eta: return "eta";
    case AblationAxis::tau: return "tau";
    case AblationAxis::padding: return "padding";
    case AblationAxis::pretrain: return "pretrain";
  }
  return "unknown";
}

std::vector<AblationRow> ablate_inference(const DenoiserNet& net,
                                          std::span<const SceneSample> val,
                                          const SamplerConfig& base,
                                          const NoiseSchedule& schedule, AblationAxis axis,
                                          std::span<const double> values, std::uint64_t seed) {
  std::vector<AblationRow> rows;
  for (double v : values) {
    SamplerConfig cfg = base;
    cfg.n = 1;
    switch (axis) {
      case AblationAxis::k: cfg.k = static_cast<int>(v); break;
      case AblationAxis::eta: cfg.eta = v; break;
      case AblationAxis::tau: cfg.tau = v; break;
      default: throw Error("ablate_inference handles k/eta/tau only");
    }
    const SamplingResult sr = run_sampling(net, val, cfg, schedule, seed);
    std::vector<VectorMap> preds, gts;
    for (std::size_t i = 0; i < val.size(); ++i) {
      preds.push_back(sr.samples[i][0]);
      gts.push_back(val[i].scene.gt);
    }
    AblationRow row;
    row.k = cfg.k;
    row.eta = cfg.eta;
    row.tau = cfg.tau;
    row.sec_per_sample = sr.decode_seconds_per_sample;
    row.ap = evaluate_ap(preds, gts, val[0].scene.frame);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

AblationRow eval_row(DenoiserParams params, std::span<const SceneSample> val_set,
                     const RetrainSpec& spec, const NoiseSchedule& schedule) {
  AblationRow row;
  row.k = spec.sampler.k;
  row.eta = spec.sampler.eta;
  row.tau = spec.sampler.tau;
  row.padding = padding_name(spec.sampler.padding.kind);
  DenoiserNet net(std::move(params));
  SamplerConfig eval_cfg = spec.sampler;
  eval_cfg.n = 1;
  const SamplingResult sr =
      run_sampling(net, val_set, eval_cfg, schedule, derive_seed(spec.seed, 0xeea1));
  std::vector<VectorMap> preds, gts;
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    preds.push_back(sr.samples[i][0]);
    gts.push_back(val_set[i].scene.gt);
  }
  row.sec_per_sample = sr.decode_seconds_per_sample;
  row.ap = evaluate_ap(preds, gts, val_set[0].scene.frame);
  return row;
}

AblationRow retrain_row(std::span<const SceneSample> train_set,
                        std::span<const SceneSample> val_set, const RetrainSpec& spec,
                        const NoiseSchedule& schedule) {
  TrainResult tr = train(train_set, val_set, init_params(spec.dn, spec.seed), spec.train,
                         schedule, spec.sampler, spec.seed);
  return eval_row(std::move(tr.params), val_set, spec, schedule);
}

}  // namespace

std::vector<AblationRow> ablate_padding(std::span<const SceneSample> train_set,
                                        std::span<const SceneSample> val_set,
                                        const RetrainSpec& spec, const NoiseSchedule& schedule) {
  std::vector<AblationRow> rows;
  for (PaddingKind kind : {PaddingKind::repeat, PaddingKind::zero, PaddingKind::smooth,
                           PaddingKind::gaussian, PaddingKind::uniform}) {
    RetrainSpec s = spec;
    s.sampler.padding.kind = kind;
    rows.push_back(retrain_row(train_set, val_set, s, schedule));
  }
  return rows;
}

std::vector<AblationRow> ablate_pretrain(std::span<const SceneSample> train_set,
                                         std::span<const SceneSample> val_set,
                                         const RetrainSpec& spec,
                                         const NoiseSchedule& schedule) {
  std::vector<AblationRow> rows;
  // From-scratch reference run; its encoder seeds the frozen variant.
  RetrainSpec scratch = spec;
  scratch.train.freeze_encoder = false;
  scratch.train.pretrained_encoder_path.reset();
  TrainResult scratch_tr = train(train_set, val_set, init_params(scratch.dn, scratch.seed),
                                 scratch.train, schedule, scratch.sampler, scratch.seed);
  const fs::path tmp = fs::temp_directory_path() / "vecmap_pretrain_encoder.ckpt";
  save_checkpoint(tmp, scratch_tr.params, schedule.fingerprint());
  AblationRow scratch_row = eval_row(std::move(scratch_tr.params), val_set, scratch, schedule);
  scratch_row.mode = "scratch";

  RetrainSpec frozen = spec;
  frozen.train.freeze_encoder = true;
  frozen.train.pretrained_encoder_path = tmp;
  frozen.seed = derive_seed(spec.seed, 0xf209);
  AblationRow frozen_row = retrain_row(train_set, val_set, frozen, schedule);
  frozen_row.mode = "frozen_pretrained";

  rows.push_back(std::move(scratch_row));
  rows.push_back(std::move(frozen_row));
  return rows;
}

namespace {
std::string fmt_ap(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}
}  // namespace

void write_ap_csv(const fs::path& path, const ApResult& ap) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path.string());
  out << "AP_ped,AP_div,AP_bound,mAP\n";
  out << fmt_ap(ap.class_ap(MapClass::ped_crossing)) << ","
      << fmt_ap(ap.class_ap(MapClass::divider)) << ","
      << fmt_ap(ap.class_ap(MapClass::boundary)) << "," << fmt_ap(ap.mAP) << "\n";
  out << "\nclass,thr_m,AP\n";
  for (int c = 0; c < kNumClasses; ++c)
    for (std::size_t t = 0; t < kApThresholds.size(); ++t)
      out << class_name(static_cast<MapClass>(c)) << "," << kApThresholds[t] << ","
          << fmt_ap(ap.ap[static_cast<std::size_t>(c)][t]) << "\n";
}

void write_roc_csv(const fs::path& path, const RocResult& roc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path.string());
  out << "# auc = " << roc.auc << "\n";
  out << "b,fpr,tpr\n";
  char buf[96];
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", p.b, p.fpr, p.tpr);
    out << buf;
  }
}

void write_ablation_csv(const fs::path& path, std::span<const AblationRow> rows,
                        AblationAxis axis) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path.string());
  const bool inference = axis == AblationAxis::k || axis == AblationAxis::eta ||
                         axis == AblationAxis::tau;
  if (inference)
    out << "k,eta,tau,sec_per_sample,AP_ped,AP_div,AP_bound,mAP\n";
  else if (axis == AblationAxis::padding)
    out << "padding,AP_ped,AP_div,AP_bound,mAP\n";
  else
    out << "mode,AP_ped,AP_div,AP_bound,mAP\n";
  for (const auto& r : rows) {
    if (inference)
      out << r.k << "," << r.eta << "," << r.tau << "," << r.sec_per_sample << ",";
    else if (axis == AblationAxis::padding)
      out << r.padding << ",";
    else
      out << r.mode << ",";
    out << fmt_ap(r.ap.class_ap(MapClass::ped_crossing)) << ","
        << fmt_ap(r.ap.class_ap(MapClass::divider)) << ","
        << fmt_ap(r.ap.class_ap(MapClass::boundary)) << "," << fmt_ap(r.ap.mAP) << "\n";
  }
}

void write_visibility_json(const fs::path& path, const VisibilityStats& stats) {
  json rows = json::array();
  for (const auto& r : stats.rows)
    rows.push_back(json{{"scene", r.scene_id},
                        {"mean_visible", r.mean_visible},
                        {"mean_invisible", r.mean_invisible},
                        {"n_visible", r.n_visible},
                        {"n_invisible", r.n_invisible},
                        {"used", r.used}});
  json j{{"paired", stats.paired},
         {"n_used", stats.n_used},
         {"n_skipped", stats.n_skipped},
         {"grand_mean_visible", stats.grand_mean_visible},
         {"grand_mean_invisible", stats.grand_mean_invisible},
         {"ratio", stats.ratio},
         {"t", stats.t_stat},
         {"p", stats.p_value},
         {"scenes", std::move(rows)}};
  io::write_text_file(path, j.dump(1));
}

void write_run_metadata(const fs::path& path, const std::string& command,
                        const std::string& config_json, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config_json) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  json j{{"command", command},
         {"config_hash", h},
         {"seed", seed},
         {"code_version", "0.1.0"},
         {"config", json::parse(config_json)}};
  io::write_text_file(path, j.dump(1));
}

}  // namespace vecmap::pipeline
