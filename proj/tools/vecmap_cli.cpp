#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "vecmap/io.hpp"
#include "vecmap/pipeline.hpp"
#include "vecmap/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vecmap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  int T = 1000;
  SamplerConfig sampler;
  TrainConfig train;
  DenoiserConfig dn;
  double noise_sigma = 0.05;
  std::string difficulty = "medium";
  std::string padding = "gaussian";
  double score_filter = 0.4;
  double binarize = 0.5;
};

// The run config file overrides command-line flags.
void apply_config_file(CommonOpts& o) {
  if (o.config_path.empty()) return;
  const json j = json::parse(io::read_text_file(o.config_path));
  if (j.contains("seed")) o.seed = j["seed"];
  if (j.contains("T")) o.T = j["T"];
  if (j.contains("k")) o.sampler.k = j["k"];
  if (j.contains("eta")) o.sampler.eta = j["eta"];
  if (j.contains("tau")) o.sampler.tau = j["tau"];
  if (j.contains("n")) o.sampler.n = j["n"];
  if (j.contains("score_filter")) {
    o.sampler.score_filter = j["score_filter"];
    o.score_filter = j["score_filter"];
  }
  if (j.contains("padding")) o.padding = j["padding"];
  if (j.contains("epochs")) o.train.epochs = j["epochs"];
  if (j.contains("lr")) o.train.lr = j["lr"];
  if (j.contains("lambda_cls")) o.train.lambda_cls = j["lambda_cls"];
  if (j.contains("noise_sigma")) o.noise_sigma = j["noise_sigma"];
  if (j.contains("difficulty")) o.difficulty = j["difficulty"];
  if (j.contains("binarize")) o.binarize = j["binarize"];
}

void finalize(CommonOpts& o) {
  apply_config_file(o);
  const auto pk = padding_from_name(o.padding);
  if (!pk) throw Error("unknown padding strategy: " + o.padding);
  o.sampler.padding.kind = *pk;
  o.sampler.validate(o.T);
}

std::string opts_json(const CommonOpts& o, const std::string& extra_key = "",
                      const std::string& extra_val = "") {
  json j{{"seed", o.seed},       {"T", o.T},
         {"k", o.sampler.k},     {"eta", o.sampler.eta},
         {"tau", o.sampler.tau}, {"n", o.sampler.n},
         {"score_filter", o.sampler.score_filter},
         {"padding", o.padding}, {"epochs", o.train.epochs},
         {"lr", o.train.lr},     {"lambda_cls", o.train.lambda_cls},
         {"noise_sigma", o.noise_sigma},
         {"difficulty", o.difficulty}};
  if (!extra_key.empty()) j[extra_key] = extra_val;
  return j.dump(1);
}

Difficulty parse_difficulty(const std::string& s) {
  const auto d = difficulty_from_name(s);
  if (!d) throw Error("unknown difficulty: " + s);
  return *d;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw Error("empty value list");
  return out;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run config file (overrides flags)");
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--k", o.sampler.k, "diffusion steps");
  cmd->add_option("--eta", o.sampler.eta, "DDIM stochasticity");
  cmd->add_option("--tau", o.sampler.tau, "query keep threshold");
  cmd->add_option("--n", o.sampler.n, "samples per scene");
  cmd->add_option("--score-filter", o.sampler.score_filter, "rasterization score cutoff");
  cmd->add_option("--padding", o.padding, "repeat|zero|smooth|gaussian|uniform");
  cmd->add_option("--T", o.T, "schedule length");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-based vectorized map construction"};
  app.require_subcommand(1);

  CommonOpts o;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  int gen_train = 500, gen_val = 240;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--train", gen_train, "training scenes");
  gen->add_option("--val", gen_val, "validation scenes");
  gen->add_option("--difficulty", o.difficulty, "easy|medium|hard");
  gen->add_option("--noise-sigma", o.noise_sigma, "observation noise");
  gen->add_flag("--force", gen_force, "overwrite non-empty directory");
  add_common(gen, o);

  // train
  auto* tr = app.add_subcommand("train", "train the denoiser");
  std::string tr_data, tr_out;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--epochs", o.train.epochs, "training epochs");
  tr->add_option("--lr", o.train.lr, "peak learning rate");
  tr->add_option("--lambda-cls", o.train.lambda_cls, "class loss weight");
  bool tr_freeze = false;
  std::string tr_pretrained;
  tr->add_flag("--freeze-encoder", tr_freeze, "freeze the observation encoder");
  tr->add_option("--pretrained-encoder", tr_pretrained, "checkpoint supplying encoder weights");
  add_common(tr, o);

  // sample
  auto* sm = app.add_subcommand("sample", "sample vector maps from a checkpoint");
  std::string sm_data, sm_ckpt, sm_out, sm_split = "val";
  sm->add_option("--data", sm_data, "dataset directory")->required();
  sm->add_option("--checkpoint", sm_ckpt, "trained checkpoint")->required();
  sm->add_option("--out", sm_out, "samples directory")->required();
  sm->add_option("--split", sm_split, "dataset split");
  add_common(sm, o);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "aggregate samples and report metrics");
  std::string ev_data, ev_samples, ev_out, ev_split = "val";
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--samples", ev_samples, "samples directory")->required();
  ev->add_option("--out", ev_out, "report directory")->required();
  ev->add_option("--split", ev_split, "dataset split");
  ev->add_option("--binarize", o.binarize, "refined-prediction threshold");
  add_common(ev, o);

  // ablate
  auto* ab = app.add_subcommand("ablate", "parameter sweeps");
  std::string ab_data, ab_ckpt, ab_out, ab_axis = "k", ab_values = "1,2,3,4,5", ab_split = "val";
  int ab_scenes = 100;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--axis", ab_axis, "k|eta|tau|padding|pretrain")->required();
  ab->add_option("--out", ab_out, "output CSV")->required();
  ab->add_option("--checkpoint", ab_ckpt, "checkpoint (k/eta/tau sweeps)");
  ab->add_option("--values", ab_values, "comma-separated sweep values");
  ab->add_option("--split", ab_split, "dataset split");
  ab->add_option("--scenes", ab_scenes, "validation scenes used");
  ab->add_option("--epochs", o.train.epochs, "epochs for retrain axes");
  add_common(ab, o);

  // report
  auto* rp = app.add_subcommand("report", "assemble a figure grid from evaluation maps");
  std::string rp_eval, rp_out;
  int rp_scenes = 4;
  rp->add_option("--eval", rp_eval, "evaluation directory")->required();
  rp->add_option("--out", rp_out, "output PGM")->required();
  rp->add_option("--scenes", rp_scenes, "scene rows in the figure");

  CLI11_PARSE(app, argc, argv);

  try {
    finalize(o);
    const NoiseSchedule schedule = build_cosine_schedule(o.T);

    if (*gen) {
      pipeline::GenDataConfig cfg;
      cfg.out_dir = gen_out;
      cfg.n_train = gen_train;
      cfg.n_val = gen_val;
      cfg.difficulty = parse_difficulty(o.difficulty);
      cfg.seed = o.seed;
      cfg.observe.noise_sigma = o.noise_sigma;
      cfg.force = gen_force;
      pipeline::generate_dataset(cfg);
      pipeline::write_run_metadata(cfg.out_dir / "run_meta.json", "gen-data", opts_json(o),
                                   o.seed);
      std::cout << "wrote dataset to " << gen_out << "\n";
    } else if (*tr) {
      auto train_set = pipeline::load_split(tr_data, "train");
      auto val_set = pipeline::load_split(tr_data, "val");
      if (train_set.empty()) throw Error("no training scenes in " + tr_data);
      o.train.freeze_encoder = tr_freeze;
      if (!tr_pretrained.empty()) o.train.pretrained_encoder_path = tr_pretrained;
      fs::create_directories(tr_out);
      o.train.abort_checkpoint_path = fs::path(tr_out) / "abort.ckpt";
      TrainResult result = train(train_set, val_set, init_params(o.dn, o.seed), o.train,
                                 schedule, o.sampler, o.seed);
      save_checkpoint(fs::path(tr_out) / "checkpoint.ckpt", result.params,
                      schedule.fingerprint());
      write_metrics_csv(fs::path(tr_out) / "metrics.csv", result.log);
      pipeline::write_run_metadata(fs::path(tr_out) / "run_meta.json", "train", opts_json(o),
                                   o.seed);
      std::cout << "checkpoint " << (fs::path(tr_out) / "checkpoint.ckpt").string()
                << " checksum " << result.params.checksum() << "\n";
    } else if (*sm) {
      const Checkpoint ck = load_checkpoint(sm_ckpt);
      if (ck.schedule_fingerprint != schedule.fingerprint())
        throw Error("checkpoint schedule fingerprint mismatch");
      auto scenes = pipeline::load_split(sm_data, sm_split);
      if (scenes.empty()) throw Error("no scenes in split " + sm_split);
      DenoiserNet net(ck.params.clone());
      const pipeline::SamplingResult sr =
          pipeline::run_sampling(net, scenes, o.sampler, schedule, o.seed);
      fs::create_directories(sm_out);
      pipeline::write_samples(sm_out, scenes, sr, scenes[0].scene.frame);
      pipeline::write_run_metadata(fs::path(sm_out) / "run_meta.json", "sample", opts_json(o),
                                   o.seed);
      std::cout << "wrote " << o.sampler.n << " samples per scene for " << scenes.size()
                << " scenes; " << sr.decode_seconds_per_sample << " s/sample\n";
    } else if (*ev) {
      auto scenes = pipeline::load_split(ev_data, ev_split);
      if (scenes.empty()) throw Error("no scenes in split " + ev_split);
      const auto samples = pipeline::load_samples(ev_samples, scenes);
      pipeline::EvalConfig cfg;
      cfg.score_filter = o.sampler.score_filter;
      cfg.binarize = o.binarize;
      cfg.out_dir = ev_out;
      const pipeline::EvalReport report = pipeline::evaluate_samples(scenes, samples, cfg);
      pipeline::write_run_metadata(fs::path(ev_out) / "run_meta.json", "evaluate",
                                   opts_json(o), o.seed);
      std::cout << "mAP " << report.ap.mAP << "  AUC(n=1) " << report.roc_single.auc
                << "  AUC(n=" << report.n_samples << ") " << report.roc_aggregated.auc << "\n";
      if (report.has_visibility)
        std::cout << "uncertainty invisible/visible ratio " << report.visibility.ratio
                  << "  p " << report.visibility.p_value << "\n";
    } else if (*ab) {
      auto val_set = pipeline::load_split(ab_data, ab_split);
      if (static_cast<int>(val_set.size()) > ab_scenes)
        val_set.resize(static_cast<std::size_t>(ab_scenes));
      std::vector<pipeline::AblationRow> rows;
      pipeline::AblationAxis axis;
      if (ab_axis == "k") axis = pipeline::AblationAxis::k;
      else if (ab_axis == "eta") axis = pipeline::AblationAxis::eta;
      else if (ab_axis == "tau") axis = pipeline::AblationAxis::tau;
      else if (ab_axis == "padding") axis = pipeline::AblationAxis::padding;
      else if (ab_axis == "pretrain") axis = pipeline::AblationAxis::pretrain;
      else throw Error("unknown ablation axis: " + ab_axis);

      if (axis == pipeline::AblationAxis::padding || axis == pipeline::AblationAxis::pretrain) {
        auto train_set = pipeline::load_split(ab_data, "train");
        pipeline::RetrainSpec spec;
        spec.dn = o.dn;
        spec.train = o.train;
        spec.sampler = o.sampler;
        spec.seed = o.seed;
        rows = axis == pipeline::AblationAxis::padding
                   ? pipeline::ablate_padding(train_set, val_set, spec, schedule)
                   : pipeline::ablate_pretrain(train_set, val_set, spec, schedule);
      } else {
        if (ab_ckpt.empty()) throw Error("k/eta/tau sweeps need --checkpoint");
        const Checkpoint ck = load_checkpoint(ab_ckpt);
        if (ck.schedule_fingerprint != schedule.fingerprint())
          throw Error("checkpoint schedule fingerprint mismatch");
        DenoiserNet net(ck.params.clone());
        rows = pipeline::ablate_inference(net, val_set, o.sampler, schedule, axis,
                                          parse_values(ab_values), o.seed);
      }
      pipeline::write_ablation_csv(ab_out, rows, axis);
      pipeline::write_run_metadata(fs::path(ab_out).replace_extension(".meta.json"), "ablate",
                                   opts_json(o, "axis", ab_axis), o.seed);
      std::cout << "wrote ablation table " << ab_out << "\n";
    } else if (*rp) {
      // Figure grid: one row per scene, panels left to right.
      const fs::path maps = fs::path(rp_eval) / "maps";
      if (!fs::exists(maps)) throw Error("no maps directory under " + rp_eval);
      std::vector<fs::path> scene_dirs;
      for (const auto& e : fs::directory_iterator(maps))
        if (e.is_directory()) scene_dirs.push_back(e.path());
      std::sort(scene_dirs.begin(), scene_dirs.end());
      if (scene_dirs.empty()) throw Error("empty maps directory");
      scene_dirs.resize(std::min<std::size_t>(scene_dirs.size(),
                                              static_cast<std::size_t>(rp_scenes)));
      const std::vector<std::string> panels = {"dc_divider.pgm", "dc_boundary.pgm",
                                               "dc_ped_crossing.pgm", "u.pgm",
                                               "visibility.pgm"};
      std::vector<Eigen::MatrixXd> tiles;
      int tile_h = 0, tile_w = 0;
      for (const auto& dir : scene_dirs)
        for (const auto& p : panels) {
          tiles.push_back(io::read_pgm(dir / p));
          tile_h = static_cast<int>(tiles.back().rows());
          tile_w = static_cast<int>(tiles.back().cols());
        }
      const int gap = 2;
      const int n_rows = static_cast<int>(scene_dirs.size());
      const int n_cols = static_cast<int>(panels.size());
      Eigen::MatrixXd figure =
          Eigen::MatrixXd::Constant(n_rows * (tile_h + gap) - gap,
                                    n_cols * (tile_w + gap) - gap, 64.0);
      for (int r = 0; r < n_rows; ++r)
        for (int c = 0; c < n_cols; ++c)
          figure.block(r * (tile_h + gap), c * (tile_w + gap), tile_h, tile_w) =
              tiles[static_cast<std::size_t>(r * n_cols + c)];
      // read_pgm returns file row order; write back without flipping twice.
      io::write_pgm(figure.colwise().reverse(), rp_out, 0.0, 255.0);
      std::cout << "wrote figure " << rp_out << "\n";
    }
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
