#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vecmap/aggregation.hpp"
#include "vecmap/metrics.hpp"
#include "vecmap/train.hpp"
#include "vecmap/visibility.hpp"

namespace vecmap::pipeline {

inline constexpr const char* kGeneratorVersion = "1";

struct GenDataConfig {
  std::filesystem::path out_dir;
  int n_train = 500;
  int n_val = 240;
  Difficulty difficulty = Difficulty::medium;
  std::uint64_t seed = 1;
  MapFrame frame;
  GeneratorOptions generator;
  ObserveOptions observe;
  bool force = false;
};

struct ManifestEntry {
  std::uint64_t seed = 0;
  std::string split;
  Difficulty difficulty = Difficulty::medium;
  std::string scene_path;
  std::string obs_path;
};

struct Manifest {
  std::string generator_version;
  MapFrame frame;
  double noise_sigma = 0.0;
  std::vector<ManifestEntry> entries;
};

// Writes scenes/<seed>.json, obs/<seed>.csv and manifest.json; refuses a
// non-empty output directory unless force is set. Idempotent for fixed seeds.
void generate_dataset(const GenDataConfig& cfg);

Manifest load_manifest(const std::filesystem::path& dataset_dir);
std::vector<SceneSample> load_split(const std::filesystem::path& dataset_dir,
                                    const std::string& split);

// In-memory dataset for tests and the acceptance suite. Train and validation
// splits use disjoint seed ranges derived from seed_base.
std::vector<SceneSample> make_dataset(int count, Difficulty difficulty,
                                      std::uint64_t seed_base, const MapFrame& frame = {},
                                      const ObserveOptions& observe = {},
                                      const GeneratorOptions& generator = {});

struct SamplingResult {
  // samples[scene][i] aligned with the input scene span
  std::vector<std::vector<VectorMap>> samples;
  double decode_seconds_per_sample = 0.0;  // k-step loop only, encoder excluded
  double encode_seconds_per_scene = 0.0;
};

// n samples per scene; the latent grid is encoded once per scene. Per-sample
// RNG streams derive from (scene seed, sample index), so results do not
// depend on scheduling.
SamplingResult run_sampling(const DenoiserNet& net, std::span<const SceneSample> scenes,
                            const SamplerConfig& sampler, const NoiseSchedule& schedule,
                            std::uint64_t seed);

void write_samples(const std::filesystem::path& out_dir,
                   std::span<const SceneSample> scenes, const SamplingResult& sampling,
                   const MapFrame& frame);
std::vector<std::vector<VectorMap>> load_samples(const std::filesystem::path& dir,
                                                 std::span<const SceneSample> scenes);

struct EvalConfig {
  double score_filter = 0.4;
  int kernel_size = 5;
  double kernel_sigma = 1.0;
  double binarize = 0.5;
  int roc_grid = 256;
  bool write_maps = true;
  std::filesystem::path out_dir;  // empty: nothing written
};

struct EvalReport {
  ApResult ap;  // single-sample (first sample per scene)
  RocResult roc_single;
  RocResult roc_aggregated;
  int n_samples = 1;
  bool has_visibility = false;
  VisibilityStats visibility;
};

EvalReport evaluate_samples(std::span<const SceneSample> scenes,
                            const std::vector<std::vector<VectorMap>>& samples,
                            const EvalConfig& cfg);

struct AblationRow {
  int k = 0;
  double eta = 0.0;
  double tau = 0.0;
  std::string padding;
  std::string mode;  // pretrain axis
  double sec_per_sample = 0.0;
  ApResult ap;
};

enum class AblationAxis { k, eta, tau, padding, pretrain };

const char* ablation_axis_name(AblationAxis a);

// k/eta/tau sweeps reuse one checkpoint and vary sampling only; padding and
// pretrain sweeps retrain per value.
std::vector<AblationRow> ablate_inference(const DenoiserNet& net,
                                          std::span<const SceneSample> val,
                                          const SamplerConfig& base,
                                          const NoiseSchedule& schedule, AblationAxis axis,
                                          std::span<const double> values, std::uint64_t seed);

struct RetrainSpec {
  DenoiserConfig dn;
  TrainConfig train;
  SamplerConfig sampler;
  std::uint64_t seed = 1;
};

std::vector<AblationRow> ablate_padding(std::span<const SceneSample> train_set,
                                        std::span<const SceneSample> val_set,
                                        const RetrainSpec& spec, const NoiseSchedule& schedule);

std::vector<AblationRow> ablate_pretrain(std::span<const SceneSample> train_set,
                                         std::span<const SceneSample> val_set,
                                         const RetrainSpec& spec,
                                         const NoiseSchedule& schedule);

void write_ap_csv(const std::filesystem::path& path, const ApResult& ap);
void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);
void write_ablation_csv(const std::filesystem::path& path,
                        std::span<const AblationRow> rows, AblationAxis axis);
void write_visibility_json(const std::filesystem::path& path, const VisibilityStats& stats);

// Config hash + seeds + code version, one JSON per command invocation.
void write_run_metadata(const std::filesystem::path& path, const std::string& command,
                        const std::string& config_json, std::uint64_t seed);

}  // namespace vecmap::pipeline
