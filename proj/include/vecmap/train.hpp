#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vecmap/denoiser.hpp"
#include "vecmap/diffusion.hpp"
#include "vecmap/metrics.hpp"
#include "vecmap/scene.hpp"
#include "vecmap/schedule.hpp"

namespace vecmap {

// Raised on NaN loss; the CLI maps it to the numeric-abort exit code.
class NumericAbort : public Error {
 public:
  using Error::Error;
};

struct SceneSample {
  Scene scene;
  ObservationGrid obs;
};

struct TrainConfig {
  int epochs = 10;
  double lr = 2e-4;  // cosine annealed to 0, batch size 1
  double weight_decay = 1e-2;
  double clip_norm = 1.0;
  double lambda_cls = 0.5;
  bool freeze_encoder = false;
  std::optional<std::filesystem::path> pretrained_encoder_path;
  int val_every = 0;   // steps between validation passes; 0 = once per epoch
  int val_scenes = 16; // subset of the validation split used during training
  std::optional<std::filesystem::path> abort_checkpoint_path;
};

struct MetricsRow {
  long step = 0;
  double loss_line = 0.0;
  double loss_cls = 0.0;
  double lr = 0.0;
  std::optional<double> val_map;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<MetricsRow> log;
};

class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);

  // Applies one decoupled-weight-decay update; frozen tensors are skipped
  // entirely so their bytes never change.
  void step(DenoiserParams& params, double lr_now,
            const std::vector<bool>& trainable);
  void zero_grad(DenoiserParams& params);

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

double clip_gradients(DenoiserParams& params, const std::vector<bool>& trainable,
                      double max_norm);

// mAP of single-sample predictions over a validation subset.
double validation_map(const DenoiserParams& params, std::span<const SceneSample> val,
                      const SamplerConfig& sampler, const NoiseSchedule& schedule,
                      std::uint64_t seed, int max_scenes);

TrainResult train(std::span<const SceneSample> train_set, std::span<const SceneSample> val_set,
                  DenoiserParams init, const TrainConfig& cfg, const NoiseSchedule& schedule,
                  const SamplerConfig& sampler, std::uint64_t rng_seed);

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params,
                     std::uint64_t schedule_fingerprint);
struct Checkpoint {
  DenoiserParams params;
  std::uint64_t schedule_fingerprint = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

}  // namespace vecmap
