#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vecmap/autodiff.hpp"
#include "vecmap/diffusion.hpp"
#include "vecmap/latent.hpp"
#include "vecmap/scene.hpp"

namespace vecmap {

struct DenoiserConfig {
  int n_p = 10;
  int l = 20;
  int d_model = 64;
  int heads = 4;
  int ffn_dim = 128;
  int enc_hidden = 16;
  int latent_channels = 32;
  int layers = 2;

  bool operator==(const DenoiserConfig&) const = default;
};

// Named parameter tensors; order is fixed by construction and defines the
// checkpoint layout.
struct DenoiserParams {
  DenoiserConfig cfg;
  std::vector<std::pair<std::string, ad::Var>> tensors;

  ad::Var find(const std::string& name) const;
  long parameter_count() const;
  std::uint64_t checksum() const;
  bool all_finite() const;
  DenoiserParams clone() const;
  // Copies every "enc." tensor from src (shapes must match).
  void load_encoder_from(const DenoiserParams& src);
};

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed);

struct DecodeVars {
  ad::Var x0_hat;  // (l * n_p) x 2
  ad::Var logits;  // l x (kNumClasses + 1)
};

// Conv encoder over the observation channels; latent kept on the tape so
// training reaches the encoder weights.
ad::Var encode_tape(ad::Tape& tape, const DenoiserParams& params, const ObservationGrid& obs);

// Denoising decoder: per-point input projection + sinusoidal timestep
// embedding, then per layer self-attention across queries, a bilinear read of
// the latent grid at the current point locations mixed by an MLP, and a
// feed-forward block; coordinate and class heads at the end.
DecodeVars decode_tape(ad::Tape& tape, const DenoiserParams& params,
                       const PointMatrix& coords, int t, const ad::Var& latent, int grid_h,
                       int grid_w);

struct LossVars {
  ad::Var total;
  ad::Var line;
  ad::Var cls;
};

// Mean L1 over the GT-origin queries plus weighted cross entropy over all
// queries (padding supervises the no-object class).
LossVars loss_tape(ad::Tape& tape, const DecodeVars& out, const QuerySet& targets,
                   double lambda_cls);

// Inference wrappers (no gradient bookkeeping kept).
LatentGrid encode_observation(const ObservationGrid& obs, const DenoiserParams& params);
DenoiseResult denoise(const PointMatrix& coords, int t, const LatentGrid& cond,
                      const DenoiserParams& params);

// ConditionedDenoiser adapter around trained parameters. Counts encoder
// invocations so the one-encode-per-scene contract is testable.
class DenoiserNet : public ConditionedDenoiser {
 public:
  explicit DenoiserNet(DenoiserParams params) : params_(std::move(params)) {}

  LatentGrid encode(const ObservationGrid& obs) const {
    ++encode_calls_;
    return encode_observation(obs, params_);
  }
  DenoiseResult denoise(const PointMatrix& coords, int t,
                        const LatentGrid& cond) const override {
    return vecmap::denoise(coords, t, cond, params_);
  }
  int query_count() const override { return params_.cfg.l; }
  int points_per_query() const override { return params_.cfg.n_p; }

  const DenoiserParams& params() const { return params_; }
  long encode_calls() const { return encode_calls_.load(); }

 private:
  DenoiserParams params_;
  mutable std::atomic<long> encode_calls_{0};
};

}  // namespace vecmap
