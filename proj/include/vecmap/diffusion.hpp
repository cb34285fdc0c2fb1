#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vecmap/geometry.hpp"
#include "vecmap/latent.hpp"
#include "vecmap/schedule.hpp"

namespace vecmap {

enum class QueryOrigin : int { from_gt = 0, padded = 1 };

inline constexpr int kNoObjectClass = kNumClasses;  // index 3 of the class head

// Fixed-size set of l polyline queries in signal space (z = 2u - 1).
// Coordinates are stored as an (l * n_p) x 2 matrix, query-major.
struct QuerySet {
  PointMatrix coords;
  int l = 0;
  int n_p = 0;
  std::vector<QueryOrigin> origin;     // size l
  std::vector<int> class_targets;     // size l; kNoObjectClass for padding

  Eigen::Block<PointMatrix, Eigen::Dynamic, 2> query(int q) {
    return coords.block<Eigen::Dynamic, 2>(q * n_p, 0, n_p, 2);
  }
};

enum class PaddingKind : int { repeat = 0, zero = 1, smooth = 2, gaussian = 3, uniform = 4 };

const char* padding_name(PaddingKind k);
std::optional<PaddingKind> padding_from_name(const std::string& name);

struct PaddingStrategy {
  PaddingKind kind = PaddingKind::gaussian;
  double mu = 0.5;     // gaussian, normalized space
  double sigma = 0.25; // gaussian, clipped to [0,1]
};

struct SamplerConfig {
  int k = 5;
  double eta = 0.5;
  double tau = 0.5;
  int n = 10;
  double score_filter = 0.4;
  PaddingStrategy padding;

  void validate(int T) const;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
PointMatrix forward_q(const PointMatrix& x0, int t, const NoiseSchedule& schedule,
                      std::uint64_t rng_seed);

// Draw one padded query (n_p points, normalized space) per the strategy.
PointMatrix draw_padding(const PaddingStrategy& strategy, const VectorMap& gt, int slot,
                         int n_p, std::uint64_t rng_seed);

// First |gt| queries carry the GT polylines, the rest are padding.
QuerySet pad_queries(const VectorMap& gt, int l, const PaddingStrategy& strategy,
                     std::uint64_t rng_seed, int n_p);

// One DDIM update from t to t_prev given the x0 prediction.
PointMatrix ddim_step(const PointMatrix& x_t, const PointMatrix& x0_hat, int t, int t_prev,
                      double eta, const NoiseSchedule& schedule, std::uint64_t rng_seed);

struct DenoiseResult {
  PointMatrix x0_hat;          // (l * n_p) x 2, signal space
  Eigen::MatrixXd class_logits;  // l x (kNumClasses + 1)
};

// Scores are softmax probabilities; the query score is the maximum over the
// real classes.
Eigen::VectorXd query_scores(const Eigen::MatrixXd& class_logits);

class ConditionedDenoiser {
 public:
  virtual ~ConditionedDenoiser() = default;
  virtual DenoiseResult denoise(const PointMatrix& coords, int t,
                                const LatentGrid& cond) const = 0;
  virtual int query_count() const = 0;
  virtual int points_per_query() const = 0;
};

struct SampleStats {
  int denoiser_calls = 0;
  int redraws = 0;
  std::vector<int> timesteps;
};

// DDIM inference loop with per-step low-score query re-initialization.
VectorMap sample_map(const ConditionedDenoiser& denoiser, const LatentGrid& condition,
                     const SamplerConfig& cfg, const NoiseSchedule& schedule,
                     std::uint64_t rng_seed, SampleStats* stats = nullptr);

// Same loop from an explicit initial state x_T.
VectorMap sample_map_from(PointMatrix x_T, const ConditionedDenoiser& denoiser,
                          const LatentGrid& condition, const SamplerConfig& cfg,
                          const NoiseSchedule& schedule, std::uint64_t rng_seed,
                          SampleStats* stats = nullptr);

}  // namespace vecmap
