#include "vecmap/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "vecmap/rng.hpp"

namespace vecmap {

namespace {
constexpr std::uint64_t kTagInit = 0x1417;
constexpr std::uint64_t kTagStepNoise = 0xdd13;
constexpr std::uint64_t kTagRedraw = 0xfe02;
constexpr std::uint64_t kTagRenoise = 0xf007;
}  // namespace

const char* padding_name(PaddingKind k) {
  switch (k) {
    case PaddingKind::repeat: return "repeat";
    case PaddingKind::zero: return "zero";
    case PaddingKind::smooth: return "smooth";
    case PaddingKind::gaussian: return "gaussian";
    case PaddingKind::uniform: return "uniform";
  }
  return "unknown";
}

std::optional<PaddingKind> padding_from_name(const std::string& name) {
  if (name == "repeat") return PaddingKind::repeat;
  if (name == "zero") return PaddingKind::zero;
  if (name == "smooth") return PaddingKind::smooth;
  if (name == "gaussian") return PaddingKind::gaussian;
  if (name == "uniform") return PaddingKind::uniform;
  return std::nullopt;
}

void SamplerConfig::validate(int T) const {
  if (k < 1 || k > T) throw Error("sampler k outside [1, T]");
  if (eta < 0.0 || eta > 1.0) throw Error("sampler eta outside [0, 1]");
  if (!(tau > 0.0 && tau < 1.0)) throw Error("sampler tau outside (0, 1)");
  if (n < 1) throw Error("sampler n must be >= 1");
  if (score_filter < 0.0 || score_filter > 1.0) throw Error("score filter outside [0, 1]");
}

PointMatrix forward_q(const PointMatrix& x0, int t, const NoiseSchedule& schedule,
                      std::uint64_t rng_seed) {
  const double ab = schedule.at(t);
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  Rng rng(rng_seed);
  PointMatrix out(x0.rows(), 2);
  for (Eigen::Index i = 0; i < x0.rows(); ++i)
    for (int d = 0; d < 2; ++d) out(i, d) = sa * x0(i, d) + sb * rng.normal();
  return out;
}

PointMatrix draw_padding(const PaddingStrategy& strategy, const VectorMap& gt, int slot,
                         int n_p, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  PointMatrix pts(n_p, 2);
  PaddingKind kind = strategy.kind;
  if (kind == PaddingKind::repeat && gt.elements.empty()) kind = PaddingKind::gaussian;
  switch (kind) {
    case PaddingKind::repeat: {
      const auto& src = gt.elements[static_cast<std::size_t>(slot) % gt.elements.size()];
      if (src.size() != n_p) throw Error("repeat padding expects resampled polylines");
      pts = src.points;
      break;
    }
    case PaddingKind::zero:
      pts.setConstant(0.5);
      break;
    case PaddingKind::smooth: {
      double x = rng.uniform(0.1, 0.9);
      double y = rng.uniform(0.1, 0.9);
      double heading = rng.uniform(0.0, 2.0 * M_PI);
      const double length = rng.uniform(0.3, 0.9);
      const double curvature = rng.uniform(-3.0, 3.0);
      const double step = length / (n_p - 1);
      for (int i = 0; i < n_p; ++i) {
        pts(i, 0) = std::clamp(x, 0.0, 1.0);
        pts(i, 1) = std::clamp(y, 0.0, 1.0);
        x += step * std::cos(heading);
        y += step * std::sin(heading);
        heading += curvature * step;
      }
      break;
    }
    case PaddingKind::gaussian:
      for (int i = 0; i < n_p; ++i)
        for (int d = 0; d < 2; ++d)
          pts(i, d) = std::clamp(rng.normal(strategy.mu, strategy.sigma), 0.0, 1.0);
      break;
    case PaddingKind::uniform:
      for (int i = 0; i < n_p; ++i)
        for (int d = 0; d < 2; ++d) pts(i, d) = rng.uniform();
      break;
  }
  return pts;
}

QuerySet pad_queries(const VectorMap& gt, int l, const PaddingStrategy& strategy,
                     std::uint64_t rng_seed, int n_p) {
  const int n_gt = gt.size();
  if (n_gt > l) throw Error("query overflow");
  QuerySet qs;
  qs.l = l;
  qs.n_p = n_p;
  qs.coords.resize(l * n_p, 2);
  qs.origin.resize(l);
  qs.class_targets.resize(l);
  for (int q = 0; q < n_gt; ++q) {
    const auto& el = gt.elements[q];
    if (el.size() != n_p) throw Error("query set expects resampled polylines");
    qs.coords.block(q * n_p, 0, n_p, 2) = to_signal(el.points);
    qs.origin[q] = QueryOrigin::from_gt;
    qs.class_targets[q] = static_cast<int>(el.cls);
  }
  for (int q = n_gt; q < l; ++q) {
    const PointMatrix pad =
        draw_padding(strategy, gt, q, n_p, derive_seed(rng_seed, static_cast<std::uint64_t>(q)));
    qs.coords.block(q * n_p, 0, n_p, 2) = to_signal(pad);
    qs.origin[q] = QueryOrigin::padded;
    qs.class_targets[q] = kNoObjectClass;
  }
  return qs;
}

PointMatrix ddim_step(const PointMatrix& x_t, const PointMatrix& x0_hat, int t, int t_prev,
                      double eta, const NoiseSchedule& schedule, std::uint64_t rng_seed) {
  if (t <= 0 || t_prev >= t || t_prev < 0) throw Error("invalid step pair");
  if (!x0_hat.allFinite()) throw Error("non-finite x0 prediction");
  const double ab_t = schedule.at(t);
  const double ab_p = schedule.at(t_prev);
  const double one_m_t = 1.0 - ab_t;
  const PointMatrix eps_hat = (x_t - std::sqrt(ab_t) * x0_hat) / std::sqrt(one_m_t);
  const double sigma =
      eta * std::sqrt((1.0 - ab_p) / one_m_t) * std::sqrt(1.0 - ab_t / ab_p);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
  PointMatrix out = std::sqrt(ab_p) * x0_hat + dir * eps_hat;
  if (sigma > 0.0) {
    Rng rng(rng_seed);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (int d = 0; d < 2; ++d) out(i, d) += sigma * rng.normal();
  }
  return out;
}

Eigen::VectorXd query_scores(const Eigen::MatrixXd& class_logits) {
  const Eigen::Index l = class_logits.rows();
  Eigen::VectorXd scores(l);
  for (Eigen::Index q = 0; q < l; ++q) {
    const Eigen::VectorXd row = class_logits.row(q);
    const double m = row.maxCoeff();
    const Eigen::VectorXd e = (row.array() - m).exp();
    const double z = e.sum();
    scores(q) = e.head(kNumClasses).maxCoeff() / z;
  }
  return scores;
}

VectorMap sample_map(const ConditionedDenoiser& denoiser, const LatentGrid& condition,
                     const SamplerConfig& cfg, const NoiseSchedule& schedule,
                     std::uint64_t rng_seed, SampleStats* stats) {
  const int l = denoiser.query_count();
  const int n_p = denoiser.points_per_query();
  // t = T marginal around the padding-distribution mean.
  const double mean_u = cfg.padding.kind == PaddingKind::gaussian ? cfg.padding.mu : 0.5;
  PointMatrix x0_mean(l * n_p, 2);
  x0_mean.setConstant(to_signal(mean_u));
  PointMatrix x_T = forward_q(x0_mean, schedule.T, schedule, derive_seed(rng_seed, kTagInit));
  return sample_map_from(std::move(x_T), denoiser, condition, cfg, schedule, rng_seed, stats);
}

VectorMap sample_map_from(PointMatrix x, const ConditionedDenoiser& denoiser,
                          const LatentGrid& condition, const SamplerConfig& cfg,
                          const NoiseSchedule& schedule, std::uint64_t rng_seed,
                          SampleStats* stats) {
  cfg.validate(schedule.T);
  const int l = denoiser.query_count();
  const int n_p = denoiser.points_per_query();
  if (x.rows() != static_cast<Eigen::Index>(l) * n_p) throw Error("state shape mismatch");

  const VectorMap no_gt;  // redraws at inference have no GT to repeat
  DenoiseResult res;
  for (int j = 0; j < cfg.k; ++j) {
    const int t = static_cast<int>(
        std::llround(static_cast<double>(schedule.T) * (cfg.k - j) / cfg.k));
    const int t_prev = static_cast<int>(
        std::llround(static_cast<double>(schedule.T) * (cfg.k - j - 1) / cfg.k));
    res = denoiser.denoise(x, t, condition);
    if (stats) {
      ++stats->denoiser_calls;
      stats->timesteps.push_back(t);
    }
    x = ddim_step(x, res.x0_hat, t, t_prev, cfg.eta, schedule,
                  derive_seed(rng_seed, kTagStepNoise, static_cast<std::uint64_t>(j)));
    if (j + 1 < cfg.k) {
      // Queries scoring below tau restart from the forward marginal at t_prev.
      const Eigen::VectorXd scores = query_scores(res.class_logits);
      for (int q = 0; q < l; ++q) {
        if (scores(q) >= cfg.tau) continue;
        const PointMatrix fresh = draw_padding(
            cfg.padding, no_gt, q, n_p,
            derive_seed(rng_seed, kTagRedraw, static_cast<std::uint64_t>(j),
                        static_cast<std::uint64_t>(q)));
        x.block(q * n_p, 0, n_p, 2) =
            forward_q(to_signal(fresh), t_prev, schedule,
                      derive_seed(rng_seed, kTagRenoise, static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(q)));
        if (stats) ++stats->redraws;
      }
    }
  }

  const Eigen::VectorXd scores = query_scores(res.class_logits);
  VectorMap out;
  out.scores.emplace();
  for (int q = 0; q < l; ++q) {
    Eigen::Index label;
    res.class_logits.row(q).maxCoeff(&label);
    if (label == kNoObjectClass) continue;
    Polyline p;
    p.cls = static_cast<MapClass>(label);
    p.points = from_signal(x.block(q * n_p, 0, n_p, 2));
    out.elements.push_back(std::move(p));
    out.scores->push_back(scores(q));
  }
  return out;
}

}  // namespace vecmap
