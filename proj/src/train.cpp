#include "vecmap/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "vecmap/rng.hpp"

namespace vecmap {

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(DenoiserParams& params, double lr_now, const std::vector<bool>& trainable) {
  if (m_.empty()) {
    m_.resize(params.tensors.size());
    v_.resize(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      const auto& val = params.tensors[i].second->value;
      m_[i] = Eigen::MatrixXd::Zero(val.rows(), val.cols());
      v_[i] = Eigen::MatrixXd::Zero(val.rows(), val.cols());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (!trainable[i]) continue;
    auto& var = params.tensors[i].second;
    var->ensure_grad();
    const Eigen::MatrixXd& g = var->grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Eigen::MatrixXd mhat = m_[i] / bc1;
    const Eigen::MatrixXd vhat = v_[i] / bc2;
    var->value -= lr_now * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
    var->value -= lr_now * wd_ * var->value;
  }
}

void AdamW::zero_grad(DenoiserParams& params) {
  for (auto& [name, var] : params.tensors) {
    var->ensure_grad();
    var->grad.setZero();
  }
}

double clip_gradients(DenoiserParams& params, const std::vector<bool>& trainable,
                      double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (!trainable[i]) continue;
    params.tensors[i].second->ensure_grad();
    sq += params.tensors[i].second->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
      if (trainable[i]) params.tensors[i].second->grad *= s;
  }
  return norm;
}

double validation_map(const DenoiserParams& params, std::span<const SceneSample> val,
                      const SamplerConfig& sampler, const NoiseSchedule& schedule,
                      std::uint64_t seed, int max_scenes) {
  const int n = std::min<int>(max_scenes, static_cast<int>(val.size()));
  if (n == 0) return 0.0;
  DenoiserNet net(params.clone());
  std::vector<VectorMap> preds, gts;
  preds.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& entry = val[static_cast<std::size_t>(i)];
    const LatentGrid cond = net.encode(entry.obs);
    preds.push_back(sample_map(net, cond, sampler, schedule,
                               derive_seed(seed, entry.scene.seed, 0)));
    gts.push_back(entry.scene.gt);
  }
  return evaluate_ap(preds, gts, val[0].scene.frame).mAP;
}

TrainResult train(std::span<const SceneSample> train_set, std::span<const SceneSample> val_set,
                  DenoiserParams init, const TrainConfig& cfg, const NoiseSchedule& schedule,
                  const SamplerConfig& sampler, std::uint64_t rng_seed) {
  if (train_set.empty()) throw Error("training set is empty");
  TrainResult result;
  result.params = std::move(init);
  DenoiserParams& params = result.params;

  if (cfg.pretrained_encoder_path) {
    const Checkpoint ck = load_checkpoint(*cfg.pretrained_encoder_path);
    params.load_encoder_from(ck.params);
  }

  std::vector<bool> trainable(params.tensors.size(), true);
  if (cfg.freeze_encoder) {
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
      if (params.tensors[i].first.rfind("enc.", 0) == 0) {
        trainable[i] = false;
        params.tensors[i].second->requires_grad = false;  // skip encoder backprop
      }
  }

  AdamW opt(cfg.lr, cfg.weight_decay);
  opt.zero_grad(params);

  const long steps_per_epoch = static_cast<long>(train_set.size());
  const long total_steps = cfg.epochs * steps_per_epoch;
  const long val_interval = cfg.val_every > 0 ? cfg.val_every : steps_per_epoch;

  const MapFrame& frame = train_set[0].scene.frame;
  (void)frame;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(rng_seed, 0x0e90c, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    for (std::size_t oi = 0; oi < order.size(); ++oi, ++step) {
      const SceneSample& entry = train_set[order[oi]];
      const std::uint64_t step_seed = derive_seed(rng_seed, 0x57e9, static_cast<std::uint64_t>(step));
      Rng rng(step_seed);
      const int t = static_cast<int>(rng.uniform_int(1, schedule.T));

      QuerySet targets = pad_queries(entry.scene.gt, params.cfg.l, sampler.padding,
                                     derive_seed(step_seed, 1), params.cfg.n_p);
      const PointMatrix x_t =
          forward_q(targets.coords, t, schedule, derive_seed(step_seed, 2));

      ad::Tape tape;
      ad::Var latent = encode_tape(tape, params, entry.obs);
      DecodeVars dv = decode_tape(tape, params, x_t, t, latent, entry.obs.grid_h,
                                  entry.obs.grid_w);
      LossVars lv = loss_tape(tape, dv, targets, cfg.lambda_cls);

      const double loss_val = lv.total->value(0, 0);
      if (!std::isfinite(loss_val)) {
        if (cfg.abort_checkpoint_path)
          save_checkpoint(*cfg.abort_checkpoint_path, params, schedule.fingerprint());
        throw NumericAbort("NaN loss at step " + std::to_string(step));
      }

      tape.backward(lv.total);
      clip_gradients(params, trainable, cfg.clip_norm);
      const double lr_now =
          0.5 * cfg.lr * (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                         static_cast<double>(std::max<long>(total_steps, 1))));
      opt.step(params, lr_now, trainable);
      opt.zero_grad(params);
      if (!params.all_finite()) {
        if (cfg.abort_checkpoint_path)
          save_checkpoint(*cfg.abort_checkpoint_path, params, schedule.fingerprint());
        throw NumericAbort("non-finite parameters at step " + std::to_string(step));
      }

      MetricsRow row;
      row.step = step;
      row.loss_line = lv.line->value(0, 0);
      row.loss_cls = lv.cls->value(0, 0);
      row.lr = lr_now;
      if ((step + 1) % val_interval == 0 && !val_set.empty())
        row.val_map = validation_map(params, val_set, sampler, schedule,
                                     derive_seed(rng_seed, 0xa1, static_cast<std::uint64_t>(step)),
                                     cfg.val_scenes);
      result.log.push_back(row);
    }
  }
  return result;
}

namespace {
constexpr char kMagic[4] = {'V', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params,
                     std::uint64_t schedule_fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for write: " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, schedule_fingerprint);
  const DenoiserConfig& c = params.cfg;
  for (int v : {c.n_p, c.l, c.d_model, c.heads, c.ffn_dim, c.enc_hidden, c.latent_channels,
                c.layers})
    put(out, v);
  put(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, var] : params.tensors) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::int32_t>(var->value.rows()));
    put(out, static_cast<std::int32_t>(var->value.cols()));
    out.write(reinterpret_cast<const char*>(var->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(var->value.size())));
  }
  if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error("bad checkpoint magic");
  std::uint32_t version = 0;
  get(in, version);
  if (version != kVersion) throw Error("unsupported checkpoint version");
  Checkpoint ck;
  get(in, ck.schedule_fingerprint);
  DenoiserConfig c;
  for (int* v : {&c.n_p, &c.l, &c.d_model, &c.heads, &c.ffn_dim, &c.enc_hidden,
                 &c.latent_channels, &c.layers})
    get(in, *v);
  // Validate the shape table against a fresh parameter set for this config.
  DenoiserParams expect = init_params(c, 0);
  std::uint32_t count = 0;
  get(in, count);
  if (count != expect.tensors.size()) throw Error("checkpoint tensor count mismatch");
  DenoiserParams loaded;
  loaded.cfg = c;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    get(in, name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::int32_t rows = 0, cols = 0;
    get(in, rows);
    get(in, cols);
    const auto& [ename, evar] = expect.tensors[i];
    if (name != ename || rows != evar->value.rows() || cols != evar->value.cols())
      throw Error("checkpoint shape table mismatch at " + name);
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    loaded.tensors.emplace_back(name, ad::make_leaf(std::move(m), true));
  }
  if (!in) throw Error("truncated checkpoint: " + path.string());
  ck.params = std::move(loaded);
  return ck;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path.string());
  out << "step,loss_line,loss_cls,lr,val_mAP\n";
  char buf[160];
  for (const auto& r : rows) {
    if (r.val_map)
      std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g\n", r.step, r.loss_line,
                    r.loss_cls, r.lr, *r.val_map);
    else
      std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,\n", r.step, r.loss_line, r.loss_cls,
                    r.lr);
    out << buf;
  }
}

}  // namespace vecmap
