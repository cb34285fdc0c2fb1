#include "vecmap/denoiser.hpp"

#include <cmath>

#include "vecmap/rng.hpp"

namespace vecmap {

ad::Var DenoiserParams::find(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return v;
  throw Error("unknown parameter tensor: " + name);
}

long DenoiserParams::parameter_count() const {
  long n = 0;
  for (const auto& [name, v] : tensors) n += static_cast<long>(v->value.size());
  return n;
}

std::uint64_t DenoiserParams::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, v] : tensors) {
    mix(reinterpret_cast<const unsigned char*>(name.data()), name.size());
    mix(reinterpret_cast<const unsigned char*>(v->value.data()),
        sizeof(double) * static_cast<std::size_t>(v->value.size()));
  }
  return h;
}

bool DenoiserParams::all_finite() const {
  for (const auto& [name, v] : tensors)
    if (!v->value.allFinite()) return false;
  return true;
}

DenoiserParams DenoiserParams::clone() const {
  DenoiserParams out;
  out.cfg = cfg;
  out.tensors.reserve(tensors.size());
  for (const auto& [name, v] : tensors)
    out.tensors.emplace_back(name, ad::make_leaf(v->value, true));
  return out;
}

void DenoiserParams::load_encoder_from(const DenoiserParams& src) {
  for (auto& [name, v] : tensors) {
    if (name.rfind("enc.", 0) != 0) continue;
    const ad::Var s = src.find(name);
    if (s->value.rows() != v->value.rows() || s->value.cols() != v->value.cols())
      throw Error("encoder shape mismatch: " + name);
    v->value = s->value;
  }
}

namespace {

Eigen::MatrixXd glorot(Rng& rng, int rows, int cols) {
  const double a = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-a, a);
  return m;
}

// Sinusoidal embedding of the diffusion timestep, dim = d_model.
Eigen::RowVectorXd timestep_embedding(int t, int dim) {
  Eigen::RowVectorXd e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e(i) = std::sin(t * freq);
    e(half + i) = std::cos(t * freq);
  }
  if (dim % 2 == 1) e(dim - 1) = 0.0;
  return e;
}

}  // namespace

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x9a7a));
  DenoiserParams p;
  p.cfg = cfg;
  auto add = [&](const std::string& name, Eigen::MatrixXd v) {
    p.tensors.emplace_back(name, ad::make_leaf(std::move(v), true));
  };
  const int d = cfg.d_model;
  add("enc.conv1.w", glorot(rng, cfg.enc_hidden, kObsChannels * 9));
  add("enc.conv1.b", Eigen::MatrixXd::Zero(cfg.enc_hidden, 1));
  add("enc.conv2.w", glorot(rng, cfg.latent_channels, cfg.enc_hidden * 9));
  add("enc.conv2.b", Eigen::MatrixXd::Zero(cfg.latent_channels, 1));
  add("in_proj.w", glorot(rng, cfg.n_p * 2, d));
  add("in_proj.b", Eigen::MatrixXd::Zero(1, d));
  add("temb.w1", glorot(rng, d, d));
  add("temb.b1", Eigen::MatrixXd::Zero(1, d));
  add("temb.w2", glorot(rng, d, d));
  add("temb.b2", Eigen::MatrixXd::Zero(1, d));
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string base = "layer" + std::to_string(layer) + ".";
    add(base + "attn.ln_g", Eigen::MatrixXd::Ones(1, d));
    add(base + "attn.ln_b", Eigen::MatrixXd::Zero(1, d));
    for (const char* nm : {"wq", "wk", "wv", "wo"}) add(base + "attn." + nm, glorot(rng, d, d));
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      add(base + "attn." + nm, Eigen::MatrixXd::Zero(1, d));
    add(base + "cross.w1", glorot(rng, cfg.n_p * cfg.latent_channels, d));
    add(base + "cross.b1", Eigen::MatrixXd::Zero(1, d));
    add(base + "cross.w2", glorot(rng, d, d));
    add(base + "cross.b2", Eigen::MatrixXd::Zero(1, d));
    add(base + "ffn.ln_g", Eigen::MatrixXd::Ones(1, d));
    add(base + "ffn.ln_b", Eigen::MatrixXd::Zero(1, d));
    add(base + "ffn.w1", glorot(rng, d, cfg.ffn_dim));
    add(base + "ffn.b1", Eigen::MatrixXd::Zero(1, cfg.ffn_dim));
    add(base + "ffn.w2", glorot(rng, cfg.ffn_dim, d));
    add(base + "ffn.b2", Eigen::MatrixXd::Zero(1, d));
  }
  add("final_ln.g", Eigen::MatrixXd::Ones(1, d));
  add("final_ln.b", Eigen::MatrixXd::Zero(1, d));
  add("coord_head.w", glorot(rng, d, cfg.n_p * 2));
  add("coord_head.b", Eigen::MatrixXd::Zero(1, cfg.n_p * 2));
  add("cls_head.w", glorot(rng, d, kNumClasses + 1));
  add("cls_head.b", Eigen::MatrixXd::Zero(1, kNumClasses + 1));
  return p;
}

ad::Var encode_tape(ad::Tape& tape, const DenoiserParams& params, const ObservationGrid& obs) {
  ad::Var in = tape.constant(obs.channels);
  ad::Var h1 = tape.relu(tape.conv3x3(in, params.find("enc.conv1.w"),
                                      params.find("enc.conv1.b"), obs.grid_h, obs.grid_w));
  return tape.conv3x3(h1, params.find("enc.conv2.w"), params.find("enc.conv2.b"), obs.grid_h,
                      obs.grid_w);
}

DecodeVars decode_tape(ad::Tape& tape, const DenoiserParams& params,
                       const PointMatrix& coords, int t, const ad::Var& latent, int grid_h,
                       int grid_w) {
  const DenoiserConfig& cfg = params.cfg;
  const int l = cfg.l;
  const int n_p = cfg.n_p;
  if (coords.rows() != static_cast<Eigen::Index>(l) * n_p)
    throw Error("decode expects l * n_p coordinate rows");

  // Query embedding from the flattened signal-space points.
  ad::Var pts = tape.constant(coords);
  ad::Var h = ad::linear(tape, tape.regroup_rows(pts, n_p), params.find("in_proj.w"),
                         params.find("in_proj.b"));

  ad::Var temb = tape.constant(timestep_embedding(t, cfg.d_model));
  temb = ad::linear(tape, temb, params.find("temb.w1"), params.find("temb.b1"));
  temb = ad::linear(tape, tape.relu(temb), params.find("temb.w2"), params.find("temb.b2"));
  h = tape.add_rowvec(h, temb);

  // The latent grid is read once at the current (noisy) point locations;
  // both layers mix the same sampled features.
  Eigen::MatrixX2d grid_pos(coords.rows(), 2);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    grid_pos(i, 0) = from_signal(coords(i, 0)) * grid_h - 0.5;
    grid_pos(i, 1) = from_signal(coords(i, 1)) * grid_w - 0.5;
  }
  ad::Var sampled = tape.bilinear_gather(latent, grid_pos, grid_h, grid_w);
  ad::Var sampled_per_query = tape.regroup_rows(sampled, n_p);  // l x (n_p * D)

  const int head_dim = cfg.d_model / cfg.heads;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string base = "layer" + std::to_string(layer) + ".";
    // Self-attention across the l queries (pre-norm, residual).
    ad::Var hn = tape.layernorm_rows(h, params.find(base + "attn.ln_g"),
                                     params.find(base + "attn.ln_b"));
    ad::Var q = ad::linear(tape, hn, params.find(base + "attn.wq"), params.find(base + "attn.bq"));
    ad::Var k = ad::linear(tape, hn, params.find(base + "attn.wk"), params.find(base + "attn.bk"));
    ad::Var v = ad::linear(tape, hn, params.find(base + "attn.wv"), params.find(base + "attn.bv"));
    std::vector<ad::Var> heads;
    for (int hd = 0; hd < cfg.heads; ++hd) {
      ad::Var qh = tape.cols(q, hd * head_dim, head_dim);
      ad::Var kh = tape.cols(k, hd * head_dim, head_dim);
      ad::Var vh = tape.cols(v, hd * head_dim, head_dim);
      ad::Var att = tape.softmax_rows(
          tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(head_dim))));
      heads.push_back(tape.matmul(att, vh));
    }
    ad::Var attn_out = ad::linear(tape, tape.concat_cols(heads), params.find(base + "attn.wo"),
                                  params.find(base + "attn.bo"));
    h = tape.add(h, attn_out);

    // Cross read of the conditioning features, mixed by an MLP.
    ad::Var cross = ad::linear(tape, sampled_per_query, params.find(base + "cross.w1"),
                               params.find(base + "cross.b1"));
    cross = ad::linear(tape, tape.relu(cross), params.find(base + "cross.w2"),
                       params.find(base + "cross.b2"));
    h = tape.add(h, cross);

    ad::Var fn = tape.layernorm_rows(h, params.find(base + "ffn.ln_g"),
                                     params.find(base + "ffn.ln_b"));
    ad::Var ff = ad::linear(tape, fn, params.find(base + "ffn.w1"), params.find(base + "ffn.b1"));
    ff = ad::linear(tape, tape.relu(ff), params.find(base + "ffn.w2"),
                    params.find(base + "ffn.b2"));
    h = tape.add(h, ff);
  }

  ad::Var hf = tape.layernorm_rows(h, params.find("final_ln.g"), params.find("final_ln.b"));
  DecodeVars out;
  out.x0_hat = tape.split_rows(
      ad::linear(tape, hf, params.find("coord_head.w"), params.find("coord_head.b")), n_p);
  out.logits = ad::linear(tape, hf, params.find("cls_head.w"), params.find("cls_head.b"));
  return out;
}

LossVars loss_tape(ad::Tape& tape, const DecodeVars& out, const QuerySet& targets,
                   double lambda_cls) {
  int n_gt = 0;
  for (auto o : targets.origin)
    if (o == QueryOrigin::from_gt) ++n_gt;

  Eigen::VectorXd row_weights = Eigen::VectorXd::Zero(targets.coords.rows());
  if (n_gt > 0) {
    const double w = 1.0 / (static_cast<double>(n_gt) * targets.n_p * 2.0);
    for (int qi = 0; qi < targets.l; ++qi)
      if (targets.origin[static_cast<std::size_t>(qi)] == QueryOrigin::from_gt)
        row_weights.segment(qi * targets.n_p, targets.n_p).setConstant(w);
  }
  LossVars lv;
  lv.line = tape.weighted_l1(out.x0_hat, targets.coords, row_weights);
  lv.cls = tape.cross_entropy_rows(out.logits, targets.class_targets);
  lv.total = tape.add_scaled(lv.line, lv.cls, lambda_cls);
  return lv;
}

LatentGrid encode_observation(const ObservationGrid& obs, const DenoiserParams& params) {
  ad::Tape tape(false);
  ad::Var latent = encode_tape(tape, params, obs);
  if (!latent->value.allFinite()) throw Error("numeric overflow");
  LatentGrid out;
  out.features = std::move(latent->value);
  out.grid_h = obs.grid_h;
  out.grid_w = obs.grid_w;
  return out;
}

DenoiseResult denoise(const PointMatrix& coords, int t, const LatentGrid& cond,
                      const DenoiserParams& params) {
  ad::Tape tape(false);
  ad::Var latent = tape.constant(cond.features);
  DecodeVars dv = decode_tape(tape, params, coords, t, latent, cond.grid_h, cond.grid_w);
  if (!dv.x0_hat->value.allFinite() || !dv.logits->value.allFinite())
    throw Error("numeric overflow");
  DenoiseResult res;
  res.x0_hat = std::move(dv.x0_hat->value);
  res.class_logits = std::move(dv.logits->value);
  return res;
}

}  // namespace vecmap
