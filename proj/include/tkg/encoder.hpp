#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tkg/core.hpp"
#include "tkg/tensor.hpp"

namespace tkg {

// Sequential (attention) mode runs the full snapshot-sequence encoder.
// Flat mode collapses all snapshots into one timeless neighborhood and is
// the ablation baseline.
enum class EncoderMode { Attention, Flat };

struct EncoderConfig {
  std::uint32_t d = 50;        // entity/relation embedding dim
  std::uint32_t history_len = 20;
  std::uint32_t n_max = 50;    // per-snapshot neighbor cap
  std::uint32_t n_heads = 4;
  std::uint32_t n_layers = 1;
  std::uint32_t d_inner = 256; // position-wise FFN inner dim
  std::uint32_t d_out = 50;    // output dim of h_e (kept equal to d)
  EncoderMode mode = EncoderMode::Attention;

  std::uint32_t d_model() const { return 2 * d; }
  std::uint32_t d_head() const { return d_model() / n_heads; }

  void validate() const {
    if (d < 1 || history_len < 1 || n_max < 1 || d_inner < 1 || d_out < 1) {
      throw Error(ErrorKind::InvalidConfig, "encoder dims must be positive");
    }
    if (mode == EncoderMode::Attention) {
      if (n_layers < 1) {
        throw Error(ErrorKind::InvalidConfig,
                    "attention mode requires n_layers >= 1");
      }
      if (n_heads < 1 || d_model() % n_heads != 0) {
        throw Error(ErrorKind::InvalidConfig,
                    "d_model = 2d must be divisible by n_heads");
      }
    }
  }
};

// One encoder layer: per-head projections, output projection, FFN, and the
// two layer-norm parameter pairs.
template <typename S>
struct AttentionLayerT {
  std::vector<TensorT<S>> wq;  // n_heads x [2d x d_head]
  std::vector<TensorT<S>> wk;
  std::vector<TensorT<S>> wv;
  TensorT<S> wo;               // [n_heads*d_head x 2d]
  TensorT<S> ffn_w1;           // [2d x d_inner]
  TensorT<S> ffn_b1;           // [d_inner]
  TensorT<S> ffn_w2;           // [d_inner x 2d]
  TensorT<S> ffn_b2;           // [2d]
  TensorT<S> ln1_gain, ln1_bias;  // [2d]
  TensorT<S> ln2_gain, ln2_bias;  // [2d]
};

// Every learnable tensor of the model, including the similarity network.
template <typename S>
struct ModelParamsT {
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;  // internal count, inverses included

  TensorT<S> entity_emb;    // [|E| x d]
  TensorT<S> relation_emb;  // [2|R| x d]
  TensorT<S> snap_w;        // [2d x d]
  TensorT<S> snap_b;        // [d]
  std::vector<AttentionLayerT<S>> layers;
  TensorT<S> w_star;        // [2d*l x d_out]
  TensorT<S> flat_proj;     // [2d x d_out], flat-mode head
  TensorT<S> sim_w1;        // [4d x 4d]
  TensorT<S> sim_b1;        // [4d]
  TensorT<S> sim_w2;        // [4d x 4d]
  TensorT<S> sim_b2;        // [4d]

  // Stable traversal order; names double as checkpoint keys.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<ModelParamsT*>(this)->for_each_impl(
        [&](const std::string& name, TensorT<S>& t) {
          fn(name, static_cast<const TensorT<S>&>(t));
        });
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for_each_impl(std::forward<Fn>(fn));
  }

 private:
  template <typename Fn>
  void for_each_impl(Fn&& fn) {
    fn("entity_emb", entity_emb);
    fn("relation_emb", relation_emb);
    fn("snap_w", snap_w);
    fn("snap_b", snap_b);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "l" + std::to_string(l) + ".";
      AttentionLayerT<S>& layer = layers[l];
      for (std::size_t h = 0; h < layer.wq.size(); ++h) {
        const std::string hp = p + "h" + std::to_string(h) + ".";
        fn(hp + "wq", layer.wq[h]);
        fn(hp + "wk", layer.wk[h]);
        fn(hp + "wv", layer.wv[h]);
      }
      fn(p + "wo", layer.wo);
      fn(p + "ffn_w1", layer.ffn_w1);
      fn(p + "ffn_b1", layer.ffn_b1);
      fn(p + "ffn_w2", layer.ffn_w2);
      fn(p + "ffn_b2", layer.ffn_b2);
      fn(p + "ln1_gain", layer.ln1_gain);
      fn(p + "ln1_bias", layer.ln1_bias);
      fn(p + "ln2_gain", layer.ln2_gain);
      fn(p + "ln2_bias", layer.ln2_bias);
    }
    fn("w_star", w_star);
    fn("flat_proj", flat_proj);
    fn("sim_w1", sim_w1);
    fn("sim_b1", sim_b1);
    fn("sim_w2", sim_w2);
    fn("sim_b2", sim_b2);
  }
};

template <typename S>
std::vector<TensorT<S>*> param_pointers(ModelParamsT<S>& p) {
  std::vector<TensorT<S>*> out;
  p.for_each([&](const std::string&, TensorT<S>& t) { out.push_back(&t); });
  return out;
}

// Matrices: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero;
// layer-norm gains one.
template <typename S>
ModelParamsT<S> init_params(std::size_t n_entities, std::size_t n_relations_internal,
                            const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.d;
  const std::size_t dm = cfg.d_model();
  const std::size_t dh = cfg.mode == EncoderMode::Attention ? cfg.d_head() : dm;
  ModelParamsT<S> p;
  p.n_entities = n_entities;
  p.n_relations = n_relations_internal;
  p.entity_emb = init_uniform<S>({n_entities, d}, d, rng);
  p.relation_emb = init_uniform<S>({n_relations_internal, d}, d, rng);
  p.snap_w = init_uniform<S>({dm, d}, dm, rng);
  p.snap_b = TensorT<S>({d});
  const std::size_t n_layers = cfg.mode == EncoderMode::Attention ? cfg.n_layers : 1;
  const std::size_t n_heads = cfg.mode == EncoderMode::Attention ? cfg.n_heads : 1;
  p.layers.resize(n_layers);
  for (auto& layer : p.layers) {
    layer.wq.reserve(n_heads);
    layer.wk.reserve(n_heads);
    layer.wv.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      layer.wq.push_back(init_uniform<S>({dm, dh}, dm, rng));
      layer.wk.push_back(init_uniform<S>({dm, dh}, dm, rng));
      layer.wv.push_back(init_uniform<S>({dm, dh}, dm, rng));
    }
    layer.wo = init_uniform<S>({n_heads * dh, dm}, n_heads * dh, rng);
    layer.ffn_w1 = init_uniform<S>({dm, cfg.d_inner}, dm, rng);
    layer.ffn_b1 = TensorT<S>({cfg.d_inner});
    layer.ffn_w2 = init_uniform<S>({cfg.d_inner, dm}, cfg.d_inner, rng);
    layer.ffn_b2 = TensorT<S>({dm});
    layer.ln1_gain = TensorT<S>({dm});
    layer.ln1_bias = TensorT<S>({dm});
    layer.ln2_gain = TensorT<S>({dm});
    layer.ln2_bias = TensorT<S>({dm});
    for (S& v : layer.ln1_gain.data) v = S(1);
    for (S& v : layer.ln2_gain.data) v = S(1);
  }
  p.w_star = init_uniform<S>({static_cast<std::size_t>(dm) * cfg.history_len, cfg.d_out},
                             static_cast<std::size_t>(dm) * cfg.history_len, rng);
  p.flat_proj = init_uniform<S>({dm, cfg.d_out}, dm, rng);
  const std::size_t dp = 2 * (static_cast<std::size_t>(cfg.d_out) + d);
  p.sim_w1 = init_uniform<S>({dp, dp}, dp, rng);
  p.sim_b1 = TensorT<S>({dp});
  p.sim_w2 = init_uniform<S>({dp, dp}, dp, rng);
  p.sim_b2 = TensorT<S>({dp});
  return p;
}

// Tape-side view of ModelParams: one leaf per tensor, registered once per
// tape and shared by every forward pass on it.
template <typename S>
struct ParamVarsT {
  VarT<S> entity_emb, relation_emb, snap_w, snap_b;
  struct Layer {
    std::vector<VarT<S>> wq, wk, wv;
    VarT<S> wo, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    VarT<S> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  };
  std::vector<Layer> layers;
  VarT<S> w_star, flat_proj, sim_w1, sim_b1, sim_w2, sim_b2;

  // Same traversal order as ModelParamsT::for_each.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    fn(entity_emb);
    fn(relation_emb);
    fn(snap_w);
    fn(snap_b);
    for (const Layer& layer : layers) {
      for (std::size_t h = 0; h < layer.wq.size(); ++h) {
        fn(layer.wq[h]);
        fn(layer.wk[h]);
        fn(layer.wv[h]);
      }
      fn(layer.wo);
      fn(layer.ffn_w1);
      fn(layer.ffn_b1);
      fn(layer.ffn_w2);
      fn(layer.ffn_b2);
      fn(layer.ln1_gain);
      fn(layer.ln1_bias);
      fn(layer.ln2_gain);
      fn(layer.ln2_bias);
    }
    fn(w_star);
    fn(flat_proj);
    fn(sim_w1);
    fn(sim_b1);
    fn(sim_w2);
    fn(sim_b2);
  }
};

template <typename S>
ParamVarsT<S> register_params(TapeT<S>& tape, const ModelParamsT<S>& p) {
  ParamVarsT<S> v;
  v.entity_emb = tape.leaf(p.entity_emb, true);
  v.relation_emb = tape.leaf(p.relation_emb, true);
  v.snap_w = tape.leaf(p.snap_w, true);
  v.snap_b = tape.leaf(p.snap_b, true);
  v.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& src = p.layers[l];
    auto& dst = v.layers[l];
    for (std::size_t h = 0; h < src.wq.size(); ++h) {
      dst.wq.push_back(tape.leaf(src.wq[h], true));
      dst.wk.push_back(tape.leaf(src.wk[h], true));
      dst.wv.push_back(tape.leaf(src.wv[h], true));
    }
    dst.wo = tape.leaf(src.wo, true);
    dst.ffn_w1 = tape.leaf(src.ffn_w1, true);
    dst.ffn_b1 = tape.leaf(src.ffn_b1, true);
    dst.ffn_w2 = tape.leaf(src.ffn_w2, true);
    dst.ffn_b2 = tape.leaf(src.ffn_b2, true);
    dst.ln1_gain = tape.leaf(src.ln1_gain, true);
    dst.ln1_bias = tape.leaf(src.ln1_bias, true);
    dst.ln2_gain = tape.leaf(src.ln2_gain, true);
    dst.ln2_bias = tape.leaf(src.ln2_bias, true);
  }
  v.w_star = tape.leaf(p.w_star, true);
  v.flat_proj = tape.leaf(p.flat_proj, true);
  v.sim_w1 = tape.leaf(p.sim_w1, true);
  v.sim_b1 = tape.leaf(p.sim_b1, true);
  v.sim_w2 = tape.leaf(p.sim_w2, true);
  v.sim_b2 = tape.leaf(p.sim_b2, true);
  return v;
}

// Attention weight matrices captured during a forward pass, one [q x k]
// matrix per (layer, head).
template <typename S>
struct EncodeTraceT {
  std::vector<TensorT<S>> attention_weights;
};

// Exact sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d_model)),
// PE(pos, 2i+1) = cos of the same argument.
template <typename S>
TensorT<S> positional_encoding(std::uint32_t seq_len, std::uint32_t d_model) {
  if (d_model < 2) {
    throw Error(ErrorKind::InvalidConfig, "positional encoding needs d_model >= 2");
  }
  TensorT<S> pe({seq_len, d_model});
  for (std::uint32_t pos = 0; pos < seq_len; ++pos) {
    for (std::uint32_t i = 0; 2 * i < d_model; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, (2.0 * i) / static_cast<double>(d_model));
      pe.at(pos, 2 * i) = static_cast<S>(std::sin(angle));
      if (2 * i + 1 < d_model) pe.at(pos, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  }
  return pe;
}

// f = relu((1/C) sum over pairs of (W^T [v_r : v_ej] + b)), C = max(1, pairs);
// returns x_tau = [f : v_e], length 2d. An empty snapshot contributes a zero
// f (empty-sum convention; the bias does not leak in).
template <typename S>
VarT<S> snapshot_aggregate(TapeT<S>& tape, const ParamVarsT<S>& pv,
                           const std::vector<NeighborPair>& pairs, EntityId e,
                           const EncoderConfig& cfg) {
  VarT<S> ve = reshape(embedding_lookup(pv.entity_emb, {e}), {cfg.d});
  VarT<S> f;
  if (pairs.empty()) {
    f = tape.constant(TensorT<S>({cfg.d}));
  } else {
    // Sorted iteration makes the sum independent of caller pair order.
    std::vector<NeighborPair> ordered(pairs);
    std::sort(ordered.begin(), ordered.end());
    std::vector<std::uint32_t> rel_ids, ent_ids;
    rel_ids.reserve(ordered.size());
    ent_ids.reserve(ordered.size());
    for (const auto& [r, ej] : ordered) {
      rel_ids.push_back(r);
      ent_ids.push_back(ej);
    }
    VarT<S> vr = embedding_lookup(pv.relation_emb, rel_ids);   // [C x d]
    VarT<S> vj = embedding_lookup(pv.entity_emb, ent_ids);     // [C x d]
    VarT<S> x = concat_cols(vr, vj);                           // [C x 2d]
    VarT<S> y = add_rowvec(matmul(x, pv.snap_w), pv.snap_b);   // [C x d]
    f = relu(mean_axis0(y));
  }
  return concat_cols(f, ve);  // [2d]
}

// softmax(Q K^T / sqrt(d_k)) V. The weight matrix is appended to `trace`
// when provided.
template <typename S>
VarT<S> scaled_dot_attention(VarT<S> q, VarT<S> k, VarT<S> v,
                             EncodeTraceT<S>* trace = nullptr) {
  const std::size_t dk = q.value().shape[1];
  if (k.value().shape[1] != dk || k.value().shape[0] != v.value().shape[0]) {
    throw_shape("scaled_dot_attention", k.value(), v.value());
  }
  VarT<S> logits = scale(matmul(q, transpose(k)),
                         static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk))));
  VarT<S> weights = softmax(logits);
  if (trace) trace->attention_weights.push_back(weights.value());
  return matmul(weights, v);
}

// MultiHead(x) = [head_1 : ... : head_h] W^O with per-head projections.
template <typename S>
VarT<S> attention_sublayer(VarT<S> x, const typename ParamVarsT<S>::Layer& layer,
                           EncodeTraceT<S>* trace = nullptr) {
  std::vector<VarT<S>> heads;
  heads.reserve(layer.wq.size());
  for (std::size_t h = 0; h < layer.wq.size(); ++h) {
    VarT<S> q = matmul(x, layer.wq[h]);
    VarT<S> k = matmul(x, layer.wk[h]);
    VarT<S> v = matmul(x, layer.wv[h]);
    heads.push_back(scaled_dot_attention(q, k, v, trace));
  }
  return matmul(concat_cols(heads), layer.wo);
}

// One encoder layer: attention sublayer and position-wise FFN, each wrapped
// in residual add + layer norm.
template <typename S>
VarT<S> encoder_layer(VarT<S> x, const typename ParamVarsT<S>::Layer& layer,
                      EncodeTraceT<S>* trace = nullptr) {
  VarT<S> attn = attention_sublayer<S>(x, layer, trace);
  VarT<S> x1 = layer_norm(add(x, attn), layer.ln1_gain, layer.ln1_bias);
  VarT<S> hidden = relu(add_rowvec(matmul(x1, layer.ffn_w1), layer.ffn_b1));
  VarT<S> ffn = add_rowvec(matmul(hidden, layer.ffn_w2), layer.ffn_b2);
  return layer_norm(add(x1, ffn), layer.ln2_gain, layer.ln2_bias);
}

// Time-aware entity representation h_e.
//
// Attention mode: snapshot sequence -> +PE -> n_layers encoder layers ->
// relu(flatten(z) W*). Flat mode: all pairs of all snapshots aggregated as
// one snapshot, then relu(x flat_proj) -- no attention, no PE.
template <typename S>
VarT<S> encode(TapeT<S>& tape, const ParamVarsT<S>& pv, const HistoryWindow& history,
               EntityId e, const EncoderConfig& cfg,
               EncodeTraceT<S>* trace = nullptr) {
  cfg.validate();
  if (history.snapshots.size() != cfg.history_len) {
    throw Error(ErrorKind::HistoryLengthMismatch,
                "history has " + std::to_string(history.snapshots.size()) +
                    " snapshots, config expects " + std::to_string(cfg.history_len));
  }
  if (cfg.mode == EncoderMode::Flat) {
    std::vector<NeighborPair> merged;
    for (const auto& snap : history.snapshots) {
      merged.insert(merged.end(), snap.begin(), snap.end());
    }
    VarT<S> x = snapshot_aggregate(tape, pv, merged, e, cfg);        // [2d]
    VarT<S> row = reshape(x, {1, cfg.d_model()});
    return relu(reshape(matmul(row, pv.flat_proj), {cfg.d_out}));
  }

  std::vector<VarT<S>> rows;
  rows.reserve(cfg.history_len);
  for (const auto& snap : history.snapshots) {
    rows.push_back(snapshot_aggregate(tape, pv, snap, e, cfg));
  }
  VarT<S> x = concat_rows(rows);  // [l x 2d]
  VarT<S> pe = tape.constant(positional_encoding<S>(cfg.history_len, cfg.d_model()));
  x = add(x, pe);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    x = encoder_layer<S>(x, pv.layers[l], trace);
  }
  VarT<S> flat = reshape(x, {1, static_cast<std::size_t>(cfg.d_model()) * cfg.history_len});
  return relu(reshape(matmul(flat, pv.w_star), {cfg.d_out}));
}

using ModelParams = ModelParamsT<float>;
using ParamVars = ParamVarsT<float>;
using EncodeTrace = EncodeTraceT<float>;

// Model checkpoint = tensor archive of all parameters plus a "_config"
// tensor carrying the encoder hyperparameters.
void save_model(const std::string& path, const ModelParams& params,
                const EncoderConfig& cfg);
std::pair<ModelParams, EncoderConfig> load_model(const std::string& path);

}  // namespace tkg
