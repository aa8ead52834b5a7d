#pragma once

#include "tkg/core.hpp"
#include "tkg/encoder.hpp"

namespace tkg {

// [h_s : v_s : h_o : v_o] for an entity pair at time t; histories come from
// the graph's temporal neighborhoods. Length 2*(d_out + d).
template <typename S>
VarT<S> pair_rep(TapeT<S>& tape, const ParamVarsT<S>& pv, const TemporalKG& graph,
                 EntityId s, EntityId o, Timestamp t, const EncoderConfig& cfg,
                 EncodeTraceT<S>* trace = nullptr) {
  HistoryWindow hs = temporal_neighborhood(graph, s, t, cfg.history_len, cfg.n_max);
  HistoryWindow ho = temporal_neighborhood(graph, o, t, cfg.history_len, cfg.n_max);
  VarT<S> h_s = encode(tape, pv, hs, s, cfg, trace);
  VarT<S> h_o = encode(tape, pv, ho, o, cfg, trace);
  VarT<S> v_s = reshape(embedding_lookup(pv.entity_emb, {s}), {cfg.d});
  VarT<S> v_o = reshape(embedding_lookup(pv.entity_emb, {o}), {cfg.d});
  return concat_cols(std::vector<VarT<S>>{h_s, v_s, h_o, v_o});
}

// Same, from precomputed history windows (no graph access).
template <typename S>
VarT<S> pair_rep_from_histories(TapeT<S>& tape, const ParamVarsT<S>& pv,
                                const HistoryWindow& hs, const HistoryWindow& ho,
                                EntityId s, EntityId o, const EncoderConfig& cfg,
                                EncodeTraceT<S>* trace = nullptr) {
  VarT<S> h_s = encode(tape, pv, hs, s, cfg, trace);
  VarT<S> h_o = encode(tape, pv, ho, o, cfg, trace);
  VarT<S> v_s = reshape(embedding_lookup(pv.entity_emb, {s}), {cfg.d});
  VarT<S> v_o = reshape(embedding_lookup(pv.entity_emb, {o}), {cfg.d});
  return concat_cols(std::vector<VarT<S>>{h_s, v_s, h_o, v_o});
}

// Residual two-layer map: M(x) = W2 relu(W1 x + b1) + b2 + x.
// Weight orientation: y_j = sum_i x_i W[i][j].
template <typename S>
VarT<S> transform(VarT<S> x, const ParamVarsT<S>& pv) {
  const std::size_t n = x.value().numel();
  VarT<S> row = reshape(x, {1, n});
  VarT<S> h1 = relu(add_rowvec(matmul(row, pv.sim_w1), pv.sim_b1));
  VarT<S> h2 = add_rowvec(matmul(h1, pv.sim_w2), pv.sim_b2);
  return add(reshape(h2, {n}), x);
}

// Inner-product similarity, Eq. form M(support)^T M(query). Symmetric.
template <typename S>
VarT<S> score(VarT<S> support, VarT<S> query, const ParamVarsT<S>& pv) {
  return dot(transform(support, pv), transform(query, pv));
}

}  // namespace tkg
