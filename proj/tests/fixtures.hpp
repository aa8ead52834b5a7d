#pragma once

// Hand-sized dataset fixtures shared by the metrics and trainer tests.

#include <string>
#include <vector>

#include "tkg/core.hpp"
#include "tkg/dataset.hpp"
#include "tkg/encoder.hpp"
#include "tkg/rng.hpp"
#include "tkg/synth.hpp"

namespace fixtures {

using namespace tkg;

inline EncoderConfig small_encoder() {
  EncoderConfig cfg;
  cfg.d = 4;
  cfg.history_len = 3;
  cfg.n_max = 4;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_inner = 8;
  cfg.d_out = 4;
  return cfg;
}

// Small benchmark built from the synthetic generator through the real
// dataset-builder path.
inline DatasetArtifacts synth_artifacts(std::uint32_t entities = 20,
                                        std::uint32_t sparse = 4,
                                        std::uint32_t horizon = 240,
                                        std::uint32_t w = 60,
                                        std::uint64_t seed = 33) {
  SynthSpec spec;
  spec.n_entities = entities;
  spec.n_frequent_rels = 2;
  spec.n_sparse_rels = sparse;
  spec.horizon = horizon;
  spec.precursor_lag = 2;
  spec.noise_rate = 0.05;
  spec.seed = seed;
  SynthResult gen = generate_synthetic(spec);

  Vocab vocab;
  std::vector<Quadruple> quads;
  for (const std::string& line : gen.lines) {
    quads.push_back(parse_quadruple_line(line, vocab, ParseMode::Grow));
  }
  std::vector<std::uint32_t> remap = vocab.finalize_times(TimeOrder::Auto);
  for (Quadruple& q : quads) q.time = remap[q.time];
  quads = deduplicate(quads);

  FrequencyThresholds th{gen.truth.suggested_low, gen.truth.suggested_high};
  MetaSplit split = build_meta_split(quads, th, w, 1, 1, seed + 1);
  return make_artifacts(std::move(vocab), std::move(split));
}

}  // namespace fixtures
