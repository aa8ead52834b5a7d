#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tkg/core.hpp"

namespace tkg {

// Synthetic temporal KG with a planted pairwise rule: sparse relation
// sp_k(a, b, t) occurs together with its frequent precursor
// fr_{k % nFrequent}(a, b, t - lag). Uniform noise events are mixed in at
// `noise_rate` of the planted volume.
struct SynthSpec {
  std::uint32_t n_entities = 50;
  std::uint32_t n_frequent_rels = 3;
  std::uint32_t n_sparse_rels = 12;
  std::uint32_t horizon = 360;      // ticks in [0, horizon)
  std::uint32_t precursor_lag = 3;  // must stay below the encoder history_len
  double noise_rate = 0.05;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_entities < 2 || n_frequent_rels < 1 || horizon < 2 ||
        precursor_lag < 1 || precursor_lag >= horizon) {
      throw Error(ErrorKind::InvalidConfig, "invalid synthetic spec");
    }
    if (noise_rate < 0.0 || noise_rate >= 1.0) {
      throw Error(ErrorKind::InvalidConfig, "noise_rate must be in [0, 1)");
    }
  }
};

struct SynthGroundTruth {
  std::uint32_t precursor_lag = 0;
  std::map<std::string, std::string> precursor_of;  // sparse -> frequent
  std::uint64_t suggested_low = 0;   // frequency thresholds matched to the
  std::uint64_t suggested_high = 0;  // generated counts
  std::uint64_t planted_events = 0;
  std::uint64_t noise_events = 0;
};

struct SynthResult {
  std::vector<std::string> lines;  // "s\tr\to\tt", unsorted raw log
  SynthGroundTruth truth;
};

SynthResult generate_synthetic(const SynthSpec& spec);

// Writes the event log (one quadruple per line) and the ground-truth JSON.
void write_synthetic(const SynthSpec& spec, const std::string& events_path,
                     const std::string& truth_path);

}  // namespace tkg
