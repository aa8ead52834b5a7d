#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tkg/dataset.hpp"
#include "tkg/encoder.hpp"
#include "tkg/metrics.hpp"
#include "tkg/rng.hpp"
#include "tkg/tensor.hpp"

namespace tkg {

enum class QueryMode { TimeDependent, Random };
enum class CorruptMode { ObjectOnly, Both };

struct TrainConfig {
  double margin = 10.0;
  double learning_rate = 0.001;
  std::uint64_t episodes = 1000;
  std::uint32_t m_queries = 32;   // positives per episode
  std::uint32_t neg_per_pos = 1;
  QueryMode query_mode = QueryMode::TimeDependent;
  CorruptMode corrupt_mode = CorruptMode::ObjectOnly;
  std::uint32_t w = 120;          // episode length
  std::uint64_t seed = 1;
  std::uint64_t eval_interval = 250;  // meta-val cadence; 0 disables
  std::size_t val_query_cap = 200;    // 0 = no cap
  std::uint64_t checkpoint_interval = 0;  // 0 = none beyond final/best
  EncoderConfig encoder;

  void validate() const {
    if (margin <= 0.0) throw Error(ErrorKind::InvalidConfig, "margin must be > 0");
    if (m_queries < 1) throw Error(ErrorKind::InvalidConfig, "mQueries must be >= 1");
    if (neg_per_pos < 1) throw Error(ErrorKind::InvalidConfig, "negPerPos must be >= 1");
    if (w < 1) throw Error(ErrorKind::InvalidConfig, "w must be >= 1");
    encoder.validate();
  }
};

TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);

struct Episode {
  RelationId relation = 0;
  Quadruple support;
  std::vector<Quadruple> positives;
  std::vector<Quadruple> negatives;  // neg_per_pos per positive, grouped
};

// Precomputed feasibility for episode sampling over the meta-train tasks.
class TaskSampler {
 public:
  TaskSampler(const MetaSplit& split, const TrainConfig& cfg);

  // Uniform feasible relation, uniform feasible support, then up to
  // m_queries positives without replacement from the query candidates.
  Episode sample(Rng& rng) const;

  bool has_feasible_task() const { return !feasible_.empty(); }

 private:
  struct Task {
    RelationId relation;
    const std::vector<Quadruple>* quads;
    std::vector<std::size_t> feasible_supports;
  };
  std::vector<Task> feasible_;
  QueryMode mode_;
  std::uint32_t w_;
  std::uint32_t m_queries_;
};

// Replaces the object (or, in Both mode, a uniformly chosen slot) with a
// uniform entity different from the original. Relation and time survive.
Quadruple corrupt(const Quadruple& pos, std::size_t n_entities, Rng& rng,
                  CorruptMode mode = CorruptMode::ObjectOnly);

inline double hinge_loss(double score_pos, double score_neg, double margin) {
  return std::max(score_neg - score_pos + margin, 0.0);
}

// Tape form of the hinge, max(neg - pos + margin, 0).
template <typename S>
VarT<S> hinge_loss_var(VarT<S> score_pos, VarT<S> score_neg, S margin) {
  return max_with_zero(add_const(sub(score_neg, score_pos), margin));
}

struct EpisodeLog {
  std::uint64_t episode = 0;
  std::string relation;
  double loss = 0.0;
};

struct ValLog {
  std::uint64_t episode = 0;
  double mrr = 0.0;
  bool is_best = false;
};

struct TrainResult {
  ModelParams params;         // final parameters
  ModelParams best_params;    // best meta-val MRR checkpoint (== final when
                              // validation never ran)
  double best_val_mrr = -1.0;
  std::vector<EpisodeLog> episodes;
  std::vector<ValLog> validations;
};

struct TrainHooks {
  std::function<void(const EpisodeLog&)> on_episode;
  std::function<void(const ValLog&)> on_validation;
  // Invoked at every checkpoint_interval with the current parameters.
  std::function<void(std::uint64_t, const ModelParams&)> on_checkpoint;
};

// Algorithm: per episode sample a task, score support against positives and
// corrupted negatives, take the mean hinge loss, backprop, Adam step.
// Meta-val MRR is evaluated every eval_interval episodes and the best
// checkpoint retained. Deterministic under cfg.seed.
TrainResult train(const DatasetArtifacts& art, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// One forward/backward pass for a prepared episode; returns the loss and
// leaves gradients on the tape. Exposed for tests.
float episode_loss_and_grads(Tape& tape, const ParamVars& pv,
                             const TemporalKG& graph, const Episode& ep,
                             const TrainConfig& cfg);

}  // namespace tkg
