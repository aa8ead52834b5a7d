#include "tkg/trainer.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "tkg/scorer.hpp"

namespace tkg {

namespace {

QueryMode query_mode_from_name(const std::string& s) {
  if (s == "time_dependent") return QueryMode::TimeDependent;
  if (s == "random") return QueryMode::Random;
  throw Error(ErrorKind::InvalidConfig, "unknown queryMode: " + s);
}

EncoderMode encoder_mode_from_name(const std::string& s) {
  if (s == "attention") return EncoderMode::Attention;
  if (s == "flat") return EncoderMode::Flat;
  throw Error(ErrorKind::InvalidConfig, "unknown encoder mode: " + s);
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("config: ") + e.what());
  }
  TrainConfig cfg;
  cfg.margin = j.value("margin", cfg.margin);
  cfg.learning_rate = j.value("learningRate", cfg.learning_rate);
  cfg.episodes = j.value("episodes", cfg.episodes);
  cfg.m_queries = j.value("mQueries", cfg.m_queries);
  cfg.neg_per_pos = j.value("negPerPos", cfg.neg_per_pos);
  if (j.contains("queryMode")) {
    cfg.query_mode = query_mode_from_name(j["queryMode"].get<std::string>());
  }
  cfg.corrupt_mode = j.value("corruptBoth", false) ? CorruptMode::Both
                                                   : CorruptMode::ObjectOnly;
  cfg.w = j.value("w", cfg.w);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eval_interval = j.value("evalInterval", cfg.eval_interval);
  cfg.val_query_cap = j.value("valQueryCap", cfg.val_query_cap);
  cfg.checkpoint_interval = j.value("checkpointInterval", cfg.checkpoint_interval);
  cfg.encoder.d = j.value("d", cfg.encoder.d);
  cfg.encoder.history_len = j.value("ell", cfg.encoder.history_len);
  cfg.encoder.n_max = j.value("nmax", cfg.encoder.n_max);
  cfg.encoder.n_heads = j.value("nHeads", cfg.encoder.n_heads);
  cfg.encoder.n_layers = j.value("nLayers", cfg.encoder.n_layers);
  cfg.encoder.d_inner = j.value("dInner", cfg.encoder.d_inner);
  cfg.encoder.d_out = j.value("dOut", j.value("d", cfg.encoder.d));
  if (j.contains("mode")) {
    cfg.encoder.mode = encoder_mode_from_name(j["mode"].get<std::string>());
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return train_config_from_json(text);
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["margin"] = cfg.margin;
  j["learningRate"] = cfg.learning_rate;
  j["episodes"] = cfg.episodes;
  j["mQueries"] = cfg.m_queries;
  j["negPerPos"] = cfg.neg_per_pos;
  j["queryMode"] =
      cfg.query_mode == QueryMode::TimeDependent ? "time_dependent" : "random";
  j["corruptBoth"] = cfg.corrupt_mode == CorruptMode::Both;
  j["w"] = cfg.w;
  j["seed"] = cfg.seed;
  j["evalInterval"] = cfg.eval_interval;
  j["valQueryCap"] = cfg.val_query_cap;
  j["checkpointInterval"] = cfg.checkpoint_interval;
  j["d"] = cfg.encoder.d;
  j["ell"] = cfg.encoder.history_len;
  j["nmax"] = cfg.encoder.n_max;
  j["nHeads"] = cfg.encoder.n_heads;
  j["nLayers"] = cfg.encoder.n_layers;
  j["dInner"] = cfg.encoder.d_inner;
  j["dOut"] = cfg.encoder.d_out;
  j["mode"] = cfg.encoder.mode == EncoderMode::Flat ? "flat" : "attention";
  return j.dump(2) + "\n";
}

TaskSampler::TaskSampler(const MetaSplit& split, const TrainConfig& cfg)
    : mode_(cfg.query_mode), w_(cfg.w), m_queries_(cfg.m_queries) {
  for (RelationId r : split.relations_in(MetaPartition::MetaTrain)) {
    const auto& quads = split.task_relations.at(r);
    if (quads.size() < 2) continue;
    Task task;
    task.relation = r;
    task.quads = &quads;
    for (std::size_t i = 0; i < quads.size(); ++i) {
      if (mode_ == QueryMode::Random) {
        task.feasible_supports.push_back(i);
        continue;
      }
      const std::uint64_t t0 = quads[i].time;
      bool feasible = false;
      for (std::size_t k = 0; k < quads.size(); ++k) {
        if (k == i) continue;
        if (quads[k].time >= t0 && quads[k].time <= t0 + w_) {
          feasible = true;
          break;
        }
      }
      if (feasible) task.feasible_supports.push_back(i);
    }
    if (!task.feasible_supports.empty()) feasible_.push_back(std::move(task));
  }
}

Episode TaskSampler::sample(Rng& rng) const {
  if (feasible_.empty()) {
    throw Error(ErrorKind::NoFeasibleTask,
                "no meta-train relation admits a support/query pair");
  }
  const Task& task = feasible_[rng_below(rng, feasible_.size())];
  const std::size_t sup_idx =
      task.feasible_supports[rng_below(rng, task.feasible_supports.size())];
  const std::vector<Quadruple>& quads = *task.quads;
  const Quadruple& support = quads[sup_idx];

  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < quads.size(); ++k) {
    if (k == sup_idx) continue;
    if (mode_ == QueryMode::TimeDependent) {
      const std::uint64_t t0 = support.time;
      if (quads[k].time < t0 || quads[k].time > t0 + w_) continue;
    }
    candidates.push_back(k);
  }

  Episode ep;
  ep.relation = task.relation;
  ep.support = support;
  std::vector<std::size_t> picks =
      rng_sample_indices(rng, candidates.size(),
                         std::min<std::size_t>(m_queries_, candidates.size()));
  for (std::size_t p : picks) ep.positives.push_back(quads[candidates[p]]);
  return ep;
}

Quadruple corrupt(const Quadruple& pos, std::size_t n_entities, Rng& rng,
                  CorruptMode mode) {
  if (n_entities < 2) {
    throw Error(ErrorKind::InvalidConfig, "corruption needs at least 2 entities");
  }
  Quadruple neg = pos;
  const bool corrupt_subject = mode == CorruptMode::Both && rng_below(rng, 2) == 0;
  const EntityId original = corrupt_subject ? pos.subject : pos.object;
  EntityId replacement =
      static_cast<EntityId>(rng_below(rng, n_entities - 1));
  if (replacement >= original) ++replacement;
  if (corrupt_subject) {
    neg.subject = replacement;
  } else {
    neg.object = replacement;
  }
  return neg;
}

float episode_loss_and_grads(Tape& tape, const ParamVars& pv,
                             const TemporalKG& graph, const Episode& ep,
                             const TrainConfig& cfg) {
  const EncoderConfig& enc = cfg.encoder;
  Var sup_m = transform(
      pair_rep(tape, pv, graph, ep.support.subject, ep.support.object,
               ep.support.time, enc),
      pv);
  std::vector<Var> pair_losses;
  pair_losses.reserve(ep.negatives.size());
  for (std::size_t i = 0; i < ep.positives.size(); ++i) {
    const Quadruple& pos = ep.positives[i];
    Var pos_m = transform(
        pair_rep(tape, pv, graph, pos.subject, pos.object, pos.time, enc), pv);
    Var score_pos = dot(sup_m, pos_m);
    for (std::uint32_t n = 0; n < cfg.neg_per_pos; ++n) {
      const Quadruple& neg = ep.negatives[i * cfg.neg_per_pos + n];
      Var neg_m = transform(
          pair_rep(tape, pv, graph, neg.subject, neg.object, neg.time, enc), pv);
      Var score_neg = dot(sup_m, neg_m);
      pair_losses.push_back(hinge_loss_var(score_pos, score_neg,
                                           static_cast<float>(cfg.margin)));
    }
  }
  Var loss = mean_axis0(concat_cols(pair_losses));
  const float loss_value = loss.value().data[0];
  tape.backward(loss);
  return loss_value;
}

TrainResult train(const DatasetArtifacts& art, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  const TemporalKG graph = visible_graph(art.split, art.vocab);
  TaskSampler sampler(art.split, cfg);

  TrainResult result;
  result.params = init_params<float>(graph.entity_count(),
                                     graph.relation_count_internal(), cfg.encoder,
                                     cfg.seed);
  AdamState adam;
  std::vector<Tensor*> param_ptrs = param_pointers(result.params);
  adam.init(param_ptrs, cfg.learning_rate);

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const bool has_val =
      !art.split.relations_in(MetaPartition::MetaVal).empty();

  for (std::uint64_t episode = 0; episode < cfg.episodes; ++episode) {
    Episode ep = sampler.sample(rng);
    for (const Quadruple& pos : ep.positives) {
      for (std::uint32_t n = 0; n < cfg.neg_per_pos; ++n) {
        ep.negatives.push_back(
            corrupt(pos, graph.entity_count(), rng, cfg.corrupt_mode));
      }
    }

    Tape tape;
    ParamVars pv = register_params(tape, result.params);
    const float loss = episode_loss_and_grads(tape, pv, graph, ep, cfg);
    if (!std::isfinite(loss)) {
      throw Error(ErrorKind::NonFiniteLoss,
                  "non-finite loss at episode " + std::to_string(episode));
    }

    std::vector<const std::vector<float>*> grads;
    grads.reserve(param_ptrs.size());
    pv.for_each([&](const Var& v) { grads.push_back(&tape.grad_buffer(v.id)); });
    adam_step(param_ptrs, grads, adam);

    EpisodeLog log{episode, art.vocab.relations[ep.relation], loss};
    result.episodes.push_back(log);
    if (hooks.on_episode) hooks.on_episode(log);

    if (cfg.checkpoint_interval > 0 && (episode + 1) % cfg.checkpoint_interval == 0 &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(episode + 1, result.params);
    }

    if (has_val && cfg.eval_interval > 0 && (episode + 1) % cfg.eval_interval == 0) {
      EvalConfig ec;
      ec.max_queries = cfg.val_query_cap;
      MetricsReport report = evaluate_split(MetaPartition::MetaVal, art, graph,
                                            result.params, cfg.encoder, ec);
      ValLog vl{episode + 1, report.overall.mrr, false};
      if (report.overall.count > 0 && report.overall.mrr > result.best_val_mrr) {
        result.best_val_mrr = report.overall.mrr;
        result.best_params = result.params;
        vl.is_best = true;
      }
      result.validations.push_back(vl);
      if (hooks.on_validation) hooks.on_validation(vl);
    }
  }

  if (result.best_val_mrr < 0.0) result.best_params = result.params;
  return result;
}

}  // namespace tkg
