#include "tkg/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tkg/scorer.hpp"

namespace tkg {

std::uint32_t rank_from_scores(const std::vector<float>& scores,
                               std::size_t true_index, bool pessimistic) {
  const float target = scores[true_index];
  std::uint32_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == true_index) continue;
    if (scores[i] > target || (pessimistic && scores[i] == target)) ++rank;
  }
  return rank;
}

double mrr(const std::vector<std::uint32_t>& ranks) {
  if (ranks.empty()) throw Error(ErrorKind::EmptyRankList, "no ranks to average");
  double acc = 0.0;
  for (std::uint32_t r : ranks) acc += 1.0 / static_cast<double>(r);
  return acc / static_cast<double>(ranks.size());
}

double hit_at(const std::vector<std::uint32_t>& ranks, std::uint32_t k) {
  if (ranks.empty()) throw Error(ErrorKind::EmptyRankList, "no ranks to average");
  std::size_t hits = 0;
  for (std::uint32_t r : ranks) {
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::vector<TimeBucket> over_time(const std::vector<RankResult>& results,
                                  std::uint32_t bucket_width) {
  if (bucket_width < 1) {
    throw Error(ErrorKind::InvalidConfig, "bucket width must be >= 1");
  }
  std::map<std::uint32_t, std::vector<std::uint32_t>> grouped;
  for (const RankResult& r : results) {
    if (r.query.time < r.support_time) {
      throw Error(ErrorKind::NegativeGap,
                  "query at t=" + std::to_string(r.query.time) +
                      " precedes its support at t=" + std::to_string(r.support_time));
    }
    const std::uint32_t gap = r.query.time - r.support_time;
    grouped[gap / bucket_width].push_back(r.rank);
  }
  std::vector<TimeBucket> buckets;
  for (const auto& [idx, ranks] : grouped) {
    TimeBucket b;
    b.index = idx;
    b.count = ranks.size();
    b.mrr = mrr(ranks);
    b.hit10 = hit_at(ranks, 10);
    buckets.push_back(b);
  }
  return buckets;
}

namespace {

MetricBlock block_from_ranks(const std::vector<std::uint32_t>& ranks) {
  MetricBlock b;
  b.count = ranks.size();
  if (ranks.empty()) return b;
  b.mrr = mrr(ranks);
  b.hit1 = hit_at(ranks, 1);
  b.hit5 = hit_at(ranks, 5);
  b.hit10 = hit_at(ranks, 10);
  return b;
}

// Scores every candidate object once the support representation is fixed.
// One tape per call; the subject encoding is shared across candidates.
std::vector<float> candidate_scores(const Quadruple& query, const Quadruple& support,
                                    const ModelParams& params, const TemporalKG& graph,
                                    const EncoderConfig& cfg) {
  Tape tape;
  ParamVars pv = register_params(tape, params);
  Var sup_rep = pair_rep(tape, pv, graph, support.subject, support.object,
                         support.time, cfg);
  Var sup_m = transform(sup_rep, pv);

  HistoryWindow hist_s = temporal_neighborhood(graph, query.subject, query.time,
                                               cfg.history_len, cfg.n_max);
  Var h_s = encode(tape, pv, hist_s, query.subject, cfg);
  Var v_s = reshape(embedding_lookup(pv.entity_emb, {query.subject}), {cfg.d});

  const std::size_t n_entities = graph.entity_count();
  std::vector<float> scores(n_entities);
  for (EntityId e = 0; e < n_entities; ++e) {
    HistoryWindow hist_o =
        temporal_neighborhood(graph, e, query.time, cfg.history_len, cfg.n_max);
    Var h_o = encode(tape, pv, hist_o, e, cfg);
    Var v_o = reshape(embedding_lookup(pv.entity_emb, {e}), {cfg.d});
    Var q_rep = concat_cols(std::vector<Var>{h_s, v_s, h_o, v_o});
    Var s = dot(sup_m, transform(q_rep, pv));
    scores[e] = s.value().data[0];
  }
  return scores;
}

const Quadruple* pick_support(const std::vector<Quadruple>& quads,
                              SupportRule rule, Timestamp train_end,
                              std::vector<std::string>* warnings,
                              const std::string& rel_name) {
  if (quads.empty()) return nullptr;
  if (rule == SupportRule::TrainPeriod) {
    for (const Quadruple& q : quads) {
      if (q.time < train_end) return &q;
    }
    if (warnings) {
      warnings->push_back("relation " + rel_name +
                          ": no training-period quad, using window-earliest support");
    }
  }
  return &quads.front();  // canonical order puts the earliest first
}

}  // namespace

std::uint32_t rank_query(const Quadruple& query, const Quadruple& support,
                         const ModelParams& params, const TemporalKG& graph,
                         const EncoderConfig& cfg, bool pessimistic) {
  std::vector<float> scores = candidate_scores(query, support, params, graph, cfg);
  return rank_from_scores(scores, query.object, pessimistic);
}

MetricsReport evaluate_split(MetaPartition partition, const DatasetArtifacts& art,
                             const TemporalKG& graph, const ModelParams& params,
                             const EncoderConfig& enc_cfg, const EvalConfig& eval_cfg) {
  const std::vector<RelationId> rels = art.split.relations_in(partition);
  if (rels.empty()) {
    throw Error(ErrorKind::EmptyPartition,
                std::string("partition ") + partition_name(partition) + " is empty");
  }

  MetricsReport report;
  struct Job {
    Quadruple query;
    Quadruple support;
    RelationId relation;
  };
  std::vector<Job> jobs;
  for (RelationId r : rels) {
    const auto& quads = art.split.task_relations.at(r);
    const std::string& name = art.vocab.relations[r];
    const Quadruple* support =
        pick_support(quads, eval_cfg.support_rule, art.split.windows.train_end,
                     &report.warnings, name);
    if (!support) {
      report.warnings.push_back("relation " + name + ": no quads, skipped");
      report.per_relation[name] = MetricBlock{};
      continue;
    }
    bool any = false;
    for (const Quadruple& q : quads) {
      if (q == *support) continue;
      jobs.push_back({q, *support, r});
      any = true;
    }
    if (!any) {
      report.warnings.push_back("relation " + name +
                                ": only the support quad, no rankable queries");
      report.per_relation[name] = MetricBlock{};
    }
  }
  if (eval_cfg.max_queries > 0 && jobs.size() > eval_cfg.max_queries) {
    jobs.resize(eval_cfg.max_queries);
  }

  std::vector<RankResult> results(jobs.size());
  const std::uint32_t n_threads =
      std::max<std::uint32_t>(1, std::min<std::uint32_t>(
                                     eval_cfg.threads,
                                     static_cast<std::uint32_t>(jobs.size() ? jobs.size() : 1)));
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Job& job = jobs[i];
      RankResult rr;
      rr.query = job.query;
      rr.support_time = job.support.time;
      rr.rank = rank_query(job.query, job.support, params, graph, enc_cfg,
                           eval_cfg.pessimistic_ties);
      results[i] = rr;
    }
  };
  if (n_threads <= 1) {
    worker(0, jobs.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (jobs.size() + n_threads - 1) / n_threads;
    for (std::uint32_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(jobs.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::uint32_t> all_ranks;
  std::map<RelationId, std::vector<std::uint32_t>> rel_ranks;
  for (std::size_t i = 0; i < results.size(); ++i) {
    all_ranks.push_back(results[i].rank);
    rel_ranks[jobs[i].relation].push_back(results[i].rank);
  }
  report.overall = block_from_ranks(all_ranks);
  for (const auto& [r, ranks] : rel_ranks) {
    report.per_relation[art.vocab.relations[r]] = block_from_ranks(ranks);
  }
  if (!results.empty()) {
    report.over_time_buckets = over_time(results, eval_cfg.bucket_width);
  }
  return report;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["mrr"] = report.overall.mrr;
  j["hit1"] = report.overall.hit1;
  j["hit5"] = report.overall.hit5;
  j["hit10"] = report.overall.hit10;
  j["queryCount"] = report.overall.count;
  nlohmann::ordered_json per;
  for (const auto& [name, b] : report.per_relation) {
    per[name] = {{"mrr", b.mrr},
                 {"hit1", b.hit1},
                 {"hit5", b.hit5},
                 {"hit10", b.hit10},
                 {"queryCount", b.count}};
  }
  j["perRelation"] = per;
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  for (const TimeBucket& b : report.over_time_buckets) {
    buckets.push_back({{"bucket", b.index},
                       {"mrr", b.mrr},
                       {"hit10", b.hit10},
                       {"count", b.count}});
  }
  j["overTime"] = buckets;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

std::string buckets_to_csv(const MetricsReport& report, std::uint32_t bucket_width) {
  std::ostringstream os;
  os << "bucket,start,end,count,mrr,hit10\n";
  for (const TimeBucket& b : report.over_time_buckets) {
    os << b.index << ',' << b.index * bucket_width << ','
       << (b.index + 1) * bucket_width << ',' << b.count << ',' << b.mrr << ','
       << b.hit10 << '\n';
  }
  return os.str();
}

}  // namespace tkg
