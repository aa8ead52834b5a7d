#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tkg/dataset.hpp"
#include "tkg/encoder.hpp"

namespace tkg {

struct RankResult {
  Quadruple query;
  std::uint32_t rank = 0;  // 1-based
  Timestamp support_time = 0;
};

struct MetricBlock {
  double mrr = 0.0;
  double hit1 = 0.0;
  double hit5 = 0.0;
  double hit10 = 0.0;
  std::size_t count = 0;
};

struct TimeBucket {
  std::uint32_t index = 0;
  double mrr = 0.0;
  double hit10 = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  MetricBlock overall;
  std::map<std::string, MetricBlock> per_relation;
  std::vector<TimeBucket> over_time_buckets;
  std::vector<std::string> warnings;
};

// Optimistic rank: 1 + number of candidates scoring strictly higher than the
// true one. The pessimistic flag additionally counts ties against it.
std::uint32_t rank_from_scores(const std::vector<float>& scores,
                               std::size_t true_index, bool pessimistic = false);

double mrr(const std::vector<std::uint32_t>& ranks);
double hit_at(const std::vector<std::uint32_t>& ranks, std::uint32_t k);

// Per-bucket aggregation of the gap between query and support timestamps,
// bucket = floor(gap / bucket_width). Throws NegativeGap when a query
// precedes its support.
std::vector<TimeBucket> over_time(const std::vector<RankResult>& results,
                                  std::uint32_t bucket_width);

enum class SupportRule {
  WindowEarliest,  // earliest quad of the relation inside its window
  TrainPeriod,     // earliest quad before trainEnd, falling back to window
};

struct EvalConfig {
  SupportRule support_rule = SupportRule::WindowEarliest;
  bool pessimistic_ties = false;
  std::uint32_t bucket_width = 7;
  std::size_t max_queries = 0;  // 0 = no cap
  std::uint32_t threads = 1;
};

// Scores (s_q, r, e, t_q) for every entity e against the relation's support
// pair and ranks the true object.
std::uint32_t rank_query(const Quadruple& query, const Quadruple& support,
                         const ModelParams& params, const TemporalKG& graph,
                         const EncoderConfig& cfg, bool pessimistic = false);

// Full protocol over one partition: per relation choose a support, rank
// every remaining quad, aggregate overall / per-relation / over-time.
MetricsReport evaluate_split(MetaPartition partition, const DatasetArtifacts& art,
                             const TemporalKG& graph, const ModelParams& params,
                             const EncoderConfig& enc_cfg, const EvalConfig& eval_cfg);

// Report serialization: pretty JSON, plus the over-time buckets as CSV
// ("bucket,start,end,count,mrr,hit10").
std::string report_to_json(const MetricsReport& report);
std::string buckets_to_csv(const MetricsReport& report, std::uint32_t bucket_width);

}  // namespace tkg
