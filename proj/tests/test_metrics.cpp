#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "tkg/metrics.hpp"
#include "tkg/rng.hpp"

using namespace tkg;

TEST_CASE("rank_from_scores counts strictly higher candidates") {
  // true candidate scores 0.5, one strictly higher, one tie
  std::vector<float> scores{0.9f, 0.5f, 0.5f, 0.1f};
  CHECK(rank_from_scores(scores, 1) == 2);
  CHECK(rank_from_scores(scores, 1, /*pessimistic=*/true) == 3);

  SUBCASE("single candidate always ranks first") {
    CHECK(rank_from_scores({0.3f}, 0) == 1);
  }
}

TEST_CASE("rank_from_scores agrees with a full-sort oracle, including ties") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> scores(100);
    for (float& v : scores) {
      // coarse grid forces plenty of ties
      v = static_cast<float>(rng_below(rng, 25)) / 8.0f;
    }
    const std::size_t truth = rng_below(rng, scores.size());

    // oracle: stable sort desc; optimistic rank = first position with the
    // true score, pessimistic = last
    std::vector<float> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<float>());
    const auto first = std::find(sorted.begin(), sorted.end(), scores[truth]);
    const auto last = std::find_if(first, sorted.end(),
                                   [&](float v) { return v != scores[truth]; });
    const std::uint32_t opt = static_cast<std::uint32_t>(first - sorted.begin()) + 1;
    const std::uint32_t pes = static_cast<std::uint32_t>(last - sorted.begin());

    CHECK(rank_from_scores(scores, truth) == opt);
    CHECK(rank_from_scores(scores, truth, true) == pes);
  }
}

TEST_CASE("rank is invariant under strictly monotone score transforms") {
  Rng rng(77);
  std::vector<float> scores(40);
  for (float& v : scores) v = static_cast<float>(rng_uniform(rng, -3, 3));
  std::vector<float> mapped(40);
  for (std::size_t i = 0; i < 40; ++i) {
    mapped[i] = 2.0f * std::tanh(scores[i]) + 5.0f;
  }
  for (std::size_t t = 0; t < 40; ++t) {
    CHECK(rank_from_scores(scores, t) == rank_from_scores(mapped, t));
  }
}

TEST_CASE("mrr and hit@k direct formula checks") {
  CHECK(mrr({1, 1, 1}) == doctest::Approx(1.0));
  CHECK(hit_at({1, 1, 1}, 1) == doctest::Approx(1.0));

  std::vector<std::uint32_t> ranks{1, 4, 10};
  CHECK(mrr(ranks) == doctest::Approx((1.0 + 0.25 + 0.1) / 3).epsilon(1e-12));
  CHECK(hit_at(ranks, 5) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(hit_at(ranks, 10) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(hit_at({11, 30, 99}, 10) == doctest::Approx(0.0));

  CHECK_THROWS_AS(mrr({}), Error);
  CHECK_THROWS_AS(hit_at({}, 5), Error);
}

TEST_CASE("hit@k is monotone in k for random rank lists") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint32_t> ranks;
    for (int i = 0; i < 50; ++i) {
      ranks.push_back(1 + static_cast<std::uint32_t>(rng_below(rng, 60)));
    }
    const double h1 = hit_at(ranks, 1), h5 = hit_at(ranks, 5), h10 = hit_at(ranks, 10);
    CHECK(h1 <= h5);
    CHECK(h5 <= h10);
    CHECK(h10 <= 1.0);
    CHECK(mrr(ranks) >= h1);
  }
}

TEST_CASE("over_time buckets by floor(gap / width)") {
  auto rr = [](Timestamp qt, Timestamp st, std::uint32_t rank) {
    RankResult r;
    r.query = Quadruple{0, 0, 0, qt};
    r.support_time = st;
    r.rank = rank;
    return r;
  };

  SUBCASE("boundary gaps") {
    auto buckets = over_time({rr(10, 10, 1), rr(17, 10, 2)}, 7);
    REQUIRE(buckets.size() == 2);
    CHECK(buckets[0].index == 0);
    CHECK(buckets[0].count == 1);
    CHECK(buckets[1].index == 1);
    CHECK(buckets[1].count == 1);
  }

  SUBCASE("all gaps below the width collapse into bucket 0") {
    auto buckets = over_time({rr(10, 10, 1), rr(13, 10, 4), rr(16, 10, 9)}, 7);
    REQUIRE(buckets.size() == 1);
    CHECK(buckets[0].index == 0);
    CHECK(buckets[0].count == 3);
  }

  SUBCASE("negative gap is a split violation") {
    CHECK_THROWS_AS(over_time({rr(5, 10, 1)}, 7), Error);
  }

  SUBCASE("grouping oracle on a 30-result fixture") {
    Rng rng(8);
    std::vector<RankResult> results;
    for (int i = 0; i < 30; ++i) {
      results.push_back(rr(100 + static_cast<Timestamp>(rng_below(rng, 50)), 100,
                           1 + static_cast<std::uint32_t>(rng_below(rng, 20))));
    }
    auto buckets = over_time(results, 7);

    std::map<std::uint32_t, std::vector<std::uint32_t>> expect;
    for (const RankResult& r : results) {
      expect[(r.query.time - r.support_time) / 7].push_back(r.rank);
    }
    REQUIRE(buckets.size() == expect.size());
    std::size_t total = 0;
    for (const TimeBucket& b : buckets) {
      const auto& ranks = expect.at(b.index);
      CHECK(b.count == ranks.size());
      CHECK(b.mrr == doctest::Approx(mrr(ranks)).epsilon(1e-12));
      CHECK(b.hit10 == doctest::Approx(hit_at(ranks, 10)).epsilon(1e-12));
      total += b.count;
    }
    CHECK(total == results.size());
  }
}

TEST_CASE("evaluate_split aggregates match direct per-query recomputation") {
  DatasetArtifacts art = fixtures::synth_artifacts();
  EncoderConfig enc = fixtures::small_encoder();
  const TemporalKG graph = visible_graph(art.split, art.vocab);
  ModelParams params = init_params<float>(graph.entity_count(),
                                          graph.relation_count_internal(), enc, 3);
  EvalConfig ec;
  ec.max_queries = 24;
  MetricsReport report = evaluate_split(MetaPartition::MetaTest, art, graph,
                                        params, enc, ec);
  REQUIRE(report.overall.count > 0);

  // per-relation counts sum to the total
  std::size_t sum = 0;
  for (const auto& [name, block] : report.per_relation) sum += block.count;
  CHECK(sum == report.overall.count);

  // hand aggregation over the same protocol
  std::vector<std::uint32_t> ranks;
  for (RelationId r : art.split.relations_in(MetaPartition::MetaTest)) {
    const auto& quads = art.split.task_relations.at(r);
    if (quads.empty()) continue;
    const Quadruple support = quads.front();
    for (const Quadruple& q : quads) {
      if (q == support) continue;
      if (ranks.size() >= ec.max_queries) break;
      ranks.push_back(rank_query(q, support, params, graph, enc));
    }
    if (ranks.size() >= ec.max_queries) break;
  }
  REQUIRE(ranks.size() == report.overall.count);
  CHECK(report.overall.mrr == doctest::Approx(mrr(ranks)).epsilon(1e-12));
  CHECK(report.overall.hit10 == doctest::Approx(hit_at(ranks, 10)).epsilon(1e-12));

  // bucket counts sum to the result count
  std::size_t bucket_total = 0;
  for (const TimeBucket& b : report.over_time_buckets) bucket_total += b.count;
  CHECK(bucket_total == report.overall.count);

  SUBCASE("threaded ranking gives identical results") {
    EvalConfig ec4 = ec;
    ec4.threads = 4;
    MetricsReport threaded = evaluate_split(MetaPartition::MetaTest, art, graph,
                                            params, enc, ec4);
    CHECK(threaded.overall.mrr == report.overall.mrr);
    CHECK(threaded.overall.hit10 == report.overall.hit10);
  }
}

TEST_CASE("evaluate_split flags single-quad relations and empty partitions") {
  DatasetArtifacts art = fixtures::synth_artifacts();
  EncoderConfig enc = fixtures::small_encoder();
  const TemporalKG graph = visible_graph(art.split, art.vocab);
  ModelParams params = init_params<float>(graph.entity_count(),
                                          graph.relation_count_internal(), enc, 3);

  // shrink the test partition's single relation to one quad
  DatasetArtifacts degen = art;
  RelationId r = degen.split.relations_in(MetaPartition::MetaTest)[0];
  degen.split.task_relations[r].resize(1);
  EvalConfig ec;
  MetricsReport report = evaluate_split(MetaPartition::MetaTest, degen, graph,
                                        params, enc, ec);
  CHECK(report.overall.count == 0);
  CHECK(!report.warnings.empty());

  // empty partition errors
  DatasetArtifacts none = art;
  for (auto& [rel, p] : none.split.partition) {
    if (p == MetaPartition::MetaTest) p = MetaPartition::MetaTrain;
  }
  CHECK_THROWS_AS(
      evaluate_split(MetaPartition::MetaTest, none, graph, params, enc, ec),
      Error);
}

TEST_CASE("random-rank MRR approaches the harmonic-number expectation") {
  // sanity anchor: E[1/rank] over uniform ranks in [1, n] is H(n)/n
  const std::size_t n = 50;
  double hn = 0.0, h2 = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    hn += 1.0 / static_cast<double>(k);
    h2 += 1.0 / static_cast<double>(k * k);
  }
  const double mean = hn / n;
  const double var = h2 / n - mean * mean;

  Rng rng(5150);
  const std::size_t trials = 1000;
  std::vector<std::uint32_t> ranks;
  for (std::size_t i = 0; i < trials; ++i) {
    ranks.push_back(1 + static_cast<std::uint32_t>(rng_below(rng, n)));
  }
  const double sigma = std::sqrt(var / static_cast<double>(trials));
  CHECK(std::abs(mrr(ranks) - mean) < 3.0 * sigma);
}
