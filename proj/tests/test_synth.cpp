#include <map>
#include <set>

#include "doctest.h"
#include "tkg/core.hpp"
#include "tkg/dataset.hpp"
#include "tkg/synth.hpp"

using namespace tkg;

namespace {

struct Parsed {
  Vocab vocab;
  std::vector<Quadruple> quads;
};

Parsed parse_lines(const std::vector<std::string>& lines) {
  Parsed p;
  for (const std::string& line : lines) {
    p.quads.push_back(parse_quadruple_line(line, p.vocab, ParseMode::Grow));
  }
  std::vector<std::uint32_t> remap = p.vocab.finalize_times(TimeOrder::Auto);
  for (Quadruple& q : p.quads) q.time = remap[q.time];
  p.quads = deduplicate(p.quads);
  return p;
}

}  // namespace

TEST_CASE("with zero noise every sparse event has its precursor at the lag") {
  SynthSpec spec;
  spec.noise_rate = 0.0;
  spec.seed = 5;
  SynthResult gen = generate_synthetic(spec);
  Parsed p = parse_lines(gen.lines);

  std::set<std::tuple<RelationId, EntityId, EntityId, Timestamp>> index;
  for (const Quadruple& q : p.quads) {
    index.insert({q.relation, q.subject, q.object, q.time});
  }
  std::size_t sparse_events = 0;
  for (const Quadruple& q : p.quads) {
    const std::string& rel = p.vocab.relations[q.relation];
    if (rel.rfind("sp", 0) != 0) continue;
    ++sparse_events;
    const std::string& pre = gen.truth.precursor_of.at(rel);
    RelationId pre_id = *p.vocab.find_relation(pre);
    REQUIRE(q.time >= spec.precursor_lag);
    CHECK(index.count({pre_id, q.subject, q.object,
                       q.time - spec.precursor_lag}) == 1);
  }
  CHECK(sparse_events > 0);
}

TEST_CASE("generation is deterministic under the seed") {
  SynthSpec spec;
  spec.seed = 123;
  CHECK(generate_synthetic(spec).lines == generate_synthetic(spec).lines);
  SynthSpec other = spec;
  other.seed = 124;
  CHECK(generate_synthetic(spec).lines != generate_synthetic(other).lines);
}

TEST_CASE("zero sparse relations leaves the sparse band empty downstream") {
  SynthSpec spec;
  spec.n_sparse_rels = 0;
  SynthResult gen = generate_synthetic(spec);
  Parsed p = parse_lines(gen.lines);
  try {
    split_by_frequency(p.quads, {gen.truth.suggested_low, gen.truth.suggested_high});
    FAIL("expected EmptySparseSet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptySparseSet);
  }
}

TEST_CASE("calibrated counts put precursors above high and sparse in band") {
  SynthSpec spec;  // defaults: 50 entities, horizon 360
  spec.seed = 9;
  SynthResult gen = generate_synthetic(spec);
  Parsed p = parse_lines(gen.lines);

  std::map<std::string, std::size_t> counts;
  for (const Quadruple& q : p.quads) counts[p.vocab.relations[q.relation]]++;
  for (const auto& [name, count] : counts) {
    if (name.rfind("fr", 0) == 0) {
      CHECK(count > gen.truth.suggested_high);
    } else {
      CHECK(count >= gen.truth.suggested_low);
      CHECK(count <= gen.truth.suggested_high);
    }
  }
  CHECK(p.vocab.entity_count() == spec.n_entities);
}

TEST_CASE("generated data passes the dataset builder end to end") {
  SynthSpec spec;
  spec.seed = 33;
  SynthResult gen = generate_synthetic(spec);
  Parsed p = parse_lines(gen.lines);
  MetaSplit split = build_meta_split(
      p.quads, {gen.truth.suggested_low, gen.truth.suggested_high}, 120, 2, 3, 1);
  CHECK(!split.background.empty());
  CHECK(split.relations_in(MetaPartition::MetaTrain).size() > 0);
}
