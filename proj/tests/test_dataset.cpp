#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "tkg/dataset.hpp"
#include "tkg/rng.hpp"
#include "tkg/synth.hpp"

using namespace tkg;
namespace fs = std::filesystem;

namespace {

Quadruple q(EntityId s, RelationId r, EntityId o, Timestamp t) {
  return Quadruple{s, r, o, t};
}

// n quads for relation r at evenly spread times in [0, horizon)
void add_relation(std::vector<Quadruple>& quads, RelationId r, int count,
                  Timestamp horizon, Rng& rng) {
  std::set<std::tuple<EntityId, EntityId, Timestamp>> seen;
  while (static_cast<int>(seen.size()) < count) {
    EntityId s = static_cast<EntityId>(rng_below(rng, 30));
    EntityId o = static_cast<EntityId>(rng_below(rng, 30));
    Timestamp t = static_cast<Timestamp>(rng_below(rng, horizon));
    if (seen.insert({s, o, t}).second) quads.push_back(q(s, r, o, t));
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

Vocab ids_vocab(std::uint32_t entities, std::uint32_t relations, std::uint32_t times) {
  Vocab v;
  for (std::uint32_t i = 0; i < entities; ++i) {
    v.entity_id("e" + std::to_string(i), ParseMode::Grow);
  }
  for (std::uint32_t i = 0; i < relations; ++i) {
    v.relation_id("r" + std::to_string(i), ParseMode::Grow);
  }
  for (std::uint32_t i = 0; i < times; ++i) {
    v.time_id(std::to_string(i), ParseMode::Grow);
  }
  v.finalize_times(TimeOrder::Numeric);
  return v;
}

}  // namespace

TEST_CASE("split_by_frequency applies the thresholds directly") {
  std::vector<Quadruple> quads;
  Rng rng(1);
  add_relation(quads, 0, 600, 50, rng);  // background
  add_relation(quads, 1, 100, 50, rng);  // sparse
  add_relation(quads, 2, 30, 50, rng);   // dropped
  quads = deduplicate(quads);

  FrequencySplit out = split_by_frequency(quads, {50, 500});
  CHECK(out.background.size() == 600);
  REQUIRE(out.sparse.count(1) == 1);
  CHECK(out.sparse.at(1).size() == 100);
  CHECK(out.sparse.size() == 1);
  CHECK(out.dropped.size() == 30);
}

TEST_CASE("split_by_frequency keeps the lower bound inclusive") {
  std::vector<Quadruple> quads;
  Rng rng(2);
  add_relation(quads, 0, 50, 60, rng);
  add_relation(quads, 1, 50, 60, rng);
  quads = deduplicate(quads);
  FrequencySplit out = split_by_frequency(quads, {50, 500});
  CHECK(out.background.empty());
  CHECK(out.dropped.empty());
  CHECK(out.sparse.size() == 2);
}

TEST_CASE("split_by_frequency errors when the sparse band is empty") {
  std::vector<Quadruple> quads;
  Rng rng(3);
  add_relation(quads, 0, 600, 50, rng);
  quads = deduplicate(quads);
  try {
    split_by_frequency(quads, {50, 500});
    FAIL("expected EmptySparseSet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptySparseSet);
  }
}

TEST_CASE("split counts match a counting oracle on a generated fixture") {
  SynthSpec spec;
  spec.seed = 404;
  SynthResult gen = generate_synthetic(spec);
  Vocab vocab;
  std::vector<Quadruple> quads;
  for (const std::string& line : gen.lines) {
    quads.push_back(parse_quadruple_line(line, vocab, ParseMode::Grow));
  }
  std::vector<std::uint32_t> remap = vocab.finalize_times(TimeOrder::Auto);
  for (Quadruple& x : quads) x.time = remap[x.time];
  quads = deduplicate(quads);

  FrequencyThresholds th{gen.truth.suggested_low, gen.truth.suggested_high};
  FrequencySplit out = split_by_frequency(quads, th);

  // oracle: count per relation over the deduplicated list
  std::map<RelationId, std::size_t> counts;
  for (const Quadruple& x : quads) counts[x.relation]++;
  std::size_t want_background = 0, want_sparse = 0, want_dropped = 0;
  for (const auto& [r, c] : counts) {
    if (c > th.high) {
      want_background += c;
    } else if (c >= th.low) {
      want_sparse += c;
    } else {
      want_dropped += c;
    }
  }
  std::size_t got_sparse = 0;
  for (const auto& [r, v] : out.sparse) got_sparse += v.size();
  CHECK(out.background.size() == want_background);
  CHECK(got_sparse == want_sparse);
  CHECK(out.dropped.size() == want_dropped);
  CHECK(got_sparse > 0);
}

TEST_CASE("cut_time_windows splits the tail into two w-wide windows") {
  std::vector<Quadruple> quads{q(0, 0, 1, 0), q(0, 0, 1, 359)};
  TimeWindows tw = cut_time_windows(quads, 120);
  CHECK(tw.train_end == 120);
  CHECK(tw.val_end == 240);
  CHECK(tw.dataset_end == 360);
}

TEST_CASE("cut_time_windows rejects too-short spans") {
  std::vector<Quadruple> quads{q(0, 0, 1, 0), q(0, 0, 1, 100)};
  try {
    cut_time_windows(quads, 120);
    FAIL("expected SpanTooShort");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpanTooShort);
  }
}

TEST_CASE("assign_meta_partitions draws requested sizes deterministically") {
  std::map<RelationId, std::vector<Quadruple>> sparse;
  Rng rng(5);
  TimeWindows tw{120, 240, 360, 120};
  for (RelationId r = 0; r < 85; ++r) {
    std::vector<Quadruple> quads;
    for (int i = 0; i < 6; ++i) {
      quads.push_back(q(0, r, 1, static_cast<Timestamp>(rng_below(rng, 360))));
    }
    sparse[r] = quads;
  }

  auto part = assign_meta_partitions(sparse, tw, 66, 5, 14, 7);
  std::size_t train = 0, val = 0, test = 0;
  for (const auto& [r, p] : part) {
    if (p == MetaPartition::MetaTrain) ++train;
    if (p == MetaPartition::MetaVal) ++val;
    if (p == MetaPartition::MetaTest) ++test;
  }
  CHECK(train == 66);
  CHECK(val == 5);
  CHECK(test == 14);

  auto part2 = assign_meta_partitions(sparse, tw, 66, 5, 14, 7);
  CHECK(part == part2);

  SUBCASE("zero val/test sends everything to meta-train") {
    auto all_train = assign_meta_partitions(sparse, tw, 0, 0, 0, 7);
    for (const auto& [r, p] : all_train) CHECK(p == MetaPartition::MetaTrain);
    CHECK(all_train.size() == 85);
  }
}

TEST_CASE("assign_meta_partitions swaps infeasible val/test draws by relation id") {
  // relation 0 only has early quads; relation 1 covers the val window
  std::map<RelationId, std::vector<Quadruple>> sparse;
  sparse[0] = {q(0, 0, 1, 5), q(0, 0, 2, 10)};
  sparse[1] = {q(0, 1, 1, 5), q(0, 1, 2, 130)};
  TimeWindows tw{120, 240, 360, 120};

  // find a seed that initially puts relation 0 into val
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    auto part = assign_meta_partitions(sparse, tw, 1, 1, 0, seed);
    // regardless of the draw, feasibility forces relation 1 into val
    CHECK(part.at(1) == MetaPartition::MetaVal);
    CHECK(part.at(0) == MetaPartition::MetaTrain);
  }
}

TEST_CASE("assign_meta_partitions reports infeasible windows") {
  std::map<RelationId, std::vector<Quadruple>> sparse;
  sparse[0] = {q(0, 0, 1, 5), q(0, 0, 2, 10)};
  sparse[1] = {q(0, 1, 1, 15), q(0, 1, 2, 20)};
  TimeWindows tw{120, 240, 360, 120};
  try {
    assign_meta_partitions(sparse, tw, 1, 0, 1, 3);
    FAIL("expected InfeasiblePartition");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasiblePartition);
  }
}

TEST_CASE("build_meta_split window invariants hold on a synthetic fixture") {
  SynthSpec spec;
  spec.seed = 11;
  SynthResult gen = generate_synthetic(spec);
  Vocab vocab;
  std::vector<Quadruple> quads;
  for (const std::string& line : gen.lines) {
    quads.push_back(parse_quadruple_line(line, vocab, ParseMode::Grow));
  }
  std::vector<std::uint32_t> remap = vocab.finalize_times(TimeOrder::Auto);
  for (Quadruple& x : quads) x.time = remap[x.time];
  quads = deduplicate(quads);

  FrequencyThresholds th{gen.truth.suggested_low, gen.truth.suggested_high};
  MetaSplit split = build_meta_split(quads, th, 120, 2, 3, 17);

  CHECK(split.relations_in(MetaPartition::MetaVal).size() == 2);
  CHECK(split.relations_in(MetaPartition::MetaTest).size() == 3);

  for (const auto& [r, p] : split.partition) {
    for (const Quadruple& x : split.task_relations.at(r)) {
      switch (p) {
        case MetaPartition::MetaTrain:
          CHECK(x.time < split.windows.train_end);
          break;
        case MetaPartition::MetaVal:
          CHECK(x.time >= split.windows.train_end);
          CHECK(x.time < split.windows.val_end);
          break;
        case MetaPartition::MetaTest:
          CHECK(x.time >= split.windows.val_end);
          CHECK(x.time < split.windows.dataset_end);
          break;
      }
    }
  }

  // no quad in more than one output set
  std::set<std::tuple<EntityId, RelationId, EntityId, Timestamp>> seen;
  for (const Quadruple& x : split.background) {
    CHECK(seen.insert({x.subject, x.relation, x.object, x.time}).second);
  }
  for (const auto& [r, quads_r] : split.task_relations) {
    for (const Quadruple& x : quads_r) {
      CHECK(seen.insert({x.subject, x.relation, x.object, x.time}).second);
    }
  }
}

TEST_CASE("history cache layout and spot checks against recomputation") {
  SynthSpec spec;
  spec.n_entities = 20;
  spec.n_sparse_rels = 4;
  spec.horizon = 300;
  spec.seed = 21;
  SynthResult gen = generate_synthetic(spec);
  Vocab vocab;
  std::vector<Quadruple> quads;
  for (const std::string& line : gen.lines) {
    quads.push_back(parse_quadruple_line(line, vocab, ParseMode::Grow));
  }
  std::vector<std::uint32_t> remap = vocab.finalize_times(TimeOrder::Auto);
  for (Quadruple& x : quads) x.time = remap[x.time];
  quads = deduplicate(quads);
  FrequencyThresholds th{gen.truth.suggested_low, gen.truth.suggested_high};
  MetaSplit split = build_meta_split(quads, th, 100, 1, 1, 3);
  DatasetArtifacts art = make_artifacts(vocab, split);

  const std::uint32_t ell = 5, n_max = 3;
  HistoryCache cache = build_history_cache(art.split, art.vocab, ell, n_max);
  CHECK(cache.subject.size() == art.fewshot_lines.size());
  CHECK(cache.object.size() == art.fewshot_lines.size());

  TemporalKG g = visible_graph(art.split, art.vocab);
  Rng rng(31);
  for (int probe = 0; probe < 20; ++probe) {
    const std::size_t i = rng_below(rng, art.fewshot_lines.size());
    const Quadruple& x = art.fewshot_lines[i];
    HistoryWindow hs = temporal_neighborhood(g, x.subject, x.time, ell, n_max);
    HistoryWindow ho = temporal_neighborhood(g, x.object, x.time, ell, n_max);
    CHECK(cache.subject[i].snapshots == hs.snapshots);
    CHECK(cache.object[i].snapshots == ho.snapshots);
  }

  SUBCASE("binary round trip") {
    const std::string path = "hist_roundtrip.bin";
    save_history_cache(path, cache);
    HistoryCache back = load_history_cache(path);
    CHECK(back.history_len == ell);
    CHECK(back.n_max == n_max);
    REQUIRE(back.subject.size() == cache.subject.size());
    for (std::size_t i = 0; i < cache.subject.size(); ++i) {
      CHECK(back.subject[i].snapshots == cache.subject[i].snapshots);
      CHECK(back.object[i].snapshots == cache.object[i].snapshots);
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("meta quads never contribute history edges") {
  // one background quad, one meta-train quad, one val quad; the val quad's
  // edge must be invisible
  Vocab vocab = ids_vocab(6, 3, 400);
  std::vector<Quadruple> quads;
  Rng rng(41);
  // relation 0: background (needs > high)
  for (int i = 0; i < 30; ++i) {
    quads.push_back(q(static_cast<EntityId>(rng_below(rng, 6)), 0,
                      static_cast<EntityId>(rng_below(rng, 6)),
                      static_cast<Timestamp>(rng_below(rng, 360))));
  }
  quads.push_back(q(0, 0, 1, 359));  // pin the span
  // relation 1: sparse, lives in train window
  for (int i = 0; i < 6; ++i) {
    quads.push_back(q(2, 1, 3, static_cast<Timestamp>(10 + i)));
  }
  // relation 2: sparse, lives in val window
  for (int i = 0; i < 6; ++i) {
    quads.push_back(q(4, 2, 5, static_cast<Timestamp>(130 + i)));
  }
  quads = deduplicate(quads);
  MetaSplit split = build_meta_split(quads, {4, 20}, 120, 1, 0, 1);
  REQUIRE(split.relations_in(MetaPartition::MetaVal) ==
          std::vector<RelationId>{2});

  TemporalKG g = visible_graph(split, vocab);
  // edges of relation 1 (meta-train) visible
  CHECK(!g.neighbors_at(2, 10).empty());
  // edges of relation 2 (meta-val) invisible
  CHECK(g.neighbors_at(4, 130).empty());
}

TEST_CASE("dataset dir writes are byte-identical across rebuilds") {
  SynthSpec spec;
  spec.n_entities = 25;
  spec.n_sparse_rels = 5;
  spec.horizon = 300;
  spec.seed = 77;
  SynthResult gen = generate_synthetic(spec);

  auto build_into = [&](const std::string& dir) {
    Vocab vocab;
    std::vector<Quadruple> quads;
    for (const std::string& line : gen.lines) {
      quads.push_back(parse_quadruple_line(line, vocab, ParseMode::Grow));
    }
    std::vector<std::uint32_t> remap = vocab.finalize_times(TimeOrder::Auto);
    for (Quadruple& x : quads) x.time = remap[x.time];
    quads = deduplicate(quads);
    FrequencyThresholds th{gen.truth.suggested_low, gen.truth.suggested_high};
    MetaSplit split = build_meta_split(quads, th, 100, 1, 1, 5);
    DatasetArtifacts art = make_artifacts(vocab, split);
    HistoryCache cache = build_history_cache(art.split, art.vocab, 4, 3);
    fs::create_directories(dir);
    write_dataset_dir(dir, art, cache);
  };

  build_into("ds_a");
  build_into("ds_b");
  for (const char* f :
       {"pretrain.tsv", "fewshot.tsv", "vocab.json", "split.json", "hist.bin"}) {
    CHECK(read_file(std::string("ds_a/") + f) == read_file(std::string("ds_b/") + f));
  }

  SUBCASE("load_dataset_dir round-trips the artifacts") {
    DatasetArtifacts art = load_dataset_dir("ds_a");
    CHECK(!art.fewshot_lines.empty());
    CHECK(!art.split.background.empty());
    CHECK(art.split.windows.w == 100);
    // line lists address the right quads
    for (const auto& [r, lines] : art.lines_by_relation) {
      for (std::size_t line : lines) {
        CHECK(art.fewshot_lines[line].relation == r);
      }
    }
  }

  fs::remove_all("ds_a");
  fs::remove_all("ds_b");
}
