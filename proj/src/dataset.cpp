#include "tkg/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "tkg/rng.hpp"

namespace tkg {

const char* partition_name(MetaPartition p) {
  switch (p) {
    case MetaPartition::MetaTrain: return "meta_train";
    case MetaPartition::MetaVal: return "meta_val";
    case MetaPartition::MetaTest: return "meta_test";
  }
  return "?";
}

MetaPartition partition_from_name(const std::string& name) {
  if (name == "meta_train") return MetaPartition::MetaTrain;
  if (name == "meta_val") return MetaPartition::MetaVal;
  if (name == "meta_test") return MetaPartition::MetaTest;
  throw Error(ErrorKind::FormatError, "unknown partition: " + name);
}

FrequencySplit split_by_frequency(const std::vector<Quadruple>& quads,
                                  const FrequencyThresholds& th) {
  th.validate();
  std::map<RelationId, std::uint64_t> counts;
  for (const Quadruple& q : quads) counts[q.relation]++;
  FrequencySplit out;
  for (const Quadruple& q : quads) {
    const std::uint64_t c = counts[q.relation];
    if (c > th.high) {
      out.background.push_back(q);
    } else if (c >= th.low) {
      out.sparse[q.relation].push_back(q);
    } else {
      out.dropped.push_back(q);
    }
  }
  if (out.sparse.empty()) {
    throw Error(ErrorKind::EmptySparseSet,
                "no relation has frequency in [" + std::to_string(th.low) + ", " +
                    std::to_string(th.high) + "]");
  }
  return out;
}

TimeWindows cut_time_windows(const std::vector<Quadruple>& quads, std::uint32_t w) {
  if (w < 1) throw Error(ErrorKind::InvalidConfig, "episode length w must be >= 1");
  if (quads.empty()) throw Error(ErrorKind::SpanTooShort, "no quadruples");
  Timestamp max_time = 0;
  for (const Quadruple& q : quads) max_time = std::max(max_time, q.time);
  const std::uint64_t dataset_end = static_cast<std::uint64_t>(max_time) + 1;
  if (dataset_end <= 2ull * w) {
    throw Error(ErrorKind::SpanTooShort,
                "dataset spans " + std::to_string(dataset_end) +
                    " ticks, need more than " + std::to_string(2ull * w));
  }
  TimeWindows tw;
  tw.dataset_end = static_cast<Timestamp>(dataset_end);
  tw.val_end = static_cast<Timestamp>(dataset_end - w);
  tw.train_end = static_cast<Timestamp>(dataset_end - 2ull * w);
  tw.w = w;
  return tw;
}

namespace {

bool in_window(const Quadruple& q, MetaPartition p, const TimeWindows& tw) {
  switch (p) {
    case MetaPartition::MetaTrain: return q.time < tw.train_end;
    case MetaPartition::MetaVal:
      return q.time >= tw.train_end && q.time < tw.val_end;
    case MetaPartition::MetaTest:
      return q.time >= tw.val_end && q.time < tw.dataset_end;
  }
  return false;
}

bool has_quad_in_window(const std::vector<Quadruple>& quads, MetaPartition p,
                        const TimeWindows& tw) {
  for (const Quadruple& q : quads) {
    if (in_window(q, p, tw)) return true;
  }
  return false;
}

}  // namespace

std::map<RelationId, MetaPartition> assign_meta_partitions(
    const std::map<RelationId, std::vector<Quadruple>>& sparse,
    const TimeWindows& windows, std::size_t n_train, std::size_t n_val,
    std::size_t n_test, std::uint64_t seed) {
  std::vector<RelationId> rels;
  for (const auto& [r, _] : sparse) rels.push_back(r);
  if (n_train == 0) {
    if (n_val + n_test > rels.size()) {
      throw Error(ErrorKind::InfeasiblePartition,
                  "need " + std::to_string(n_val + n_test) + " relations, have " +
                      std::to_string(rels.size()));
    }
    n_train = rels.size() - n_val - n_test;
  }
  if (n_train + n_val + n_test > rels.size()) {
    throw Error(ErrorKind::InfeasiblePartition,
                "need " + std::to_string(n_train + n_val + n_test) +
                    " relations, have " + std::to_string(rels.size()));
  }

  Rng rng(seed);
  rng_shuffle(rng, rels);
  std::map<RelationId, MetaPartition> part;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n_val; ++i) part[rels[idx++]] = MetaPartition::MetaVal;
  for (std::size_t i = 0; i < n_test; ++i) part[rels[idx++]] = MetaPartition::MetaTest;
  for (std::size_t i = 0; i < n_train; ++i) part[rels[idx++]] = MetaPartition::MetaTrain;

  // Swap repair: a val/test relation with an empty window trades places with
  // the smallest-id train relation that does have quads there.
  for (MetaPartition target : {MetaPartition::MetaVal, MetaPartition::MetaTest}) {
    std::vector<RelationId> assigned;
    for (const auto& [r, p] : part) {
      if (p == target) assigned.push_back(r);
    }
    for (RelationId r : assigned) {
      if (has_quad_in_window(sparse.at(r), target, windows)) continue;
      bool swapped = false;
      for (auto& [cand, p] : part) {
        if (p != MetaPartition::MetaTrain) continue;
        if (!has_quad_in_window(sparse.at(cand), target, windows)) continue;
        part[r] = MetaPartition::MetaTrain;
        part[cand] = target;
        swapped = true;
        break;
      }
      if (!swapped) {
        throw Error(ErrorKind::InfeasiblePartition,
                    std::string("no relation has quads inside the ") +
                        partition_name(target) + " window");
      }
    }
  }
  return part;
}

MetaSplit build_meta_split(const std::vector<Quadruple>& deduped,
                           const FrequencyThresholds& th, std::uint32_t w,
                           std::size_t n_val, std::size_t n_test,
                           std::uint64_t seed) {
  FrequencySplit freq = split_by_frequency(deduped, th);
  TimeWindows tw = cut_time_windows(deduped, w);
  MetaSplit split;
  split.windows = tw;
  split.background = deduplicate(std::move(freq.background));
  split.partition =
      assign_meta_partitions(freq.sparse, tw, 0, n_val, n_test, seed);
  for (const auto& [r, p] : split.partition) {
    std::vector<Quadruple> kept;
    for (const Quadruple& q : freq.sparse.at(r)) {
      if (in_window(q, p, tw)) kept.push_back(q);
    }
    std::sort(kept.begin(), kept.end(), quad_less);
    split.task_relations[r] = std::move(kept);
  }
  return split;
}

std::vector<RelationId> MetaSplit::relations_in(MetaPartition p) const {
  std::vector<RelationId> out;
  for (const auto& [r, pp] : partition) {
    if (pp == p) out.push_back(r);
  }
  return out;
}

std::vector<Quadruple> MetaSplit::quads_in(MetaPartition p) const {
  std::vector<Quadruple> out;
  for (RelationId r : relations_in(p)) {
    const auto& quads = task_relations.at(r);
    out.insert(out.end(), quads.begin(), quads.end());
  }
  return out;
}

TemporalKG visible_graph(const MetaSplit& split, const Vocab& vocab) {
  std::vector<Quadruple> edges = split.background;
  for (const auto& [r, p] : split.partition) {
    if (p != MetaPartition::MetaTrain) continue;
    const auto& quads = split.task_relations.at(r);
    edges.insert(edges.end(), quads.begin(), quads.end());
  }
  return TemporalKG(std::move(edges), vocab);
}

DatasetArtifacts make_artifacts(Vocab vocab, MetaSplit split) {
  DatasetArtifacts art;
  art.vocab = std::move(vocab);
  // Line order: train relations by id, then val, then test.
  std::size_t line = 0;
  for (MetaPartition p : {MetaPartition::MetaTrain, MetaPartition::MetaVal,
                          MetaPartition::MetaTest}) {
    for (RelationId r : split.relations_in(p)) {
      for (const Quadruple& q : split.task_relations.at(r)) {
        art.fewshot_lines.push_back(q);
        art.lines_by_relation[r].push_back(line++);
      }
    }
  }
  art.split = std::move(split);
  return art;
}

HistoryCache build_history_cache(const MetaSplit& split, const Vocab& vocab,
                                 std::uint32_t history_len, std::uint32_t n_max) {
  TemporalKG g = visible_graph(split, vocab);
  HistoryCache cache;
  cache.history_len = history_len;
  cache.n_max = n_max;
  for (MetaPartition p : {MetaPartition::MetaTrain, MetaPartition::MetaVal,
                          MetaPartition::MetaTest}) {
    for (RelationId r : split.relations_in(p)) {
      for (const Quadruple& q : split.task_relations.at(r)) {
        cache.subject.push_back(
            temporal_neighborhood(g, q.subject, q.time, history_len, n_max));
        cache.object.push_back(
            temporal_neighborhood(g, q.object, q.time, history_len, n_max));
      }
    }
  }
  return cache;
}

namespace {

constexpr char kHistMagic[6] = {'T', 'K', 'G', 'H', '1', '\n'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_window(std::ostream& out, const HistoryWindow& w) {
  for (const auto& snap : w.snapshots) {
    put_u32(out, static_cast<std::uint32_t>(snap.size()));
    for (const auto& [r, e] : snap) {
      put_u32(out, r);
      put_u32(out, e);
    }
  }
}

HistoryWindow read_window(std::istream& in, std::uint32_t history_len) {
  HistoryWindow w;
  w.snapshots.resize(history_len);
  for (auto& snap : w.snapshots) {
    const std::uint32_t n = get_u32(in);
    snap.resize(n);
    for (auto& [r, e] : snap) {
      r = get_u32(in);
      e = get_u32(in);
    }
  }
  return w;
}

}  // namespace

void save_history_cache(const std::string& path, const HistoryCache& cache) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out.write(kHistMagic, sizeof(kHistMagic));
  put_u32(out, static_cast<std::uint32_t>(cache.subject.size()));
  put_u32(out, cache.history_len);
  put_u32(out, cache.n_max);
  for (std::size_t i = 0; i < cache.subject.size(); ++i) {
    write_window(out, cache.subject[i]);
    write_window(out, cache.object[i]);
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

HistoryCache load_history_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kHistMagic, sizeof(kHistMagic)) != 0) {
    throw Error(ErrorKind::FormatError, path + ": bad history cache magic");
  }
  HistoryCache cache;
  const std::uint32_t records = get_u32(in);
  cache.history_len = get_u32(in);
  cache.n_max = get_u32(in);
  for (std::uint32_t i = 0; i < records; ++i) {
    cache.subject.push_back(read_window(in, cache.history_len));
    cache.object.push_back(read_window(in, cache.history_len));
  }
  if (!in) throw Error(ErrorKind::FormatError, path + ": truncated history cache");
  return cache;
}

void write_dataset_dir(const std::string& dir, const DatasetArtifacts& art,
                       const HistoryCache& cache) {
  write_quadruple_file(dir + "/pretrain.tsv", art.split.background, art.vocab);
  write_quadruple_file(dir + "/fewshot.tsv", art.fewshot_lines, art.vocab);
  art.vocab.save_json(dir + "/vocab.json");

  nlohmann::ordered_json j;
  for (const auto& [r, lines] : art.lines_by_relation) {
    nlohmann::ordered_json rec;
    rec["partition"] = partition_name(art.split.partition.at(r));
    rec["lines"] = lines;
    j[art.vocab.relations[r]] = rec;
  }
  j["trainEnd"] = art.split.windows.train_end;
  j["valEnd"] = art.split.windows.val_end;
  j["datasetEnd"] = art.split.windows.dataset_end;
  j["w"] = art.split.windows.w;
  std::ofstream out(dir + "/split.json", std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + dir + "/split.json");
  out << j.dump(2) << "\n";

  save_history_cache(dir + "/hist.bin", cache);
}

DatasetArtifacts load_dataset_dir(const std::string& dir) {
  DatasetArtifacts art;
  art.vocab = Vocab::load_json(dir + "/vocab.json");

  std::ifstream in(dir + "/split.json", std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + dir + "/split.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, dir + "/split.json: " + e.what());
  }
  art.split.windows.train_end = j.at("trainEnd").get<Timestamp>();
  art.split.windows.val_end = j.at("valEnd").get<Timestamp>();
  art.split.windows.dataset_end = j.at("datasetEnd").get<Timestamp>();
  art.split.windows.w = j.at("w").get<std::uint32_t>();

  art.split.background = read_quadruple_file(dir + "/pretrain.tsv", art.vocab,
                                             ParseMode::Strict);
  art.fewshot_lines = read_quadruple_file(dir + "/fewshot.tsv", art.vocab,
                                          ParseMode::Strict);

  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "trainEnd" || it.key() == "valEnd" || it.key() == "datasetEnd" ||
        it.key() == "w") {
      continue;
    }
    auto rid = art.vocab.find_relation(it.key());
    if (!rid) {
      throw Error(ErrorKind::FormatError,
                  dir + "/split.json: unknown relation " + it.key());
    }
    art.split.partition[*rid] = partition_from_name(it.value().at("partition"));
    std::vector<std::size_t> lines =
        it.value().at("lines").get<std::vector<std::size_t>>();
    auto& quads = art.split.task_relations[*rid];
    for (std::size_t line : lines) {
      if (line >= art.fewshot_lines.size()) {
        throw Error(ErrorKind::FormatError,
                    dir + "/split.json: line index out of range");
      }
      quads.push_back(art.fewshot_lines[line]);
    }
    art.lines_by_relation[*rid] = std::move(lines);
  }
  return art;
}

}  // namespace tkg
