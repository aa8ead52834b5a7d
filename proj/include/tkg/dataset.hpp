#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tkg/core.hpp"

namespace tkg {

struct FrequencyThresholds {
  std::uint64_t low = 50;
  std::uint64_t high = 500;

  void validate() const {
    if (low == 0 || low >= high) {
      throw Error(ErrorKind::InvalidConfig,
                  "frequency thresholds require 0 < low < high");
    }
  }
};

enum class MetaPartition { MetaTrain, MetaVal, MetaTest };

const char* partition_name(MetaPartition p);
MetaPartition partition_from_name(const std::string& name);

struct FrequencySplit {
  std::vector<Quadruple> background;           // relations with count > high
  std::map<RelationId, std::vector<Quadruple>> sparse;  // low <= count <= high
  std::vector<Quadruple> dropped;               // count < low
};

// Relation frequency banding over a deduplicated quad list. Quads follow
// their relation. Throws EmptySparseSet when the sparse band is empty.
FrequencySplit split_by_frequency(const std::vector<Quadruple>& quads,
                                  const FrequencyThresholds& th);

struct TimeWindows {
  Timestamp train_end = 0;   // meta-train quads have t <  train_end
  Timestamp val_end = 0;     // meta-val:  train_end <= t < val_end
  Timestamp dataset_end = 0; // meta-test: val_end   <= t < dataset_end
  std::uint32_t w = 0;
};

// dataset_end = max time + 1; val/test windows are each w wide.
// Requires dataset_end > 2w.
TimeWindows cut_time_windows(const std::vector<Quadruple>& quads, std::uint32_t w);

struct MetaSplit {
  std::vector<Quadruple> background;
  // Window-filtered quads per task relation, canonical order.
  std::map<RelationId, std::vector<Quadruple>> task_relations;
  std::map<RelationId, MetaPartition> partition;
  TimeWindows windows;

  std::vector<RelationId> relations_in(MetaPartition p) const;
  // Quads of one partition in fewshot line order.
  std::vector<Quadruple> quads_in(MetaPartition p) const;
};

// Seeded draw of val/test/train relations from the sparse band, with the
// deterministic swap repair for relations that have no quad inside their
// window. n_train == 0 means "all remaining sparse relations".
std::map<RelationId, MetaPartition> assign_meta_partitions(
    const std::map<RelationId, std::vector<Quadruple>>& sparse,
    const TimeWindows& windows, std::size_t n_train, std::size_t n_val,
    std::size_t n_test, std::uint64_t seed);

// Frequency split + windows + partition assignment + window filtering.
MetaSplit build_meta_split(const std::vector<Quadruple>& deduped,
                           const FrequencyThresholds& th, std::uint32_t w,
                           std::size_t n_val, std::size_t n_test,
                           std::uint64_t seed);

// Precomputed subject/object neighborhoods for each fewshot line, always
// against background + meta-train edges only.
struct HistoryCache {
  std::uint32_t history_len = 0;
  std::uint32_t n_max = 0;
  std::vector<HistoryWindow> subject;  // index = fewshot line
  std::vector<HistoryWindow> object;
};

HistoryCache build_history_cache(const MetaSplit& split, const Vocab& vocab,
                                 std::uint32_t history_len, std::uint32_t n_max);

// hist.bin: magic "TKGH1\n"; u32 recordCount, historyLen, nMax; per record,
// per window (subject then object), per snapshot: u32 pairCount then
// pairCount x (u32 relation, u32 entity). Little-endian throughout.
void save_history_cache(const std::string& path, const HistoryCache& cache);
HistoryCache load_history_cache(const std::string& path);

// The graph whose edges histories and encoders may see: background plus
// meta-train quads. Val/test quads never contribute edges.
TemporalKG visible_graph(const MetaSplit& split, const Vocab& vocab);

struct DatasetArtifacts {
  Vocab vocab;
  MetaSplit split;
  // fewshot.tsv content: all task quads, meta-train first by relation id,
  // then val, then test; within a relation, canonical quad order.
  std::vector<Quadruple> fewshot_lines;
  std::map<RelationId, std::vector<std::size_t>> lines_by_relation;
};

DatasetArtifacts make_artifacts(Vocab vocab, MetaSplit split);

// Writes pretrain.tsv, fewshot.tsv, vocab.json, split.json, hist.bin.
void write_dataset_dir(const std::string& dir, const DatasetArtifacts& art,
                       const HistoryCache& cache);

// Reads a directory produced by write_dataset_dir.
DatasetArtifacts load_dataset_dir(const std::string& dir);

}  // namespace tkg
