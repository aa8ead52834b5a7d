#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tkg/error.hpp"

namespace tkg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
// Dense integer ticks at dataset granularity (days, 15-minute slots, ...).
using Timestamp = std::uint32_t;

struct Quadruple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
  Timestamp time = 0;

  friend bool operator==(const Quadruple&, const Quadruple&) = default;
};

// Canonical order used for every serialized quadruple list.
inline bool quad_less(const Quadruple& a, const Quadruple& b) {
  if (a.time != b.time) return a.time < b.time;
  if (a.subject != b.subject) return a.subject < b.subject;
  if (a.relation != b.relation) return a.relation < b.relation;
  return a.object < b.object;
}

// How raw time labels are ordered when densified into ticks.
//   numeric: every label must parse as a base-10 integer, ordered numerically
//   lex:     labels ordered lexicographically (works for ISO dates)
//   auto:    numeric if all labels parse as integers, lex otherwise
enum class TimeOrder { Auto, Numeric, Lex };

enum class ParseMode { Strict, Grow };

class Vocab {
 public:
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<std::string> times;

  EntityId entity_id(const std::string& name, ParseMode mode);
  RelationId relation_id(const std::string& name, ParseMode mode);
  std::uint32_t time_id(const std::string& label, ParseMode mode);

  std::optional<EntityId> find_entity(const std::string& name) const;
  std::optional<RelationId> find_relation(const std::string& name) const;
  std::optional<std::uint32_t> find_time(const std::string& label) const;

  std::size_t entity_count() const { return entities.size(); }
  std::size_t relation_count() const { return relations.size(); }
  std::size_t time_count() const { return times.size(); }

  // Reorders `times` by the requested order and returns old-id -> tick.
  // After this, time id i is the i-th tick of the dataset.
  std::vector<std::uint32_t> finalize_times(TimeOrder order);

  void save_json(const std::string& path) const;
  static Vocab load_json(const std::string& path);

 private:
  std::unordered_map<std::string, std::uint32_t> entity_ids_;
  std::unordered_map<std::string, std::uint32_t> relation_ids_;
  std::unordered_map<std::string, std::uint32_t> time_ids_;

  static std::uint32_t intern(std::vector<std::string>& list,
                              std::unordered_map<std::string, std::uint32_t>& map,
                              const std::string& name, ParseMode mode,
                              const char* what);
};

// One tab-separated "s\tr\to\tt" line. In Grow mode unseen symbols are
// appended to the vocab; Strict mode rejects them. `order` == Numeric
// additionally validates the time field.
Quadruple parse_quadruple_line(const std::string& line, Vocab& vocab,
                               ParseMode mode, TimeOrder order = TimeOrder::Auto);

// Distinct (s,r,o,t) tuples in canonical (time, s, r, o) order.
std::vector<Quadruple> deduplicate(std::vector<Quadruple> quads);

using NeighborPair = std::pair<RelationId, EntityId>;  // (relation, entity)

// The l-step window of neighbor snapshots ending just before the anchor time.
// snapshots[k] holds the pairs at tau = anchor - l + k; empty list when the
// entity had no events at tau (or tau < 0).
struct HistoryWindow {
  Timestamp anchor = 0;
  std::vector<std::vector<NeighborPair>> snapshots;
};

// Immutable time-indexed adjacency over a quadruple set. Every quad
// (s,r,o,t) contributes (s,t):(r,o) and the inverse entry
// (o,t):(r + |R|, s); internal relation ids therefore live in [0, 2|R|).
class TemporalKG {
 public:
  TemporalKG(std::vector<Quadruple> quads, Vocab vocab);

  const std::vector<Quadruple>& quads() const { return quads_; }
  const Vocab& vocab() const { return vocab_; }

  std::size_t entity_count() const { return vocab_.entity_count(); }
  // Original relations plus their inverses.
  std::size_t relation_count_internal() const {
    return 2 * vocab_.relation_count();
  }
  RelationId inverse_relation(RelationId r) const {
    return r + static_cast<RelationId>(vocab_.relation_count());
  }

  // All (r, e_j) adjacent to e at exactly time tau, sorted by (r, e_j).
  // Returns an empty list when the entity has no events then.
  const std::vector<NeighborPair>& neighbors_at(EntityId e, Timestamp tau) const;

  std::size_t adjacency_entry_count() const { return adjacency_entries_; }

  Timestamp max_time() const { return max_time_; }

 private:
  std::vector<Quadruple> quads_;
  Vocab vocab_;
  std::unordered_map<std::uint64_t, std::vector<NeighborPair>> by_entity_time_;
  std::size_t adjacency_entries_ = 0;
  Timestamp max_time_ = 0;

  static std::uint64_t key(EntityId e, Timestamp t) {
    return (static_cast<std::uint64_t>(e) << 32) | t;
  }
};

// Exactly l snapshots for tau in {t-l, ..., t-1}, each capped at n_max pairs
// (first n_max under (r, e_j) order). Pure in all arguments.
HistoryWindow temporal_neighborhood(const TemporalKG& g, EntityId e, Timestamp t,
                                    std::uint32_t history_len,
                                    std::uint32_t n_max);

// Tab-separated quadruple text I/O (UTF-8, LF, no header). Lines carry the
// raw symbol names so files round-trip through the vocab.
std::vector<Quadruple> read_quadruple_file(const std::string& path, Vocab& vocab,
                                           ParseMode mode,
                                           TimeOrder order = TimeOrder::Auto);
void write_quadruple_file(const std::string& path,
                          const std::vector<Quadruple>& quads,
                          const Vocab& vocab);

}  // namespace tkg
