#include "tkg/core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tkg {

namespace {

bool parse_u32(const std::string& s, std::uint32_t& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::uint32_t Vocab::intern(std::vector<std::string>& list,
                            std::unordered_map<std::string, std::uint32_t>& map,
                            const std::string& name, ParseMode mode,
                            const char* what) {
  auto it = map.find(name);
  if (it != map.end()) return it->second;
  if (mode == ParseMode::Strict) {
    throw Error(ErrorKind::UnknownSymbol,
                std::string("unknown ") + what + ": " + name);
  }
  std::uint32_t id = static_cast<std::uint32_t>(list.size());
  list.push_back(name);
  map.emplace(name, id);
  return id;
}

EntityId Vocab::entity_id(const std::string& name, ParseMode mode) {
  return intern(entities, entity_ids_, name, mode, "entity");
}

RelationId Vocab::relation_id(const std::string& name, ParseMode mode) {
  return intern(relations, relation_ids_, name, mode, "relation");
}

std::uint32_t Vocab::time_id(const std::string& label, ParseMode mode) {
  return intern(times, time_ids_, label, mode, "time label");
}

std::optional<EntityId> Vocab::find_entity(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocab::find_relation(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> Vocab::find_time(const std::string& label) const {
  auto it = time_ids_.find(label);
  if (it == time_ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> Vocab::finalize_times(TimeOrder order) {
  bool numeric = false;
  std::vector<std::uint32_t> parsed(times.size());
  if (order != TimeOrder::Lex) {
    numeric = true;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!parse_u32(times[i], parsed[i])) {
        if (order == TimeOrder::Numeric) {
          throw Error(ErrorKind::NonNumericTime,
                      "non-numeric time label: " + times[i]);
        }
        numeric = false;
        break;
      }
    }
  }

  std::vector<std::uint32_t> perm(times.size());
  for (std::uint32_t i = 0; i < times.size(); ++i) perm[i] = i;
  if (numeric) {
    std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
      return parsed[a] < parsed[b];
    });
  } else {
    std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
      return times[a] < times[b];
    });
  }

  // perm[tick] = old id; invert to old id -> tick and reorder labels.
  std::vector<std::uint32_t> remap(times.size());
  std::vector<std::string> sorted(times.size());
  for (std::uint32_t tick = 0; tick < perm.size(); ++tick) {
    remap[perm[tick]] = tick;
    sorted[tick] = times[perm[tick]];
  }
  times = std::move(sorted);
  time_ids_.clear();
  for (std::uint32_t i = 0; i < times.size(); ++i) time_ids_.emplace(times[i], i);
  return remap;
}

void Vocab::save_json(const std::string& path) const {
  nlohmann::ordered_json j;
  j["entities"] = entities;
  j["relations"] = relations;
  j["times"] = times;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

Vocab Vocab::load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, path + ": " + e.what());
  }
  Vocab v;
  for (const auto& s : j.at("entities")) v.entity_id(s.get<std::string>(), ParseMode::Grow);
  for (const auto& s : j.at("relations")) v.relation_id(s.get<std::string>(), ParseMode::Grow);
  for (const auto& s : j.at("times")) v.time_id(s.get<std::string>(), ParseMode::Grow);
  return v;
}

Quadruple parse_quadruple_line(const std::string& line, Vocab& vocab,
                               ParseMode mode, TimeOrder order) {
  std::array<std::string, 4> fields;
  std::size_t n = 0;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    std::string piece = line.substr(start, tab == std::string::npos
                                               ? std::string::npos
                                               : tab - start);
    if (n < 4) fields[n] = std::move(piece);
    ++n;
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (n != 4) {
    std::ostringstream msg;
    msg << "expected 4 tab-separated fields, got " << n << ": " << line;
    throw Error(ErrorKind::MalformedLine, msg.str());
  }
  if (order == TimeOrder::Numeric) {
    std::uint32_t ignored;
    if (!parse_u32(fields[3], ignored)) {
      throw Error(ErrorKind::NonNumericTime,
                  "non-numeric time label: " + fields[3]);
    }
  }
  Quadruple q;
  q.subject = vocab.entity_id(fields[0], mode);
  q.relation = vocab.relation_id(fields[1], mode);
  q.object = vocab.entity_id(fields[2], mode);
  q.time = vocab.time_id(fields[3], mode);
  return q;
}

std::vector<Quadruple> deduplicate(std::vector<Quadruple> quads) {
  std::sort(quads.begin(), quads.end(), quad_less);
  quads.erase(std::unique(quads.begin(), quads.end()), quads.end());
  return quads;
}

TemporalKG::TemporalKG(std::vector<Quadruple> quads, Vocab vocab)
    : quads_(std::move(quads)), vocab_(std::move(vocab)) {
  std::sort(quads_.begin(), quads_.end(), quad_less);
  quads_.erase(std::unique(quads_.begin(), quads_.end()), quads_.end());
  const RelationId n_rel = static_cast<RelationId>(vocab_.relation_count());
  for (const Quadruple& q : quads_) {
    by_entity_time_[key(q.subject, q.time)].emplace_back(q.relation, q.object);
    by_entity_time_[key(q.object, q.time)].emplace_back(q.relation + n_rel,
                                                        q.subject);
    max_time_ = std::max(max_time_, q.time);
  }
  for (auto& [k, pairs] : by_entity_time_) {
    std::sort(pairs.begin(), pairs.end());
    adjacency_entries_ += pairs.size();
  }
}

const std::vector<NeighborPair>& TemporalKG::neighbors_at(EntityId e,
                                                          Timestamp tau) const {
  static const std::vector<NeighborPair> kEmpty;
  auto it = by_entity_time_.find(key(e, tau));
  return it == by_entity_time_.end() ? kEmpty : it->second;
}

HistoryWindow temporal_neighborhood(const TemporalKG& g, EntityId e, Timestamp t,
                                    std::uint32_t history_len,
                                    std::uint32_t n_max) {
  if (history_len < 1 || n_max < 1) {
    throw Error(ErrorKind::InvalidConfig,
                "temporal_neighborhood requires history_len >= 1 and n_max >= 1");
  }
  HistoryWindow w;
  w.anchor = t;
  w.snapshots.resize(history_len);
  for (std::uint32_t k = 0; k < history_len; ++k) {
    const std::int64_t tau = static_cast<std::int64_t>(t) -
                             static_cast<std::int64_t>(history_len) + k;
    if (tau < 0) continue;
    const auto& pairs = g.neighbors_at(e, static_cast<Timestamp>(tau));
    if (pairs.empty()) continue;
    auto& snap = w.snapshots[k];
    const std::size_t take = std::min<std::size_t>(pairs.size(), n_max);
    snap.assign(pairs.begin(), pairs.begin() + take);
  }
  return w;
}

std::vector<Quadruple> read_quadruple_file(const std::string& path, Vocab& vocab,
                                           ParseMode mode, TimeOrder order) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::vector<Quadruple> quads;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      quads.push_back(parse_quadruple_line(line, vocab, mode, order));
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << path << ":" << lineno << ": " << e.what();
      throw Error(e.kind(), msg.str());
    }
  }
  return quads;
}

void write_quadruple_file(const std::string& path,
                          const std::vector<Quadruple>& quads,
                          const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  for (const Quadruple& q : quads) {
    out << vocab.entities[q.subject] << '\t' << vocab.relations[q.relation]
        << '\t' << vocab.entities[q.object] << '\t' << vocab.times[q.time]
        << '\n';
  }
}

}  // namespace tkg
