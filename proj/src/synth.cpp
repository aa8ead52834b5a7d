#include "tkg/synth.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "tkg/rng.hpp"

namespace tkg {

namespace {

std::string ent_name(std::uint32_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "e%03u", i);
  return buf;
}

std::string freq_name(std::uint32_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "fr%02u", i);
  return buf;
}

std::string sparse_name(std::uint32_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sp%02u", i);
  return buf;
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthResult out;

  // Calibrated volume: 5 sparse events per 12 ticks keeps each sparse
  // relation inside [horizon/6, horizon) and drives each frequent precursor
  // well past the suggested high threshold once several sparse relations
  // share it.
  const std::uint64_t per_sparse =
      std::max<std::uint64_t>(4, (static_cast<std::uint64_t>(spec.horizon) -
                                  spec.precursor_lag) * 5 / 12);
  out.truth.precursor_lag = spec.precursor_lag;
  out.truth.suggested_low = std::max<std::uint64_t>(2, per_sparse / 3);
  out.truth.suggested_high = per_sparse * 2;

  struct Event {
    std::string s, r, o;
    std::uint32_t t;
  };
  std::vector<Event> events;

  for (std::uint32_t k = 0; k < spec.n_sparse_rels; ++k) {
    const std::string sp = sparse_name(k);
    const std::string fr = freq_name(k % spec.n_frequent_rels);
    out.truth.precursor_of[sp] = fr;
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> seen;
    std::uint64_t emitted = 0;
    while (emitted < per_sparse) {
      const std::uint32_t a = static_cast<std::uint32_t>(rng_below(rng, spec.n_entities));
      std::uint32_t b = static_cast<std::uint32_t>(rng_below(rng, spec.n_entities - 1));
      if (b >= a) ++b;  // avoid self-loops, keeps the rule pairwise
      const std::uint32_t t = spec.precursor_lag +
                              static_cast<std::uint32_t>(rng_below(
                                  rng, spec.horizon - spec.precursor_lag));
      if (!seen.insert({a, b, t}).second) continue;
      events.push_back({ent_name(a), sp, ent_name(b), t});
      events.push_back({ent_name(a), fr, ent_name(b), t - spec.precursor_lag});
      ++emitted;
    }
  }
  out.truth.planted_events = events.size();

  // Top up each frequent relation past the suggested high threshold so the
  // frequency split always lands precursors in the background band, even
  // for degenerate sparse counts.
  {
    std::map<std::string, std::uint64_t> freq_counts;
    for (const Event& e : events) {
      if (e.r[0] == 'f') freq_counts[e.r]++;
    }
    const std::uint64_t target = out.truth.suggested_high +
                                 out.truth.suggested_high / 2 + 1;
    for (std::uint32_t i = 0; i < spec.n_frequent_rels; ++i) {
      const std::string fr = freq_name(i);
      std::uint64_t have = freq_counts[fr];
      std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> seen;
      while (have < target) {
        const std::uint32_t a =
            static_cast<std::uint32_t>(rng_below(rng, spec.n_entities));
        std::uint32_t b =
            static_cast<std::uint32_t>(rng_below(rng, spec.n_entities - 1));
        if (b >= a) ++b;
        const std::uint32_t t =
            static_cast<std::uint32_t>(rng_below(rng, spec.horizon));
        if (!seen.insert({a, b, t}).second) continue;
        events.push_back({ent_name(a), fr, ent_name(b), t});
        ++have;
      }
    }
  }

  const std::uint64_t n_noise =
      static_cast<std::uint64_t>(spec.noise_rate * static_cast<double>(events.size()));
  const std::uint32_t n_rels = spec.n_frequent_rels + spec.n_sparse_rels;
  for (std::uint64_t i = 0; i < n_noise; ++i) {
    const std::uint32_t a = static_cast<std::uint32_t>(rng_below(rng, spec.n_entities));
    std::uint32_t b = static_cast<std::uint32_t>(rng_below(rng, spec.n_entities - 1));
    if (b >= a) ++b;
    const std::uint32_t r = static_cast<std::uint32_t>(rng_below(rng, n_rels));
    const std::uint32_t t = static_cast<std::uint32_t>(rng_below(rng, spec.horizon));
    const std::string rel = r < spec.n_frequent_rels
                                ? freq_name(r)
                                : sparse_name(r - spec.n_frequent_rels);
    events.push_back({ent_name(a), rel, ent_name(b), t});
  }
  out.truth.noise_events = n_noise;

  // Every entity gets one anchoring self-description event at tick 0 so the
  // vocabulary always covers e000..e{n-1} regardless of sampling.
  for (std::uint32_t i = 0; i < spec.n_entities; ++i) {
    events.push_back({ent_name(i), freq_name(0), ent_name((i + 1) % spec.n_entities), 0});
  }

  out.lines.reserve(events.size());
  for (const Event& e : events) {
    out.lines.push_back(e.s + "\t" + e.r + "\t" + e.o + "\t" + std::to_string(e.t));
  }
  return out;
}

void write_synthetic(const SynthSpec& spec, const std::string& events_path,
                     const std::string& truth_path) {
  SynthResult res = generate_synthetic(spec);
  {
    std::ofstream out(events_path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + events_path);
    for (const std::string& line : res.lines) out << line << '\n';
  }
  nlohmann::ordered_json j;
  j["rule"] = "sparse(a,b,t) iff precursor(a,b,t-lag)";
  j["precursorLag"] = res.truth.precursor_lag;
  j["precursorOf"] = res.truth.precursor_of;
  j["suggestedLow"] = res.truth.suggested_low;
  j["suggestedHigh"] = res.truth.suggested_high;
  j["plantedEvents"] = res.truth.planted_events;
  j["noiseEvents"] = res.truth.noise_events;
  std::ofstream out(truth_path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + truth_path);
  out << j.dump(2) << "\n";
}

}  // namespace tkg
