#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <variant>

#include "ctlab/trace.hpp"
#include "ctlab/word.hpp"

namespace ctlab {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Keyed hash of a serialized trace. The salt constant is arbitrary but fixed;
// traces serialize as (tag byte, 4-byte little-endian payload) per event.
inline uint64_t trace_hash(uint64_t seed, const LeakTrace& k) {
  uint64_t h = 0xcbf29ce484222346ull ^ splitmix64(seed);
  auto fold = [&h](uint8_t b) { h = (h ^ b) * 0x100000001B3ull; };
  for (const auto& e : k) {
    fold(e.kind == LeakKind::Leak ? 1 : 2);
    uint32_t v = e.value.value();
    fold(uint8_t(v));
    fold(uint8_t(v >> 8));
    fold(uint8_t(v >> 16));
    fold(uint8_t(v >> 24));
  }
  return splitmix64(h);
}

}  // namespace detail

// A deterministic function from leakage-trace prefixes to words; the resolver
// of compiler nondeterminism. Table/Seeded/Bump have serializable
// descriptions; Derived wraps oracles computed by oracle-transformation
// functions.
class Oracle {
 public:
  struct Table {
    std::map<LeakTrace, Word> entries;
    Word fallback;
  };
  struct Seeded {
    uint64_t seed;
    unsigned bits;
  };
  struct Bump {
    Word base;
    Word stride;
  };
  struct Derived {
    std::function<Word(const LeakTrace&)> fn;
    std::string label;
  };

  static Oracle table(std::map<LeakTrace, Word> entries, Word fallback) {
    return Oracle(Table{std::move(entries), fallback});
  }
  static Oracle seeded(uint64_t seed, unsigned bits = 32) {
    return Oracle(Seeded{seed, bits});
  }
  static Oracle bump(Word base, Word stride) { return Oracle(Bump{base, stride}); }
  static Oracle derived(std::function<Word(const LeakTrace&)> fn,
                        std::string label = "derived") {
    return Oracle(Derived{std::move(fn), std::move(label)});
  }
  // Never legitimately queried; answers 0.
  static Oracle unit(unsigned bits = 32) {
    return Oracle(Table{{}, Word::of(0, bits)});
  }

  Word query(const LeakTrace& k) const {
    if (auto* t = std::get_if<Table>(&rep_)) {
      auto it = t->entries.find(k);
      return it == t->entries.end() ? t->fallback : it->second;
    }
    if (auto* s = std::get_if<Seeded>(&rep_))
      return Word::of(detail::trace_hash(s->seed, k), s->bits);
    if (auto* b = std::get_if<Bump>(&rep_)) {
      uint32_t n = 0;
      for (const auto& e : k)
        if (e.kind == LeakKind::CompNonDet) ++n;
      return b->base.add(b->stride.mul(Word::of(n, b->stride.bits())));
    }
    return std::get<Derived>(rep_).fn(k);
  }

  nlohmann::json describe() const {
    if (auto* t = std::get_if<Table>(&rep_)) {
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& [k, w] : t->entries)
        entries.push_back({{"trace", to_json(k)}, {"word", w.value()}});
      return {{"table", {{"entries", entries}, {"default", t->fallback.value()}}}};
    }
    if (auto* s = std::get_if<Seeded>(&rep_))
      return {{"seeded", {{"seed", s->seed}}}};
    if (auto* b = std::get_if<Bump>(&rep_))
      return {{"bump", {{"base", b->base.value()}, {"stride", b->stride.value()}}}};
    return {{"derived", {{"label", std::get<Derived>(rep_).label}}}};
  }

 private:
  template <typename T>
  explicit Oracle(T rep) : rep_(std::move(rep)) {}
  std::variant<Table, Seeded, Bump, Derived> rep_;
};

inline Word oracle_query(const Oracle& a, const LeakTrace& k) {
  return a.query(k);
}

inline Oracle oracle_from_json(const nlohmann::json& j, unsigned bits) {
  if (j.contains("bump"))
    return Oracle::bump(Word::of(j["bump"]["base"].get<uint64_t>(), bits),
                        Word::of(j["bump"]["stride"].get<uint64_t>(), bits));
  if (j.contains("seeded"))
    return Oracle::seeded(j["seeded"]["seed"].get<uint64_t>(), bits);
  if (j.contains("table")) {
    std::map<LeakTrace, Word> entries;
    for (const auto& e : j["table"]["entries"])
      entries[leak_trace_from_json(e["trace"], bits)] =
          Word::of(e["word"].get<uint64_t>(), bits);
    return Oracle::table(std::move(entries),
                         Word::of(j["table"]["default"].get<uint64_t>(), bits));
  }
  throw std::runtime_error("unknown oracle description: " + j.dump());
}

// k is compatible with the oracle iff every CompNonDet payload equals the
// oracle's answer on the preceding prefix.
inline bool compatible(const LeakTrace& k, const Oracle& a) {
  LeakTrace prefix;
  prefix.reserve(k.size());
  for (const auto& e : k) {
    if (e.kind == LeakKind::CompNonDet && !(a.query(prefix) == e.value))
      return false;
    prefix.push_back(e);
  }
  return true;
}

}  // namespace ctlab
