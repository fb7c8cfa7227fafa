#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctlab/word.hpp"
#include "json.hpp"

namespace ctlab {

enum class LeakKind : uint8_t { Leak, CompNonDet };

struct LeakEvent {
  LeakKind kind;
  Word value;
  friend bool operator==(const LeakEvent&, const LeakEvent&) = default;
  friend auto operator<=>(const LeakEvent&, const LeakEvent&) = default;
};

// Oldest event first; the paper-style `k :: e` is an append at the end.
using LeakTrace = std::vector<LeakEvent>;

inline LeakEvent leak(Word w) { return {LeakKind::Leak, w}; }
inline LeakEvent nondet(Word w) { return {LeakKind::CompNonDet, w}; }
inline LeakEvent leak(uint32_t v, unsigned bits = 32) { return leak(Word::of(v, bits)); }
inline LeakEvent nondet(uint32_t v, unsigned bits = 32) { return nondet(Word::of(v, bits)); }

enum class IOKind : uint8_t { In, Out };

struct IOEvent {
  IOKind kind;
  Word value;
  friend bool operator==(const IOEvent&, const IOEvent&) = default;
  friend auto operator<=>(const IOEvent&, const IOEvent&) = default;
};

using IOTrace = std::vector<IOEvent>;

inline IOEvent io_in(Word w) { return {IOKind::In, w}; }
inline IOEvent io_out(Word w) { return {IOKind::Out, w}; }

inline bool is_prefix(const LeakTrace& pre, const LeakTrace& k) {
  if (pre.size() > k.size()) return false;
  for (size_t i = 0; i < pre.size(); ++i)
    if (!(pre[i] == k[i])) return false;
  return true;
}

// Splits a trace into CompNonDet payloads and Leak payloads, in order.
// Interleaving information is discarded; see the flawed-definition checker
// for why that matters.
inline std::pair<std::vector<Word>, std::vector<Word>> split_events(
    const LeakTrace& k) {
  std::vector<Word> branches, leaks;
  for (const auto& e : k)
    (e.kind == LeakKind::CompNonDet ? branches : leaks).push_back(e.value);
  return {branches, leaks};
}

// ---- JSON ----

inline nlohmann::json to_json(const LeakEvent& e) {
  return e.kind == LeakKind::Leak
             ? nlohmann::json{{"leak", e.value.value()}}
             : nlohmann::json{{"nondet", e.value.value()}};
}

inline nlohmann::json to_json(const LeakTrace& k) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : k) a.push_back(to_json(e));
  return a;
}

inline nlohmann::json to_json(const IOEvent& e) {
  return e.kind == IOKind::In ? nlohmann::json{{"in", e.value.value()}}
                              : nlohmann::json{{"out", e.value.value()}};
}

inline nlohmann::json to_json(const IOTrace& t) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : t) a.push_back(to_json(e));
  return a;
}

inline LeakEvent leak_event_from_json(const nlohmann::json& j, unsigned bits) {
  if (j.contains("leak")) return leak(Word::of(j["leak"].get<uint64_t>(), bits));
  return nondet(Word::of(j["nondet"].get<uint64_t>(), bits));
}

inline LeakTrace leak_trace_from_json(const nlohmann::json& j, unsigned bits) {
  LeakTrace k;
  for (const auto& e : j) k.push_back(leak_event_from_json(e, bits));
  return k;
}

// Human-readable rendering: [CompNonDet 64, Leak 64, ...]
inline std::string show(const LeakTrace& k) {
  std::string s = "[";
  for (size_t i = 0; i < k.size(); ++i) {
    if (i) s += ", ";
    s += (k[i].kind == LeakKind::Leak ? "Leak " : "CompNonDet ") + k[i].value.str();
  }
  return s + "]";
}

inline std::string show(const IOTrace& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.size(); ++i) {
    if (i) s += ", ";
    s += (t[i].kind == IOKind::In ? "In " : "Out ") + t[i].value.str();
  }
  return s + "]";
}

// The public part of an I/O trace; what the key means is chosen per program
// (e.g. "the username" or "the input length").
struct PublicProjection {
  std::function<std::string(const IOTrace&)> io_key =
      [](const IOTrace&) { return std::string(); };
};

}  // namespace ctlab
