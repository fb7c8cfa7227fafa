#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ctlab/oracle.hpp"
#include "ctlab/trace.hpp"

namespace ctlab {

// ---- predictor outputs ----

struct PredictorOut {
  enum class Kind : uint8_t { PLeak, PBranch, PEnd } kind;
  Word value;  // PLeak payload

  static PredictorOut leak(Word w) { return {Kind::PLeak, w}; }
  static PredictorOut branch() { return {Kind::PBranch, Word()}; }
  static PredictorOut end() { return {Kind::PEnd, Word()}; }

  bool is_leak() const { return kind == Kind::PLeak; }
  bool is_branch() const { return kind == Kind::PBranch; }
  bool is_end() const { return kind == Kind::PEnd; }

  friend bool operator==(const PredictorOut& a, const PredictorOut& b) {
    if (a.kind != b.kind) return false;
    return a.kind != Kind::PLeak || a.value == b.value;
  }

  std::string str() const {
    switch (kind) {
      case Kind::PLeak: return "Leak " + value.str();
      case Kind::PBranch: return "CompNonDet";
      case Kind::PEnd: return "End";
    }
    return "?";
  }
};

// ---- leakage trees ----

struct LeakageTree;
using TreePtr = std::shared_ptr<const LeakageTree>;

// Finite inductive tree of permitted traces. The branch node keeps a finite
// child map plus a default child; this covers every tree arising from finite
// enumeration (an opaque word-indexed child function would not serialize).
struct LeakageTree {
  enum class Kind : uint8_t { Leaf, Leak, Branch } kind = Kind::Leaf;
  Word leak_word;                        // Leak
  TreePtr child;                         // Leak
  std::map<uint32_t, TreePtr> cases;     // Branch
  TreePtr fallback;                      // Branch default child
};

inline TreePtr tree_leaf() {
  return std::make_shared<LeakageTree>();
}
inline TreePtr tree_leak(Word w, TreePtr rest) {
  auto t = std::make_shared<LeakageTree>();
  t->kind = LeakageTree::Kind::Leak;
  t->leak_word = w;
  t->child = std::move(rest);
  return t;
}
inline TreePtr tree_branch(std::map<uint32_t, TreePtr> cases, TreePtr fallback) {
  auto t = std::make_shared<LeakageTree>();
  t->kind = LeakageTree::Kind::Branch;
  t->cases = std::move(cases);
  t->fallback = std::move(fallback);
  return t;
}

// Membership per the nil_path / leak_path / branch_path rules.
inline bool tree_member(const LeakTrace& k, const LeakageTree& t, size_t from = 0) {
  if (from == k.size()) return t.kind == LeakageTree::Kind::Leaf;
  const LeakEvent& e = k[from];
  if (t.kind == LeakageTree::Kind::Leak)
    return e.kind == LeakKind::Leak && e.value == t.leak_word &&
           tree_member(k, *t.child, from + 1);
  if (t.kind == LeakageTree::Kind::Branch) {
    if (e.kind != LeakKind::CompNonDet) return false;
    auto it = t.cases.find(e.value.value());
    const LeakageTree& next = it != t.cases.end() ? *it->second : *t.fallback;
    return tree_member(k, next, from + 1);
  }
  return false;
}

inline nlohmann::json tree_to_json(const LeakageTree& t) {
  switch (t.kind) {
    case LeakageTree::Kind::Leaf:
      return {{"leaf", nlohmann::json::object()}};
    case LeakageTree::Kind::Leak:
      return {{"leak", {{"w", t.leak_word.value()}, {"then", tree_to_json(*t.child)}}}};
    case LeakageTree::Kind::Branch: {
      nlohmann::json cases = nlohmann::json::object();
      for (const auto& [w, child] : t.cases)
        cases[std::to_string(w)] = tree_to_json(*child);
      return {{"branch", {{"cases", cases}, {"default", tree_to_json(*t.fallback)}}}};
    }
  }
  return {};
}

inline TreePtr tree_from_json(const nlohmann::json& j, unsigned bits) {
  if (j.contains("leaf")) return tree_leaf();
  if (j.contains("leak"))
    return tree_leak(Word::of(j["leak"]["w"].get<uint64_t>(), bits),
                     tree_from_json(j["leak"]["then"], bits));
  std::map<uint32_t, TreePtr> cases;
  for (auto it = j["branch"]["cases"].begin(); it != j["branch"]["cases"].end(); ++it)
    cases[uint32_t(std::stoul(it.key()))] = tree_from_json(it.value(), bits);
  return tree_branch(std::move(cases), tree_from_json(j["branch"]["default"], bits));
}

// ---- trace tries ----

// Finite witness for predictor existence: a prefix tree of observed traces
// with end-of-trace marks.
struct TraceTrie {
  struct Node {
    bool end = false;
    std::map<LeakEvent, Node> children;
  };
  Node root;

  void insert(const LeakTrace& k) {
    Node* n = &root;
    for (const auto& e : k) n = &n->children[e];
    n->end = true;
  }

  bool empty() const { return !root.end && root.children.empty(); }
};

inline TraceTrie trie_from_traces(const std::vector<LeakTrace>& ks) {
  TraceTrie t;
  for (const auto& k : ks) t.insert(k);
  return t;
}

// Reported when a trace set has no deterministic tree: at `prefix` the set
// continues in at least two distinct ways ("end" counts as a way).
struct TrieConflict {
  LeakTrace prefix;
  std::vector<std::string> events;  // "end", "leak w", "nondet w"
};

inline std::variant<TreePtr, TrieConflict> trie_to_tree_node(
    const TraceTrie::Node& n, LeakTrace& prefix) {
  auto conflict = [&]() {
    TrieConflict c;
    c.prefix = prefix;
    if (n.end) c.events.push_back("end");
    for (const auto& [e, _] : n.children)
      c.events.push_back(
          (e.kind == LeakKind::Leak ? "leak " : "nondet ") + e.value.str());
    return c;
  };
  if (n.children.empty()) {
    if (!n.end) return conflict();  // empty trie: no trace set to represent
    return tree_leaf();
  }
  if (n.end) return conflict();
  bool all_nondet = true, all_leak = true;
  for (const auto& [e, _] : n.children) {
    if (e.kind != LeakKind::CompNonDet) all_nondet = false;
    if (e.kind != LeakKind::Leak) all_leak = false;
  }
  if (all_nondet) {
    std::map<uint32_t, TreePtr> cases;
    for (const auto& [e, child] : n.children) {
      prefix.push_back(e);
      auto sub = trie_to_tree_node(child, prefix);
      prefix.pop_back();
      if (auto* c = std::get_if<TrieConflict>(&sub)) return *c;
      cases[e.value.value()] = std::get<TreePtr>(sub);
    }
    return tree_branch(std::move(cases), tree_leaf());
  }
  if (all_leak && n.children.size() == 1) {
    const auto& [e, child] = *n.children.begin();
    prefix.push_back(e);
    auto sub = trie_to_tree_node(child, prefix);
    prefix.pop_back();
    if (auto* c = std::get_if<TrieConflict>(&sub)) return *c;
    return tree_leak(e.value, std::get<TreePtr>(sub));
  }
  return conflict();
}

inline std::variant<TreePtr, TrieConflict> trie_to_tree(const TraceTrie& tr) {
  LeakTrace prefix;
  return trie_to_tree_node(tr.root, prefix);
}

// ---- predictors ----

class Predictor {
 public:
  static Predictor from_tree(TreePtr t) {
    Predictor p;
    p.tree_ = std::move(t);
    return p;
  }
  static Predictor from_trie(std::shared_ptr<const TraceTrie> t) {
    Predictor p;
    p.trie_ = std::move(t);
    return p;
  }
  static Predictor derived(std::function<PredictorOut(const LeakTrace&)> fn,
                           std::string label = "derived") {
    Predictor p;
    p.fn_ = std::move(fn);
    p.label_ = std::move(label);
    return p;
  }
  static Predictor constant_end() {
    return derived([](const LeakTrace&) { return PredictorOut::end(); }, "end");
  }

  PredictorOut operator()(const LeakTrace& k) const {
    if (tree_) return walk_tree(*tree_, k, 0);
    if (trie_) return walk_trie(trie_->root, k, 0);
    return fn_(k);
  }

  const TreePtr& tree() const { return tree_; }

 private:
  // Exactly the tree walk from the tree-to-predictor construction: descend
  // by event kind (leak payload mismatches still descend), answer from the
  // node reached; anything off the tree answers End.
  static PredictorOut walk_tree(const LeakageTree& t, const LeakTrace& k, size_t i) {
    if (i == k.size()) {
      switch (t.kind) {
        case LeakageTree::Kind::Leaf: return PredictorOut::end();
        case LeakageTree::Kind::Leak: return PredictorOut::leak(t.leak_word);
        case LeakageTree::Kind::Branch: return PredictorOut::branch();
      }
    }
    const LeakEvent& e = k[i];
    if (t.kind == LeakageTree::Kind::Leak && e.kind == LeakKind::Leak)
      return walk_tree(*t.child, k, i + 1);
    if (t.kind == LeakageTree::Kind::Branch && e.kind == LeakKind::CompNonDet) {
      auto it = t.cases.find(e.value.value());
      return walk_tree(it != t.cases.end() ? *it->second : *t.fallback, k, i + 1);
    }
    return PredictorOut::end();
  }

  static PredictorOut walk_trie(const TraceTrie::Node& n, const LeakTrace& k,
                                size_t i) {
    if (i == k.size()) {
      for (const auto& [e, _] : n.children)
        if (e.kind == LeakKind::CompNonDet) return PredictorOut::branch();
      if (n.children.size() == 1 &&
          n.children.begin()->first.kind == LeakKind::Leak)
        return PredictorOut::leak(n.children.begin()->first.value);
      return PredictorOut::end();
    }
    auto it = n.children.find(k[i]);
    if (it == n.children.end()) return PredictorOut::end();
    return walk_trie(it->second, k, i + 1);
  }

  TreePtr tree_;
  std::shared_ptr<const TraceTrie> trie_;
  std::function<PredictorOut(const LeakTrace&)> fn_;
  std::string label_;
};

inline Predictor tree_to_predictor(TreePtr t) { return Predictor::from_tree(std::move(t)); }

// P predicts k: every proper prefix answers the next event and the whole
// trace answers End.
inline bool predicts(const Predictor& p, const LeakTrace& k) {
  LeakTrace prefix;
  prefix.reserve(k.size());
  for (const auto& e : k) {
    PredictorOut o = p(prefix);
    if (e.kind == LeakKind::Leak) {
      if (!(o == PredictorOut::leak(e.value))) return false;
    } else {
      if (!o.is_branch()) return false;
    }
    prefix.push_back(e);
  }
  return p(k).is_end();
}

// The f_P construction: drive the predictor forward, answering branch
// queries with the oracle. Returns nullopt when the loop does not finish
// within fuel.
inline std::optional<LeakTrace> run_predictor(const Predictor& p, const Oracle& a,
                                              uint64_t fuel = 10000) {
  LeakTrace k;
  for (uint64_t i = 0; i < fuel; ++i) {
    PredictorOut o = p(k);
    if (o.is_end()) return k;
    if (o.is_leak()) {
      k.push_back(leak(o.value));
    } else {
      k.push_back(nondet(a.query(k)));
    }
  }
  return std::nullopt;
}

// Concatenation: q follows p1 until p1 answers End on some prefix k1, then
// delegates the remainder to next(k1). If predicts(p1,k1) and
// predicts(next(k1),k2) then q predicts k1 ++ k2.
inline Predictor predictor_concat(
    Predictor p1, std::function<Predictor(const LeakTrace&)> next) {
  return Predictor::derived(
      [p1 = std::move(p1), next = std::move(next)](const LeakTrace& k) {
        LeakTrace k1;
        k1.reserve(k.size());
        for (size_t i = 0; i <= k.size(); ++i) {
          PredictorOut o = p1(k1);
          if (o.is_end()) {
            LeakTrace k2(k.begin() + i, k.end());
            return next(k1)(k2);
          }
          if (i == k.size()) return o;
          const LeakEvent& e = k[i];
          bool consistent = (e.kind == LeakKind::Leak &&
                             o == PredictorOut::leak(e.value)) ||
                            (e.kind == LeakKind::CompNonDet && o.is_branch());
          if (!consistent) return PredictorOut::end();  // off every predicted trace
          k1.push_back(e);
        }
        return PredictorOut::end();
      },
      "concat");
}

// All root-to-leaf paths of a finite tree (branch nodes contribute their
// explicit cases only).
inline void tree_paths(const LeakageTree& t, LeakTrace& cur,
                       std::vector<LeakTrace>& out) {
  switch (t.kind) {
    case LeakageTree::Kind::Leaf:
      out.push_back(cur);
      return;
    case LeakageTree::Kind::Leak:
      cur.push_back(leak(t.leak_word));
      tree_paths(*t.child, cur, out);
      cur.pop_back();
      return;
    case LeakageTree::Kind::Branch:
      for (const auto& [w, child] : t.cases) {
        cur.push_back(nondet(Word::of(w, t.leak_word.bits())));
        tree_paths(*child, cur, out);
        cur.pop_back();
      }
      return;
  }
}

inline std::vector<LeakTrace> tree_paths(const LeakageTree& t) {
  std::vector<LeakTrace> out;
  LeakTrace cur;
  tree_paths(t, cur, out);
  return out;
}

}  // namespace ctlab
