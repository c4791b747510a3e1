#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp::chem {

enum class BondOrder : std::uint8_t { single = 1, double_ = 2, triple = 3, aromatic = 4 };

struct Atom {
  std::string element;  // capitalized symbol, e.g. "C", "Cl"
  bool aromatic = false;
  int charge = 0;
  int hydrogens = -1;  // -1: implicit (organic subset atom)
  bool in_ring = false;
};

struct Bond {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  BondOrder order = BondOrder::single;
  bool in_ring = false;
};

struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  std::size_t ring_atom_count() const {
    return static_cast<std::size_t>(std::count_if(atoms.begin(), atoms.end(), [](const Atom& a) { return a.in_ring; }));
  }
};

/// The key assigned to molecules without any ring.
inline const std::string kAcyclicKey = "\xE2\x88\x85";  // U+2205 EMPTY SET

namespace detail {

inline bool is_known_element(std::string_view s) {
  static const std::set<std::string, std::less<>> table = {
      "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",
      "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr",
      "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La",
      "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os",
      "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U"};
  return table.count(s) > 0;
}

inline bool is_aromatic_symbol(std::string_view s) {
  return s == "b" || s == "c" || s == "n" || s == "o" || s == "p" || s == "s" || s == "se" || s == "as";
}

inline std::string capitalize(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

// GCC misreads the optional bookkeeping below as possibly uninitialized
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"
#endif
class SmilesParser {
 public:
  explicit SmilesParser(std::string_view s) : s_(s) {}

  Molecule parse() {
    if (s_.empty()) throw Error(Errc::EmptyInput, "offset 0");
    std::optional<std::uint32_t> prev;
    std::optional<BondOrder> pending;
    std::optional<std::size_t> pending_offset;
    std::vector<std::pair<std::uint32_t, std::size_t>> branch_stack;  // (atom, offset of '(')

    while (pos_ < s_.size()) {
      char c = s_[pos_];
      std::size_t here = pos_;
      if (c == '(') {
        if (!prev) throw Error(Errc::UnbalancedParenthesis, "offset " + std::to_string(here));
        branch_stack.emplace_back(*prev, here);
        ++pos_;
      } else if (c == ')') {
        if (branch_stack.empty()) throw Error(Errc::UnbalancedParenthesis, "offset " + std::to_string(here));
        if (pending) throw Error(Errc::UnknownAtomSymbol, "dangling bond at offset " + std::to_string(*pending_offset));
        prev = branch_stack.back().first;
        branch_stack.pop_back();
        ++pos_;
      } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\') {
        if (pending) throw Error(Errc::UnknownAtomSymbol, "consecutive bond symbols at offset " + std::to_string(here));
        switch (c) {
          case '=': pending = BondOrder::double_; break;
          case '#': pending = BondOrder::triple; break;
          case ':': pending = BondOrder::aromatic; break;
          default: pending = BondOrder::single; break;  // '/', '\' are stereo-only
        }
        pending_offset = here;
        ++pos_;
      } else if (c == '.') {
        if (pending) throw Error(Errc::UnknownAtomSymbol, "dangling bond at offset " + std::to_string(*pending_offset));
        prev.reset();
        ++pos_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        if (!prev) throw Error(Errc::UnknownAtomSymbol, "ring bond without atom at offset " + std::to_string(here));
        int label = read_ring_label();
        auto it = open_rings_.find(label);
        if (it == open_rings_.end()) {
          open_rings_[label] = {*prev, here, pending};
        } else {
          auto [other, off, first_bond] = it->second;
          if (other == *prev) throw Error(Errc::UnknownAtomSymbol, "ring closure to self at offset " + std::to_string(here));
          std::optional<BondOrder> order = pending ? pending : first_bond;
          add_bond(other, *prev, order);
          open_rings_.erase(it);
        }
        pending.reset();
      } else {
        auto atom = read_atom();
        auto idx = static_cast<std::uint32_t>(mol_.atoms.size());
        mol_.atoms.push_back(std::move(atom));
        if (prev) add_bond(*prev, idx, pending);
        pending.reset();
        prev = idx;
      }
    }
    if (!branch_stack.empty())
      throw Error(Errc::UnbalancedParenthesis, "offset " + std::to_string(branch_stack.back().second));
    if (!open_rings_.empty()) {
      std::size_t first = s_.size();
      for (auto& [label, info] : open_rings_) first = std::min(first, std::get<1>(info));
      throw Error(Errc::UnclosedRing, "offset " + std::to_string(first));
    }
    if (pending) throw Error(Errc::UnknownAtomSymbol, "dangling bond at offset " + std::to_string(*pending_offset));
    if (mol_.atoms.empty()) throw Error(Errc::EmptyInput, "offset 0");
    return std::move(mol_);
  }

 private:
  int read_ring_label() {
    if (s_[pos_] == '%') {
      if (pos_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s_[pos_ + 2])))
        throw Error(Errc::UnknownAtomSymbol, "bad %nn ring label at offset " + std::to_string(pos_));
      int v = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
      pos_ += 3;
      return v;
    }
    return s_[pos_++] - '0';
  }

  Atom read_atom() {
    std::size_t here = pos_;
    char c = s_[pos_];
    if (c == '[') return read_bracket_atom();
    // organic subset, two-letter symbols first
    if (s_.substr(pos_, 2) == "Cl" || s_.substr(pos_, 2) == "Br") {
      Atom a{std::string(s_.substr(pos_, 2))};
      pos_ += 2;
      return a;
    }
    static constexpr std::string_view organic = "BCNOPSFI";
    static constexpr std::string_view aromatic = "bcnops";
    if (organic.find(c) != std::string_view::npos) {
      ++pos_;
      return Atom{std::string(1, c)};
    }
    if (aromatic.find(c) != std::string_view::npos) {
      ++pos_;
      return Atom{capitalize(std::string(1, c)), true};
    }
    throw Error(Errc::UnknownAtomSymbol, "'" + std::string(1, c) + "' at offset " + std::to_string(here));
  }

  Atom read_bracket_atom() {
    std::size_t open = pos_;
    auto close = s_.find(']', pos_);
    if (close == std::string_view::npos) throw Error(Errc::UnknownAtomSymbol, "unterminated bracket atom at offset " + std::to_string(open));
    std::string_view body = s_.substr(pos_ + 1, close - pos_ - 1);
    pos_ = close + 1;
    std::size_t i = 0;
    while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;  // isotope, dropped
    Atom a;
    auto try_symbol = [&](std::size_t len) -> bool {
      if (i + len > body.size()) return false;
      auto sym = body.substr(i, len);
      if (std::islower(static_cast<unsigned char>(sym[0]))) {
        if (!is_aromatic_symbol(sym)) return false;
        a.element = capitalize(sym);
        a.aromatic = true;
      } else {
        if (!is_known_element(sym)) return false;
        a.element = std::string(sym);
      }
      i += len;
      return true;
    };
    if (!try_symbol(2) && !try_symbol(1))
      throw Error(Errc::UnknownAtomSymbol, "'" + std::string(body) + "' at offset " + std::to_string(open));
    while (i < body.size() && body[i] == '@') ++i;  // chirality, dropped
    if (i + 1 < body.size() && (body.substr(i, 2) == "TH" || body.substr(i, 2) == "AL" || body.substr(i, 2) == "SP" ||
                                body.substr(i, 2) == "TB" || body.substr(i, 2) == "OH")) {
      i += 2;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
    }
    a.hydrogens = 0;
    if (i < body.size() && body[i] == 'H') {
      ++i;
      a.hydrogens = 1;
      if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) a.hydrogens = body[i++] - '0';
    }
    while (i < body.size() && (body[i] == '+' || body[i] == '-')) {
      int sign = body[i] == '+' ? 1 : -1;
      ++i;
      if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        a.charge += sign * (body[i++] - '0');
      } else {
        a.charge += sign;
      }
    }
    if (i < body.size() && body[i] == ':') {  // atom class, dropped
      ++i;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
    }
    if (i != body.size())
      throw Error(Errc::UnknownAtomSymbol, "'" + std::string(body) + "' at offset " + std::to_string(open));
    return a;
  }

  void add_bond(std::uint32_t a, std::uint32_t b, std::optional<BondOrder> order) {
    BondOrder o = BondOrder::single;
    if (order) {
      o = *order;
    } else if (mol_.atoms[a].aromatic && mol_.atoms[b].aromatic) {
      o = BondOrder::aromatic;
    }
    mol_.bonds.push_back({a, b, o, false});
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  Molecule mol_;
  std::map<int, std::tuple<std::uint32_t, std::size_t, std::optional<BondOrder>>> open_rings_;
};
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic pop
#endif

using Adjacency = std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>>;  // (neighbor, bond index)

inline Adjacency adjacency(const Molecule& m) {
  Adjacency adj(m.atoms.size());
  for (std::uint32_t i = 0; i < m.bonds.size(); ++i) {
    adj[m.bonds[i].a].emplace_back(m.bonds[i].b, i);
    adj[m.bonds[i].b].emplace_back(m.bonds[i].a, i);
  }
  return adj;
}

/// Marks bonds lying on a cycle (non-bridges) and their atoms.
inline void perceive_rings(Molecule& m) {
  auto adj = adjacency(m);
  const std::size_t n = m.atoms.size();
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  std::vector<bool> bridge(m.bonds.size(), false);
  // Iterative DFS: frame = (atom, bond used to enter, next neighbor slot)
  struct Frame {
    std::uint32_t v;
    std::int64_t via;
    std::size_t next;
  };
  for (std::uint32_t root = 0; root < n; ++root) {
    if (disc[root] != -1) continue;
    std::vector<Frame> stack{{root, -1, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      auto& f = stack.back();
      if (f.next < adj[f.v].size()) {
        auto [w, bi] = adj[f.v][f.next++];
        if (static_cast<std::int64_t>(bi) == f.via) continue;
        if (disc[w] == -1) {
          disc[w] = low[w] = timer++;
          stack.push_back({w, static_cast<std::int64_t>(bi), 0});
        } else {
          low[f.v] = std::min(low[f.v], disc[w]);
        }
      } else {
        auto done = f;
        stack.pop_back();
        if (!stack.empty()) {
          auto& parent = stack.back();
          low[parent.v] = std::min(low[parent.v], low[done.v]);
          if (low[done.v] > disc[parent.v]) bridge[static_cast<std::size_t>(done.via)] = true;
        }
      }
    }
  }
  for (auto& a : m.atoms) a.in_ring = false;
  for (std::size_t i = 0; i < m.bonds.size(); ++i) {
    auto& b = m.bonds[i];
    b.in_ring = !bridge[i];
    if (b.in_ring) {
      m.atoms[b.a].in_ring = true;
      m.atoms[b.b].in_ring = true;
      if (m.atoms[b.a].aromatic && m.atoms[b.b].aromatic) b.order = BondOrder::aromatic;
    } else if (b.order == BondOrder::aromatic) {
      b.order = BondOrder::single;  // e.g. the biaryl bond of biphenyl
    }
  }
}

}  // namespace detail

/// Parses the supported SMILES subset. Stereo markers, isotopes and atom
/// classes are accepted and dropped.
inline Molecule parse_smiles(std::string_view s) {
  auto m = detail::SmilesParser(s).parse();
  detail::perceive_rings(m);
  return m;
}

/// Atoms remaining after iteratively deleting non-ring atoms of degree <= 1.
inline std::vector<bool> murcko_atoms(const Molecule& m) {
  std::vector<bool> keep(m.atoms.size(), true);
  if (m.ring_atom_count() == 0) return std::vector<bool>(m.atoms.size(), false);
  auto adj = detail::adjacency(m);
  std::vector<std::uint32_t> degree(m.atoms.size());
  for (std::size_t i = 0; i < m.atoms.size(); ++i) degree[i] = static_cast<std::uint32_t>(adj[i].size());
  std::vector<std::uint32_t> queue;
  for (std::uint32_t i = 0; i < m.atoms.size(); ++i)
    if (!m.atoms[i].in_ring && degree[i] <= 1) queue.push_back(i);
  while (!queue.empty()) {
    auto v = queue.back();
    queue.pop_back();
    if (!keep[v]) continue;
    keep[v] = false;
    for (auto [w, bi] : adj[v]) {
      if (!keep[w]) continue;
      if (--degree[w] <= 1 && !m.atoms[w].in_ring) queue.push_back(w);
    }
  }
  return keep;
}

/// Subgraph induced by `keep`, renumbered in original order.
inline Molecule induced_subgraph(const Molecule& m, const std::vector<bool>& keep) {
  Molecule out;
  std::vector<std::int64_t> map(m.atoms.size(), -1);
  for (std::size_t i = 0; i < m.atoms.size(); ++i)
    if (keep[i]) {
      map[i] = static_cast<std::int64_t>(out.atoms.size());
      out.atoms.push_back(m.atoms[i]);
    }
  for (const auto& b : m.bonds)
    if (keep[b.a] && keep[b.b])
      out.bonds.push_back({static_cast<std::uint32_t>(map[b.a]), static_cast<std::uint32_t>(map[b.b]), b.order, b.in_ring});
  return out;
}

namespace detail {

inline int bond_code(BondOrder o) { return static_cast<int>(o); }

/// Canonical labeling by neighborhood refinement with exhaustive tie-breaking.
class Canonicalizer {
 public:
  explicit Canonicalizer(const Molecule& m) : m_(m), adj_(adjacency(m)) {}

  std::string run() {
    const std::size_t n = m_.atoms.size();
    if (n == 0) return kAcyclicKey;
    std::vector<std::uint32_t> ranks(n);
    {
      using Inv = std::tuple<std::string, bool, std::size_t, bool>;
      std::vector<Inv> inv(n);
      for (std::size_t i = 0; i < n; ++i)
        inv[i] = {m_.atoms[i].element, m_.atoms[i].aromatic, adj_[i].size(), m_.atoms[i].in_ring};
      ranks = ranks_from(inv);
    }
    ranks = refine(ranks);
    best_.reset();
    search(ranks);
    return *best_;
  }

 private:
  template <class T>
  static std::vector<std::uint32_t> ranks_from(const std::vector<T>& keys) {
    std::vector<T> uniq = keys;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<std::uint32_t> r(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
      r[i] = static_cast<std::uint32_t>(std::lower_bound(uniq.begin(), uniq.end(), keys[i]) - uniq.begin());
    return r;
  }

  static std::size_t distinct(const std::vector<std::uint32_t>& r) {
    return std::set<std::uint32_t>(r.begin(), r.end()).size();
  }

  std::vector<std::uint32_t> refine(std::vector<std::uint32_t> ranks) const {
    const std::size_t n = ranks.size();
    std::size_t classes = distinct(ranks);
    while (true) {
      using Key = std::pair<std::uint32_t, std::vector<std::pair<int, std::uint32_t>>>;
      std::vector<Key> keys(n);
      for (std::size_t i = 0; i < n; ++i) {
        keys[i].first = ranks[i];
        for (auto [w, bi] : adj_[i]) keys[i].second.emplace_back(bond_code(m_.bonds[bi].order), ranks[w]);
        std::sort(keys[i].second.begin(), keys[i].second.end());
      }
      auto next = ranks_from(keys);
      auto c = distinct(next);
      ranks = std::move(next);
      if (c == classes) return ranks;
      classes = c;
    }
  }

  void search(const std::vector<std::uint32_t>& ranks) {
    const std::size_t n = ranks.size();
    if (distinct(ranks) == n || leaves_ >= kLeafBudget) {
      ++leaves_;
      auto s = emit(ranks);
      if (!best_ || s < *best_) best_ = std::move(s);
      return;
    }
    // smallest rank value shared by more than one atom
    std::map<std::uint32_t, std::vector<std::uint32_t>> cls;
    for (std::uint32_t i = 0; i < n; ++i) cls[ranks[i]].push_back(i);
    const std::vector<std::uint32_t>* tied = nullptr;
    for (auto& [r, members] : cls)
      if (members.size() > 1) {
        tied = &members;
        break;
      }
    for (auto chosen : *tied) {
      std::vector<std::uint32_t> broken(n);
      for (std::size_t i = 0; i < n; ++i) broken[i] = 2 * ranks[i] + 1;
      broken[chosen] = 2 * ranks[chosen];
      search(refine(broken));
      if (leaves_ >= kLeafBudget) return;
    }
  }

  std::string atom_text(std::uint32_t i) const {
    const auto& a = m_.atoms[i];
    static const std::set<std::string, std::less<>> organic = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
    std::string sym = a.element;
    if (a.aromatic) {
      for (auto& ch : sym) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    if (organic.count(a.element) && (!a.aromatic || sym.size() == 1)) return sym;
    return "[" + sym + "]";
  }

  std::string bond_text(std::uint32_t bi) const {
    const auto& b = m_.bonds[bi];
    bool both_aromatic = m_.atoms[b.a].aromatic && m_.atoms[b.b].aromatic;
    switch (b.order) {
      case BondOrder::single: return both_aromatic ? "-" : "";
      case BondOrder::double_: return "=";
      case BondOrder::triple: return "#";
      case BondOrder::aromatic: return both_aromatic ? "" : ":";
    }
    return "";
  }

  /// SMILES-like DFS string with neighbors visited in rank order.
  std::string emit(const std::vector<std::uint32_t>& ranks) const {
    const std::size_t n = ranks.size();
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> nbrs = adj_;
    for (auto& v : nbrs)
      std::sort(v.begin(), v.end(), [&](auto x, auto y) { return ranks[x.first] < ranks[y.first]; });

    // pass 1: spanning forest, ring-closure bonds, child lists
    std::vector<bool> seen(n, false), bond_used(m_.bonds.size(), false);
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> children(n);
    std::vector<std::vector<std::uint32_t>> closures(n);  // bond indices closing at atom, in encounter order
    std::vector<std::uint32_t> roots;
    std::vector<std::uint32_t> order(n);
    for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return ranks[x] < ranks[y]; });
    std::vector<std::uint32_t> visit_order;
    std::function<void(std::uint32_t)> dfs = [&](std::uint32_t v) {
      seen[v] = true;
      visit_order.push_back(v);
      for (auto [w, bi] : nbrs[v]) {
        if (bond_used[bi]) continue;
        bond_used[bi] = true;
        if (seen[w]) {
          closures[w].push_back(bi);  // opened at w (visited earlier), closed at v
          closures[v].push_back(bi);
        } else {
          children[v].emplace_back(w, bi);
          dfs(w);
        }
      }
    };
    for (auto r : order)
      if (!seen[r]) {
        roots.push_back(r);
        dfs(r);
      }

    // pass 2: write, assigning ring digits at first encounter
    std::map<std::uint32_t, int> digit_of_bond;
    std::set<int> free_digits;
    for (int d = 1; d < 100; ++d) free_digits.insert(d);
    std::string out;
    std::function<void(std::uint32_t)> write = [&](std::uint32_t v) {
      out += atom_text(v);
      for (auto bi : closures[v]) {
        auto it = digit_of_bond.find(bi);
        if (it == digit_of_bond.end()) {
          int d = *free_digits.begin();
          free_digits.erase(free_digits.begin());
          digit_of_bond[bi] = d;
          out += (d < 10 ? std::to_string(d) : "%" + std::to_string(d));
        } else {
          int d = it->second;
          out += bond_text(bi) + (d < 10 ? std::to_string(d) : "%" + std::to_string(d));
          free_digits.insert(d);
        }
      }
      const auto& ch = children[v];
      for (std::size_t k = 0; k < ch.size(); ++k) {
        bool last = k + 1 == ch.size();
        if (!last) out += "(";
        out += bond_text(ch[k].second);
        write(ch[k].first);
        if (!last) out += ")";
      }
    };
    for (std::size_t k = 0; k < roots.size(); ++k) {
      if (k) out += ".";
      write(roots[k]);
    }
    return out;
  }

  static constexpr std::size_t kLeafBudget = 20000;
  const Molecule& m_;
  Adjacency adj_;
  std::optional<std::string> best_;
  std::size_t leaves_ = 0;
};

}  // namespace detail

/// Canonical string for a labeled molecular graph (element, aromaticity,
/// bond order); charges and hydrogens do not participate.
inline std::string canonical_key(const Molecule& m) {
  if (m.atoms.empty()) return kAcyclicKey;
  return detail::Canonicalizer(m).run();
}

inline Molecule murcko_graph(const Molecule& m) { return induced_subgraph(m, murcko_atoms(m)); }

inline std::string murcko_scaffold(const Molecule& m) {
  if (m.ring_atom_count() == 0) return kAcyclicKey;
  return canonical_key(murcko_graph(m));
}

inline std::string murcko_scaffold(std::string_view smiles) { return murcko_scaffold(parse_smiles(smiles)); }

struct DrugEntry {
  std::string id;
  std::string smiles;
};

struct SplitAssignment {
  std::string mode;  // "scaffold" or "random"
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double achieved_train_fraction = 0.0;
  std::vector<std::pair<std::string, std::string>> excluded;  // (drug id, reason)

  bool operator==(const SplitAssignment&) const = default;
};

inline nlohmann::json to_json(const SplitAssignment& s) {
  nlohmann::json j;
  j["mode"] = s.mode;
  j["seed"] = s.seed;
  j["train_fraction"] = s.train_fraction;
  j["achieved_train_fraction"] = s.achieved_train_fraction;
  j["train"] = s.train;
  j["test"] = s.test;
  j["excluded"] = nlohmann::json::array();
  for (auto& [id, why] : s.excluded) j["excluded"].push_back({{"id", id}, {"reason", why}});
  return j;
}

inline SplitAssignment split_from_json(const nlohmann::json& j) {
  SplitAssignment s;
  try {
    s.mode = j.at("mode").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_fraction = j.at("train_fraction").get<double>();
    s.achieved_train_fraction = j.at("achieved_train_fraction").get<double>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    if (j.contains("excluded"))
      for (auto& e : j["excluded"]) s.excluded.emplace_back(e.at("id").get<std::string>(), e.at("reason").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("split file: ") + e.what());
  }
  return s;
}

namespace detail {
inline void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) throw Error(Errc::ParamDomain, "train_fraction must lie in (0, 1), got " + std::to_string(f));
}
}  // namespace detail

/// Whole scaffold groups go to train, in seeded random order, until the
/// train count reaches train_fraction of the eligible drugs.
inline SplitAssignment scaffold_split(const std::vector<DrugEntry>& drugs, double train_fraction, std::uint64_t seed) {
  detail::check_fraction(train_fraction);
  SplitAssignment out;
  out.mode = "scaffold";
  out.seed = seed;
  out.train_fraction = train_fraction;
  std::map<std::string, std::vector<std::string>> groups;
  std::size_t eligible = 0;
  for (const auto& d : drugs) {
    if (d.smiles.empty()) {
      out.excluded.emplace_back(d.id, "no SMILES");
      continue;
    }
    try {
      groups[murcko_scaffold(d.smiles)].push_back(d.id);
      ++eligible;
    } catch (const Error& e) {
      out.excluded.emplace_back(d.id, e.what());
    }
  }
  if (groups.size() < 2)
    throw Error(Errc::AllOneScaffold, std::to_string(eligible) + " drugs share " + std::to_string(groups.size()) + " scaffold(s)");

  std::vector<const std::vector<std::string>*> order;
  for (auto& [k, members] : groups) order.push_back(&members);
  auto rng = derive_rng(seed, {0x5CAF});
  std::shuffle(order.begin(), order.end(), rng);

  const double goal = train_fraction * static_cast<double>(eligible);
  std::size_t assigned = 0;
  for (auto* g : order) {
    auto& side = static_cast<double>(assigned) < goal ? out.train : out.test;
    if (&side == &out.train) assigned += g->size();
    side.insert(side.end(), g->begin(), g->end());
  }
  if (out.test.empty() || out.train.empty())
    throw Error(Errc::DegenerateSplit, "scaffold grouping left one side empty");
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  out.achieved_train_fraction = static_cast<double>(out.train.size()) / static_cast<double>(eligible);
  return out;
}

inline SplitAssignment random_split(std::vector<std::string> ids, double train_fraction, std::uint64_t seed) {
  detail::check_fraction(train_fraction);
  std::sort(ids.begin(), ids.end());
  auto rng = derive_rng(seed, {0x7A4D});
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  if (n_train == 0 || n_train >= ids.size())
    throw Error(Errc::DegenerateSplit, std::to_string(ids.size()) + " drugs at fraction " + std::to_string(train_fraction));
  SplitAssignment out;
  out.mode = "random";
  out.seed = seed;
  out.train_fraction = train_fraction;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  out.achieved_train_fraction = static_cast<double>(n_train) / static_cast<double>(ids.size());
  return out;
}

struct ScaffoldCounts {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

/// Recomputes scaffold keys for both sides from SMILES.
inline std::map<std::string, ScaffoldCounts> scaffold_audit(const SplitAssignment& s, const std::vector<DrugEntry>& drugs) {
  std::map<std::string, const std::string*> smiles_of;
  for (const auto& d : drugs) smiles_of[d.id] = &d.smiles;
  std::map<std::string, ScaffoldCounts> out;
  auto tally = [&](const std::vector<std::string>& side, bool train) {
    for (const auto& id : side) {
      auto it = smiles_of.find(id);
      if (it == smiles_of.end() || it->second->empty()) continue;
      std::string key;
      try {
        key = murcko_scaffold(*it->second);
      } catch (const Error&) {
        continue;
      }
      auto& c = out[key];
      (train ? c.train_count : c.test_count)++;
    }
  };
  tally(s.train, true);
  tally(s.test, false);
  return out;
}

inline std::size_t overlap_count(const std::map<std::string, ScaffoldCounts>& audit) {
  std::size_t n = 0;
  for (auto& [k, c] : audit)
    if (c.train_count > 0 && c.test_count > 0) ++n;
  return n;
}

inline nlohmann::json audit_to_json(const std::map<std::string, ScaffoldCounts>& audit) {
  nlohmann::json j = nlohmann::json::object();
  for (auto& [k, c] : audit) j[k] = {{"train_count", c.train_count}, {"test_count", c.test_count}};
  return j;
}

}  // namespace kgp::chem
