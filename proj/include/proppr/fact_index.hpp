#pragma once

#include "proppr/term.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace proppr {

class LoadError : public std::runtime_error {
public:
    LoadError(int line, const std::string& msg)
        : std::runtime_error("facts line " + std::to_string(line) + ": " + msg),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct Fact {
    Symbol functor;
    std::vector<Symbol> args;
};

// Ground facts with per-argument-position indexes. Read-only once loaded;
// concurrent readers share it freely.
class FactIndex {
public:
    void add(Symbol functor, std::vector<Symbol> args, int line = 0) {
        auto [it, fresh] = relations_.try_emplace(functor);
        Relation& rel = it->second;
        if (fresh) {
            rel.arity = args.size();
        } else if (rel.arity != args.size()) {
            throw LoadError(line, "arity mismatch for '" + symbol_name(functor) +
                                      "': got " + std::to_string(args.size()) +
                                      ", expected " + std::to_string(rel.arity));
        }
        if (!rel.seen.insert(row_key(args)).second) {
            ++duplicates_;
            return;
        }
        for (Symbol a : args) entity_set_.insert(a);
        rel.rows.push_back(std::move(args));
        ++fact_count_;
        finalized_ = false;
    }

    void add(const Fact& f) { add(f.functor, f.args); }

    // TSV loader: functor TAB arg1 [TAB arg2 ...]. Blank lines and lines
    // starting with '#' are skipped.
    void load(std::istream& in) {
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            std::vector<Symbol> fields;
            std::size_t start = 0;
            while (true) {
                std::size_t tab = line.find('\t', start);
                std::string_view f(line.data() + start,
                                   (tab == std::string::npos ? line.size() : tab) - start);
                fields.push_back(intern(f));
                if (tab == std::string::npos) break;
                start = tab + 1;
            }
            if (fields.size() < 2)
                throw LoadError(lineno, "expected functor and at least one argument");
            Symbol functor = fields[0];
            fields.erase(fields.begin());
            add(functor, std::move(fields), lineno);
        }
        finalize();
    }

    // Sorts rows lexicographically by argument names and builds the
    // per-position indexes. Idempotent; called automatically by queries.
    void finalize() const {
        if (finalized_) return;
        for (auto& [functor, rel] : relations_) {
            std::sort(rel.rows.begin(), rel.rows.end(),
                      [](const std::vector<Symbol>& a, const std::vector<Symbol>& b) {
                          for (std::size_t i = 0; i < a.size(); ++i) {
                              const std::string& an = symbol_name(a[i]);
                              const std::string& bn = symbol_name(b[i]);
                              if (an != bn) return an < bn;
                          }
                          return false;
                      });
            rel.by_pos.assign(rel.arity, {});
            for (std::uint32_t row = 0; row < rel.rows.size(); ++row)
                for (std::size_t pos = 0; pos < rel.arity; ++pos)
                    rel.by_pos[pos][rel.rows[row][pos]].push_back(row);
        }
        entities_.assign(entity_set_.begin(), entity_set_.end());
        std::sort(entities_.begin(), entities_.end(), [](Symbol a, Symbol b) {
            return symbol_name(a) < symbol_name(b);
        });
        finalized_ = true;
    }

    bool has_relation(Symbol functor, std::size_t arity) const {
        auto it = relations_.find(functor);
        return it != relations_.end() && it->second.arity == arity;
    }

    // One substitution per matching fact, ordered lexicographically by the
    // facts' argument names.
    std::vector<Substitution> match(const Goal& g) const {
        std::vector<Substitution> out;
        for_each_match(g, [&](const std::vector<Symbol>& row) {
            Substitution s;
            for (std::size_t i = 0; i < g.args.size(); ++i)
                if (g.args[i].is_variable() && !s.lookup(g.args[i].var()))
                    s.bind(g.args[i].var(), Term::constant(row[i]));
            out.push_back(std::move(s));
        });
        return out;
    }

    std::size_t binding_count(const Goal& g) const {
        std::size_t n = 0;
        for_each_match(g, [&](const std::vector<Symbol>&) { ++n; });
        return n;
    }

    template <class Fn>
    void for_each_match(const Goal& g, Fn&& fn) const {
        finalize();
        auto it = relations_.find(g.functor);
        if (it == relations_.end() || it->second.arity != g.arity()) return;
        const Relation& rel = it->second;

        // Narrow with the rarest bound position, then verify the whole row.
        const std::vector<std::uint32_t>* candidates = nullptr;
        for (std::size_t i = 0; i < g.args.size(); ++i) {
            if (!g.args[i].is_constant()) continue;
            auto hit = rel.by_pos[i].find(g.args[i].symbol());
            if (hit == rel.by_pos[i].end()) return;
            if (!candidates || hit->second.size() < candidates->size())
                candidates = &hit->second;
        }
        auto row_matches = [&](const std::vector<Symbol>& row) {
            std::unordered_map<VarId, Symbol> bound;
            for (std::size_t i = 0; i < g.args.size(); ++i) {
                if (g.args[i].is_constant()) {
                    if (row[i] != g.args[i].symbol()) return false;
                } else {
                    auto [bit, fresh] = bound.try_emplace(g.args[i].var(), row[i]);
                    if (!fresh && bit->second != row[i]) return false;
                }
            }
            return true;
        };
        if (candidates) {
            for (std::uint32_t r : *candidates)
                if (row_matches(rel.rows[r])) fn(rel.rows[r]);
        } else {
            for (const auto& row : rel.rows)
                if (row_matches(row)) fn(row);
        }
    }

    std::size_t fact_count() const { return fact_count_; }
    std::size_t duplicate_count() const { return duplicates_; }

    const std::vector<Symbol>& entities() const {
        finalize();
        return entities_;
    }

    bool has_entity(Symbol e) const { return entity_set_.count(e) > 0; }

    template <class Fn>
    void for_each_fact(Fn&& fn) const {
        finalize();
        for (const auto& [functor, rel] : relations_)
            for (const auto& row : rel.rows) fn(functor, row);
    }

    void write(std::ostream& os) const {
        finalize();
        std::vector<Symbol> functors;
        for (const auto& [f, rel] : relations_) functors.push_back(f);
        std::sort(functors.begin(), functors.end(),
                  [](Symbol a, Symbol b) { return symbol_name(a) < symbol_name(b); });
        for (Symbol f : functors) {
            for (const auto& row : relations_.at(f).rows) {
                os << symbol_name(f);
                for (Symbol a : row) os << '\t' << symbol_name(a);
                os << '\n';
            }
        }
    }

    // Projects the KB onto the top-M entities of an untyped random walk with
    // restart from seed. Binary facts act as symmetric edges, parallel
    // relations counting with multiplicity. The seed is always retained; ties
    // break lexicographically by entity name.
    FactIndex subset(Symbol seed, std::size_t top_m, double alpha = 0.1) const {
        finalize();
        if (!has_entity(seed))
            throw std::runtime_error("subset seed entity '" + symbol_name(seed) +
                                     "' not present in KB");
        std::unordered_map<Symbol, std::unordered_map<Symbol, double>> adj;
        for (const auto& [functor, rel] : relations_) {
            if (rel.arity != 2) continue;
            for (const auto& row : rel.rows) {
                adj[row[0]][row[1]] += 1.0;
                adj[row[1]][row[0]] += 1.0;
            }
        }
        std::unordered_map<Symbol, double> mass;
        mass[seed] = 1.0;
        for (int iter = 0; iter < 1000; ++iter) {
            std::unordered_map<Symbol, double> next;
            next[seed] += alpha;
            for (const auto& [e, m] : mass) {
                auto it = adj.find(e);
                if (it == adj.end() || it->second.empty()) {
                    next[seed] += (1.0 - alpha) * m; // dangling: back to seed
                    continue;
                }
                double total = 0;
                for (const auto& [n, w] : it->second) total += w;
                for (const auto& [n, w] : it->second)
                    next[n] += (1.0 - alpha) * m * w / total;
            }
            double delta = 0;
            for (const auto& [e, m] : next) {
                auto it = mass.find(e);
                delta += std::abs(m - (it == mass.end() ? 0.0 : it->second));
            }
            mass = std::move(next);
            if (delta < 1e-13) break;
        }
        std::vector<std::pair<Symbol, double>> ranked;
        ranked.reserve(entities_.size());
        for (Symbol e : entities_)
            if (e != seed) ranked.push_back({e, mass.count(e) ? mass.at(e) : 0.0});
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return symbol_name(a.first) < symbol_name(b.first);
        });
        std::unordered_set<Symbol> keep{seed};
        for (const auto& [e, m] : ranked) {
            if (keep.size() >= top_m) break;
            keep.insert(e);
        }
        FactIndex out;
        for_each_fact([&](Symbol functor, const std::vector<Symbol>& row) {
            for (Symbol a : row)
                if (!keep.count(a)) return;
            out.add(functor, row);
        });
        out.finalize();
        return out;
    }

private:
    struct Relation {
        std::size_t arity = 0;
        mutable std::vector<std::vector<Symbol>> rows;
        mutable std::vector<std::unordered_map<Symbol, std::vector<std::uint32_t>>> by_pos;
        std::unordered_set<std::string> seen;
    };

    static std::string row_key(const std::vector<Symbol>& args) {
        std::string key;
        for (Symbol a : args) {
            key.append(symbol_name(a));
            key.push_back('\t');
        }
        return key;
    }

    mutable std::unordered_map<Symbol, Relation> relations_;
    std::unordered_set<Symbol> entity_set_;
    mutable std::vector<Symbol> entities_;
    std::size_t fact_count_ = 0;
    std::size_t duplicates_ = 0;
    mutable bool finalized_ = false;
};

} // namespace proppr
