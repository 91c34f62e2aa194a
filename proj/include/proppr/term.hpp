#pragma once

#include "proppr/symbols.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace proppr {

using VarId = std::uint32_t;

// Fresh variables allocated during grounding live far above the small ids the
// parser and node canonicalization hand out, so the two ranges never clash.
constexpr VarId kFreshVarBase = 1u << 20;

class FreshVars {
public:
    VarId next() { return counter_.fetch_add(1, std::memory_order_relaxed); }

private:
    std::atomic<VarId> counter_{kFreshVarBase};
};

// A term is a constant (interned symbol) or a variable (id). The language is
// function-free, so terms never nest.
class Term {
public:
    static Term constant(Symbol s) { return Term(false, s); }
    static Term constant(std::string_view name) { return Term(false, intern(name)); }
    static Term variable(VarId v) { return Term(true, v); }

    bool is_variable() const { return is_var_; }
    bool is_constant() const { return !is_var_; }
    Symbol symbol() const { return id_; }
    VarId var() const { return id_; }

    friend bool operator==(const Term& a, const Term& b) {
        return a.is_var_ == b.is_var_ && a.id_ == b.id_;
    }
    friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }

private:
    Term(bool is_var, std::uint32_t id) : is_var_(is_var), id_(id) {}
    bool is_var_;
    std::uint32_t id_;
};

struct Goal {
    Symbol functor;
    std::vector<Term> args;

    std::size_t arity() const { return args.size(); }

    friend bool operator==(const Goal& a, const Goal& b) {
        return a.functor == b.functor && a.args == b.args;
    }
    friend bool operator!=(const Goal& a, const Goal& b) { return !(a == b); }

    bool ground() const {
        for (const Term& t : args)
            if (t.is_variable()) return false;
        return true;
    }
};

inline Goal make_goal(std::string_view functor, std::initializer_list<Term> args = {}) {
    return Goal{intern(functor), std::vector<Term>(args)};
}

inline std::size_t hash_combine(std::size_t seed, std::size_t v) {
    return seed ^ (v + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
}

struct TermHash {
    std::size_t operator()(const Term& t) const {
        return hash_combine(t.is_variable() ? 0x9e37u : 0x85ebu,
                            std::hash<std::uint32_t>{}(t.is_variable() ? t.var() : t.symbol()));
    }
};

struct GoalHash {
    std::size_t operator()(const Goal& g) const {
        std::size_t h = std::hash<Symbol>{}(g.functor);
        for (const Term& t : g.args) h = hash_combine(h, TermHash{}(t));
        return h;
    }
};

// ---------------------------------------------------------------------------
// Printing. Constants that are not plain lowercase identifiers are quoted so
// the rules syntax can round-trip arbitrary fact constants.

inline bool plain_constant_name(const std::string& s) {
    if (s.empty()) return false;
    char c = s[0];
    bool lower = (c >= 'a' && c <= 'z');
    bool digit = (c >= '0' && c <= '9');
    if (!lower && !digit) return false;
    for (char ch : s) {
        bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                  (ch >= '0' && ch <= '9') || ch == '_' || ch == '\'' || ch == '.' ||
                  ch == '-';
        if (!ok) return false;
    }
    // A trailing/inner prime is an identifier character, but a leading digit
    // followed by punctuation still prints fine unquoted under this filter.
    return true;
}

using VarNamer = std::function<std::string(VarId)>;

inline std::string default_var_name(VarId v) {
    if (v >= kFreshVarBase) return "_G" + std::to_string(v - kFreshVarBase);
    return "X" + std::to_string(v);
}

inline void print_term(std::ostream& os, const Term& t, const VarNamer& namer) {
    if (t.is_variable()) {
        os << (namer ? namer(t.var()) : default_var_name(t.var()));
        return;
    }
    const std::string& s = symbol_name(t.symbol());
    if (plain_constant_name(s)) {
        os << s;
    } else {
        os << '\'';
        for (char c : s) {
            if (c == '\'') os << "\\'";
            else if (c == '\\') os << "\\\\";
            else os << c;
        }
        os << '\'';
    }
}

inline void print_goal(std::ostream& os, const Goal& g, const VarNamer& namer = {}) {
    os << symbol_name(g.functor);
    if (!g.args.empty()) {
        os << '(';
        for (std::size_t i = 0; i < g.args.size(); ++i) {
            if (i) os << ',';
            print_term(os, g.args[i], namer);
        }
        os << ')';
    }
}

inline std::string to_string(const Goal& g, const VarNamer& namer = {}) {
    std::ostringstream os;
    print_goal(os, g, namer);
    return os.str();
}

inline std::string to_string(std::span<const Goal> goals, const VarNamer& namer = {}) {
    std::ostringstream os;
    for (std::size_t i = 0; i < goals.size(); ++i) {
        if (i) os << ',';
        print_goal(os, goals[i], namer);
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Substitutions. Kept idempotent: every binding maps to a constant or to an
// unbound variable, never to another bound variable.

class Substitution {
public:
    bool empty() const { return bindings_.empty(); }
    std::size_t size() const { return bindings_.size(); }

    std::optional<Term> lookup(VarId v) const {
        auto it = bindings_.find(v);
        if (it == bindings_.end()) return std::nullopt;
        return it->second;
    }

    Term resolve(Term t) const {
        while (t.is_variable()) {
            auto it = bindings_.find(t.var());
            if (it == bindings_.end()) return t;
            t = it->second;
        }
        return t;
    }

    // Binds v to t; t must already be resolved. Never creates v -> v.
    void bind(VarId v, Term t) {
        if (t.is_variable() && t.var() == v) return;
        bindings_.emplace(v, t);
    }

    // Collapses var -> var -> const chains so apply() needs no chasing.
    void normalize() {
        for (auto& [v, t] : bindings_) t = resolve(t);
    }

    Term apply(const Term& t) const {
        if (!t.is_variable()) return t;
        auto it = bindings_.find(t.var());
        return it == bindings_.end() ? t : it->second;
    }

    Goal apply(const Goal& g) const {
        Goal out{g.functor, {}};
        out.args.reserve(g.args.size());
        for (const Term& t : g.args) out.args.push_back(apply(t));
        return out;
    }

    std::vector<Goal> apply(std::span<const Goal> goals) const {
        std::vector<Goal> out;
        out.reserve(goals.size());
        for (const Goal& g : goals) out.push_back(apply(g));
        return out;
    }

    const std::unordered_map<VarId, Term>& bindings() const { return bindings_; }

private:
    std::unordered_map<VarId, Term> bindings_;
};

// Most general unifier of two goals, or nullopt. Function-free terms need no
// occurs check.
inline std::optional<Substitution> mgu(const Goal& a, const Goal& b) {
    if (a.functor != b.functor || a.arity() != b.arity()) return std::nullopt;
    Substitution s;
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        Term x = s.resolve(a.args[i]);
        Term y = s.resolve(b.args[i]);
        if (x == y) continue;
        if (x.is_variable()) {
            s.bind(x.var(), y);
        } else if (y.is_variable()) {
            s.bind(y.var(), x);
        } else {
            return std::nullopt; // distinct constants
        }
    }
    s.normalize();
    return s;
}

} // namespace proppr
