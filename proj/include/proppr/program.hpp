#pragma once

#include "proppr/term.hpp"

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace proppr {

// Annotated definite clause. Variable ids are clause-local, 0..n-1 in order of
// first appearance; var_names keeps the surface spelling for printing.
struct Clause {
    Goal head;
    std::vector<Goal> body;      // empty body is the `true` clause
    std::vector<Goal> features;  // templates from the `# ...` annotation
    std::vector<std::string> var_names;
    int index = 0;               // 1-based position in the program

    VarNamer namer() const {
        return [this](VarId v) {
            if (v < var_names.size()) return var_names[v];
            return default_var_name(v);
        };
    }
};

inline void print_clause(std::ostream& os, const Clause& c) {
    VarNamer namer = c.namer();
    print_goal(os, c.head, namer);
    if (c.body.empty()) {
        os << " :- true";
    } else {
        os << " :- ";
        for (std::size_t i = 0; i < c.body.size(); ++i) {
            if (i) os << ',';
            print_goal(os, c.body[i], namer);
        }
    }
    if (!c.features.empty()) {
        os << " # ";
        for (std::size_t i = 0; i < c.features.size(); ++i) {
            if (i) os << ',';
            print_goal(os, c.features[i], namer);
        }
    }
    os << '.';
}

inline std::string to_string(const Clause& c) {
    std::ostringstream os;
    print_clause(os, c);
    return os.str();
}

class Program {
public:
    void add(Clause c) {
        c.index = static_cast<int>(clauses_.size()) + 1;
        by_head_[key(c.head.functor, c.head.arity())].push_back(
            static_cast<int>(clauses_.size()));
        clauses_.push_back(std::move(c));
    }

    const std::vector<Clause>& clauses() const { return clauses_; }
    std::size_t size() const { return clauses_.size(); }
    bool empty() const { return clauses_.empty(); }

    // Indices of clauses whose head can match functor/arity, in program order.
    std::span<const int> clauses_for(Symbol functor, std::size_t arity) const {
        auto it = by_head_.find(key(functor, arity));
        if (it == by_head_.end()) return {};
        return it->second;
    }

    bool defines(Symbol functor, std::size_t arity) const {
        return by_head_.count(key(functor, arity)) > 0;
    }

private:
    static std::uint64_t key(Symbol f, std::size_t arity) {
        return (static_cast<std::uint64_t>(f) << 8) | (arity & 0xff);
    }

    std::vector<Clause> clauses_;
    std::unordered_map<std::uint64_t, std::vector<int>> by_head_;
};

inline void print_program(std::ostream& os, const Program& p) {
    for (const Clause& c : p.clauses()) {
        print_clause(os, c);
        os << '\n';
    }
}

inline std::string to_string(const Program& p) {
    std::ostringstream os;
    print_program(os, p);
    return os.str();
}

// Standardizes a clause apart: every variable replaced by a globally fresh
// one, consistently across head, body and feature templates.
inline Clause rename_apart(const Clause& c, FreshVars& fresh) {
    std::unordered_map<VarId, Term> map;
    auto rename_term = [&](const Term& t) {
        if (!t.is_variable()) return t;
        auto it = map.find(t.var());
        if (it != map.end()) return it->second;
        Term nv = Term::variable(fresh.next());
        map.emplace(t.var(), nv);
        return nv;
    };
    auto rename_goal = [&](const Goal& g) {
        Goal out{g.functor, {}};
        out.args.reserve(g.args.size());
        for (const Term& t : g.args) out.args.push_back(rename_term(t));
        return out;
    };
    Clause out;
    out.head = rename_goal(c.head);
    out.body.reserve(c.body.size());
    for (const Goal& g : c.body) out.body.push_back(rename_goal(g));
    out.features.reserve(c.features.size());
    for (const Goal& g : c.features) out.features.push_back(rename_goal(g));
    out.index = c.index;
    return out;
}

} // namespace proppr
