#pragma once

#include "proppr/fact_index.hpp"
#include "proppr/program.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace proppr {

enum class StepDir { forward, inverse };

struct PathStep {
    Symbol relation;
    StepDir dir = StepDir::forward;
};

struct RelationPath {
    Symbol target;
    std::vector<PathStep> steps;
    double weight = 1.0;
};

using PathDistribution = std::unordered_map<Symbol, double>;

// Path-constrained random walk: start at s, follow each relation step with
// uniform one-step transitions over the source entity's successors under
// that relation and direction. Mass at an entity with no successors is
// dropped, so the distribution is sub-stochastic.
inline PathDistribution path_walk(const FactIndex& idx, Symbol start,
                                  std::span<const PathStep> steps) {
    PathDistribution h;
    h[start] = 1.0;
    for (const PathStep& step : steps) {
        if (!idx.has_relation(step.relation, 2))
            throw std::runtime_error("unknown relation '" + symbol_name(step.relation) +
                                     "' in path");
        PathDistribution next;
        for (const auto& [entity, mass] : h) {
            std::vector<Symbol> successors;
            Goal probe{step.relation,
                       step.dir == StepDir::forward
                           ? std::vector<Term>{Term::constant(entity), Term::variable(0)}
                           : std::vector<Term>{Term::variable(0), Term::constant(entity)}};
            std::size_t out_pos = step.dir == StepDir::forward ? 1 : 0;
            idx.for_each_match(probe, [&](const std::vector<Symbol>& row) {
                successors.push_back(row[out_pos]);
            });
            if (successors.empty()) continue;
            double share = mass / static_cast<double>(successors.size());
            for (Symbol e : successors) next[e] += share;
        }
        h = std::move(next);
    }
    return h;
}

inline PathDistribution path_walk(const FactIndex& idx, Symbol start,
                                  const RelationPath& path) {
    return path_walk(idx, start, path.steps);
}

using WeightedPathSet = std::vector<RelationPath>;

// Linear combination of the per-path distributions: sum_i w_i * h_{s,P_i}(e).
inline std::unordered_map<Symbol, double>
score_entities(const FactIndex& idx, Symbol start, const WeightedPathSet& paths) {
    std::unordered_map<Symbol, double> scores;
    for (const RelationPath& p : paths) {
        if (p.weight == 0 || p.steps.empty()) continue;
        for (const auto& [e, mass] : path_walk(idx, start, p))
            scores[e] += p.weight * mass;
    }
    std::erase_if(scores, [](const auto& kv) { return kv.second == 0.0; });
    return scores;
}

enum class TranslationMode { nonrecursive, recursive };

namespace detail {

inline std::string fact_prefixed(const std::string& name) {
    std::string out = "fact";
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    out.append(name, 1, std::string::npos);
    return out;
}

inline std::string step_predicate(const PathStep& step,
                                  const std::unordered_set<Symbol>& targets,
                                  TranslationMode mode) {
    std::string base = symbol_name(step.relation);
    if (step.dir == StepDir::inverse) base += "inverse";
    if (mode == TranslationMode::recursive && step.dir == StepDir::forward &&
        targets.count(step.relation))
        return base;
    return fact_prefixed(base);
}

} // namespace detail

// Turns PRA paths into a ProPPR theory. Non-recursive mode emits, per path,
//   p(S,T) :- factR1(S,X1), ..., factRk(Xk-1,T)
// with fact-prefixed body predicates. Recursive mode first emits the base
// clause p(S,T) :- factP(S,T) and drops the fact prefix from body predicates
// that are themselves learned targets, so the targets call each other.
// Inverse steps use the <relation>inverse predicate form. Each clause gets a
// feature naming its source path: path_<predicate>_<rank> (or _base).
inline Program translate_paths(
    const std::vector<std::pair<Symbol, WeightedPathSet>>& paths_per_predicate,
    TranslationMode mode, int top_k) {
    if (top_k <= 0) throw std::runtime_error("translate_paths: top-k must be positive");
    std::unordered_set<Symbol> targets;
    for (const auto& [pred, paths] : paths_per_predicate) targets.insert(pred);

    Program prog;
    for (const auto& [pred, paths] : paths_per_predicate) {
        const std::string pred_name = symbol_name(pred);
        if (mode == TranslationMode::recursive) {
            Clause base;
            base.head = Goal{pred, {Term::variable(0), Term::variable(1)}};
            base.body.push_back(Goal{intern(detail::fact_prefixed(pred_name)),
                                     {Term::variable(0), Term::variable(1)}});
            base.features.push_back(make_goal("path_" + pred_name + "_base"));
            base.var_names = {"S", "T"};
            prog.add(std::move(base));
        }
        WeightedPathSet ranked = paths;
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const RelationPath& a, const RelationPath& b) {
                             return a.weight > b.weight;
                         });
        int rank = 0;
        for (const RelationPath& path : ranked) {
            if (rank >= top_k) break;
            if (path.steps.empty()) continue;
            ++rank;
            Clause c;
            c.var_names = {"S", "T"};
            c.head = Goal{pred, {Term::variable(0), Term::variable(1)}};
            VarId prev = 0; // S
            for (std::size_t i = 0; i < path.steps.size(); ++i) {
                VarId next;
                if (i + 1 == path.steps.size()) {
                    next = 1; // T
                } else {
                    next = static_cast<VarId>(c.var_names.size());
                    c.var_names.push_back("X" + std::to_string(i + 1));
                }
                c.body.push_back(
                    Goal{intern(detail::step_predicate(path.steps[i], targets, mode)),
                         {Term::variable(prev), Term::variable(next)}});
                prev = next;
            }
            c.features.push_back(
                make_goal("path_" + pred_name + "_" + std::to_string(rank)));
            prog.add(std::move(c));
        }
    }
    return prog;
}

// Paths TSV: predicate TAB step[,step...] TAB weight, where a step is a
// relation name with an optional leading '^' marking the inverse direction.
inline std::vector<std::pair<Symbol, WeightedPathSet>> load_paths(std::istream& is) {
    std::vector<std::pair<Symbol, WeightedPathSet>> out;
    std::unordered_map<Symbol, std::size_t> slot;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos
                                                  ? std::string::npos
                                                  : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 3)
            throw std::runtime_error("paths line " + std::to_string(lineno) +
                                     ": expected predicate<TAB>steps<TAB>weight");
        RelationPath p;
        p.target = intern(cols[0]);
        std::size_t pos = 0;
        while (pos <= cols[1].size()) {
            std::size_t comma = cols[1].find(',', pos);
            std::string step = cols[1].substr(
                pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (!step.empty()) {
                PathStep ps;
                if (step[0] == '^') {
                    ps.dir = StepDir::inverse;
                    step.erase(0, 1);
                }
                ps.relation = intern(step);
                p.steps.push_back(ps);
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        p.weight = std::stod(cols[2]);
        auto [it, fresh] = slot.try_emplace(p.target, out.size());
        if (fresh) out.push_back({p.target, {}});
        out[it->second].second.push_back(std::move(p));
    }
    return out;
}

} // namespace proppr
