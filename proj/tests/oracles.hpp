// Test-only oracles, kept independent of the code paths they check: the
// dense PPR oracle builds the transition matrix explicitly and iterates it to
// a fixpoint with its own strength arithmetic; the gradient oracle is central
// finite differences over the loss; the PRA oracle enumerates labeled walks.
#pragma once

#include "proppr/proppr.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracles {

using namespace proppr;

inline std::string node_text(const ProofNode& n) {
    return to_string(std::span<const Goal>(n.query)) + " | " +
           to_string(std::span<const Goal>(n.subgoals));
}

// Expands every reachable node (ids are insertion-ordered, so a single sweep
// reaches closure). Returns nullopt if the graph exceeds max_nodes.
inline std::optional<ProofGraph> enumerate_full(Grounder& grounder,
                                                std::span<const Goal> query,
                                                std::size_t max_nodes) {
    ProofGraph g;
    NodeId root = g.intern_node(canonical_node(query, query));
    g.set_root(root);
    for (NodeId u = 0; u < g.size(); ++u) {
        if (g.size() > max_nodes) return std::nullopt;
        g.adj(u) = grounder.expand(g, u);
        g.mark_expanded(u);
        g.mark_emitted(u);
    }
    if (g.size() > max_nodes) return std::nullopt;
    return g;
}

inline double own_strength(const FeatureVec& fv, const ParameterVector& w,
                           Weighting mode) {
    double dot = 0;
    for (const auto& [f, v] : fv.entries) dot += w.get(f) * v;
    if (mode == Weighting::exp) return std::exp(dot);
    return dot > 1e-10 ? dot : 1e-10;
}

// Explicit row-stochastic matrix over all nodes of a fully enumerated graph.
inline std::vector<std::vector<double>> dense_matrix(const ProofGraph& g,
                                                     const ParameterVector& w,
                                                     Weighting mode) {
    std::size_t n = g.size();
    std::vector<std::vector<double>> W(n, std::vector<double>(n, 0.0));
    for (NodeId u = 0; u < n; ++u) {
        double z = 0;
        for (const EdgeLabels& e : g.adj(u))
            for (const FeatureVec& fv : e.labels) z += own_strength(fv, w, mode);
        for (const EdgeLabels& e : g.adj(u)) {
            double f = 0;
            for (const FeatureVec& fv : e.labels) f += own_strength(fv, w, mode);
            W[u][e.dst] += f / z;
        }
    }
    return W;
}

// Power iteration v <- v W from the root, run to a 1e-15 fixpoint.
inline std::vector<double> dense_ppr(const std::vector<std::vector<double>>& W,
                                     NodeId root, double tol = 1e-15,
                                     int max_iters = 200000) {
    std::size_t n = W.size();
    std::vector<double> v(n, 0.0);
    v[root] = 1.0;
    for (int t = 0; t < max_iters; ++t) {
        std::vector<double> next(n, 0.0);
        for (std::size_t u = 0; u < n; ++u) {
            if (v[u] == 0) continue;
            for (std::size_t j = 0; j < n; ++j)
                if (W[u][j] != 0) next[j] += v[u] * W[u][j];
        }
        double delta = 0;
        for (std::size_t j = 0; j < n; ++j) delta += std::abs(next[j] - v[j]);
        v = std::move(next);
        if (delta < tol) break;
    }
    return v;
}

inline std::vector<double> dense_ppr_of(const ProofGraph& g, const ParameterVector& w,
                                        Weighting mode) {
    return dense_ppr(dense_matrix(g, w, mode), g.root());
}

// Central finite differences of the loss in each feature coordinate.
inline std::vector<std::pair<Goal, double>> fd_gradient(const GroundedExample& ge,
                                                        const ParameterVector& w,
                                                        double mu, Weighting mode,
                                                        int iterations,
                                                        double h = 1e-5) {
    std::vector<std::pair<Goal, double>> out;
    for (const Goal& f : graph_features(ge.graph)) {
        ParameterVector up = w, down = w;
        up.set(f, w.get(f) + h);
        down.set(f, w.get(f) - h);
        double lu = loss(ge, ParamLookup{up}, mu, mode, iterations);
        double ld = loss(ge, ParamLookup{down}, mu, mode, iterations);
        out.push_back({f, (lu - ld) / (2 * h)});
    }
    return out;
}

// Exhaustive enumeration of path-constrained walks: every relation-labeled
// walk contributes the product of its uniform one-step probabilities.
inline std::unordered_map<Symbol, double>
brute_path_walk(const FactIndex& idx, Symbol start, std::span<const PathStep> steps) {
    std::unordered_map<Symbol, double> dist;
    struct Frame {
        Symbol at;
        double prob;
        std::size_t depth;
    };
    std::vector<Frame> stack{{start, 1.0, 0}};
    while (!stack.empty()) {
        Frame fr = stack.back();
        stack.pop_back();
        if (fr.depth == steps.size()) {
            dist[fr.at] += fr.prob;
            continue;
        }
        const PathStep& step = steps[fr.depth];
        std::vector<Symbol> succs;
        idx.for_each_fact([&](Symbol functor, const std::vector<Symbol>& row) {
            if (functor != step.relation || row.size() != 2) return;
            if (step.dir == StepDir::forward && row[0] == fr.at)
                succs.push_back(row[1]);
            if (step.dir == StepDir::inverse && row[1] == fr.at)
                succs.push_back(row[0]);
        });
        for (Symbol s : succs)
            stack.push_back({s, fr.prob / static_cast<double>(succs.size()),
                             fr.depth + 1});
    }
    return dist;
}

inline std::string to_fact_prefixed(const std::string& name) {
    std::string out = "fact";
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    out.append(name, 1, std::string::npos);
    return out;
}

inline double brute_auc(std::span<const ScoredAnswer> items) {
    double correct = 0;
    std::size_t pairs = 0;
    for (const ScoredAnswer& p : items) {
        if (p.label <= 0) continue;
        for (const ScoredAnswer& n : items) {
            if (n.label >= 0) continue;
            ++pairs;
            if (p.score > n.score) correct += 1;
            else if (p.score == n.score) correct += 0.5;
        }
    }
    return correct / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Random program/KB/query triples with finite proof graphs: clause bodies are
// chains of database literals with at most one trailing rule literal, so
// subgoal lists never grow without bound.

struct RandomTask {
    Program program;
    FactIndex facts;
    std::vector<Goal> query;
    std::string rules_text;
};

inline RandomTask random_task(std::mt19937_64& rng) {
    auto pick = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    int n_entities = pick(4, 7);
    int n_db = pick(1, 2);
    int n_rules_preds = pick(1, 2);

    RandomTask task;
    for (int r = 0; r < n_db; ++r) {
        int edges = pick(3, 9);
        for (int e = 0; e < edges; ++e) {
            task.facts.add(intern("r" + std::to_string(r)),
                           {intern("e" + std::to_string(pick(0, n_entities - 1))),
                            intern("e" + std::to_string(pick(0, n_entities - 1)))});
        }
    }
    task.facts.finalize();

    std::ostringstream rules;
    int feature = 0;
    for (int p = 0; p < n_rules_preds; ++p) {
        int n_clauses = pick(1, 3);
        for (int c = 0; c < n_clauses; ++c) {
            std::string pred = "p" + std::to_string(p);
            int shape = pick(0, 3);
            rules << pred << "(X,Y) :- ";
            switch (shape) {
                case 0:
                    rules << "r" << pick(0, n_db - 1) << "(X,Y)";
                    break;
                case 1:
                    rules << "r" << pick(0, n_db - 1) << "(X,Z),r" << pick(0, n_db - 1)
                          << "(Z,Y)";
                    break;
                case 2:
                    rules << "r" << pick(0, n_db - 1) << "(X,Z),p"
                          << pick(0, n_rules_preds - 1) << "(Z,Y)";
                    break;
                default:
                    rules << "r" << pick(0, n_db - 1) << "(Y,X)";
                    break;
            }
            if (pick(0, 4) == 0) {
                rules << ".\n"; // unannotated: default id(c) feature
            } else {
                rules << " # f" << feature++ << ".\n";
            }
        }
    }
    task.rules_text = rules.str();
    task.program = parse_program(task.rules_text);
    task.query = {Goal{intern("p0"),
                       {Term::constant(intern("e" + std::to_string(pick(0, n_entities - 1)))),
                        Term::variable(0)}}};
    return task;
}

inline ParameterVector random_weights(std::mt19937_64& rng, const ProofGraph& g) {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    ParameterVector w;
    for (NodeId n = 0; n < g.size(); ++n)
        for (const EdgeLabels& e : g.adj(n))
            for (const FeatureVec& fv : e.labels)
                for (const auto& [f, v] : fv.entries)
                    if (!w.contains(f)) w.set(f, u(rng));
    return w;
}

} // namespace oracles
