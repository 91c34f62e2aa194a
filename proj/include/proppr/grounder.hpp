#pragma once

#include "proppr/fact_index.hpp"
#include "proppr/program.hpp"
#include "proppr/proof_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace proppr {

inline Goal db_feature() { return make_goal("db"); }
inline Goal def_restart_feature() { return make_goal("defRestart"); }
inline Goal clause_id_feature(int index) {
    return make_goal("id", {Term::constant("c" + std::to_string(index))});
}

// Feature vector for applying clause c with unifier theta: the instantiated
// annotation literals, or id(c) when the clause carries none.
inline FeatureVec features_of_clause(const Clause& c, const Substitution& theta) {
    FeatureVec fv;
    if (c.features.empty()) {
        fv.add(clause_id_feature(c.index), 1.0);
        return fv;
    }
    for (const Goal& tmpl : c.features) {
        Goal inst = theta.apply(tmpl);
        if (!inst.ground())
            throw std::runtime_error(
                "internal error: feature instantiated non-ground: " + to_string(inst));
        fv.add(std::move(inst), 1.0);
    }
    return fv;
}

// Restart-edge feature for a node whose leftmost subgoal is R (nullptr for a
// solution node). Rule-defined predicates get a unit defRestart; database
// predicates get n*alpha/(1-alpha) so that under unit weights and linear
// weighting the restart probability is exactly alpha.
inline FeatureVec restart_feature(const Goal* leftmost, const Program& program,
                                  const FactIndex& facts, double alpha) {
    FeatureVec fv;
    if (leftmost == nullptr || program.defines(leftmost->functor, leftmost->arity()) ||
        !facts.has_relation(leftmost->functor, leftmost->arity())) {
        fv.add(def_restart_feature(), 1.0);
        return fv;
    }
    std::size_t n = facts.binding_count(*leftmost);
    if (n == 0) n = 1; // dead-end db goal: keep the feature nonzero
    fv.add(def_restart_feature(), static_cast<double>(n) * alpha / (1.0 - alpha));
    return fv;
}

struct GroundConfig {
    double alpha = 0.1;
    Weighting weighting = Weighting::exp;
    // power iteration: run max_iterations steps, or to tolerance when 0
    int max_iterations = 0;
    double tolerance = 1e-10;
    int iteration_cap = 100000;
    // power only expands nodes whose mass exceeds this; mass reaching an
    // unexpanded state is dropped. Zero enumerates everything reachable,
    // which on recursive programs never terminates.
    double expansion_floor = 0.0;
    // power stops adding nodes past this budget (0 = unlimited); recursive
    // theories need it, their reachable proof space has no finite bound
    std::size_t max_nodes = 0;
    // nibble
    double epsilon = 1e-4;
    double alpha_prime = 0.0; // 0 = alpha * (smallest restart transition seen)
    double alpha_prime_floor = 1e-4;
};

enum class ProveStatus { ok, no_solutions, epsilon_too_large };

inline const char* to_string(ProveStatus s) {
    switch (s) {
        case ProveStatus::ok: return "ok";
        case ProveStatus::no_solutions: return "no-solutions";
        case ProveStatus::epsilon_too_large: return "epsilon-too-large";
    }
    return "?";
}

struct Answer {
    std::vector<Goal> literal; // the transformed query
    std::string text;
    double probability;
};

struct ProveResult {
    ProofGraph graph;
    std::vector<double> mass; // per node: v^T (power) or p (nibble)
    std::vector<double> residual; // nibble only: r at termination
    std::vector<Answer> answers;
    ProveStatus status = ProveStatus::ok;
    int iterations = 0;
    std::size_t pushes = 0;
    std::size_t clamped = 0;
    std::size_t sum_pushed_degrees = 0;
    double max_mass_plus_residual = 0.0;
    double alpha_prime_used = 0.0;

    GroundGraph ground() const { return to_ground_graph(graph, mass); }
};

// Normalized transition distribution over a node's successors, aligned with
// the adjacency order. Strengths of parallel labels to one successor add.
template <class Weights>
std::vector<double> transition_distribution(const std::vector<EdgeLabels>& edges,
                                            const Weights& w, Weighting mode) {
    std::vector<double> probs(edges.size(), 0.0);
    if (edges.empty()) return probs;
    if (mode == Weighting::exp) {
        double shift = -std::numeric_limits<double>::infinity();
        for (const EdgeLabels& e : edges)
            for (const FeatureVec& fv : e.labels)
                shift = std::max(shift, feature_dot(fv, w));
        double z = 0;
        for (std::size_t i = 0; i < edges.size(); ++i) {
            double f = 0;
            for (const FeatureVec& fv : edges[i].labels)
                f += std::exp(feature_dot(fv, w) - shift);
            probs[i] = f;
            z += f;
        }
        for (double& p : probs) p /= z;
    } else {
        double z = 0;
        for (std::size_t i = 0; i < edges.size(); ++i) {
            double f = 0;
            for (const FeatureVec& fv : edges[i].labels)
                f += std::max(feature_dot(fv, w), kLinearFloor);
            probs[i] = f;
            z += f;
        }
        for (double& p : probs) p /= z;
    }
    return probs;
}

// Builds proof graphs for one query at a time. Program, facts and parameters
// are shared read-only; each Grounder instance is confined to one thread.
class Grounder {
public:
    Grounder(const Program& program, const FactIndex& facts,
             const ParameterVector& params, GroundConfig config = {})
        : program_(program), facts_(facts), params_(params), config_(config) {}

    const GroundConfig& config() const { return config_; }

    // Successors of node u: one edge per applicable clause or matching fact
    // on the leftmost subgoal, plus the restart edge to the root. Solution
    // nodes get the self-loop and the restart edge, both carrying the restart
    // feature vector. Returns edges merged by destination, clause edges
    // first, then fact edges, restart last.
    std::vector<EdgeLabels> expand(ProofGraph& g, NodeId u) {
        const ProofNode& node = g.node(u);
        std::vector<EdgeLabels> edges;
        std::unordered_map<NodeId, std::size_t> slot;
        auto add_edge = [&](NodeId dst, FeatureVec fv) {
            auto [it, fresh] = slot.try_emplace(dst, edges.size());
            if (fresh) edges.push_back({dst, {}});
            edges[it->second].labels.push_back(std::move(fv));
        };

        if (node.is_solution()) {
            FeatureVec loop = restart_feature(nullptr, program_, facts_, config_.alpha);
            add_edge(u, loop);
            add_edge(g.root(), loop);
            return edges;
        }

        // The node's goals must be read before intern_node can grow the store;
        // copy what expansion needs.
        const Goal leftmost = node.subgoals[0];
        const std::vector<Goal> query = node.query;
        const std::vector<Goal> rest(node.subgoals.begin() + 1, node.subgoals.end());

        for (int ci : program_.clauses_for(leftmost.functor, leftmost.arity())) {
            Clause renamed = rename_apart(program_.clauses()[ci], fresh_);
            std::optional<Substitution> sigma = mgu(leftmost, renamed.head);
            if (!sigma) continue;
            std::vector<Goal> new_sub = sigma->apply(renamed.body);
            for (const Goal& r : rest) new_sub.push_back(sigma->apply(r));
            ProofNode v = canonical_node(sigma->apply(std::span<const Goal>(query)),
                                         new_sub);
            add_edge(g.intern_node(std::move(v)), features_of_clause(renamed, *sigma));
        }

        if (facts_.has_relation(leftmost.functor, leftmost.arity())) {
            for (const Substitution& sigma : facts_.match(leftmost)) {
                ProofNode v = canonical_node(sigma.apply(std::span<const Goal>(query)),
                                             sigma.apply(std::span<const Goal>(rest)));
                FeatureVec fv;
                fv.add(db_feature(), 1.0);
                add_edge(g.intern_node(std::move(v)), std::move(fv));
            }
        }

        add_edge(g.root(), restart_feature(&leftmost, program_, facts_, config_.alpha));
        return edges;
    }

    ProveResult prove_power(std::span<const Goal> query) {
        ProveResult res;
        NodeId root = init_root(res.graph, query);
        std::vector<double> v(1, 0.0);
        v[root] = 1.0;
        std::vector<std::vector<double>> probs; // cached per expanded node

        int t = 0;
        while (true) {
            ++t;
            const NodeId known = static_cast<NodeId>(v.size());
            for (NodeId u = 0; u < known; ++u) {
                if (config_.max_nodes && res.graph.size() >= config_.max_nodes) break;
                if (v[u] > config_.expansion_floor) ensure_expanded(res.graph, u, probs);
            }
            v.resize(res.graph.size(), 0.0);
            std::vector<double> next(res.graph.size(), 0.0);
            for (NodeId u = 0; u < v.size(); ++u) {
                if (v[u] <= 0) continue;
                const auto& edges = res.graph.adj(u);
                for (std::size_t i = 0; i < edges.size(); ++i)
                    next[edges[i].dst] += v[u] * probs[u][i];
            }
            double delta = 0;
            for (std::size_t i = 0; i < next.size(); ++i)
                delta += std::abs(next[i] - (i < v.size() ? v[i] : 0.0));
            v = std::move(next);
            if (config_.max_iterations > 0 && t >= config_.max_iterations) break;
            if (config_.max_iterations == 0 &&
                (delta <= config_.tolerance || t >= config_.iteration_cap))
                break;
        }
        res.iterations = t;
        for (NodeId u = 0; u < res.graph.size(); ++u)
            if (res.graph.expanded(u)) res.graph.mark_emitted(u);
        res.mass = std::move(v);
        res.mass.resize(res.graph.size(), 0.0);
        collect_answers(res);
        res.status = res.answers.empty() ? ProveStatus::no_solutions : ProveStatus::ok;
        return res;
    }

    // PageRank-Nibble-Prove: local push over the proof graph. p and r are
    // maintained so that p + sum_u r[u]*ppr(u) stays the personalized
    // PageRank of the root; each push moves alpha'*r[u] into p and spreads
    // the rest, (Pr(v0|u)-alpha')*r[u] to the root's residual and
    // Pr(v|u)*r[u] to every other successor. Nodes are pushed while
    // r(u)/|N(u)| > epsilon, in depth-first order.
    ProveResult prove_nibble(std::span<const Goal> query) {
        ProveResult res;
        NodeId root = init_root(res.graph, query);
        std::vector<double> p(1, 0.0), r(1, 0.0);
        r[root] = 1.0;
        std::vector<std::vector<double>> probs;
        std::vector<char> queued(1, false);
        std::vector<NodeId> stack{root};
        queued[root] = true;

        double min_restart = 1.0;
        const double eps = config_.epsilon;
        // The teleport share must stay constant across pushes or the
        // accumulated p drifts off the PPR fixpoint, so the lazily computed
        // default freezes at the first push.
        double frozen_alpha_prime = 0.0;

        while (!stack.empty()) {
            NodeId u = stack.back();
            stack.pop_back();
            queued[u] = false;
            if (r[u] <= 0) continue;
            // |N(u)| >= 1 always, so r <= eps can never pass the guard; skip
            // the expansion entirely.
            if (r[u] <= eps) continue;
            if (!res.graph.expanded(u)) {
                ensure_expanded(res.graph, u, probs);
                std::size_t grown = res.graph.size();
                p.resize(grown, 0.0);
                r.resize(grown, 0.0);
                queued.resize(grown, false);
                const auto& edges = res.graph.adj(u);
                for (std::size_t i = 0; i < edges.size(); ++i)
                    if (edges[i].dst == root)
                        min_restart = std::min(min_restart, probs[u][i]);
            }
            std::size_t degree = res.graph.adj(u).size();
            if (r[u] / static_cast<double>(degree) <= eps) continue;

            if (frozen_alpha_prime == 0.0)
                frozen_alpha_prime = effective_alpha_prime(min_restart);
            double ap = frozen_alpha_prime;
            res.alpha_prime_used = ap;
            double rho = r[u];
            p[u] += ap * rho;
            r[u] = 0.0;
            res.graph.mark_emitted(u);
            ++res.pushes;
            res.sum_pushed_degrees += degree;

            const auto& edges = res.graph.adj(u);
            for (std::size_t i = edges.size(); i-- > 0;) {
                double inc = (edges[i].dst == root) ? (probs[u][i] - ap) * rho
                                                    : probs[u][i] * rho;
                if (inc < 0) {
                    ++res.clamped;
                    continue;
                }
                if (inc == 0) continue;
                NodeId v = edges[i].dst;
                r[v] += inc;
                if (!queued[v]) {
                    queued[v] = true;
                    stack.push_back(v);
                }
            }
            double total = 0;
            for (double x : p) total += x;
            for (double x : r) total += x;
            res.max_mass_plus_residual = std::max(res.max_mass_plus_residual, total);
        }

        res.mass = std::move(p);
        res.mass.resize(res.graph.size(), 0.0);
        res.residual = std::move(r);
        res.residual.resize(res.graph.size(), 0.0);
        if (res.pushes == 0) {
            res.status = ProveStatus::epsilon_too_large;
            return res;
        }
        collect_answers(res);
        res.status = res.answers.empty() ? ProveStatus::no_solutions : ProveStatus::ok;
        return res;
    }

    ProveResult prove(std::span<const Goal> query, bool nibble) {
        return nibble ? prove_nibble(query) : prove_power(query);
    }

private:
    NodeId init_root(ProofGraph& g, std::span<const Goal> query) {
        if (query.empty()) throw std::runtime_error("empty query");
        NodeId root = g.intern_node(canonical_node(query, query));
        g.set_root(root);
        return root;
    }

    double effective_alpha_prime(double min_restart) const {
        if (config_.alpha_prime > 0) return config_.alpha_prime;
        return std::max(config_.alpha_prime_floor, config_.alpha * min_restart);
    }

    void ensure_expanded(ProofGraph& g, NodeId u, std::vector<std::vector<double>>& probs) {
        if (probs.size() < g.size()) probs.resize(g.size());
        if (g.expanded(u)) return;
        g.adj(u) = expand(g, u);
        g.mark_expanded(u);
        if (probs.size() < g.size()) probs.resize(g.size());
        probs[u] = transition_distribution(g.adj(u), ParamLookup{params_},
                                           config_.weighting);
    }

    void collect_answers(ProveResult& res) const {
        // Masses of distinct solution nodes with the same transformed query
        // are summed before renormalizing.
        std::unordered_map<std::string, std::size_t> by_text;
        std::vector<Answer> answers;
        double z = 0;
        for (NodeId u = 0; u < res.graph.size(); ++u) {
            const ProofNode& n = res.graph.node(u);
            if (!n.is_solution() || u >= res.mass.size() || res.mass[u] <= 0) continue;
            std::string text = to_string(std::span<const Goal>(n.query));
            auto [it, fresh] = by_text.try_emplace(text, answers.size());
            if (fresh) answers.push_back({n.query, std::move(text), 0.0});
            answers[it->second].probability += res.mass[u];
            z += res.mass[u];
        }
        if (z > 0)
            for (Answer& a : answers) a.probability /= z;
        std::sort(answers.begin(), answers.end(), [](const Answer& a, const Answer& b) {
            if (a.probability != b.probability) return a.probability > b.probability;
            return a.text < b.text;
        });
        res.answers = std::move(answers);
    }

    const Program& program_;
    const FactIndex& facts_;
    const ParameterVector& params_;
    GroundConfig config_;
    FreshVars fresh_;
};

} // namespace proppr
