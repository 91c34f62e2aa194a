#pragma once

#include "proppr/params.hpp"
#include "proppr/term.hpp"

#include <cstdint>
#include <deque>
#include <istream>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace proppr {

using NodeId = std::uint32_t;

// A proof state: the transformed query plus the remaining subgoal list. An
// empty subgoal list marks a solution. Stored in canonical form (variables
// renumbered 0.. in order of first occurrence) so equivalent states merge and
// the graph is a digraph rather than a tree.
struct ProofNode {
    std::vector<Goal> query;
    std::vector<Goal> subgoals;

    bool is_solution() const { return subgoals.empty(); }

    friend bool operator==(const ProofNode& a, const ProofNode& b) {
        return a.query == b.query && a.subgoals == b.subgoals;
    }
};

inline ProofNode canonical_node(std::span<const Goal> query, std::span<const Goal> subgoals) {
    std::unordered_map<VarId, VarId> remap;
    auto canon_goal = [&](const Goal& g) {
        Goal out{g.functor, {}};
        out.args.reserve(g.args.size());
        for (const Term& t : g.args) {
            if (t.is_constant()) {
                out.args.push_back(t);
            } else {
                auto [it, fresh] = remap.try_emplace(t.var(),
                                                     static_cast<VarId>(remap.size()));
                out.args.push_back(Term::variable(it->second));
            }
        }
        return out;
    };
    ProofNode n;
    n.query.reserve(query.size());
    for (const Goal& g : query) n.query.push_back(canon_goal(g));
    n.subgoals.reserve(subgoals.size());
    for (const Goal& g : subgoals) n.subgoals.push_back(canon_goal(g));
    return n;
}

struct ProofNodeHash {
    std::size_t operator()(const ProofNode& n) const {
        std::size_t h = 0x51ed270b;
        for (const Goal& g : n.query) h = hash_combine(h, GoalHash{}(g));
        h = hash_combine(h, 0xabcd);
        for (const Goal& g : n.subgoals) h = hash_combine(h, GoalHash{}(g));
        return h;
    }
};

// Out-edges to one successor; parallel clause applications to the same
// successor keep separate feature vectors (their strengths add).
struct EdgeLabels {
    NodeId dst;
    std::vector<FeatureVec> labels;
};

class ProofGraph {
public:
    NodeId intern_node(ProofNode n) {
        auto it = ids_.find(&n);
        if (it != ids_.end()) return it->second;
        nodes_.push_back(std::move(n));
        NodeId id = static_cast<NodeId>(nodes_.size() - 1);
        ids_.emplace(&nodes_.back(), id);
        adj_.emplace_back();
        expanded_.push_back(false);
        emitted_.push_back(false);
        return id;
    }

    const ProofNode& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    bool expanded(NodeId id) const { return expanded_[id]; }
    void mark_expanded(NodeId id) { expanded_[id] = true; }
    bool emitted(NodeId id) const { return emitted_[id]; }
    void mark_emitted(NodeId id) { emitted_[id] = true; }

    std::vector<EdgeLabels>& adj(NodeId id) { return adj_[id]; }
    const std::vector<EdgeLabels>& adj(NodeId id) const { return adj_[id]; }

    NodeId root() const { return root_; }
    void set_root(NodeId r) { root_ = r; }

    // Edges of the emitted subgraph, counting one edge per (src,dst) pair.
    std::size_t emitted_edge_count() const {
        std::size_t n = 0;
        for (NodeId u = 0; u < adj_.size(); ++u)
            if (emitted_[u]) n += adj_[u].size();
        return n;
    }

    std::vector<NodeId> solution_nodes() const {
        std::vector<NodeId> out;
        for (NodeId u = 0; u < nodes_.size(); ++u)
            if (nodes_[u].is_solution()) out.push_back(u);
        return out;
    }

private:
    struct PtrHash {
        std::size_t operator()(const ProofNode* n) const { return ProofNodeHash{}(*n); }
    };
    struct PtrEq {
        bool operator()(const ProofNode* a, const ProofNode* b) const { return *a == *b; }
    };

    std::deque<ProofNode> nodes_; // stable addresses back the key map
    std::unordered_map<const ProofNode*, NodeId, PtrHash, PtrEq> ids_;
    std::vector<std::vector<EdgeLabels>> adj_;
    std::vector<char> expanded_;
    std::vector<char> emitted_;
    NodeId root_ = 0;
};

// ---------------------------------------------------------------------------
// The grounded graph the learner consumes: pure structure, features, root and
// labeled solutions. Node ids are BFS order from the root. Nodes without
// out-edges are frontier states the grounding truncated; a walk entering one
// returns to the root.

struct GroundGraph {
    NodeId root = 0;
    std::vector<std::vector<EdgeLabels>> adj;
    std::vector<std::pair<NodeId, std::string>> solutions;

    std::size_t node_count() const { return adj.size(); }
    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const auto& edges : adj) n += edges.size();
        return n;
    }
};

// BFS numbering over the emitted subgraph. Only emitted nodes contribute
// out-edges; every edge endpoint becomes a node.
inline GroundGraph to_ground_graph(const ProofGraph& g,
                                   const std::vector<double>& mass) {
    GroundGraph out;
    if (g.size() == 0) return out;
    std::unordered_map<NodeId, NodeId> renum;
    std::vector<NodeId> order;
    std::queue<NodeId> bfs;
    auto visit = [&](NodeId u) {
        if (renum.count(u)) return;
        renum.emplace(u, static_cast<NodeId>(order.size()));
        order.push_back(u);
        bfs.push(u);
    };
    visit(g.root());
    while (!bfs.empty()) {
        NodeId u = bfs.front();
        bfs.pop();
        if (!g.emitted(u)) continue;
        for (const EdgeLabels& e : g.adj(u)) visit(e.dst);
    }
    out.root = renum.at(g.root());
    out.adj.resize(order.size());
    for (NodeId u : order) {
        if (!g.emitted(u)) continue;
        NodeId nu = renum.at(u);
        for (const EdgeLabels& e : g.adj(u))
            out.adj[nu].push_back({renum.at(e.dst), e.labels});
    }
    for (NodeId u : order) {
        const ProofNode& n = g.node(u);
        if (!n.is_solution()) continue;
        if (u < mass.size() && mass[u] > 0)
            out.solutions.push_back({renum.at(u), to_string(std::span<const Goal>(n.query))});
    }
    std::sort(out.solutions.begin(), out.solutions.end());
    return out;
}

// ---------------------------------------------------------------------------
// Grounded-graph file format.
//
//   <query> TAB <node count> TAB <root id> TAB <sol id>=<answer>[;...]
//   <src> TAB <dst> TAB feat:val[,feat:val...]     (one line per edge label)

namespace detail {

// Splits on `sep` at depth 0, respecting parentheses and quoted constants.
inline std::vector<std::string> split_outside(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (quoted) {
            cur.push_back(c);
            if (c == '\\' && i + 1 < s.size()) { cur.push_back(s[++i]); continue; }
            if (c == '\'') quoted = false;
            continue;
        }
        if (c == '\'') { quoted = true; cur.push_back(c); continue; }
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline void write_ground_graph(std::ostream& os, const GroundGraph& gg,
                               const std::string& query_text) {
    os << query_text << '\t' << gg.node_count() << '\t' << gg.root << '\t';
    for (std::size_t i = 0; i < gg.solutions.size(); ++i) {
        if (i) os << ';';
        os << gg.solutions[i].first << '=' << gg.solutions[i].second;
    }
    os << '\n';
    char buf[32];
    for (NodeId u = 0; u < gg.adj.size(); ++u) {
        for (const EdgeLabels& e : gg.adj[u]) {
            for (const FeatureVec& fv : e.labels) {
                os << u << '\t' << e.dst << '\t';
                for (std::size_t i = 0; i < fv.entries.size(); ++i) {
                    if (i) os << ',';
                    print_goal(os, fv.entries[i].first);
                    std::snprintf(buf, sizeof(buf), "%.17g", fv.entries[i].second);
                    os << ':' << buf;
                }
                os << '\n';
            }
        }
    }
}

inline std::pair<GroundGraph, std::string> read_ground_graph(std::istream& is) {
    std::string header;
    if (!std::getline(is, header))
        throw std::runtime_error("grounded graph: missing header line");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    auto fields = detail::split_outside(header, '\t');
    if (fields.size() < 3)
        throw std::runtime_error("grounded graph: malformed header");
    GroundGraph gg;
    std::string query = fields[0];
    std::size_t node_count = std::stoul(fields[1]);
    gg.root = static_cast<NodeId>(std::stoul(fields[2]));
    gg.adj.resize(node_count);
    if (fields.size() > 3 && !fields[3].empty()) {
        for (const std::string& part : detail::split_outside(fields[3], ';')) {
            std::size_t eq = part.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("grounded graph: malformed solution '" + part + "'");
            gg.solutions.push_back({static_cast<NodeId>(std::stoul(part.substr(0, eq))),
                                    part.substr(eq + 1)});
        }
    }
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = detail::split_outside(line, '\t');
        if (cols.size() != 3)
            throw std::runtime_error("grounded graph: malformed edge line '" + line + "'");
        NodeId src = static_cast<NodeId>(std::stoul(cols[0]));
        NodeId dst = static_cast<NodeId>(std::stoul(cols[1]));
        if (src >= node_count || dst >= node_count)
            throw std::runtime_error("grounded graph: node id out of range");
        FeatureVec fv;
        for (const std::string& item : detail::split_outside(cols[2], ',')) {
            std::size_t colon = item.rfind(':');
            if (colon == std::string::npos)
                throw std::runtime_error("grounded graph: malformed feature '" + item + "'");
            fv.add(parse_single_goal(item.substr(0, colon)),
                   std::stod(item.substr(colon + 1)));
        }
        auto& edges = gg.adj[src];
        auto it = std::find_if(edges.begin(), edges.end(),
                               [&](const EdgeLabels& e) { return e.dst == dst; });
        if (it == edges.end()) {
            edges.push_back({dst, {std::move(fv)}});
        } else {
            it->labels.push_back(std::move(fv));
        }
    }
    return {std::move(gg), std::move(query)};
}

} // namespace proppr
