#pragma once

#include "proppr/grounder.hpp"
#include "proppr/proof_graph.hpp"
#include "proppr/threading.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace proppr {

struct TrainingExample {
    std::vector<Goal> query;
    std::vector<std::vector<Goal>> positives;
    std::vector<std::vector<Goal>> negatives;
};

struct GroundedExample {
    GroundGraph graph;
    std::vector<NodeId> pos_nodes;
    std::vector<NodeId> neg_nodes;
    std::size_t missing_pos = 0;
    std::size_t missing_neg = 0;
};

struct Hyperparams {
    int epochs = 10;
    double eta = 1.0;        // initial learning rate; beta = eta / epoch^2
    double mu = 0.0;         // L2 coefficient
    int threads = 1;
    int loss_iterations = 20; // T for the exact PPR on the grounded graph
    double p_floor = 1e-10;  // stands in for solutions the grounding lost
    double init_jitter = 0.01;
    std::uint64_t seed_shuffle = 13;
    std::uint64_t seed_init = 17;
    Weighting weighting = Weighting::exp;
};

// ---------------------------------------------------------------------------
// Exact PPR restricted to a grounded graph: T synchronous power-iteration
// steps from the root. A frontier node (no recorded out-edges) sends its
// whole mass back to the root.

namespace detail {

template <class Weights>
struct Row {
    std::vector<double> label_f;   // strength per label, flattened over edges
    std::vector<double> succ_f;    // summed strength per successor
    double z = 0;
};

template <class Weights>
Row<Weights> node_row(const std::vector<EdgeLabels>& edges, const Weights& w,
                      Weighting mode) {
    Row<Weights> row;
    if (mode == Weighting::exp) {
        double shift = -std::numeric_limits<double>::infinity();
        for (const EdgeLabels& e : edges)
            for (const FeatureVec& fv : e.labels)
                shift = std::max(shift, feature_dot(fv, w));
        for (const EdgeLabels& e : edges) {
            double f = 0;
            for (const FeatureVec& fv : e.labels) {
                double fl = std::exp(feature_dot(fv, w) - shift);
                row.label_f.push_back(fl);
                f += fl;
            }
            row.succ_f.push_back(f);
            row.z += f;
        }
    } else {
        for (const EdgeLabels& e : edges) {
            double f = 0;
            for (const FeatureVec& fv : e.labels) {
                double fl = std::max(feature_dot(fv, w), kLinearFloor);
                row.label_f.push_back(fl);
                f += fl;
            }
            row.succ_f.push_back(f);
            row.z += f;
        }
    }
    return row;
}

} // namespace detail

template <class Weights>
std::vector<double> ppr_masses(const GroundGraph& gg, const Weights& w,
                               Weighting mode, int iterations) {
    std::size_t n = gg.node_count();
    std::vector<double> v(n, 0.0);
    if (n == 0) return v;
    v[gg.root] = 1.0;
    for (int t = 0; t < iterations; ++t) {
        std::vector<double> next(n, 0.0);
        for (NodeId u = 0; u < n; ++u) {
            if (v[u] == 0) continue;
            const auto& edges = gg.adj[u];
            if (edges.empty()) {
                next[gg.root] += v[u];
                continue;
            }
            auto row = detail::node_row(edges, w, mode);
            for (std::size_t i = 0; i < edges.size(); ++i)
                next[edges[i].dst] += v[u] * row.succ_f[i] / row.z;
        }
        v = std::move(next);
    }
    return v;
}

// Sorted list of the distinct features on the example's edges; the gradient
// lives on exactly these coordinates.
inline std::vector<Goal> graph_features(const GroundGraph& gg) {
    std::vector<Goal> feats;
    for (const auto& edges : gg.adj)
        for (const EdgeLabels& e : edges)
            for (const FeatureVec& fv : e.labels)
                for (const auto& [f, val] : fv.entries) feats.push_back(f);
    std::sort(feats.begin(), feats.end(), goal_less);
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());
    return feats;
}

template <class Weights>
double loss(const GroundedExample& ge, const Weights& w, double mu,
            Weighting mode = Weighting::exp, int iterations = 20,
            double p_floor = 1e-10) {
    std::vector<double> p = ppr_masses(ge.graph, w, mode, iterations);
    double total = 0;
    for (NodeId u : ge.pos_nodes) total -= std::log(std::max(p[u], p_floor));
    total -= std::log(p_floor) * static_cast<double>(ge.missing_pos);
    for (NodeId u : ge.neg_nodes) total -= std::log(std::max(1.0 - p[u], p_floor));
    if (mu != 0) {
        for (const Goal& f : graph_features(ge.graph)) {
            double wf = w(f);
            total += mu * wf * wf;
        }
    }
    return total;
}

// Gradient of the log loss + L2 term over the features on the example's
// edges, by forward-mode accumulation through the same T power-iteration
// steps the loss uses: alongside v^t we carry dv^t/dw_j, with the derivative
// of a normalized row given by d(F_v/Z) = (dF_v*Z - F_v*dZ)/Z^2.
template <class Weights>
std::vector<std::pair<Goal, double>> gradient(const GroundedExample& ge,
                                              const Weights& w, double mu,
                                              Weighting mode = Weighting::exp,
                                              int iterations = 20,
                                              double p_floor = 1e-10) {
    const GroundGraph& gg = ge.graph;
    std::vector<Goal> feats = graph_features(gg);
    std::unordered_map<Goal, std::size_t, GoalHash> fidx;
    for (std::size_t j = 0; j < feats.size(); ++j) fidx.emplace(feats[j], j);
    std::size_t nf = feats.size(), n = gg.node_count();

    std::vector<double> v(n, 0.0);
    if (n) v[gg.root] = 1.0;
    std::vector<std::vector<double>> dv(nf, std::vector<double>(n, 0.0));

    for (int t = 0; t < iterations; ++t) {
        std::vector<double> nv(n, 0.0);
        std::vector<std::vector<double>> ndv(nf, std::vector<double>(n, 0.0));
        for (NodeId u = 0; u < n; ++u) {
            const auto& edges = gg.adj[u];
            if (edges.empty()) {
                nv[gg.root] += v[u];
                for (std::size_t j = 0; j < nf; ++j)
                    ndv[j][gg.root] += dv[j][u];
                continue;
            }
            auto row = detail::node_row(edges, w, mode);
            // dZ/dw_j and dF_v/dw_j for features local to this node.
            std::vector<std::size_t> local;
            std::unordered_map<std::size_t, std::size_t> local_idx;
            std::size_t li = 0;
            for (const EdgeLabels& e : edges)
                for (const FeatureVec& fv : e.labels) {
                    (void)li;
                    for (const auto& [f, val] : fv.entries) {
                        std::size_t j = fidx.at(f);
                        if (local_idx.emplace(j, local.size()).second) local.push_back(j);
                    }
                }
            std::vector<double> dz(local.size(), 0.0);
            std::vector<std::vector<double>> df(edges.size(),
                                                std::vector<double>(local.size(), 0.0));
            std::size_t label = 0;
            for (std::size_t i = 0; i < edges.size(); ++i) {
                for (const FeatureVec& fv : edges[i].labels) {
                    double fl = row.label_f[label++];
                    double dot = 0;
                    if (mode == Weighting::linear) dot = feature_dot(fv, w);
                    for (const auto& [f, val] : fv.entries) {
                        double dfl;
                        if (mode == Weighting::exp) {
                            dfl = fl * val; // d exp(w.phi - shift)/dw_j, shift constant
                        } else {
                            dfl = (dot > kLinearFloor) ? val : 0.0;
                        }
                        std::size_t lj = local_idx.at(fidx.at(f));
                        df[i][lj] += dfl;
                        dz[lj] += dfl;
                    }
                }
            }
            for (std::size_t i = 0; i < edges.size(); ++i) {
                NodeId dst = edges[i].dst;
                double wuv = row.succ_f[i] / row.z;
                if (v[u] != 0) nv[dst] += v[u] * wuv;
                for (std::size_t j = 0; j < nf; ++j)
                    if (dv[j][u] != 0) ndv[j][dst] += dv[j][u] * wuv;
                if (v[u] != 0) {
                    for (std::size_t l = 0; l < local.size(); ++l) {
                        double dwuv = (df[i][l] * row.z - row.succ_f[i] * dz[l]) /
                                      (row.z * row.z);
                        ndv[local[l]][dst] += v[u] * dwuv;
                    }
                }
            }
        }
        v = std::move(nv);
        dv = std::move(ndv);
    }

    std::vector<std::pair<Goal, double>> grad;
    grad.reserve(nf);
    for (std::size_t j = 0; j < nf; ++j) grad.push_back({feats[j], 0.0});
    for (NodeId u : ge.pos_nodes) {
        double pu = std::max(v[u], p_floor);
        for (std::size_t j = 0; j < nf; ++j) grad[j].second -= dv[j][u] / pu;
    }
    for (NodeId u : ge.neg_nodes) {
        double rem = std::max(1.0 - v[u], p_floor);
        for (std::size_t j = 0; j < nf; ++j) grad[j].second += dv[j][u] / rem;
    }
    if (mu != 0)
        for (std::size_t j = 0; j < nf; ++j) grad[j].second += 2.0 * mu * w(feats[j]);
    return grad;
}

// ---------------------------------------------------------------------------
// Shared parameter vector for parallel SGD. The feature set is frozen before
// training; each entry updates through an atomic read-modify-write, so
// concurrent updates to one feature may lose an increment but never tear.

class SharedParams {
public:
    SharedParams(std::vector<Goal> features) : features_(std::move(features)) {
        std::sort(features_.begin(), features_.end(), goal_less);
        features_.erase(std::unique(features_.begin(), features_.end()),
                        features_.end());
        w_ = std::make_unique<std::atomic<double>[]>(features_.size());
        for (std::size_t j = 0; j < features_.size(); ++j)
            w_[j].store(1.0, std::memory_order_relaxed);
        for (std::size_t j = 0; j < features_.size(); ++j)
            index_.emplace(features_[j], j);
    }

    void init_jitter(double range, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> delta(0.0, range);
        for (std::size_t j = 0; j < features_.size(); ++j)
            w_[j].store(1.0 + delta(rng), std::memory_order_relaxed);
    }

    void warm_start(const ParameterVector& pv) {
        for (std::size_t j = 0; j < features_.size(); ++j)
            w_[j].store(pv.get(features_[j]), std::memory_order_relaxed);
    }

    double operator()(const Goal& f) const {
        auto it = index_.find(f);
        if (it == index_.end()) return 1.0;
        return w_[it->second].load(std::memory_order_relaxed);
    }

    void add(std::size_t j, double delta) {
        double cur = w_[j].load(std::memory_order_relaxed);
        while (!w_[j].compare_exchange_weak(cur, cur + delta,
                                            std::memory_order_relaxed)) {
        }
    }

    std::optional<std::size_t> index_of(const Goal& f) const {
        auto it = index_.find(f);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<Goal>& features() const { return features_; }

    ParameterVector snapshot() const {
        ParameterVector pv;
        for (std::size_t j = 0; j < features_.size(); ++j)
            pv.set(features_[j], w_[j].load(std::memory_order_relaxed));
        return pv;
    }

private:
    std::vector<Goal> features_;
    std::unordered_map<Goal, std::size_t, GoalHash> index_;
    std::unique_ptr<std::atomic<double>[]> w_;
};

inline double sgd_rate(double eta, int epoch) {
    return eta / (static_cast<double>(epoch) * static_cast<double>(epoch));
}

struct EpochStats {
    std::size_t skipped_updates = 0;
};

// One SGD epoch over the examples in the given (already shuffled) order.
// Workers own disjoint contiguous slices of the order and share w.
inline EpochStats sgd_epoch(std::span<const GroundedExample> examples,
                            std::span<const std::size_t> order, SharedParams& w,
                            const Hyperparams& h, int epoch) {
    double beta = sgd_rate(h.eta, epoch);
    std::atomic<std::size_t> skipped{0};
    parallel_for(order.size(), h.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const GroundedExample& ge = examples[order[k]];
            auto grad = gradient(ge, w, h.mu, h.weighting, h.loss_iterations,
                                 h.p_floor);
            bool finite = true;
            for (const auto& [f, g] : grad)
                if (!std::isfinite(g)) { finite = false; break; }
            if (!finite) {
                skipped.fetch_add(1, std::memory_order_relaxed);
                continue;
            }
            for (const auto& [f, g] : grad) {
                if (g == 0) continue;
                auto j = w.index_of(f);
                if (j) w.add(*j, -beta * g);
            }
        }
    });
    return {skipped.load()};
}

struct TrainResult {
    ParameterVector params;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_wall_ms;
    std::size_t dropped_examples = 0;
    std::size_t skipped_updates = 0;
    double final_loss = 0.0;
};

// Matches a grounding's solutions against an example's signed answers.
inline GroundedExample label_grounding(GroundGraph graph, const TrainingExample& ex) {
    GroundedExample ge;
    ge.graph = std::move(graph);
    std::unordered_map<std::string, NodeId> by_text;
    for (const auto& [id, text] : ge.graph.solutions) by_text.emplace(text, id);
    for (const auto& ans : ex.positives) {
        auto it = by_text.find(to_string(std::span<const Goal>(ans)));
        if (it == by_text.end()) ++ge.missing_pos;
        else ge.pos_nodes.push_back(it->second);
    }
    for (const auto& ans : ex.negatives) {
        auto it = by_text.find(to_string(std::span<const Goal>(ans)));
        if (it == by_text.end()) ++ge.missing_neg;
        else ge.neg_nodes.push_back(it->second);
    }
    return ge;
}

struct GroundingStats {
    std::size_t dropped = 0; // groundings with no solution nodes
};

inline std::vector<GroundedExample> ground_examples(
    std::span<const TrainingExample> examples, const Program& program,
    const FactIndex& facts, const ParameterVector& params,
    const GroundConfig& config, bool nibble, int threads, GroundingStats* stats) {
    std::vector<std::optional<GroundedExample>> slots(examples.size());
    parallel_for(examples.size(), threads, [&](std::size_t begin, std::size_t end) {
        Grounder grounder(program, facts, params, config);
        for (std::size_t i = begin; i < end; ++i) {
            ProveResult res = grounder.prove(examples[i].query, nibble);
            GroundGraph gg = res.ground();
            if (gg.solutions.empty()) continue;
            slots[i] = label_grounding(std::move(gg), examples[i]);
        }
    });
    std::vector<GroundedExample> out;
    for (auto& s : slots) {
        if (s) out.push_back(std::move(*s));
        else if (stats) ++stats->dropped;
    }
    return out;
}

inline double total_loss(std::span<const GroundedExample> examples,
                         const SharedParams& w, const Hyperparams& h) {
    std::vector<double> parts(examples.size(), 0.0);
    parallel_for(examples.size(), h.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            parts[i] = loss(examples[i], w, h.mu, h.weighting, h.loss_iterations,
                            h.p_floor);
    });
    double sum = 0;
    for (double x : parts) sum += x;
    return sum;
}

// Trains on already-grounded examples. Weights start at 1.0 + delta with
// delta uniform in [0, init_jitter], or at the warm-start values verbatim.
inline TrainResult train_grounded(std::span<const GroundedExample> examples,
                                  const Hyperparams& h,
                                  const ParameterVector* warm_start = nullptr) {
    std::vector<Goal> feats;
    for (const GroundedExample& ge : examples)
        for (const Goal& f : graph_features(ge.graph)) feats.push_back(f);
    SharedParams w(std::move(feats));
    if (warm_start) w.warm_start(*warm_start);
    else w.init_jitter(h.init_jitter, h.seed_init);

    TrainResult result;
    std::mt19937_64 shuffle_rng(h.seed_shuffle);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= h.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochStats stats = sgd_epoch(examples, order, w, h, epoch);
        result.skipped_updates += stats.skipped_updates;
        result.epoch_wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                      start)
                .count());
        result.epoch_loss.push_back(total_loss(examples, w, h));
    }
    result.final_loss =
        result.epoch_loss.empty() ? total_loss(examples, w, h) : result.epoch_loss.back();
    result.params = w.snapshot();
    return result;
}

// Grounds every example in parallel against a snapshot of the parameters,
// then runs parallel SGD over the shared vector.
inline TrainResult train(std::span<const TrainingExample> examples,
                         const Program& program, const FactIndex& facts,
                         const Hyperparams& h, const GroundConfig& config,
                         bool nibble = true,
                         const ParameterVector* warm_start = nullptr) {
    ParameterVector ground_params = warm_start ? *warm_start : ParameterVector{};
    GroundingStats gstats;
    std::vector<GroundedExample> grounded = ground_examples(
        examples, program, facts, ground_params, config, nibble, h.threads, &gstats);
    TrainResult result = train_grounded(grounded, h, warm_start);
    result.dropped_examples = gstats.dropped;
    return result;
}

} // namespace proppr
