#include "oracles.hpp"
#include "proppr/grounder.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace proppr;

namespace {

const char* kTable1 = R"(
about(X,Z) :- handLabeled(X,Z) # base.
about(X,Z) :- sim(X,Y),about(Y,Z) # prop.
sim(X,Y) :- links(X,Y) # sim,link.
sim(X,Y) :- hasWord(X,W),hasWord(Y,W),linkedBy(X,Y,W) # sim,word.
linkedBy(X,Y,W) :- true # by(W).
)";

FactIndex doc_kb() {
    std::istringstream in(
        "links\ta\tb\nlinks\ta\tc\nlinks\tb\tc\n"
        "hasWord\ta\tsprinter\nhasWord\tc\tsprinter\nhasWord\tb\tgame\n"
        "handLabeled\tb\tsport\nhandLabeled\tc\tfashion\n");
    FactIndex idx;
    idx.load(in);
    return idx;
}

std::string feature_text(const FeatureVec& fv) {
    std::vector<std::string> parts;
    for (const auto& [f, v] : fv.entries)
        parts.push_back(to_string(f) + ":" + std::to_string(v));
    std::sort(parts.begin(), parts.end());
    std::string out;
    for (const auto& p : parts) out += p + ";";
    return out;
}

} // namespace

TEST_CASE("features_of_clause instantiates annotation literals") {
    Program prog = parse_program(kTable1);
    FreshVars fresh;
    // last clause of the program applied with X=a, Y=c, W=sprinter
    const Clause& by = prog.clauses()[4];
    Substitution theta;
    theta.bind(by.head.args[0].var(), Term::constant("a"));
    theta.bind(by.head.args[1].var(), Term::constant("c"));
    theta.bind(by.head.args[2].var(), Term::constant("sprinter"));
    FeatureVec fv = features_of_clause(by, theta);
    REQUIRE(fv.size() == 1);
    CHECK(to_string(fv.entries[0].first) == "by(sprinter)");
    CHECK(fv.entries[0].second == 1.0);

    // unannotated clause: default id(c) feature
    Program bare = parse_program("p(X) :- q(X).\nq(a).");
    FeatureVec def = features_of_clause(bare.clauses()[0], Substitution{});
    REQUIRE(def.size() == 1);
    CHECK(to_string(def.entries[0].first) == "id(c1)");

    // non-ground instantiation is an internal error
    Substitution partial;
    partial.bind(by.head.args[0].var(), Term::constant("a"));
    CHECK_THROWS(features_of_clause(by, partial));
}

TEST_CASE("restart_feature") {
    Program prog = parse_program(kTable1);
    FactIndex idx = doc_kb();

    Goal rule_goal = parse_single_goal("about(a,Z)");
    FeatureVec rf = restart_feature(&rule_goal, prog, idx, 0.1);
    REQUIRE(rf.size() == 1);
    CHECK(to_string(rf.entries[0].first) == "defRestart");
    CHECK(rf.entries[0].second == 1.0);

    // db goal with n=3 bindings at alpha=0.1: 3 * 0.1/0.9 = 1/3
    Goal db_goal = parse_single_goal("links(X,Y)");
    FeatureVec db3 = restart_feature(&db_goal, prog, idx, 0.1);
    CHECK(db3.entries[0].second == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

    // db goal with n=1 at alpha=0.5: 1.0
    Goal db_one = parse_single_goal("handLabeled(b,Z)");
    FeatureVec db1 = restart_feature(&db_one, prog, idx, 0.5);
    CHECK(db1.entries[0].second == Catch::Approx(1.0).epsilon(1e-12));

    // solution node
    FeatureVec sol = restart_feature(nullptr, prog, idx, 0.1);
    CHECK(to_string(sol.entries[0].first) == "defRestart");
    CHECK(sol.entries[0].second == 1.0);
}

TEST_CASE("expand mirrors the proof-graph construction") {
    Program prog = parse_program(kTable1);
    FactIndex idx = doc_kb();
    ParameterVector w;
    Grounder grounder(prog, idx, w);

    auto [q, names] = parse_goals("about(a,Z)");
    ProofGraph g;
    NodeId root = g.intern_node(canonical_node(q, q));
    g.set_root(root);
    auto edges = grounder.expand(g, root);

    // successors: handLabeled(a,Z) via #base, sim(a,Y),about(Y,Z) via #prop,
    // plus the restart edge (here a self-loop on the root)
    REQUIRE(edges.size() == 3);
    CHECK(feature_text(edges[0].labels[0]) == "base:1.000000;");
    CHECK(feature_text(edges[1].labels[0]) == "prop:1.000000;");
    CHECK(edges[2].dst == root);
    const ProofNode& prop = g.node(edges[1].dst);
    // canonical renaming counts the transformed query's variable first
    CHECK(to_string(std::span<const Goal>(prop.subgoals)) == "sim(a,X1),about(X1,X0)");

    // a solution node has exactly the self-loop and the restart edge
    ProofGraph g2;
    NodeId r2 = g2.intern_node(canonical_node(q, q));
    g2.set_root(r2);
    NodeId sol = g2.intern_node(
        canonical_node(parse_goals("about(a,fashion)").first, {}));
    auto sol_edges = grounder.expand(g2, sol);
    REQUIRE(sol_edges.size() == 2);
    CHECK(sol_edges[0].dst == sol);
    CHECK(sol_edges[1].dst == r2);
    CHECK(feature_text(sol_edges[0].labels[0]) == "defRestart:1.000000;");
    CHECK(feature_text(sol_edges[1].labels[0]) == "defRestart:1.000000;");

    // a node whose db subgoal has no match keeps only the restart edge
    NodeId dead = g2.intern_node(
        canonical_node(q, parse_goals("links(zzz,Q)").first));
    auto dead_edges = grounder.expand(g2, dead);
    REQUIRE(dead_edges.size() == 1);
    CHECK(dead_edges[0].dst == r2);
}

TEST_CASE("transition distributions") {
    ParameterVector unit;

    SECTION("equal strengths split uniformly") {
        FeatureVec a, b, r;
        a.add(make_goal("f1"), 1.0);
        b.add(make_goal("f2"), 1.0);
        r.add(make_goal("defRestart"), 1.0);
        std::vector<EdgeLabels> edges{{1, {a}}, {2, {b}}, {0, {r}}};
        for (Weighting mode : {Weighting::exp, Weighting::linear}) {
            auto p = transition_distribution(edges, ParamLookup{unit}, mode);
            CHECK(p[0] == Catch::Approx(1.0 / 3));
            CHECK(p[1] == Catch::Approx(1.0 / 3));
            CHECK(p[2] == Catch::Approx(1.0 / 3));
        }
    }

    SECTION("linear mode restart probability is alpha for db nodes") {
        for (double alpha : {0.05, 0.1, 0.3}) {
            for (int n : {1, 2, 5, 17}) {
                std::vector<EdgeLabels> edges;
                for (int i = 0; i < n; ++i) {
                    FeatureVec db;
                    db.add(make_goal("db"), 1.0);
                    edges.push_back({static_cast<NodeId>(i + 1), {db}});
                }
                FeatureVec rf;
                rf.add(make_goal("defRestart"), n * alpha / (1 - alpha));
                edges.push_back({0, {rf}});
                auto p = transition_distribution(edges, ParamLookup{unit},
                                                 Weighting::linear);
                CHECK(p.back() == Catch::Approx(alpha).margin(1e-14));
            }
        }
    }

    SECTION("exp mode matches a scalar dot-product oracle") {
        ParameterVector w;
        w.set(make_goal("by", {Term::constant("sprinter")}), std::log(2.0));
        FeatureVec by, db;
        by.add(make_goal("by", {Term::constant("sprinter")}), 1.0);
        db.add(make_goal("db"), 1.0);
        std::vector<EdgeLabels> edges{{1, {by}}, {2, {db}}};
        auto p = transition_distribution(edges, ParamLookup{w}, Weighting::exp);
        // scalar oracle: exp(ln 2 * 1) vs exp(1.0 * 1)
        double f_by = std::exp(std::log(2.0));
        double f_db = std::exp(1.0);
        CHECK(p[0] == Catch::Approx(f_by / (f_by + f_db)).epsilon(1e-12));
        CHECK(p[1] == Catch::Approx(f_db / (f_by + f_db)).epsilon(1e-12));
        CHECK(p[0] / p[1] == Catch::Approx(2.0 / std::exp(1.0)).epsilon(1e-12));
    }

    SECTION("rows sum to one under random weights") {
        std::mt19937_64 rng(23);
        for (int trial = 0; trial < 40; ++trial) {
            auto task = oracles::random_task(rng);
            ParameterVector unitw;
            Grounder grounder(task.program, task.facts, unitw);
            auto g = oracles::enumerate_full(grounder, task.query, 400);
            if (!g) continue;
            ParameterVector w = oracles::random_weights(rng, *g);
            for (Weighting mode : {Weighting::exp, Weighting::linear}) {
                for (NodeId u = 0; u < g->size(); ++u) {
                    auto p = transition_distribution(g->adj(u), ParamLookup{w}, mode);
                    double sum = 0;
                    for (double x : p) {
                        CHECK(x > 0);
                        sum += x;
                    }
                    CHECK(std::abs(sum - 1.0) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("power iteration on a one-fact proof gives probability one") {
    Program prog = parse_program("q(X,Y) :- r(X,Y) # f.");
    FactIndex idx;
    idx.add(intern("r"), {intern("a"), intern("b")});
    idx.finalize();
    ParameterVector w;
    Grounder grounder(prog, idx, w);
    auto res = grounder.prove_power(parse_goals("q(a,Y)").first);
    REQUIRE(res.status == ProveStatus::ok);
    REQUIRE(res.answers.size() == 1);
    CHECK(res.answers[0].text == "q(a,b)");
    CHECK(res.answers[0].probability == Catch::Approx(1.0));
}

TEST_CASE("power iteration finds both labels for the running example") {
    Program prog = parse_program(kTable1);
    FactIndex idx = doc_kb();
    ParameterVector w;
    Grounder grounder(prog, idx, w);
    auto res = grounder.prove_power(parse_goals("about(a,Z)").first);
    REQUIRE(res.status == ProveStatus::ok);
    REQUIRE(res.answers.size() == 2);
    double total = 0;
    for (const auto& a : res.answers) {
        CHECK((a.text == "about(a,sport)" || a.text == "about(a,fashion)"));
        CHECK(a.probability > 0);
        total += a.probability;
    }
    CHECK(total == Catch::Approx(1.0));
}

TEST_CASE("unprovable query yields empty answers and a warning status") {
    Program prog = parse_program("q(X,Y) :- r(X,Y) # f.");
    FactIndex idx;
    idx.add(intern("r"), {intern("a"), intern("b")});
    idx.finalize();
    ParameterVector w;
    Grounder grounder(prog, idx, w);
    auto res = grounder.prove_power(parse_goals("q(zz,Y)").first);
    CHECK(res.status == ProveStatus::no_solutions);
    CHECK(res.answers.empty());
}

TEST_CASE("power iteration matches the dense PPR oracle") {
    std::mt19937_64 rng(71);
    int tested = 0;
    for (int trial = 0; trial < 60 && tested < 25; ++trial) {
        auto task = oracles::random_task(rng);
        ParameterVector unitw;
        for (Weighting mode : {Weighting::exp, Weighting::linear}) {
            GroundConfig cfg;
            cfg.weighting = mode;
            cfg.tolerance = 1e-14;
            Grounder grounder(task.program, task.facts, unitw, cfg);
            auto full = oracles::enumerate_full(grounder, task.query, 250);
            if (!full) break;
            ParameterVector w = oracles::random_weights(rng, *full);
            Grounder weighted(task.program, task.facts, w, cfg);
            auto res = weighted.prove_power(task.query);
            auto oracle = oracles::dense_ppr_of(*full, w, mode);

            // align by node text
            std::unordered_map<std::string, double> expected;
            for (NodeId u = 0; u < full->size(); ++u)
                expected[oracles::node_text(full->node(u))] = oracle[u];
            REQUIRE(res.graph.size() == full->size());
            for (NodeId u = 0; u < res.graph.size(); ++u) {
                double want = expected.at(oracles::node_text(res.graph.node(u)));
                CHECK(std::abs(res.mass[u] - want) <= 1e-8);
            }
            ++tested;
        }
    }
    REQUIRE(tested >= 10);
}

TEST_CASE("grounding the same query twice yields isomorphic graphs") {
    Program prog = parse_program(kTable1);
    FactIndex idx = doc_kb();
    ParameterVector w;
    Grounder g1(prog, idx, w), g2(prog, idx, w);
    auto r1 = g1.prove_power(parse_goals("about(a,Z)").first);
    auto r2 = g2.prove_power(parse_goals("about(a,Z)").first);
    REQUIRE(r1.graph.size() == r2.graph.size());
    for (NodeId u = 0; u < r1.graph.size(); ++u) {
        CHECK(oracles::node_text(r1.graph.node(u)) == oracles::node_text(r2.graph.node(u)));
        REQUIRE(r1.graph.adj(u).size() == r2.graph.adj(u).size());
        for (std::size_t i = 0; i < r1.graph.adj(u).size(); ++i)
            CHECK(r1.graph.adj(u)[i].dst == r2.graph.adj(u)[i].dst);
    }
    std::ostringstream s1, s2;
    write_ground_graph(s1, r1.ground(), "q");
    write_ground_graph(s2, r2.ground(), "q");
    CHECK(s1.str() == s2.str());
}

TEST_CASE("equivalent proof states merge into one node") {
    // two clause routes reach the same state, so the graph is a digraph
    Program prog = parse_program(
        "p(X,Y) :- a(X,Z),c(Z,Y) # left.\n"
        "p(X,Y) :- b(X,Z),c(Z,Y) # right.\n");
    FactIndex idx;
    idx.add(intern("a"), {intern("s"), intern("m")});
    idx.add(intern("b"), {intern("s"), intern("m")});
    idx.add(intern("c"), {intern("m"), intern("t")});
    idx.finalize();
    ParameterVector w;
    Grounder grounder(prog, idx, w);
    auto res = grounder.prove_power(parse_goals("p(s,Y)").first);
    // states: root, (c(m,Y)) shared by both routes, solution
    std::size_t shared = 0;
    for (NodeId u = 0; u < res.graph.size(); ++u) {
        if (oracles::node_text(res.graph.node(u)).find("c(m,") != std::string::npos)
            ++shared;
    }
    CHECK(shared == 1);
}

TEST_CASE("depth decay on a chain of db subgoals") {
    // conjunctive query of db goals: every node's restart probability is
    // exactly alpha under linear weighting, so mass at depth d is bounded by
    // (1-alpha)^d
    const int len = 24;
    FactIndex idx;
    for (int i = 0; i < len; ++i)
        idx.add(intern("e"), {intern("a" + std::to_string(i)),
                              intern("a" + std::to_string(i + 1))});
    idx.finalize();
    Program prog; // no rules: pure db chain
    std::ostringstream q2;
    q2 << "e(a0,X1)";
    for (int i = 1; i < len; ++i) q2 << ",e(X" << i << ",X" << i + 1 << ")";
    const double alpha = 0.1;
    GroundConfig cfg;
    cfg.alpha = alpha;
    cfg.weighting = Weighting::linear;
    cfg.tolerance = 1e-14;
    ParameterVector w;
    Grounder grounder(prog, idx, w, cfg);
    auto res = grounder.prove_power(parse_goals(q2.str()).first);

    // depth = BFS distance from the root
    std::vector<int> depth(res.graph.size(), -1);
    std::vector<NodeId> frontier{res.graph.root()};
    depth[res.graph.root()] = 0;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
        NodeId u = frontier[i];
        for (const EdgeLabels& e : res.graph.adj(u)) {
            if (depth[e.dst] < 0) {
                depth[e.dst] = depth[u] + 1;
                frontier.push_back(e.dst);
            }
        }
    }
    std::vector<double> mass_at_depth(len + 2, 0.0);
    for (NodeId u = 0; u < res.graph.size(); ++u)
        if (depth[u] >= 0 && depth[u] <= len + 1) mass_at_depth[depth[u]] += res.mass[u];
    for (int d = 1; d <= 20; ++d)
        CHECK(mass_at_depth[d] <= std::pow(1 - alpha, d) + 1e-9);
}
