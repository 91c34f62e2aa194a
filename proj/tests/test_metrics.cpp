#include "oracles.hpp"
#include "proppr/dataset.hpp"
#include "proppr/metrics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace proppr;

namespace {

std::vector<ScoredAnswer> labeled(std::initializer_list<std::pair<double, int>> xs) {
    std::vector<ScoredAnswer> out;
    int i = 0;
    for (const auto& [score, label] : xs)
        out.push_back({"a" + std::to_string(i++), score, label});
    return out;
}

} // namespace

TEST_CASE("auc_roc closed cases") {
    CHECK(auc_roc(labeled({{3, 1}, {2, 1}, {1, -1}, {0, -1}})) == 1.0);
    CHECK(auc_roc(labeled({{0, 1}, {1, 1}, {2, -1}, {3, -1}})) == 0.0);
    // pos {3,1}, neg {2,0}: 3 of 4 pairs correct
    CHECK(auc_roc(labeled({{3, 1}, {1, 1}, {2, -1}, {0, -1}})) == 0.75);
    // ties count one half
    CHECK(auc_roc(labeled({{1, 1}, {1, -1}})) == 0.5);
    CHECK_THROWS(auc_roc(labeled({{1, 1}, {2, 1}})));
}

TEST_CASE("auc_roc equals brute-force pairwise counting") {
    std::mt19937_64 rng(91);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ScoredAnswer> items;
        int n = 2 + static_cast<int>(rng() % 60);
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            int label = (rng() % 2) ? 1 : -1;
            // coarse scores so ties actually happen
            double score = static_cast<double>(rng() % 8);
            items.push_back({"x" + std::to_string(i), score, label});
            (label > 0 ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        CHECK(auc_roc(items) == Catch::Approx(oracles::brute_auc(items)).epsilon(1e-12));
    }
}

TEST_CASE("average precision cases") {
    RankedAnswerList perfect{"q", {{"a", 3, 1}, {"b", 2, 1}, {"c", 1, -1}}};
    CHECK(average_precision(perfect, 2) == 1.0);

    RankedAnswerList second{"q", {{"a", 3, -1}, {"b", 2, 1}}};
    CHECK(average_precision(second, 1) == 0.5);

    // MAP is the arithmetic mean of per-query AP
    RankedAnswerList half{"q2", {{"a", 3, -1}, {"b", 2, 1}}};
    std::vector<RankedAnswerList> lists{perfect, half};
    std::vector<std::size_t> gold{2, 1};
    EvalSummary s = evaluate(lists, gold);
    CHECK(s.map == Catch::Approx(0.75));
}

TEST_CASE("missing gold positives pull average precision down") {
    RankedAnswerList list{"q", {{"a", 3, 1}}};
    CHECK(average_precision(list, 2) == 0.5);
}

TEST_CASE("ranked lists break ties lexicographically") {
    RankedAnswerList list{"q", {{"b", 1, 0}, {"a", 1, 0}, {"c", 2, 0}}};
    list.sort();
    CHECK(list.items[0].answer == "c");
    CHECK(list.items[1].answer == "a");
    CHECK(list.items[2].answer == "b");
}

TEST_CASE("examples file round trip") {
    std::istringstream in(
        "about(a,Z)\t+about(a,fashion)\t-about(a,sport)\n"
        "about(b,Z)\t+about(b,sport)\n");
    auto examples = load_examples(in);
    REQUIRE(examples.size() == 2);
    CHECK(to_string(std::span<const Goal>(examples[0].query)) == "about(a,X0)");
    REQUIRE(examples[0].positives.size() == 1);
    REQUIRE(examples[0].negatives.size() == 1);
    std::ostringstream out;
    write_examples(out, examples);
    std::istringstream again(out.str());
    auto reloaded = load_examples(again);
    REQUIRE(reloaded.size() == 2);
    CHECK(reloaded[0].positives == examples[0].positives);
    CHECK(reloaded[0].negatives == examples[0].negatives);
}

TEST_CASE("sample_negatives draws from mutually exclusive relations") {
    std::istringstream facts(
        "athletePlaysSport\tben\tfootball\n"
        "athletePlaysHobby\tben\tchess\n"
        "athletePlaysHobby\tben\tpoker\n"
        "athletePlaysHobby\tben\tgolf\n"
        "athletePlaysHobby\tben\tdarts\n"
        "athletePlaysHobby\tben\tsnooker\n"
        "athletePlaysHobby\tzoe\tskiing\n");
    FactIndex idx;
    idx.load(facts);
    std::unordered_map<Symbol, std::vector<Symbol>> excl;
    std::istringstream cfg("athletePlaysSport\tathletePlaysHobby\n");
    excl = load_exclusivity(cfg);

    Goal query = parse_single_goal("athletePlaysSport(ben,S)");
    std::vector<std::vector<Goal>> positives{parse_goals("athletePlaysSport(ben,football)").first};
    std::mt19937_64 rng(5);

    SECTION("count=2 gives two distinct negatives from the five beliefs") {
        auto ns = sample_negatives(idx, query, positives, excl, 2, rng);
        REQUIRE(ns.negatives.size() == 2);
        CHECK(ns.negatives[0] != ns.negatives[1]);
        for (const Goal& g : ns.negatives) {
            CHECK(symbol_name(g.functor) == "athletePlaysSport");
            CHECK(symbol_name(g.args[0].symbol()) == "ben"); // query-compatible
        }
    }

    SECTION("count=0 gives nothing") {
        auto ns = sample_negatives(idx, query, positives, excl, 0, rng);
        CHECK(ns.negatives.empty());
    }

    SECTION("exclusive set within the positives yields empty plus warning") {
        std::vector<std::vector<Goal>> all_pos;
        for (const char* s : {"chess", "poker", "golf", "darts", "snooker"})
            all_pos.push_back(
                parse_goals("athletePlaysSport(ben," + std::string(s) + ")").first);
        auto ns = sample_negatives(idx, query, all_pos, excl, 2, rng);
        CHECK(ns.negatives.empty());
        CHECK_FALSE(ns.warning.empty());
    }

    SECTION("missing exclusivity entry warns and skips") {
        auto ns = sample_negatives(idx, parse_single_goal("cites(a,B)"), positives,
                                   excl, 2, rng);
        CHECK(ns.negatives.empty());
        CHECK_FALSE(ns.warning.empty());
    }
}

TEST_CASE("grounded graph file round trip") {
    std::mt19937_64 rng(77);
    int tested = 0;
    for (int trial = 0; trial < 20 && tested < 8; ++trial) {
        auto task = oracles::random_task(rng);
        ParameterVector w;
        Grounder grounder(task.program, task.facts, w);
        auto res = grounder.prove_power(task.query);
        if (res.answers.empty()) continue;
        GroundGraph gg = res.ground();
        std::ostringstream out;
        write_ground_graph(out, gg, "probe");
        std::istringstream in(out.str());
        auto [back, query] = read_ground_graph(in);
        CHECK(query == "probe");
        REQUIRE(back.node_count() == gg.node_count());
        CHECK(back.root == gg.root);
        REQUIRE(back.solutions == gg.solutions);
        REQUIRE(back.edge_count() == gg.edge_count());
        // feature vectors survive bit-exactly, so the PPR masses agree
        auto p1 = ppr_masses(gg, ParamLookup{w}, Weighting::exp, 20);
        auto p2 = ppr_masses(back, ParamLookup{w}, Weighting::exp, 20);
        REQUIRE(p1.size() == p2.size());
        for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
        ++tested;
    }
    REQUIRE(tested >= 5);
}

TEST_CASE("quoted feature constants survive the graph file") {
    GroundGraph gg;
    gg.root = 0;
    gg.adj.resize(2);
    FeatureVec odd;
    odd.add(make_goal("by", {Term::constant("with space, and(parens)")}), 0.5);
    odd.add(make_goal("db"), 1.0);
    gg.adj[0] = {{1, {odd}}};
    gg.solutions = {{1, "q('strange answer')"}};
    std::ostringstream out;
    write_ground_graph(out, gg, "q(X)");
    std::istringstream in(out.str());
    auto [back, query] = read_ground_graph(in);
    REQUIRE(back.adj[0].size() == 1);
    REQUIRE(back.adj[0][0].labels.size() == 1);
    CHECK(back.adj[0][0].labels[0] == gg.adj[0][0].labels[0]);
    CHECK(back.solutions == gg.solutions);
}

TEST_CASE("parameters file round trip") {
    ParameterVector pv;
    pv.set(parse_single_goal("by(sprinter)"), 1.2345678901234567);
    pv.set(parse_single_goal("db"), 0.25);
    pv.set(parse_single_goal("id(c3)"), -3.5e-7);
    std::ostringstream out;
    pv.save(out);
    std::istringstream in(out.str());
    ParameterVector back = ParameterVector::load(in);
    for (const auto& [f, v] : pv.sorted_entries()) CHECK(back.get(f) == v);
    CHECK(back.get(parse_single_goal("unseen")) == 1.0);
}
