// Command-line driver: grounding, training, answering, evaluation, KB
// subsetting, negative sampling and PRA path translation.

#include "proppr/proppr.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace proppr;

namespace {

struct CommonOpts {
    std::string rules_file;
    std::string facts_file;
    double alpha = 0.1;
    double epsilon = 1e-4;
    double alpha_prime = 0.0;
    std::string prover = "nibble";
    std::string weighting = "exp";
    int threads = 1;
    int max_iterations = 0;
    double tolerance = 1e-10;

    GroundConfig config() const {
        GroundConfig c;
        c.alpha = alpha;
        c.epsilon = epsilon;
        c.alpha_prime = alpha_prime;
        c.weighting = weighting_from_string(weighting);
        c.max_iterations = max_iterations;
        c.tolerance = tolerance;
        return c;
    }
    bool nibble() const { return prover == "nibble"; }
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_rules = true) {
    if (with_rules)
        cmd->add_option("--rules", o.rules_file, "rules file")->required();
    cmd->add_option("--facts", o.facts_file, "facts TSV")->required();
    cmd->add_option("--alpha", o.alpha, "restart parameter (default 0.1)");
    cmd->add_option("--epsilon", o.epsilon, "nibble approximation (default 1e-4)");
    cmd->add_option("--alpha-prime", o.alpha_prime,
                    "push teleport lower bound (default: auto)");
    cmd->add_option("--prover", o.prover, "nibble|power")
        ->check(CLI::IsMember({"nibble", "power"}));
    cmd->add_option("--weighting", o.weighting, "exp|linear")
        ->check(CLI::IsMember({"exp", "linear"}));
    cmd->add_option("--threads", o.threads, "worker threads (default 1)");
    cmd->add_option("--max-iterations", o.max_iterations,
                    "power iteration count (0 = run to tolerance)");
    cmd->add_option("--tolerance", o.tolerance, "power iteration tolerance");
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Program load_rules(const std::string& path) { return parse_program(slurp(path)); }

FactIndex load_facts_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    FactIndex idx;
    idx.load(in);
    return idx;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    return out;
}

std::string graph_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "query_%06zu.graph", index + 1);
    return buf;
}

// ---------------------------------------------------------------------- ground

int cmd_ground(const CommonOpts& o, const std::string& examples_file,
               const std::string& out_dir, const std::string& timing_file) {
    Program prog = load_rules(o.rules_file);
    FactIndex facts = load_facts_file(o.facts_file);
    std::ifstream exin(examples_file);
    if (!exin) throw std::runtime_error("cannot open " + examples_file);
    std::vector<TrainingExample> examples = load_examples(exin);
    fs::create_directories(out_dir);

    struct RowStat {
        std::string query;
        double wall_ms = 0;
        std::size_t nodes = 0, edges = 0, pushes = 0;
        std::string status;
    };
    std::vector<RowStat> stats(examples.size());
    ParameterVector unit;
    GroundConfig config = o.config();
    parallel_for(examples.size(), o.threads, [&](std::size_t begin, std::size_t end) {
        Grounder grounder(prog, facts, unit, config);
        for (std::size_t i = begin; i < end; ++i) {
            RowStat& row = stats[i];
            row.query = to_string(std::span<const Goal>(examples[i].query));
            auto t0 = std::chrono::steady_clock::now();
            try {
                ProveResult res = grounder.prove(examples[i].query, o.nibble());
                row.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                GroundGraph gg = res.ground();
                row.nodes = gg.node_count();
                row.edges = gg.edge_count();
                row.pushes = res.pushes;
                row.status = to_string(res.status);
                std::ofstream gout = open_out(
                    (fs::path(out_dir) / graph_file_name(i)).string());
                write_ground_graph(gout, gg, row.query);
            } catch (const std::exception& e) {
                row.status = std::string("error: ") + e.what();
                std::cerr << "ground: query " << i + 1 << " failed: " << e.what()
                          << "\n";
            }
        }
    });

    std::ofstream tout = open_out(timing_file);
    tout << "query_index\tquery\twall_ms\tnodes\tedges\tpushes\tstatus\n";
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const RowStat& r = stats[i];
        tout << i + 1 << '\t' << r.query << '\t' << r.wall_ms << '\t' << r.nodes
             << '\t' << r.edges << '\t' << r.pushes << '\t' << r.status << '\n';
    }
    std::cerr << "ground: wrote " << stats.size() << " graphs to " << out_dir << "\n";
    return 0;
}

// ----------------------------------------------------------------------- train

std::vector<GroundedExample> load_grounded_dir(const std::string& dir,
                                               std::span<const TrainingExample> examples) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".graph") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());

    std::unordered_map<std::string, std::vector<std::size_t>> by_query;
    for (std::size_t i = 0; i < examples.size(); ++i)
        by_query[to_string(std::span<const Goal>(examples[i].query))].push_back(i);

    std::vector<GroundedExample> out;
    for (const std::string& file : files) {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot open " + file);
        auto [gg, query] = read_ground_graph(in);
        if (gg.solutions.empty()) continue;
        auto it = by_query.find(query);
        if (it == by_query.end() || it->second.empty()) {
            std::cerr << "train: no example matches grounded query '" << query
                      << "', skipping " << file << "\n";
            continue;
        }
        std::size_t idx = it->second.front();
        it->second.erase(it->second.begin());
        out.push_back(label_grounding(std::move(gg), examples[idx]));
    }
    return out;
}

int cmd_train(const CommonOpts& o, const std::string& examples_file,
              const std::string& grounded_dir, const std::string& params_out,
              const std::string& loss_log, const std::string& warm_start,
              Hyperparams h) {
    std::ifstream exin(examples_file);
    if (!exin) throw std::runtime_error("cannot open " + examples_file);
    std::vector<TrainingExample> examples = load_examples(exin);
    h.weighting = weighting_from_string(o.weighting);

    std::optional<ParameterVector> warm;
    if (!warm_start.empty()) {
        std::ifstream win(warm_start);
        if (!win) throw std::runtime_error("cannot open " + warm_start);
        warm = ParameterVector::load(win);
    }

    std::vector<GroundedExample> grounded;
    GroundingStats gstats;
    if (!grounded_dir.empty()) {
        grounded = load_grounded_dir(grounded_dir, examples);
    } else {
        Program prog = load_rules(o.rules_file);
        FactIndex facts = load_facts_file(o.facts_file);
        ParameterVector ground_params = warm ? *warm : ParameterVector{};
        grounded = ground_examples(examples, prog, facts, ground_params, o.config(),
                                   o.nibble(), h.threads, &gstats);
    }
    if (gstats.dropped)
        std::cerr << "train: dropped " << gstats.dropped
                  << " examples with no solution nodes\n";

    TrainResult result = train_grounded(grounded, h, warm ? &*warm : nullptr);
    std::ofstream pout = open_out(params_out);
    result.params.save(pout);

    if (!loss_log.empty()) {
        std::ofstream lout = open_out(loss_log);
        lout << "epoch\tloss\twall_ms\tthreads\n";
        for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
            lout << e + 1 << '\t' << result.epoch_loss[e] << '\t'
                 << result.epoch_wall_ms[e] << '\t' << h.threads << '\n';
    }
    std::cerr << "train: " << grounded.size() << " groundings, " << h.epochs
              << " epochs, final loss "
              << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------- answer

int cmd_answer(const CommonOpts& o, const std::string& queries_file,
               const std::string& params_file, const std::string& out_file) {
    Program prog = load_rules(o.rules_file);
    FactIndex facts = load_facts_file(o.facts_file);
    ParameterVector params;
    if (!params_file.empty()) {
        std::ifstream pin(params_file);
        if (!pin) throw std::runtime_error("cannot open " + params_file);
        params = ParameterVector::load(pin);
    }
    std::ifstream qin(queries_file);
    if (!qin) throw std::runtime_error("cannot open " + queries_file);
    std::vector<std::vector<Goal>> queries = load_queries(qin);

    struct QueryOut {
        std::string query;
        std::vector<Answer> answers;
        std::string status;
    };
    std::vector<QueryOut> outs(queries.size());
    GroundConfig config = o.config();
    parallel_for(queries.size(), o.threads, [&](std::size_t begin, std::size_t end) {
        Grounder grounder(prog, facts, params, config);
        for (std::size_t i = begin; i < end; ++i) {
            outs[i].query = to_string(std::span<const Goal>(queries[i]));
            ProveResult res = grounder.prove(queries[i], o.nibble());
            outs[i].answers = std::move(res.answers);
            outs[i].status = to_string(res.status);
        }
    });

    std::ofstream out = open_out(out_file);
    out << "query_index\tquery\trank\tanswer\tscore\tstatus\n";
    char buf[32];
    for (std::size_t i = 0; i < outs.size(); ++i) {
        if (outs[i].answers.empty()) {
            out << i + 1 << '\t' << outs[i].query << "\t0\t\t0\t" << outs[i].status
                << '\n';
            continue;
        }
        for (std::size_t k = 0; k < outs[i].answers.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", outs[i].answers[k].probability);
            out << i + 1 << '\t' << outs[i].query << '\t' << k + 1 << '\t'
                << outs[i].answers[k].text << '\t' << buf << '\t' << outs[i].status
                << '\n';
        }
    }
    return 0;
}

// ------------------------------------------------------------------------ eval

int cmd_eval(const std::string& answers_file, const std::string& examples_file,
             const std::string& out_file) {
    std::ifstream exin(examples_file);
    if (!exin) throw std::runtime_error("cannot open " + examples_file);
    std::vector<TrainingExample> examples = load_examples(exin);

    struct Gold {
        std::unordered_set<std::string> pos, neg;
    };
    std::unordered_map<std::string, Gold> gold;
    std::unordered_map<std::string, std::size_t> gold_pos_count;
    for (const TrainingExample& ex : examples) {
        std::string q = to_string(std::span<const Goal>(ex.query));
        Gold& g = gold[q];
        for (const auto& a : ex.positives) g.pos.insert(to_string(std::span<const Goal>(a)));
        for (const auto& a : ex.negatives) g.neg.insert(to_string(std::span<const Goal>(a)));
        gold_pos_count[q] = g.pos.size();
    }

    std::ifstream ain(answers_file);
    if (!ain) throw std::runtime_error("cannot open " + answers_file);
    std::string line;
    std::map<std::size_t, RankedAnswerList> lists;
    bool first = true;
    while (std::getline(ain, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) { first = false; continue; } // header
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(
                start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() < 6) throw std::runtime_error("answers: malformed line '" + line + "'");
        std::size_t qidx = std::stoul(cols[0]);
        RankedAnswerList& list = lists[qidx];
        list.query = cols[1];
        if (cols[3].empty()) continue; // no-answer marker row
        ScoredAnswer sa{cols[3], std::stod(cols[4]), 0};
        auto git = gold.find(list.query);
        if (git != gold.end()) {
            if (git->second.pos.count(sa.answer)) sa.label = 1;
            else if (git->second.neg.count(sa.answer)) sa.label = -1;
        }
        list.items.push_back(std::move(sa));
    }

    std::vector<RankedAnswerList> ordered;
    std::vector<std::size_t> gold_counts;
    for (auto& [idx, list] : lists) {
        list.sort();
        auto it = gold_pos_count.find(list.query);
        gold_counts.push_back(it == gold_pos_count.end() ? 0 : it->second);
        ordered.push_back(std::move(list));
    }
    EvalSummary s = evaluate(ordered, gold_counts);

    std::ofstream out = open_out(out_file);
    out << "metric\tvalue\n";
    out << "map\t" << s.map << '\n';
    out << "auc_macro\t" << s.auc_macro << '\n';
    out << "auc_micro\t" << s.auc_micro << '\n';
    out << "queries_scored\t" << s.queries_scored << '\n';
    out << "queries_skipped\t" << s.queries_skipped << '\n';
    std::cout << "map=" << s.map << " auc_macro=" << s.auc_macro
              << " auc_micro=" << s.auc_micro << "\n";
    return 0;
}

// ---------------------------------------------------------------------- others

int cmd_subset(const std::string& facts_file, const std::string& seed,
               std::size_t top_m, double alpha, const std::string& out_file) {
    FactIndex facts = load_facts_file(facts_file);
    FactIndex sub = facts.subset(intern(seed), top_m, alpha);
    std::ofstream out = open_out(out_file);
    sub.write(out);
    std::cerr << "subset: kept " << sub.entities().size() << " entities, "
              << sub.fact_count() << " facts\n";
    return 0;
}

int cmd_sample_neg(const std::string& facts_file, const std::string& examples_file,
                   const std::string& excl_file, std::size_t count,
                   std::uint64_t seed, const std::string& out_file) {
    FactIndex facts = load_facts_file(facts_file);
    std::ifstream exin(examples_file);
    if (!exin) throw std::runtime_error("cannot open " + examples_file);
    std::vector<TrainingExample> examples = load_examples(exin);
    std::ifstream xin(excl_file);
    if (!xin) throw std::runtime_error("cannot open " + excl_file);
    auto exclusivity = load_exclusivity(xin);

    std::mt19937_64 rng(seed);
    for (TrainingExample& ex : examples) {
        if (ex.query.size() != 1) continue;
        NegativeSample ns = sample_negatives(facts, ex.query[0], ex.positives,
                                             exclusivity, count, rng);
        if (!ns.warning.empty()) std::cerr << "sample-neg: " << ns.warning << "\n";
        for (Goal& g : ns.negatives) ex.negatives.push_back({std::move(g)});
    }
    std::ofstream out = open_out(out_file);
    write_examples(out, examples);
    return 0;
}

int cmd_translate(const std::string& paths_file, const std::string& mode,
                  int top_k, const std::string& out_file) {
    std::ifstream pin(paths_file);
    if (!pin) throw std::runtime_error("cannot open " + paths_file);
    auto paths = load_paths(pin);
    TranslationMode tm = mode == "recursive" ? TranslationMode::recursive
                                             : TranslationMode::nonrecursive;
    Program prog = translate_paths(paths, tm, top_k);
    std::ofstream out = open_out(out_file);
    print_program(out, prog);
    std::cerr << "translate-pra: emitted " << prog.size() << " clauses\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ProPPR: locally groundable probabilistic logic engine"};
    app.require_subcommand(1);

    CommonOpts ground_opts, train_opts, answer_opts;
    std::string examples_file, out_dir, timing_file = "timing.tsv";
    std::string grounded_dir, params_out, loss_log, warm_start;
    std::string queries_file, params_file, out_file;
    std::string answers_file, seed_entity, excl_file, paths_file;
    std::string mode = "nonrecursive";
    std::string facts_only;
    std::size_t top_m = 0, neg_count = 1;
    double subset_alpha = 0.1;
    std::uint64_t seed_sample = 7;
    int top_k = 1;
    Hyperparams h;

    auto* ground = app.add_subcommand("ground", "ground examples into proof graphs");
    add_common(ground, ground_opts);
    ground->add_option("--examples", examples_file, "examples file")->required();
    ground->add_option("--out-dir", out_dir, "output directory")->required();
    ground->add_option("--timing", timing_file, "timing report TSV");

    auto* train = app.add_subcommand("train", "learn feature weights by parallel SGD");
    add_common(train, train_opts);
    train->add_option("--examples", examples_file, "examples file")->required();
    train->add_option("--grounded-dir", grounded_dir, "reuse grounded graphs");
    train->add_option("--params-out", params_out, "output parameters TSV")->required();
    train->add_option("--loss-log", loss_log, "per-epoch loss TSV");
    train->add_option("--warm-start", warm_start, "initial parameters TSV");
    train->add_option("--epochs", h.epochs, "SGD epochs (default 10)");
    train->add_option("--eta", h.eta, "initial learning rate (default 1.0)");
    train->add_option("--mu", h.mu, "L2 coefficient (default 0)");
    train->add_option("--loss-iterations", h.loss_iterations,
                      "PPR iterations on grounded graphs (default 20)");
    train->add_option("--seed-shuffle", h.seed_shuffle, "shuffle seed");
    train->add_option("--seed-init", h.seed_init, "weight-jitter seed");

    auto* answer = app.add_subcommand("answer", "rank answers for queries");
    add_common(answer, answer_opts);
    answer->add_option("--queries", queries_file, "queries file")->required();
    answer->add_option("--params", params_file, "parameters TSV");
    answer->add_option("--out", out_file, "ranked answers TSV")->required();

    auto* eval = app.add_subcommand("eval", "MAP/AUC metrics for ranked answers");
    eval->add_option("--answers", answers_file, "ranked answers TSV")->required();
    eval->add_option("--examples", examples_file, "gold examples file")->required();
    eval->add_option("--out", out_file, "metrics TSV")->required();

    auto* subset = app.add_subcommand("subset", "project KB onto top-M entities by PPR");
    subset->add_option("--facts", facts_only, "facts TSV")->required();
    subset->add_option("--seed-entity", seed_entity, "walk seed")->required();
    subset->add_option("--top-m", top_m, "entities to keep")->required();
    subset->add_option("--alpha", subset_alpha, "restart (default 0.1)");
    subset->add_option("--out", out_file, "output facts TSV")->required();

    auto* sneg = app.add_subcommand("sample-neg",
                                    "sample negatives from mutually exclusive relations");
    sneg->add_option("--facts", facts_only, "facts TSV")->required();
    sneg->add_option("--examples", examples_file, "examples file")->required();
    sneg->add_option("--exclusivity", excl_file, "exclusivity config TSV")->required();
    sneg->add_option("--count", neg_count, "negatives per query (default 1)");
    sneg->add_option("--seed-sample", seed_sample, "sampling seed");
    sneg->add_option("--out", out_file, "output examples file")->required();

    auto* tpra = app.add_subcommand("translate-pra", "turn PRA paths into a theory");
    tpra->add_option("--paths", paths_file, "paths TSV")->required();
    tpra->add_option("--mode", mode, "nonrecursive|recursive")
        ->check(CLI::IsMember({"nonrecursive", "recursive"}));
    tpra->add_option("--top-k", top_k, "paths per predicate (default 1)");
    tpra->add_option("--out", out_file, "output rules file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        h.threads = train_opts.threads;
        if (ground->parsed())
            return cmd_ground(ground_opts, examples_file, out_dir, timing_file);
        if (train->parsed())
            return cmd_train(train_opts, examples_file, grounded_dir, params_out,
                             loss_log, warm_start, h);
        if (answer->parsed())
            return cmd_answer(answer_opts, queries_file, params_file, out_file);
        if (eval->parsed()) return cmd_eval(answers_file, examples_file, out_file);
        if (subset->parsed())
            return cmd_subset(facts_only, seed_entity, top_m, subset_alpha,
                              out_file);
        if (sneg->parsed())
            return cmd_sample_neg(facts_only, examples_file, excl_file,
                                  neg_count, seed_sample, out_file);
        if (tpra->parsed()) return cmd_translate(paths_file, mode, top_k, out_file);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const LoadError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
