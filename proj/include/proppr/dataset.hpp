#pragma once

#include "proppr/fact_index.hpp"
#include "proppr/learner.hpp"
#include "proppr/parser.hpp"

#include <algorithm>
#include <istream>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace proppr {

// Examples file: one query per line, `goal TAB +answer TAB -answer ...`.
inline std::vector<TrainingExample> load_examples(std::istream& is) {
    std::vector<TrainingExample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        TrainingExample ex;
        std::size_t start = 0;
        bool first = true;
        try {
            while (start <= line.size()) {
                std::size_t tab = line.find('\t', start);
                std::string field = line.substr(
                    start, tab == std::string::npos ? std::string::npos : tab - start);
                if (!field.empty()) {
                    if (first) {
                        ex.query = parse_goals(field).first;
                        first = false;
                    } else if (field[0] == '+') {
                        ex.positives.push_back(parse_goals(field.substr(1)).first);
                    } else if (field[0] == '-') {
                        ex.negatives.push_back(parse_goals(field.substr(1)).first);
                    } else {
                        throw std::runtime_error("answer must start with '+' or '-'");
                    }
                }
                if (tab == std::string::npos) break;
                start = tab + 1;
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("examples line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
        if (first) continue;
        out.push_back(std::move(ex));
    }
    return out;
}

inline void write_examples(std::ostream& os, std::span<const TrainingExample> examples) {
    for (const TrainingExample& ex : examples) {
        os << to_string(std::span<const Goal>(ex.query));
        for (const auto& a : ex.positives)
            os << "\t+" << to_string(std::span<const Goal>(a));
        for (const auto& a : ex.negatives)
            os << "\t-" << to_string(std::span<const Goal>(a));
        os << '\n';
    }
}

// Queries file: one conjunctive query per line.
inline std::vector<std::vector<Goal>> load_queries(std::istream& is) {
    std::vector<std::vector<Goal>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || line[0] == '%') continue;
        try {
            out.push_back(parse_goals(line).first);
        } catch (const ParseError& e) {
            throw std::runtime_error("queries line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return out;
}

// Exclusivity config: `relation TAB excl1[,excl2...]` per line.
inline std::unordered_map<Symbol, std::vector<Symbol>>
load_exclusivity(std::istream& is) {
    std::unordered_map<Symbol, std::vector<Symbol>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("exclusivity line " + std::to_string(lineno) +
                                     ": expected relation<TAB>excl1[,excl2...]");
        Symbol target = intern(line.substr(0, tab));
        std::size_t pos = tab + 1;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            std::string rel = line.substr(
                pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (!rel.empty()) out[target].push_back(intern(rel));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    return out;
}

struct NegativeSample {
    std::vector<Goal> negatives; // ground goals over the target predicate
    std::string warning;
};

// Samples negative answers for a query by drawing beliefs of relations
// mutually exclusive with the target and rewriting them to the target
// predicate. Only beliefs compatible with the query's bound arguments are
// candidates; sampled negatives never overlap the given positives.
inline NegativeSample
sample_negatives(const FactIndex& idx, const Goal& query,
                 std::span<const std::vector<Goal>> positives,
                 const std::unordered_map<Symbol, std::vector<Symbol>>& exclusivity,
                 std::size_t count, std::mt19937_64& rng) {
    NegativeSample out;
    if (count == 0) return out;
    auto it = exclusivity.find(query.functor);
    if (it == exclusivity.end() || it->second.empty()) {
        out.warning = "no mutually exclusive relations configured for '" +
                      symbol_name(query.functor) + "'";
        return out;
    }
    std::unordered_set<std::string> taken;
    for (const auto& ans : positives)
        taken.insert(to_string(std::span<const Goal>(ans)));

    std::vector<Goal> pool;
    std::unordered_set<std::string> seen;
    for (Symbol excl : it->second) {
        Goal probe{excl, query.args};
        idx.for_each_match(probe, [&](const std::vector<Symbol>& row) {
            Goal neg{query.functor, {}};
            neg.args.reserve(row.size());
            for (Symbol a : row) neg.args.push_back(Term::constant(a));
            std::string text = to_string(neg);
            if (taken.count(text) || !seen.insert(text).second) return;
            pool.push_back(std::move(neg));
        });
    }
    if (pool.empty()) {
        out.warning = "all candidate negatives overlap the positives for '" +
                      to_string(query) + "'";
        return out;
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() > count) pool.resize(count);
    std::sort(pool.begin(), pool.end(), goal_less);
    out.negatives = std::move(pool);
    return out;
}

} // namespace proppr
