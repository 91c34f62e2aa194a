#pragma once

#include "proppr/parser.hpp"
#include "proppr/term.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace proppr {

// Stable ordering for feature goals (by surface form), used wherever
// determinism of iteration matters.
inline bool goal_less(const Goal& a, const Goal& b) {
    const std::string& an = symbol_name(a.functor);
    const std::string& bn = symbol_name(b.functor);
    if (an != bn) return an < bn;
    if (a.arity() != b.arity()) return a.arity() < b.arity();
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        const Term& x = a.args[i];
        const Term& y = b.args[i];
        if (x.is_variable() != y.is_variable()) return y.is_variable();
        if (x.is_variable()) {
            if (x.var() != y.var()) return x.var() < y.var();
        } else if (x.symbol() != y.symbol()) {
            return symbol_name(x.symbol()) < symbol_name(y.symbol());
        }
    }
    return false;
}

// Sparse feature vector attached to a proof-graph edge. Entries are ground
// feature literals with nonzero values.
struct FeatureVec {
    std::vector<std::pair<Goal, double>> entries;

    void add(Goal f, double v) {
        if (v == 0.0) return;
        for (auto& [g, val] : entries)
            if (g == f) return; // set semantics for repeated annotation literals
        entries.push_back({std::move(f), v});
    }

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }

    friend bool operator==(const FeatureVec& a, const FeatureVec& b) {
        return a.entries == b.entries;
    }
};

inline std::string to_string(const FeatureVec& fv) {
    std::ostringstream os;
    for (std::size_t i = 0; i < fv.entries.size(); ++i) {
        if (i) os << ',';
        print_goal(os, fv.entries[i].first);
        os << ':' << fv.entries[i].second;
    }
    return os.str();
}

// Sparse parameter vector; unknown features read as 1.0.
class ParameterVector {
public:
    double get(const Goal& f) const {
        auto it = w_.find(f);
        return it == w_.end() ? 1.0 : it->second;
    }

    void set(const Goal& f, double v) {
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite parameter for feature " + to_string(f));
        w_[f] = v;
    }

    bool contains(const Goal& f) const { return w_.count(f) > 0; }
    std::size_t size() const { return w_.size(); }
    bool empty() const { return w_.empty(); }

    std::vector<std::pair<Goal, double>> sorted_entries() const {
        std::vector<std::pair<Goal, double>> out(w_.begin(), w_.end());
        std::sort(out.begin(), out.end(),
                  [](const auto& a, const auto& b) { return goal_less(a.first, b.first); });
        return out;
    }

    void save(std::ostream& os) const {
        os << "feature\tweight\n";
        for (const auto& [f, v] : sorted_entries()) {
            print_goal(os, f);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << '\t' << buf << '\n';
        }
    }

    static ParameterVector load(std::istream& is) {
        ParameterVector pv;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line == "feature\tweight") continue;
            std::size_t tab = line.find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error("params line " + std::to_string(lineno) +
                                         ": expected 'feature<TAB>weight'");
            Goal f = parse_single_goal(line.substr(0, tab));
            pv.set(f, std::stod(line.substr(tab + 1)));
        }
        return pv;
    }

private:
    std::unordered_map<Goal, double, GoalHash> w_;
};

enum class Weighting { exp, linear };

inline Weighting weighting_from_string(const std::string& s) {
    if (s == "exp") return Weighting::exp;
    if (s == "linear") return Weighting::linear;
    throw std::runtime_error("unknown weighting mode '" + s + "' (use exp|linear)");
}

inline const char* to_string(Weighting w) {
    return w == Weighting::exp ? "exp" : "linear";
}

constexpr double kLinearFloor = 1e-10;

// w . phi under a weight lookup (anything callable Goal -> double).
template <class Weights>
double feature_dot(const FeatureVec& fv, const Weights& w) {
    double dot = 0;
    for (const auto& [f, v] : fv.entries) dot += w(f) * v;
    return dot;
}

struct ParamLookup {
    const ParameterVector& pv;
    double operator()(const Goal& f) const { return pv.get(f); }
};

} // namespace proppr
