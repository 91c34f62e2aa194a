#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace proppr {

struct ScoredAnswer {
    std::string answer;
    double score = 0.0;
    int label = 0; // +1 positive, -1 negative, 0 unlabeled
};

struct RankedAnswerList {
    std::string query;
    std::vector<ScoredAnswer> items;

    // Scores non-increasing; ties break lexicographically by answer text.
    void sort() {
        std::sort(items.begin(), items.end(),
                  [](const ScoredAnswer& a, const ScoredAnswer& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.answer < b.answer;
                  });
    }
};

// Probability that a uniformly random positive outranks a uniformly random
// negative, with ties counting one half. Computed from average ranks, which
// matches pairwise counting exactly.
inline double auc_roc(std::span<const ScoredAnswer> items) {
    std::vector<const ScoredAnswer*> labeled;
    for (const ScoredAnswer& a : items)
        if (a.label != 0) labeled.push_back(&a);
    std::size_t pos = 0, neg = 0;
    for (const ScoredAnswer* a : labeled) (a->label > 0 ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw std::runtime_error("auc_roc: need at least one positive and one negative");
    std::sort(labeled.begin(), labeled.end(),
              [](const ScoredAnswer* a, const ScoredAnswer* b) {
                  return a->score < b->score;
              });
    double pos_rank_sum = 0;
    std::size_t i = 0;
    while (i < labeled.size()) {
        std::size_t j = i;
        while (j < labeled.size() && labeled[j]->score == labeled[i]->score) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labeled[k]->label > 0) pos_rank_sum += avg_rank;
        i = j;
    }
    double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (pos_rank_sum - p * (p + 1) / 2.0) / (p * n);
}

// Average precision of one ranked list. gold_positives is the number of
// positives that should have been retrieved; positives the ranking missed
// lower the score. Unlabeled items count as negatives.
inline double average_precision(const RankedAnswerList& list, std::size_t gold_positives) {
    if (gold_positives == 0)
        throw std::runtime_error("average_precision: no gold positives");
    double ap = 0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < list.items.size(); ++k) {
        if (list.items[k].label > 0) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return ap / static_cast<double>(gold_positives);
}

struct EvalSummary {
    double map = 0;
    double auc_macro = 0; // mean of per-query AUC over queries with both classes
    double auc_micro = 0; // AUC over the pooled items
    std::size_t queries_scored = 0;
    std::size_t queries_skipped = 0;
};

inline EvalSummary evaluate(std::span<const RankedAnswerList> lists,
                            std::span<const std::size_t> gold_positive_counts) {
    EvalSummary s;
    std::vector<ScoredAnswer> pooled;
    double ap_sum = 0, auc_sum = 0;
    std::size_t ap_n = 0, auc_n = 0;
    for (std::size_t q = 0; q < lists.size(); ++q) {
        const RankedAnswerList& list = lists[q];
        for (const ScoredAnswer& a : list.items) pooled.push_back(a);
        std::size_t gold = q < gold_positive_counts.size() ? gold_positive_counts[q] : 0;
        bool has_pos = false, has_neg = false;
        for (const ScoredAnswer& a : list.items) {
            if (a.label > 0) has_pos = true;
            if (a.label < 0) has_neg = true;
        }
        if (gold > 0) {
            ap_sum += average_precision(list, gold);
            ++ap_n;
        }
        if (has_pos && has_neg) {
            auc_sum += auc_roc(list.items);
            ++auc_n;
        } else {
            ++s.queries_skipped;
        }
    }
    s.queries_scored = auc_n;
    s.map = ap_n ? ap_sum / static_cast<double>(ap_n) : 0.0;
    s.auc_macro = auc_n ? auc_sum / static_cast<double>(auc_n) : 0.0;
    bool pos = false, neg = false;
    for (const ScoredAnswer& a : pooled) {
        if (a.label > 0) pos = true;
        if (a.label < 0) neg = true;
    }
    s.auc_micro = (pos && neg) ? auc_roc(pooled) : 0.0;
    return s;
}

} // namespace proppr
