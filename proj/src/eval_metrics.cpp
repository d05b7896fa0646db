// SPDX-License-Identifier: Apache-2.0

#include "newsrec/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace newsrec::metrics {

namespace {

void check_inputs(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) {
        throw std::invalid_argument("labels and scores differ in length");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw std::invalid_argument("labels must be 0 or 1");
        }
    }
}

std::size_t count_positive(std::span<const int> labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

// Candidate indices by descending score; equal scores keep their input order.
std::vector<std::size_t> ranking(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double auc(std::span<const int> labels, std::span<const double> scores) {
    check_inputs(labels, scores);
    const std::size_t pos = count_positive(labels);
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) {
        throw UndefinedMetric("AUC needs at least one positive and one negative");
    }
    // Rank-sum form with mid-ranks for ties.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
        }
        const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) {
            if (labels[order[t]] == 1) {
                rank_sum += mid_rank;
            }
        }
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    const double n = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double mrr(std::span<const int> labels, std::span<const double> scores) {
    check_inputs(labels, scores);
    const std::size_t pos = count_positive(labels);
    if (pos == 0) {
        throw UndefinedMetric("MRR needs at least one positive");
    }
    const auto order = ranking(scores);
    double total = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            total += 1.0 / static_cast<double>(rank + 1);
        }
    }
    return total / static_cast<double>(pos);
}

double ndcg_at_k(std::span<const int> labels, std::span<const double> scores, int k) {
    check_inputs(labels, scores);
    if (k < 1) {
        throw std::invalid_argument("nDCG cutoff must be >= 1");
    }
    const std::size_t pos = count_positive(labels);
    if (pos == 0) {
        throw UndefinedMetric("nDCG needs at least one positive");
    }
    const auto order = ranking(scores);
    const std::size_t cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < cutoff; ++i) {
        if (labels[order[i]] == 1) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    double ideal = 0.0;
    for (std::size_t i = 0; i < std::min(cutoff, pos); ++i) {
        ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / ideal;
}

bool MetricAccumulator::add(std::span<const int> labels, std::span<const double> scores) {
    check_inputs(labels, scores);
    const std::size_t pos = count_positive(labels);
    if (pos == 0 || pos == labels.size()) {
        ++skipped_degenerate_;
        return false;
    }
    auc_ += auc(labels, scores);
    mrr_ += mrr(labels, scores);
    ndcg5_ += ndcg_at_k(labels, scores, 5);
    ndcg10_ += ndcg_at_k(labels, scores, 10);
    ++scored_;
    return true;
}

void MetricAccumulator::skip_unknown_news() { ++skipped_unknown_; }

void MetricAccumulator::merge(const MetricAccumulator& other) {
    auc_ += other.auc_;
    mrr_ += other.mrr_;
    ndcg5_ += other.ndcg5_;
    ndcg10_ += other.ndcg10_;
    scored_ += other.scored_;
    skipped_degenerate_ += other.skipped_degenerate_;
    skipped_unknown_ += other.skipped_unknown_;
}

MetricReport MetricAccumulator::report() const {
    MetricReport r;
    r.n_scored = scored_;
    r.n_skipped = skipped_degenerate_ + skipped_unknown_;
    r.n_skipped_unknown_news = skipped_unknown_;
    if (scored_ > 0) {
        const double n = static_cast<double>(scored_);
        r.auc = auc_ / n;
        r.mrr = mrr_ / n;
        r.ndcg5 = ndcg5_ / n;
        r.ndcg10 = ndcg10_ / n;
    }
    return r;
}

nlohmann::json MetricReport::to_json() const {
    return {{"auc", auc},
            {"mrr", mrr},
            {"ndcg5", ndcg5},
            {"ndcg10", ndcg10},
            {"n_scored", n_scored},
            {"n_skipped", n_skipped},
            {"n_skipped_unknown_news", n_skipped_unknown_news}};
}

std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::size_t width = 5;
    for (const auto& [name, r] : rows) {
        width = std::max(width, name.size());
    }
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %7s  %7s  %7s  %7s\n", static_cast<int>(width), "model", "AUC", "MRR",
                  "nDCG@5", "nDCG@10");
    out += buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %7.4f  %7.4f  %7.4f  %7.4f\n", static_cast<int>(width), name.c_str(),
                      r.auc, r.mrr, r.ndcg5, r.ndcg10);
        out += buf;
    }
    return out;
}

}  // namespace newsrec::metrics
