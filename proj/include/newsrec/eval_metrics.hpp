// SPDX-License-Identifier: Apache-2.0
//
// Impression-level ranking metrics and their unweighted mean over impressions.
#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace newsrec::metrics {

/// Raised when a metric is undefined for the impression (no positive, or for
/// AUC no negative either).
class UndefinedMetric : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
double auc(std::span<const int> labels, std::span<const double> scores);

/// Mean over positives of 1 / rank under descending score, ties broken by
/// original index.
double mrr(std::span<const int> labels, std::span<const double> scores);

/// Binary-gain nDCG with a log2(rank + 1) discount, cut at k.
double ndcg_at_k(std::span<const int> labels, std::span<const double> scores, int k);

struct MetricReport {
    double auc = 0.0;
    double mrr = 0.0;
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    std::size_t n_scored = 0;
    /// All excluded impressions: degenerate labels plus unknown news ids.
    std::size_t n_skipped = 0;
    std::size_t n_skipped_unknown_news = 0;

    nlohmann::json to_json() const;
};

/// Associative (sum, count) reduction of per-impression metrics.
class MetricAccumulator {
public:
    /// Scores one impression; returns false (and counts a skip) when it lacks
    /// a positive or a negative.
    bool add(std::span<const int> labels, std::span<const double> scores);
    void skip_unknown_news();
    void merge(const MetricAccumulator& other);
    MetricReport report() const;

private:
    double auc_ = 0.0, mrr_ = 0.0, ndcg5_ = 0.0, ndcg10_ = 0.0;
    std::size_t scored_ = 0;
    std::size_t skipped_degenerate_ = 0;
    std::size_t skipped_unknown_ = 0;
};

/// Plain-text table with columns AUC, MRR, nDCG@5, nDCG@10.
std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace newsrec::metrics
