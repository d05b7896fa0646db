// SPDX-License-Identifier: Apache-2.0

#include "newsrec/eval_metrics.hpp"
#include "support/metric_oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace newsrec;
using namespace newsrec::testing;

namespace {

using V = std::vector<double>;
using L = std::vector<int>;

}  // namespace

TEST_CASE("auc examples") {
    CHECK(metrics::auc(L{1, 0}, V{0.9, 0.1}) == 1.0);
    CHECK(metrics::auc(L{1, 0}, V{0.1, 0.9}) == 0.0);
    CHECK(metrics::auc(L{1, 0, 1, 0}, V{0.8, 0.7, 0.6, 0.5}) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(metrics::auc(L{1, 0}, V{0.5, 0.5}) == 0.5);
    CHECK_THROWS_AS(metrics::auc(L{1, 1}, V{0.1, 0.2}), metrics::UndefinedMetric);
    CHECK_THROWS_AS(metrics::auc(L{0, 0}, V{0.1, 0.2}), metrics::UndefinedMetric);
    CHECK_THROWS_AS(metrics::auc(L{0, 1}, V{0.1}), std::invalid_argument);
}

TEST_CASE("mrr examples") {
    CHECK(metrics::mrr(L{1, 0, 0}, V{0.9, 0.2, 0.1}) == 1.0);
    CHECK(metrics::mrr(L{0, 1, 0, 1}, V{0.9, 0.8, 0.3, 0.1}) == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(metrics::mrr(L{1, 1, 1}, V{0.3, 0.2, 0.1}) == doctest::Approx(11.0 / 18.0).epsilon(1e-15));
    CHECK_THROWS_AS(metrics::mrr(L{0, 0}, V{0.1, 0.2}), metrics::UndefinedMetric);
}

TEST_CASE("ndcg examples") {
    CHECK(metrics::ndcg_at_k(L{1, 0, 0}, V{0.9, 0.5, 0.1}, 5) == 1.0);
    CHECK(metrics::ndcg_at_k(L{0, 1}, V{0.9, 0.5}, 1) == 0.0);
    const double expected = (1.0 + 1.0 / std::log2(5.0)) / (1.0 + 1.0 / std::log2(3.0));
    CHECK(std::abs(metrics::ndcg_at_k(L{1, 0, 0, 1}, V{0.9, 0.8, 0.7, 0.6}, 5) - expected) < 1e-12);
    CHECK(expected == doctest::Approx(0.8772).epsilon(1e-4));
    CHECK_THROWS_AS(metrics::ndcg_at_k(L{0, 0}, V{0.1, 0.2}, 5), metrics::UndefinedMetric);
    CHECK_THROWS_AS(metrics::ndcg_at_k(L{1, 0}, V{0.1, 0.2}, 0), std::invalid_argument);
}

TEST_CASE("ties are broken by original index for rank metrics") {
    // Positive listed second among equal scores lands at rank 2.
    CHECK(metrics::mrr(L{0, 1}, V{0.5, 0.5}) == 0.5);
    CHECK(metrics::mrr(L{1, 0}, V{0.5, 0.5}) == 1.0);
}

TEST_CASE("metrics agree with brute-force oracles on random impressions") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = std::uniform_int_distribution<int>(2, 30)(rng);
        L labels(n);
        V scores(n);
        for (int i = 0; i < n; ++i) {
            labels[i] = std::uniform_int_distribution<int>(0, 1)(rng);
            scores[i] = std::uniform_int_distribution<int>(0, 5)(rng) * 0.25;  // many ties
        }
        labels[0] = 1;
        labels[1] = 0;
        CHECK(std::abs(metrics::auc(labels, scores) - oracle_auc(labels, scores)) < 1e-12);
        CHECK(std::abs(metrics::mrr(labels, scores) - oracle_mrr(labels, scores)) < 1e-12);
        CHECK(std::abs(metrics::ndcg_at_k(labels, scores, 5) - oracle_ndcg(labels, scores, 5)) < 1e-12);
        CHECK(std::abs(metrics::ndcg_at_k(labels, scores, 10) - oracle_ndcg(labels, scores, 10)) < 1e-12);
    }
}

TEST_CASE("accumulator averages per impression and skips degenerate ones") {
    metrics::MetricAccumulator acc;
    CHECK(acc.add(L{1, 0}, V{0.9, 0.1}));
    CHECK(acc.add(L{1, 0}, V{0.5, 0.5}));
    CHECK_FALSE(acc.add(L{0, 0, 0}, V{0.1, 0.2, 0.3}));
    CHECK_FALSE(acc.add(L{1, 1}, V{0.1, 0.2}));
    acc.skip_unknown_news();
    const auto r = acc.report();
    CHECK(r.auc == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.n_scored == 2);
    CHECK(r.n_skipped == 3);
    CHECK(r.n_skipped_unknown_news == 1);
}

TEST_CASE("accumulator merge is order independent") {
    metrics::MetricAccumulator a, b, all;
    const std::vector<std::pair<L, V>> imps = {
        {{1, 0, 0}, {0.2, 0.9, 0.1}}, {{0, 1}, {0.3, 0.7}}, {{1, 0, 1}, {0.5, 0.5, 0.1}}};
    a.add(imps[0].first, imps[0].second);
    b.add(imps[1].first, imps[1].second);
    b.add(imps[2].first, imps[2].second);
    for (const auto& [l, s] : imps) all.add(l, s);
    a.merge(b);
    CHECK(a.report().auc == doctest::Approx(all.report().auc).epsilon(1e-15));
    CHECK(a.report().ndcg10 == doctest::Approx(all.report().ndcg10).epsilon(1e-15));
    CHECK(a.report().n_scored == 3);
}

TEST_CASE("report rendering") {
    metrics::MetricAccumulator acc;
    acc.add(L{1, 0}, V{0.9, 0.1});
    const auto r = acc.report();
    const auto j = r.to_json();
    CHECK(j.at("auc").get<double>() == 1.0);
    CHECK(j.at("n_scored").get<std::size_t>() == 1);
    const auto table = metrics::format_table({{"naml/toy/generated", r}});
    const auto header = table.substr(0, table.find('\n'));
    CHECK(header.find("AUC") < header.find("MRR"));
    CHECK(header.find("MRR") < header.find("nDCG@5"));
    CHECK(header.find("nDCG@5") < header.find("nDCG@10"));
    CHECK(table.find("naml/toy/generated") != std::string::npos);
}
