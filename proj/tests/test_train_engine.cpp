// SPDX-License-Identifier: Apache-2.0

#include "newsrec/train_engine.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace newsrec;

namespace {

mind::Impression impression(int positives, int negatives, int history = 3) {
    mind::Impression imp;
    imp.impression_id = "1";
    imp.user_id = "U1";
    for (int h = 0; h < history; ++h) imp.history.push_back("H" + std::to_string(h));
    for (int p = 0; p < positives; ++p) imp.candidates.push_back({"P" + std::to_string(p), 1});
    for (int n = 0; n < negatives; ++n) imp.candidates.push_back({"X" + std::to_string(n), 0});
    return imp;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.plm_name = std::string(kToyPlm);
    c.toy_encoder.hidden = 16;
    c.toy_encoder.layers = 1;
    c.toy_encoder.heads = 2;
    c.toy_encoder.ffn = 32;
    c.toy_encoder.max_positions = 64;
    c.d_news = 16;
    c.attn_hidden = 8;
    c.n_heads = 2;
    c.user_emb_dim = 4;
    c.history_len = 5;
    c.max_len_title = 16;
    c.max_len_augmented = 48;
    c.batch_size = 16;
    c.epochs = 2;
    c.lr = 1e-3;
    c.mode = text::CompositionMode::TitleTemplate;
    c.seed = 11;
    return c;
}

testing::SyntheticData tiny_data() {
    testing::SyntheticSpec spec;
    spec.n_categories = 4;
    spec.articles_per_category = 6;
    spec.heldout_per_category = 2;
    spec.n_users = 10;
    spec.n_impressions = 40;
    spec.n_eval_impressions = 10;
    return testing::make_synthetic(spec);
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("newsrec_train_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("sampling: one sample per click with the label in place") {
    std::mt19937_64 rng(1);
    train::SamplingStats stats;
    const auto samples = train::build_training_samples(impression(2, 6), 4, 50, rng, &stats);
    REQUIRE(samples.size() == 2);
    CHECK(stats.samples == 2);
    CHECK(stats.impressions == 1);
    std::set<std::string> labels;
    for (const auto& s : samples) {
        REQUIRE(s.candidates.size() == 5);
        const auto& clicked = s.candidates[s.label_index];
        CHECK(clicked.starts_with("P"));
        labels.insert(clicked);
        std::set<std::string> negs;
        for (std::size_t i = 0; i < s.candidates.size(); ++i) {
            if (i == s.label_index) continue;
            CHECK(s.candidates[i].starts_with("X"));
            negs.insert(s.candidates[i]);
        }
        CHECK(negs.size() == 4);  // without replacement
        CHECK(s.history.size() == 3);
        CHECK(s.user_id == "U1");
    }
    CHECK(labels == std::set<std::string>{"P0", "P1"});
}

TEST_CASE("sampling: replacement, skipping and truncation") {
    std::mt19937_64 rng(2);
    const auto few = train::build_training_samples(impression(1, 2), 4, 50, rng);
    REQUIRE(few.size() == 1);
    CHECK(few[0].candidates.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        if (i != few[0].label_index) CHECK(few[0].candidates[i].starts_with("X"));
    }

    train::SamplingStats stats;
    CHECK(train::build_training_samples(impression(3, 0), 4, 50, rng, &stats).empty());
    CHECK(stats.skipped_no_negative == 1);
    CHECK(train::build_training_samples(impression(0, 3), 4, 50, rng, &stats).empty());

    const auto trimmed = train::build_training_samples(impression(1, 4, 9), 4, 5, rng);
    CHECK(trimmed[0].history == std::vector<std::string>{"H4", "H5", "H6", "H7", "H8"});
}

TEST_CASE("sampling is reproducible and spreads the label position") {
    std::mt19937_64 a(9), b(9);
    std::vector<std::size_t> seen(5, 0);
    for (int i = 0; i < 200; ++i) {
        const auto sa = train::build_training_samples(impression(1, 7), 4, 50, a);
        const auto sb = train::build_training_samples(impression(1, 7), 4, 50, b);
        CHECK(sa[0].candidates == sb[0].candidates);
        CHECK(sa[0].label_index == sb[0].label_index);
        ++seen[sa[0].label_index];
    }
    for (auto count : seen) CHECK(count > 10);
}

TEST_CASE("ranking loss closed forms") {
    const std::vector<double> zeros(5, 0.0);
    for (std::size_t label = 0; label < 5; ++label) {
        CHECK(train::ranking_softmax_loss(zeros, label) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    }
    const std::vector<double> s = {1.5, -0.3, 0.2, 2.0, -1.0};
    std::vector<double> shifted;
    for (double x : s) shifted.push_back(x + 1000.0);
    CHECK(train::ranking_softmax_loss(shifted, 2) == doctest::Approx(train::ranking_softmax_loss(s, 2)).epsilon(1e-12));

    // Direct definition: -log(exp(s_y) / sum exp(s_j)).
    double denom = 0.0;
    for (double x : s) denom += std::exp(x);
    CHECK(train::ranking_softmax_loss(s, 3) == doctest::Approx(-std::log(std::exp(2.0) / denom)).epsilon(1e-12));

    const std::vector<double> sharp = {0.0, 50.0, 0.0, 0.0, 0.0};
    CHECK(train::ranking_softmax_loss(sharp, 1) < 1e-12);
    CHECK_THROWS_AS(train::ranking_softmax_loss(s, 5), std::out_of_range);
    CHECK_THROWS_AS(train::ranking_softmax_loss(std::vector<double>{}, 0), std::out_of_range);
}

TEST_CASE("ranking loss gradient matches finite differences") {
    const std::vector<double> s = {0.4, -1.2, 0.9, 0.0, 2.2};
    const auto g = train::ranking_softmax_loss_gradient(s, 1);
    REQUIRE(g.size() == s.size());
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto up = s, down = s;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double numeric =
            (train::ranking_softmax_loss(up, 1) - train::ranking_softmax_loss(down, 1)) / 2e-6;
        CHECK(g[i] == doctest::Approx(numeric).epsilon(1e-6));
        total += g[i];
    }
    CHECK(std::abs(total) < 1e-12);
}

TEST_CASE("AdamW matches a scalar reference over several steps") {
    const train::AdamW::Options opt{0.01, 0.9, 0.999, 1e-8, 0.1};
    auto p = ag::Tensor::parameter((ag::Matrix(1, 2) << 1.0, -2.0).finished());
    train::AdamW adam({{"p", p, false}}, opt);
    const double grads[3][2] = {{0.5, -1.0}, {0.1, 0.3}, {-0.4, 2.0}};

    double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
    for (int t = 1; t <= 3; ++t) {
        adam.zero_grad();
        p.mutable_grad() = (ag::Matrix(1, 2) << grads[t - 1][0], grads[t - 1][1]).finished();
        adam.step();
        for (int i = 0; i < 2; ++i) {
            const double g = grads[t - 1][i];
            w[i] -= opt.lr * opt.weight_decay * w[i];
            m[i] = opt.beta1 * m[i] + (1 - opt.beta1) * g;
            v[i] = opt.beta2 * v[i] + (1 - opt.beta2) * g * g;
            const double mh = m[i] / (1 - std::pow(opt.beta1, t));
            const double vh = v[i] / (1 - std::pow(opt.beta2, t));
            w[i] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
        }
        CHECK(p.value()(0, 0) == doctest::Approx(w[0]).epsilon(1e-14));
        CHECK(p.value()(0, 1) == doctest::Approx(w[1]).epsilon(1e-14));
    }
    // First step moves each weight by about lr against the gradient sign.
    auto q = ag::Tensor::parameter(ag::Matrix::Zero(1, 1));
    train::AdamW plain({{"q", q, false}}, train::AdamW::Options{});
    q.mutable_grad() = ag::Matrix::Constant(1, 1, 123.0);
    plain.step();
    CHECK(q.value()(0, 0) == doctest::Approx(-1e-4).epsilon(1e-9));
}

TEST_CASE("gradient clipping") {
    auto a = ag::Tensor::parameter(ag::Matrix::Zero(1, 2));
    a.mutable_grad() = (ag::Matrix(1, 2) << 3.0, 4.0).finished();
    const ag::ParameterList params = {{"a", a, false}};
    CHECK(train::clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
    CHECK(ag::global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ag::global_grad_norm(params) <= 1.0);
    a.mutable_grad() = (ag::Matrix(1, 2) << 0.3, 0.4).finished();
    train::clip_grad_norm(params, 1.0);
    CHECK(a.grad()(0, 0) == 0.3);
}

TEST_CASE("training writes checkpoints and a report, and is reproducible") {
    const auto data = tiny_data();
    const auto config = tiny_config();
    const auto dir = fresh_dir("run");
    train::TrainOptions options;
    options.out_dir = dir;
    std::vector<int> callbacks;
    options.on_epoch = [&](const train::EpochRecord& r) { callbacks.push_back(r.epoch); };
    const auto result = train::train(config, data.articles, data.train, nullptr, options);

    CHECK(callbacks == std::vector<int>{1, 2});
    REQUIRE(result.report.epochs.size() == 2);
    for (const auto& e : result.report.epochs) {
        CHECK(std::isfinite(e.mean_loss));
        CHECK(e.samples > 0);
        CHECK(e.batches == (e.samples + 15) / 16);
    }
    CHECK(result.report.seed == 11);
    CHECK(std::filesystem::exists(dir / "epoch-1" / "head.safetensors"));
    CHECK(std::filesystem::exists(dir / "epoch-2" / "head.safetensors"));
    CHECK(std::filesystem::exists(dir / "final" / "config.json"));

    std::ifstream in(dir / "train_report.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("seed") == 11);
        CHECK(j.at("optimizer").at("name") == "adamw");
        CHECK(j.at("grad_clip_norm") == 1.0);
        CHECK(j.at("epoch") == ++n);
    }
    CHECK(n == 2);

    const auto again = train::train(config, data.articles, data.train, nullptr);
    CHECK(again.report.losses() == result.report.losses());

    // The saved final model scores exactly as the in-memory one.
    const auto loaded = model::load_checkpoint(dir / "final");
    const auto corpus = train::corpus_for(loaded, data.articles, nullptr);
    CHECK(train::score_impressions(loaded, data.eval, corpus) ==
          train::score_impressions(result.model, data.eval, corpus));
    std::filesystem::remove_all(dir);
}

TEST_CASE("training rejects unusable inputs") {
    const auto data = tiny_data();
    CHECK_THROWS_AS(train::train(tiny_config(), data.articles, {}, nullptr), train::TrainingError);

    auto generated = tiny_config();
    generated.mode = text::CompositionMode::TitleGenerated;
    CHECK_THROWS(train::train(generated, data.articles, data.train, nullptr));

    auto bad = tiny_config();
    bad.lr = -1.0;
    CHECK_THROWS_AS(train::train(bad, data.articles, data.train, nullptr), ConfigError);

    // Every impression refers to unknown news: nothing left to train on.
    auto ghost = data.train;
    for (auto& imp : ghost) imp.candidates[0].news_id = "N-missing";
    CHECK_THROWS_AS(train::train(tiny_config(), data.articles, ghost, nullptr), train::TrainingError);
}

TEST_CASE("evaluation scores known impressions and skips unknown news") {
    const auto data = tiny_data();
    auto config = tiny_config();
    config.epochs = 1;
    const auto result = train::train(config, data.articles, data.train, nullptr);
    const auto corpus = train::corpus_for(result.model, data.articles, nullptr);

    auto eval = data.eval;
    eval[0].candidates[0].news_id = "N-missing";
    const auto report = train::evaluate(result.model, eval, corpus);
    CHECK(report.n_scored == eval.size() - 1);
    CHECK(report.n_skipped_unknown_news == 1);
    CHECK(report.auc >= 0.0);
    CHECK(report.auc <= 1.0);

    const auto scores = train::score_impressions(result.model, eval, corpus);
    CHECK(scores[0].empty());
    CHECK(scores[1].size() == eval[1].candidates.size());
    CHECK(scores == train::score_impressions(result.model, eval, corpus, false));
}
