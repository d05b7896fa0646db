// SPDX-License-Identifier: Apache-2.0

#include "newsrec/rec_models.hpp"
#include "support/gradcheck.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace newsrec;
using newsrec::testing::gradcheck;
using newsrec::testing::random_matrix;

namespace {

ModelConfig small_config(Architecture arch) {
    ModelConfig c;
    c.arch = arch;
    c.plm_name = kToyPlm;
    c.toy_encoder.hidden = 16;
    c.toy_encoder.layers = 1;
    c.toy_encoder.heads = 2;
    c.toy_encoder.ffn = 32;
    c.toy_encoder.max_positions = 64;
    c.d_news = 16;
    c.attn_hidden = 8;
    c.n_heads = 4;
    c.user_emb_dim = 6;
    c.history_len = 5;
    c.max_len_title = 16;
    c.max_len_augmented = 32;
    c.mode = text::CompositionMode::TitleOnly;
    return c;
}

const std::vector<std::string> kTexts = {"golden globes recap", "mortgage rates dip again", "late birdie seals title"};

model::RecModel small_model(Architecture arch, std::vector<std::string> users = {"U1", "U2"}) {
    std::vector<mind::Impression> imps;
    for (const auto& u : users) {
        mind::Impression imp;
        imp.user_id = u;
        imps.push_back(imp);
    }
    const auto config = small_config(arch);
    return model::RecModel::create(config, model::make_tokenizer(config, kTexts), model::UserVocab::build(imps));
}

void check_distribution(const ag::Tensor& weights) {
    REQUIRE(weights.defined());
    const auto& w = weights.value();
    CHECK(w.minCoeff() >= 0.0);
    CHECK(std::abs(w.sum() - 1.0) < 1e-6);
}

}  // namespace

TEST_CASE("additive attention: symmetry and single position") {
    std::mt19937_64 rng(1);
    const auto params = model::AdditiveAttention::init(4, 3, rng);
    ag::Matrix same(3, 4);
    same.rowwise() = random_matrix(1, 4, rng).row(0);
    const auto out = model::additive_attention(ag::Tensor::constant(same), {}, params);
    CHECK((out.pooled.value() - same.row(0)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((out.weights.value().array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

    const auto one = random_matrix(1, 4, rng);
    const auto single = model::additive_attention(ag::Tensor::constant(one), {}, params);
    CHECK(single.pooled.value() == one);
    CHECK(single.weights.value()(0, 0) == 1.0);

    const std::vector<int> none = {0, 0, 0};
    CHECK_THROWS(model::additive_attention(ag::Tensor::constant(same), none, params));
}

TEST_CASE("additive attention: masked weights and convex hull") {
    std::mt19937_64 rng(2);
    const auto params = model::AdditiveAttention::init(3, 5, rng);
    const auto h = random_matrix(4, 3, rng);
    const std::vector<int> mask = {1, 0, 1, 1};
    const auto out = model::additive_attention(ag::Tensor::constant(h), mask, params);
    check_distribution(out.weights);
    CHECK(out.weights.value()(0, 1) == 0.0);
    for (ag::Index c = 0; c < 3; ++c) {
        const double lo = std::min({h(0, c), h(2, c), h(3, c)});
        const double hi = std::max({h(0, c), h(2, c), h(3, c)});
        CHECK(out.pooled.value()(0, c) >= lo - 1e-12);
        CHECK(out.pooled.value()(0, c) <= hi + 1e-12);
    }
}

TEST_CASE("additive attention gradients match finite differences") {
    std::mt19937_64 rng(3);
    const auto h = random_matrix(5, 8, rng);
    const auto w = random_matrix(6, 8, rng, 0.5);
    const auto b = random_matrix(1, 6, rng, 0.5);
    const auto q = random_matrix(1, 6, rng);
    auto f = [](const std::vector<ag::Tensor>& p) {
        model::AdditiveAttention params{nn::Linear{p[1], p[2]}, p[3]};
        return model::additive_attention(p[0], {}, params).pooled;
    };
    const auto result = gradcheck(f, {h, w, b, q});
    CHECK(result.max_relative_error < 1e-4);
}

TEST_CASE("dot-product scores") {
    const std::vector<double> a = {1, 0}, b = {0, 1}, c = {1, 1};
    CHECK(model::score(a, b) == 0.0);
    CHECK(model::score(c, c) == 2.0);
    const std::vector<double> u = {0.5, -2, 3}, v = {4, 0.25, 1};
    CHECK(model::score(u, v) == doctest::Approx(4.5).epsilon(1e-15));
    CHECK(model::score(u, v) == model::score(v, u));
    CHECK_THROWS_AS(model::score(a, u), std::invalid_argument);

    const auto user = ag::Tensor::constant((ag::Matrix(1, 3) << 0.5, -2, 3).finished());
    const auto cands = ag::Tensor::constant((ag::Matrix(2, 3) << 4, 0.25, 1, 0, 0, 1).finished());
    const auto s = model::score_candidates(user, cands).value();
    CHECK(s(0, 0) == doctest::Approx(4.5).epsilon(1e-15));
    CHECK(s(0, 1) == 3.0);
    CHECK_THROWS(model::score_candidates(user, ag::Tensor::constant(ag::Matrix::Zero(2, 2))));
}

TEST_CASE("news encoder: shape, determinism and length contract") {
    const auto m = small_model(Architecture::NAML);
    const auto tokens = m.tokenizer().encode("golden globes recap", m.config().max_len());
    const auto v1 = m.news_encoder().encode(tokens).value();
    const auto v2 = m.news_encoder().encode(tokens).value();
    CHECK(v1.rows() == 1);
    CHECK(v1.cols() == 16);
    CHECK(v1.allFinite());
    CHECK(v1 == v2);
    const auto wrong = m.tokenizer().encode("golden globes recap", m.config().max_len() + 1);
    CHECK_THROWS_AS(m.news_encoder().encode(wrong), std::invalid_argument);

    // One state: pooling returns its projection unchanged.
    const auto states = m.news_encoder().plm_states(tokens);
    const auto first = ag::gather_rows(states, std::vector<ag::Index>{1});
    const auto pooled = m.news_encoder().pool(first);
    CHECK(pooled.weights.value()(0, 0) == 1.0);
    ag::ParameterList head;
    m.news_encoder().collect_head(head);
    const auto& proj_w = head[0].tensor.value();
    const auto& proj_b = head[1].tensor.value();
    const ag::Matrix expected = first.value() * proj_w.transpose() + proj_b;
    CHECK((pooled.pooled.value() - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("user encoders: NAML single item and cold start") {
    const auto m = small_model(Architecture::NAML);
    std::mt19937_64 rng(4);
    const auto item = random_matrix(1, 16, rng);
    const auto u = m.user_encoder().encode(ag::Tensor::constant(item), 1);
    CHECK(u.vector.value() == item);
    check_distribution(u.weights);

    const auto cold = m.user_encoder().encode(ag::Tensor{}, 1);
    CHECK(cold.vector.value().allFinite());
    CHECK(cold.vector.value().cwiseAbs().maxCoeff() > 0.0);
    CHECK_FALSE(cold.weights.defined());
    CHECK_THROWS_AS(m.user_encoder().encode(ag::Tensor::constant(random_matrix(6, 16, rng)), 1), std::logic_error);
}

TEST_CASE("user encoders: NRMS is permutation invariant") {
    const auto m = small_model(Architecture::NRMS);
    std::mt19937_64 rng(5);
    const auto h = random_matrix(5, 16, rng);
    const std::vector<ag::Index> perm = {3, 0, 4, 1, 2};
    ag::Matrix shuffled(5, 16);
    for (ag::Index i = 0; i < 5; ++i) shuffled.row(i) = h.row(perm[i]);
    const auto a = m.user_encoder().encode(ag::Tensor::constant(h), 1);
    const auto b = m.user_encoder().encode(ag::Tensor::constant(shuffled), 1);
    CHECK((a.vector.value() - b.vector.value()).cwiseAbs().maxCoeff() < 1e-5);
    check_distribution(a.weights);
    check_distribution(b.weights);

    // Ranking of candidates is therefore unchanged as well.
    const auto cands = ag::Tensor::constant(random_matrix(4, 16, rng));
    const auto sa = model::score_candidates(a.vector, cands).value();
    const auto sb = model::score_candidates(b.vector, cands).value();
    ag::Index ia, ib;
    sa.row(0).maxCoeff(&ia);
    sb.row(0).maxCoeff(&ib);
    CHECK(ia == ib);
}

TEST_CASE("user encoders: NPA personalises attention") {
    const auto m = small_model(Architecture::NPA);
    std::mt19937_64 rng(6);
    const auto h = ag::Tensor::constant(random_matrix(4, 16, rng));
    const auto u1 = m.user_encoder().encode(h, m.users().index_of("U1"));
    const auto u2 = m.user_encoder().encode(h, m.users().index_of("U2"));
    check_distribution(u1.weights);
    check_distribution(u2.weights);
    CHECK((u1.vector.value() - u2.vector.value()).cwiseAbs().maxCoeff() > 1e-9);

    CHECK(m.users().index_of("never-seen") == 0);
    const auto fallback = m.user_encoder().encode(h, m.users().index_of("never-seen"));
    CHECK(fallback.vector.value().allFinite());
}

TEST_CASE("user vocabulary") {
    mind::Impression a, b, c;
    a.user_id = "U7";
    b.user_id = "U3";
    c.user_id = "U7";
    const auto v = model::UserVocab::build({a, b, c});
    CHECK(v.size() == 3);
    CHECK(v.index_of("U7") == 1);
    CHECK(v.index_of("U3") == 2);
    CHECK(model::UserVocab::from_json(v.to_json()).index_of("U3") == 2);
}

TEST_CASE("checkpoints restore identical predictions") {
    for (auto arch : {Architecture::NAML, Architecture::NRMS, Architecture::NPA}) {
        CAPTURE(to_string(arch));
        const auto m = small_model(arch);
        const auto dir = std::filesystem::temp_directory_path() / "newsrec_ckpt_test";
        std::filesystem::remove_all(dir);
        model::save_checkpoint(m, dir);
        CHECK(std::filesystem::exists(dir / "encoder" / "model.safetensors"));
        CHECK(std::filesystem::exists(dir / "encoder" / "config.json"));
        CHECK(std::filesystem::exists(dir / "head.safetensors"));
        const auto back = model::load_checkpoint(dir);
        CHECK(back.config().to_json() == m.config().to_json());

        const auto tokens = m.tokenizer().encode("mortgage rates dip again", m.config().max_len());
        CHECK(back.news_encoder().encode(tokens).value() == m.news_encoder().encode(tokens).value());
        std::mt19937_64 rng(8);
        const auto h = ag::Tensor::constant(random_matrix(3, 16, rng));
        CHECK(back.user_encoder().encode(h, 2).vector.value() == m.user_encoder().encode(h, 2).vector.value());
        std::filesystem::remove_all(dir);
    }
    CHECK_THROWS_AS(model::load_checkpoint("/nonexistent/newsrec"), model::CheckpointError);
}

TEST_CASE("frozen encoder leaves only head parameters trainable") {
    auto config = small_config(Architecture::NAML);
    config.freeze_encoder = true;
    const auto m = model::RecModel::create(config, model::make_tokenizer(config, kTexts), model::UserVocab{});
    CHECK(m.trainable_parameters().size() == m.head_parameters().size());
    const auto unfrozen = small_model(Architecture::NAML);
    CHECK(unfrozen.trainable_parameters().size() ==
          unfrozen.head_parameters().size() + unfrozen.encoder_parameters().size());
}
