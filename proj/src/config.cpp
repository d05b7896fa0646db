// SPDX-License-Identifier: Apache-2.0

#include "newsrec/config.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace newsrec {

std::string_view to_string(Architecture arch) {
    switch (arch) {
        case Architecture::NAML: return "naml";
        case Architecture::NRMS: return "nrms";
        case Architecture::NPA: return "npa";
    }
    return "naml";
}

Architecture parse_architecture(std::string_view name) {
    std::string n(name);
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (n == "naml") return Architecture::NAML;
    if (n == "nrms") return Architecture::NRMS;
    if (n == "npa") return Architecture::NPA;
    throw ConfigError("unknown architecture '" + std::string(name) + "' (expected naml, nrms or npa)");
}

int ModelConfig::max_len() const {
    return mode == text::CompositionMode::TitleOnly ? max_len_title : max_len_augmented;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (plm_name != kToyPlm && plm_name != kDistilBertPlm && plm_name != kBertPlm) {
        fail("unknown plm '" + plm_name + "' (expected toy, distilbert-base or bert-base)");
    }
    if (history_len < 1) fail("history_len must be >= 1");
    if (k_negatives < 1) fail("k_negatives must be >= 1");
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
    if (d_news < 1 || attn_hidden < 1 || user_emb_dim < 1) fail("model widths must be positive");
    if (n_heads < 1) fail("n_heads must be >= 1");
    if (arch == Architecture::NRMS && d_news % n_heads != 0) fail("d_news must be divisible by n_heads for nrms");
    if (max_len_title < 4 || max_len_augmented < 4) fail("max_len must be at least 4");
    if (is_toy()) {
        if (toy_encoder.hidden < 1 || toy_encoder.layers < 1 || toy_encoder.heads < 1 || toy_encoder.ffn < 1) {
            fail("toy encoder sizes must be positive");
        }
        if (toy_encoder.hidden % toy_encoder.heads != 0) fail("toy encoder hidden must be divisible by its heads");
        if (toy_encoder.max_positions < max_len()) fail("toy encoder max_positions must cover max_len");
    } else if (plm_path.empty()) {
        fail("plm '" + plm_name + "' needs plm_path pointing at a pretrained checkpoint directory");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {
        {"arch", to_string(arch)},
        {"plm_name", plm_name},
        {"plm_path", plm_path},
        {"toy_encoder",
         {{"hidden", toy_encoder.hidden},
          {"layers", toy_encoder.layers},
          {"heads", toy_encoder.heads},
          {"ffn", toy_encoder.ffn},
          {"max_positions", toy_encoder.max_positions},
          {"init_std", toy_encoder.init_std}}},
        {"d_news", d_news},
        {"attn_hidden", attn_hidden},
        {"n_heads", n_heads},
        {"user_emb_dim", user_emb_dim},
        {"history_len", history_len},
        {"k_negatives", k_negatives},
        {"lr", lr},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"weight_decay", weight_decay},
        {"beta1", beta1},
        {"beta2", beta2},
        {"adam_eps", adam_eps},
        {"clip_norm", clip_norm},
        {"max_len_title", max_len_title},
        {"max_len_augmented", max_len_augmented},
        {"mode", text::to_string(mode)},
        {"seed", seed},
        {"freeze_encoder", freeze_encoder},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "arch",       "plm_name",   "plm_path",     "toy_encoder", "d_news",        "attn_hidden",
        "n_heads",    "user_emb_dim", "history_len", "k_negatives", "lr",           "batch_size",
        "epochs",     "weight_decay", "beta1",       "beta2",       "adam_eps",     "clip_norm",
        "max_len_title", "max_len_augmented", "mode", "seed",       "freeze_encoder"};
    if (!j.is_object()) {
        throw ConfigError("model config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    ModelConfig c;
    try {
        if (j.contains("arch")) c.arch = parse_architecture(j.at("arch").get<std::string>());
        c.plm_name = j.value("plm_name", c.plm_name);
        c.plm_path = j.value("plm_path", c.plm_path);
        if (j.contains("toy_encoder")) {
            const auto& t = j.at("toy_encoder");
            c.toy_encoder.hidden = t.value("hidden", c.toy_encoder.hidden);
            c.toy_encoder.layers = t.value("layers", c.toy_encoder.layers);
            c.toy_encoder.heads = t.value("heads", c.toy_encoder.heads);
            c.toy_encoder.ffn = t.value("ffn", c.toy_encoder.ffn);
            c.toy_encoder.max_positions = t.value("max_positions", c.toy_encoder.max_positions);
            c.toy_encoder.init_std = t.value("init_std", c.toy_encoder.init_std);
        }
        c.d_news = j.value("d_news", c.d_news);
        c.attn_hidden = j.value("attn_hidden", c.attn_hidden);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.user_emb_dim = j.value("user_emb_dim", c.user_emb_dim);
        c.history_len = j.value("history_len", c.history_len);
        c.k_negatives = j.value("k_negatives", c.k_negatives);
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.max_len_title = j.value("max_len_title", c.max_len_title);
        c.max_len_augmented = j.value("max_len_augmented", c.max_len_augmented);
        if (j.contains("mode")) c.mode = text::parse_mode(j.at("mode").get<std::string>());
        c.seed = j.value("seed", c.seed);
        c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

}  // namespace newsrec
