// SPDX-License-Identifier: Apache-2.0
//
// newsrec: generate-descriptions | preprocess | train | evaluate | stats

#include "newsrec/category_describe.hpp"
#include "newsrec/config.hpp"
#include "newsrec/eval_metrics.hpp"
#include "newsrec/mind_ingest.hpp"
#include "newsrec/rec_models.hpp"
#include "newsrec/run_manifest.hpp"
#include "newsrec/text_compose.hpp"
#include "newsrec/train_engine.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace newsrec;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct DataArgs {
    std::string news;
    std::string behaviors;
    std::string cache;
};

struct ModelArgs {
    std::string mode;
    std::string arch;
    std::string plm;
    std::string plm_dir;
    int epochs = 0;
    double lr = 0.0;
    int batch_size = 0;
};

struct GenerateArgs {
    std::string fixture;
    std::string llm_model = "gpt-4";
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "OPENAI_API_KEY";
    int concurrency = 4;
    bool force = false;
};

std::string grouped(std::uint64_t n) {
    std::string digits = std::to_string(n);
    std::string out;
    const std::size_t lead = digits.size() % 3;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i != 0 && (i - lead) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

std::string stats_line(const mind::DatasetStats& s) {
    return grouped(s.n_users) + " / " + grouped(s.n_news) + " / " + grouped(s.n_impressions) + " / " +
           grouped(s.n_clicks);
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
        throw std::runtime_error(what + " path is required");
    }
    if (!fs::is_regular_file(path)) {
        throw std::runtime_error(what + " file not found: " + path);
    }
}

ModelConfig load_config(const Common& common) {
    if (common.config_path.empty()) {
        return ModelConfig{};
    }
    std::ifstream in(common.config_path);
    if (!in) {
        throw ConfigError("cannot open config " + common.config_path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + common.config_path + " is not valid JSON: " + e.what());
    }
    return ModelConfig::from_json(j);
}

void apply_overrides(ModelConfig& config, const Common& common, const ModelArgs& args) {
    if (common.seed) config.seed = *common.seed;
    if (!args.mode.empty()) config.mode = text::parse_mode(args.mode);
    if (!args.arch.empty()) config.arch = parse_architecture(args.arch);
    if (!args.plm.empty()) config.plm_name = args.plm;
    if (!args.plm_dir.empty()) config.plm_path = args.plm_dir;
    if (args.epochs > 0) config.epochs = args.epochs;
    if (args.lr > 0.0) config.lr = args.lr;
    if (args.batch_size > 0) config.batch_size = args.batch_size;
    config.validate();
}

std::optional<describe::DescriptionCache> load_cache_for(text::CompositionMode mode, const std::string& cache_path) {
    if (mode != text::CompositionMode::TitleGenerated) {
        return std::nullopt;
    }
    if (cache_path.empty()) {
        throw std::runtime_error("mode 'generated' needs --cache pointing at a description cache");
    }
    require_file(cache_path, "description cache");
    auto cache = describe::DescriptionCache::load(cache_path);
    if (cache.empty()) {
        throw std::runtime_error("description cache " + cache_path + " is empty");
    }
    return cache;
}

RunManifest begin_manifest(const std::string& command, int argc, char** argv) {
    RunManifest m;
    m.command = command;
    m.argv.assign(argv, argv + argc);
    m.started_at = std::chrono::system_clock::now();
    return m;
}

void finish_manifest(RunManifest& m, const fs::path& out_dir, int status) {
    m.exit_status = status;
    m.finished_at = std::chrono::system_clock::now();
    const auto path = out_dir / (m.command + ".manifest.json");
    m.outputs.push_back(path.string());
    m.write(path);
}

// ---- commands -----------------------------------------------------------------------

int cmd_generate(const Common& common, const DataArgs& data, const GenerateArgs& gen, RunManifest& manifest) {
    require_file(data.news, "news");
    if (common.out.empty()) {
        throw std::runtime_error("--out (description cache path) is required");
    }
    manifest.add_input(data.news);
    const auto articles = mind::load_news(data.news);
    const auto vocab = mind::build_category_vocab(articles);

    std::unique_ptr<describe::LlmClient> client;
    if (!gen.fixture.empty()) {
        require_file(gen.fixture, "fixture");
        manifest.add_input(gen.fixture);
        client = describe::FixtureLlmClient::from_file(gen.fixture);
    } else {
        describe::ChatCompletionsClient::Options opts;
        opts.model = gen.llm_model;
        opts.base_url = gen.base_url;
        opts.api_key_env = gen.api_key_env;
        client = std::make_unique<describe::ChatCompletionsClient>(opts);
    }
    manifest.config = {{"generator_model", client->model_id()},
                       {"temperature", 0.0},
                       {"concurrency", gen.concurrency},
                       {"force", gen.force},
                       {"categories", vocab.size()}};

    auto cache = describe::DescriptionCache::load(common.out);
    describe::GenerateOptions options;
    options.concurrency = gen.concurrency;
    options.force = gen.force;
    manifest.outputs.push_back(common.out);
    try {
        const auto summary = describe::generate_all(vocab, *client, cache, options);
        std::cout << cache.size() << " descriptions (" << summary.generated << " generated, " << summary.cache_hits
                  << " cached)\n";
        std::cout << "mean word count: " << describe::corpus_word_stats(cache) << "\n";
    } catch (const describe::BatchGenerationError& e) {
        for (const auto& f : e.failures()) {
            std::cerr << "error: " << f.what() << "\n";
        }
        std::cerr << "error: " << e.failures().size() << " categories failed; " << cache.size()
                  << " descriptions saved to " << common.out << "\n";
        return 1;
    }
    return 0;
}

int cmd_preprocess(const Common& common, const DataArgs& data, const ModelArgs& args, RunManifest& manifest) {
    require_file(data.news, "news");
    if (common.out.empty()) {
        throw std::runtime_error("--out directory is required");
    }
    auto config = load_config(common);
    apply_overrides(config, common, args);
    manifest.config = config.to_json();
    manifest.seed = config.seed;
    manifest.add_input(data.news);
    const auto cache = load_cache_for(config.mode, data.cache);
    if (cache) manifest.add_input(data.cache);
    const auto* cache_ptr = cache ? &*cache : nullptr;

    const auto articles = mind::load_news(data.news);
    const auto texts = text::compose_all(articles, config.mode, cache_ptr, text::WordPieceTokenizer::kSep);
    const auto tokenizer = model::make_tokenizer(config, texts);
    const auto corpus = text::build_corpus(articles, config.mode, cache_ptr, tokenizer, config.max_len());

    const fs::path out(common.out);
    fs::create_directories(out);
    text::write_corpus(out / "corpus.jsonl", corpus);
    tokenizer.save_vocab(out / "vocab.txt");
    manifest.outputs.push_back((out / "corpus.jsonl").string());
    manifest.outputs.push_back((out / "vocab.txt").string());
    std::cout << corpus.order.size() << " articles composed in mode " << text::to_string(config.mode) << "\n";
    return 0;
}

int cmd_train(const Common& common, const DataArgs& data, const ModelArgs& args, RunManifest& manifest) {
    require_file(data.news, "news");
    require_file(data.behaviors, "behaviors");
    if (common.out.empty()) {
        throw std::runtime_error("--out directory is required");
    }
    auto config = load_config(common);
    apply_overrides(config, common, args);
    manifest.config = config.to_json();
    manifest.seed = config.seed;
    manifest.add_input(data.news);
    manifest.add_input(data.behaviors);
    const auto cache = load_cache_for(config.mode, data.cache);
    if (cache) manifest.add_input(data.cache);

    const auto articles = mind::load_news(data.news);
    const auto impressions = mind::load_behaviors(data.behaviors);
    const fs::path out(common.out);
    train::TrainOptions options;
    options.out_dir = out;
    options.on_epoch = [](const train::EpochRecord& r) {
        std::cout << "epoch " << r.epoch << ": mean loss " << r.mean_loss << " over " << r.samples << " samples ("
                  << r.wall_seconds << " s)\n"
                  << std::flush;
    };
    const auto result = train::train(config, articles, impressions, cache ? &*cache : nullptr, options);
    for (const auto& e : result.report.epochs) {
        manifest.outputs.push_back((out / ("epoch-" + std::to_string(e.epoch))).string());
    }
    manifest.outputs.push_back((out / "final").string());
    manifest.outputs.push_back((out / "train_report.jsonl").string());
    std::cout << "checkpoint: " << (out / "final").string() << "\n";
    return 0;
}

int cmd_evaluate(const Common& common, const DataArgs& data, const std::string& checkpoint, RunManifest& manifest) {
    require_file(data.news, "news");
    require_file(data.behaviors, "behaviors");
    if (!fs::is_directory(checkpoint)) {
        throw std::runtime_error("checkpoint directory not found: " + checkpoint);
    }
    const auto model = model::load_checkpoint(checkpoint);
    const auto& config = model.config();
    if (!common.config_path.empty()) {
        const auto requested = load_config(common);
        if (requested.to_json() != config.to_json()) {
            throw ConfigError("config " + common.config_path + " does not match the checkpoint's config");
        }
    }
    manifest.config = config.to_json();
    manifest.seed = config.seed;
    manifest.add_input(data.news);
    manifest.add_input(data.behaviors);
    manifest.add_input(fs::path(checkpoint) / "config.json");
    const auto cache = load_cache_for(config.mode, data.cache);
    if (cache) manifest.add_input(data.cache);

    const auto articles = mind::load_news(data.news);
    const auto impressions = mind::load_behaviors(data.behaviors);
    const auto corpus = train::corpus_for(model, articles, cache ? &*cache : nullptr);
    const auto report = train::evaluate(model, impressions, corpus);

    auto j = report.to_json();
    j["mode"] = text::to_string(config.mode);
    j["arch"] = to_string(config.arch);
    j["plm"] = config.plm_name;
    std::cout << j.dump(2) << "\n";
    const std::string label = std::string(to_string(config.arch)) + "/" + config.plm_name + "/" +
                              std::string(text::to_string(config.mode));
    std::cout << metrics::format_table({{label, report}});
    if (!common.out.empty()) {
        fs::create_directories(common.out);
        const auto path = fs::path(common.out) / "metrics.json";
        std::ofstream(path) << j.dump(2) << "\n";
        manifest.outputs.push_back(path.string());
    }
    return 0;
}

int cmd_stats(const DataArgs& data, RunManifest& manifest) {
    require_file(data.news, "news");
    require_file(data.behaviors, "behaviors");
    manifest.add_input(data.news);
    manifest.add_input(data.behaviors);
    std::ifstream news_in(data.news);
    std::ifstream behaviors_in(data.behaviors);
    const auto news = mind::parse_news(news_in);
    const auto behaviors = mind::parse_behaviors(behaviors_in);
    bool failed = false;
    for (const auto& e : news.errors) {
        std::cerr << data.news << ":" << e.line << ": " << e.message << "\n";
        failed = true;
    }
    for (const auto& e : behaviors.errors) {
        std::cerr << data.behaviors << ":" << e.line << ": " << e.message << "\n";
        failed = true;
    }
    if (failed) {
        return 1;
    }
    const auto stats = mind::dataset_stats(news.articles, behaviors.impressions);
    std::cout << mind::format_stats(stats);
    std::cout << "users / news / impressions / clicks: " << stats_line(stats) << "\n";
    if (news.duplicate_ids > 0) {
        std::cout << "note: " << news.duplicate_ids << " duplicate news ids ignored\n";
    }
    if (stats == mind::kReferenceMindStats) {
        std::cout << "matches the reference MIND counts\n";
    } else {
        std::cout << "info: differs from the reference MIND counts (" << stats_line(mind::kReferenceMindStats)
                  << ")\n";
    }
    manifest.config = {{"users", stats.n_users},
                       {"news", stats.n_news},
                       {"impressions", stats.n_impressions},
                       {"clicks", stats.n_clicks}};
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-augmented news recommendation pipeline"};
    app.require_subcommand(1);

    Common common;
    DataArgs data;
    ModelArgs model_args;
    GenerateArgs gen;
    std::string checkpoint;

    const auto modes = CLI::IsMember({"title", "template", "generated"});
    const auto archs = CLI::IsMember({"naml", "nrms", "npa"});
    const auto plms = CLI::IsMember({std::string(kDistilBertPlm), std::string(kBertPlm), std::string(kToyPlm)});

    auto add_common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", common.config_path, "Model/training config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Random seed");
        auto* out = sub->add_option("--out", common.out, "Output location");
        if (out_required) out->required();
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--mode", model_args.mode, "title | template | generated")->check(modes);
        sub->add_option("--arch", model_args.arch, "naml | nrms | npa")->check(archs);
        sub->add_option("--plm", model_args.plm, "distilbert-base | bert-base | toy")->check(plms);
        sub->add_option("--plm-dir", model_args.plm_dir, "Pretrained encoder directory")->check(CLI::ExistingDirectory);
        sub->add_option("--cache", data.cache, "Description cache (generated mode)");
    };

    auto* gen_cmd = app.add_subcommand("generate-descriptions", "Generate and cache category descriptions");
    add_common(gen_cmd, true);
    gen_cmd->add_option("--news", data.news, "news.tsv")->required();
    gen_cmd->add_option("--fixture", gen.fixture, "JSON map category key -> description (offline)");
    gen_cmd->add_option("--llm-model", gen.llm_model, "Chat model name");
    gen_cmd->add_option("--base-url", gen.base_url, "Chat completions server");
    gen_cmd->add_option("--api-key-env", gen.api_key_env, "Environment variable holding the API key");
    gen_cmd->add_option("--concurrency", gen.concurrency, "Parallel requests")->check(CLI::PositiveNumber);
    gen_cmd->add_flag("--force", gen.force, "Regenerate cached entries");

    auto* pre_cmd = app.add_subcommand("preprocess", "Compose and tokenise news texts");
    add_common(pre_cmd, true);
    add_model(pre_cmd);
    pre_cmd->add_option("--news", data.news, "news.tsv")->required();

    auto* train_cmd = app.add_subcommand("train", "Train a recommender");
    add_common(train_cmd, true);
    add_model(train_cmd);
    train_cmd->add_option("--news", data.news, "news.tsv")->required();
    train_cmd->add_option("--behaviors", data.behaviors, "behaviors.tsv")->required();
    train_cmd->add_option("--epochs", model_args.epochs, "Training epochs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", model_args.lr, "Learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch-size", model_args.batch_size, "Samples per step")->check(CLI::PositiveNumber);

    auto* eval_cmd = app.add_subcommand("evaluate", "Score impressions with a checkpoint");
    add_common(eval_cmd, false);
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    eval_cmd->add_option("--news", data.news, "news.tsv")->required();
    eval_cmd->add_option("--behaviors", data.behaviors, "behaviors.tsv")->required();
    eval_cmd->add_option("--cache", data.cache, "Description cache (generated mode)");

    auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
    add_common(stats_cmd, false);
    stats_cmd->add_option("--news", data.news, "news.tsv")->required();
    stats_cmd->add_option("--behaviors", data.behaviors, "behaviors.tsv")->required();

    CLI11_PARSE(app, argc, argv);

    CLI::App* chosen = app.get_subcommands().front();
    RunManifest manifest = begin_manifest(chosen->get_name(), argc, argv);
    // The description cache is a file; its manifest sits next to it.
    fs::path manifest_dir = common.out.empty() ? fs::path(".") : fs::path(common.out);
    if (chosen == gen_cmd) {
        manifest_dir = fs::path(common.out).has_parent_path() ? fs::path(common.out).parent_path() : fs::path(".");
    }

    int status = 1;
    try {
        if (chosen == gen_cmd) {
            status = cmd_generate(common, data, gen, manifest);
        } else if (chosen == pre_cmd) {
            status = cmd_preprocess(common, data, model_args, manifest);
        } else if (chosen == train_cmd) {
            status = cmd_train(common, data, model_args, manifest);
        } else if (chosen == eval_cmd) {
            status = cmd_evaluate(common, data, checkpoint, manifest);
        } else if (chosen == stats_cmd) {
            status = cmd_stats(data, manifest);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        status = 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        status = 1;
    }
    try {
        finish_manifest(manifest, manifest_dir, status);
    } catch (const std::exception& e) {
        std::cerr << "error: cannot write run manifest: " << e.what() << "\n";
        if (status == 0) status = 1;
    }
    return status;
}
