// SPDX-License-Identifier: Apache-2.0
//
// Category description generation: the fixed chat prompt, LLM clients (live
// chat-completions over HTTP, or a local fixture), and the JSON description
// cache that makes experiment runs reproducible offline.
#pragma once

#include "newsrec/mind_ingest.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace newsrec::describe {

inline constexpr std::string_view kSystemMessage =
    "You are a wonderful news writer. You assist readers by providing more detailed and useful information about "
    "the articles. User inputs the specific category for a news article using the format 'The news category is "
    "{category}'. Please provide a detailed explanation, in about 50 words, **in English**, on the category of the "
    "articles entered (such as politics, economics, sports, etc.). Please avoid using symbols such as double quotes "
    "(\") and single quotes ('), asterisks (*), and similar for emphasis as much as possible.";

inline constexpr std::string_view kUserMessagePrefix = "The news category is ";

struct PromptPair {
    std::string system_message;
    std::string user_message;

    bool operator==(const PromptPair&) const = default;
};

PromptPair build_prompt(const mind::CategoryKey& key);

/// SHA-256 over both messages; stable across runs and platforms.
std::string prompt_fingerprint(const PromptPair& prompt);

/// Number of whitespace-separated tokens.
std::size_t word_count(std::string_view text);

struct CategoryDescription {
    std::string key;
    std::string text;
    std::string generator_model;
    std::string prompt_fingerprint;
    std::size_t word_count = 0;

    bool operator==(const CategoryDescription&) const = default;
};

/// key -> description, persisted as one JSON object with sorted keys.
class DescriptionCache {
public:
    DescriptionCache() = default;
    explicit DescriptionCache(std::filesystem::path path) : path_(std::move(path)) {}

    /// Loads path if it exists; a missing file yields an empty cache bound to path.
    static DescriptionCache load(const std::filesystem::path& path);

    static DescriptionCache from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Writes atomically to path(). No-op when the cache has no path.
    void save() const;

    const CategoryDescription* find(std::string_view key) const;
    /// Rejects empty text and inconsistent word counts.
    void put(CategoryDescription description);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::map<std::string, CategoryDescription, std::less<>>& entries() const noexcept { return entries_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::map<std::string, CategoryDescription, std::less<>> entries_;
};

class LlmError : public std::runtime_error {
public:
    LlmError(const std::string& what, bool transient) : std::runtime_error(what), transient_(transient) {}
    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    /// Returns the raw assistant text. Throws LlmError.
    virtual std::string complete(const PromptPair& prompt) = 0;
    virtual std::string model_id() const = 0;
};

/// Serves descriptions from a JSON object mapping key -> text.
class FixtureLlmClient final : public LlmClient {
public:
    explicit FixtureLlmClient(std::map<std::string, std::string> responses, std::string model = "fixture");
    static std::unique_ptr<FixtureLlmClient> from_file(const std::filesystem::path& path);

    std::string complete(const PromptPair& prompt) override;
    std::string model_id() const override { return model_; }
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::map<std::string, std::string> responses_;
    std::string model_;
    std::atomic<std::size_t> calls_{0};
};

class CredentialError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// OpenAI-compatible /chat/completions client.
class ChatCompletionsClient final : public LlmClient {
public:
    struct Options {
        std::string base_url = "https://api.openai.com";
        std::string endpoint = "/v1/chat/completions";
        std::string model = "gpt-4";
        std::string api_key_env = "OPENAI_API_KEY";
        double temperature = 0.0;
        int timeout_seconds = 120;
    };

    /// Reads the API key from options.api_key_env; throws CredentialError when unset.
    explicit ChatCompletionsClient(Options options);

    std::string complete(const PromptPair& prompt) override;
    std::string model_id() const override { return options_.model; }

    /// Request body sent for a prompt.
    static nlohmann::json request_body(const Options& options, const PromptPair& prompt);

private:
    Options options_;
    std::string api_key_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};
};

class GenerationError : public std::runtime_error {
public:
    GenerationError(std::string key, int attempts, const std::string& reason);
    const std::string& key() const noexcept { return key_; }
    int attempts() const noexcept { return attempts_; }

private:
    std::string key_;
    int attempts_;
};

/// Cache hit: returns the stored entry without calling the client. Miss: one
/// logical request (plus retries on transient failures), trimmed, cached.
CategoryDescription generate_description(const mind::CategoryKey& key, LlmClient& client, DescriptionCache& cache,
                                         const RetryPolicy& retry = {});

struct GenerateOptions {
    int concurrency = 4;
    bool force = false;
    RetryPolicy retry;
    /// Minimum spacing between request starts across all workers.
    std::chrono::milliseconds min_request_interval{0};
};

struct GenerateSummary {
    std::size_t requested = 0;
    std::size_t cache_hits = 0;
    std::size_t generated = 0;
};

class BatchGenerationError : public std::runtime_error {
public:
    BatchGenerationError(std::vector<GenerationError> failures, GenerateSummary partial);
    const std::vector<GenerationError>& failures() const noexcept { return failures_; }
    const GenerateSummary& partial() const noexcept { return partial_; }

private:
    std::vector<GenerationError> failures_;
    GenerateSummary partial_;
};

/// Fills the cache for every key. Each completed entry is persisted as it
/// arrives, so a failed run can be resumed.
GenerateSummary generate_all(const std::vector<mind::CategoryKey>& vocab, LlmClient& client, DescriptionCache& cache,
                             const GenerateOptions& options = {});

/// Mean word count over cached descriptions; throws on an empty cache.
double corpus_word_stats(const DescriptionCache& cache);

}  // namespace newsrec::describe
