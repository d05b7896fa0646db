// SPDX-License-Identifier: Apache-2.0

#include "newsrec/category_describe.hpp"

#include "newsrec/digest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

namespace newsrec::describe {

namespace {

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

struct Requested {
    std::string text;
    int attempts = 0;
};

// One logical request with bounded retries on transient failures.
Requested request_text(const mind::CategoryKey& key, LlmClient& client, const RetryPolicy& retry) {
    const PromptPair prompt = build_prompt(key);
    auto backoff = retry.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            std::string text = trim(client.complete(prompt));
            if (text.empty()) {
                throw GenerationError(key.value, attempt, "empty response");
            }
            return {std::move(text), attempt};
        } catch (const LlmError& e) {
            if (!e.transient() || attempt > retry.max_retries) {
                throw GenerationError(key.value, attempt, e.what());
            }
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

CategoryDescription make_description(const mind::CategoryKey& key, std::string text, const std::string& model) {
    CategoryDescription d;
    d.key = key.value;
    d.word_count = word_count(text);
    d.text = std::move(text);
    d.generator_model = model;
    d.prompt_fingerprint = prompt_fingerprint(build_prompt(key));
    return d;
}

}  // namespace

PromptPair build_prompt(const mind::CategoryKey& key) {
    if (key.value.empty()) {
        throw std::invalid_argument("category key must be non-empty");
    }
    return PromptPair{std::string(kSystemMessage), std::string(kUserMessagePrefix) + key.value};
}

std::string prompt_fingerprint(const PromptPair& prompt) {
    // Unit separator keeps ("ab","c") and ("a","bc") distinct.
    return sha256_hex(prompt.system_message + '\x1f' + prompt.user_message);
}

std::size_t word_count(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
        if (!space && !in_word) {
            ++count;
        }
        in_word = !space;
    }
    return count;
}

// ---- cache ------------------------------------------------------------------

DescriptionCache DescriptionCache::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        return DescriptionCache(path);
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open description cache " + path.string());
    }
    DescriptionCache cache = from_json(nlohmann::json::parse(in));
    cache.path_ = path;
    return cache;
}

DescriptionCache DescriptionCache::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::runtime_error("description cache must be a JSON object");
    }
    DescriptionCache cache;
    for (const auto& [key, entry] : j.items()) {
        CategoryDescription d;
        d.key = key;
        d.text = entry.at("text").get<std::string>();
        d.generator_model = entry.at("generator_model").get<std::string>();
        d.prompt_fingerprint = entry.at("prompt_fingerprint").get<std::string>();
        d.word_count = entry.at("word_count").get<std::size_t>();
        cache.put(std::move(d));
    }
    return cache;
}

nlohmann::json DescriptionCache::to_json() const {
    // nlohmann::json objects are std::map backed, so keys serialise sorted.
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, d] : entries_) {
        j[key] = {{"text", d.text},
                  {"generator_model", d.generator_model},
                  {"prompt_fingerprint", d.prompt_fingerprint},
                  {"word_count", d.word_count}};
    }
    return j;
}

void DescriptionCache::save() const {
    if (path_.empty()) {
        return;
    }
    if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
    const auto tmp = std::filesystem::path(path_.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out << to_json().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path_);
}

const CategoryDescription* DescriptionCache::find(std::string_view key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

void DescriptionCache::put(CategoryDescription description) {
    if (description.key.empty()) {
        throw std::invalid_argument("description key must be non-empty");
    }
    if (trim(description.text).empty()) {
        throw std::invalid_argument("refusing to cache an empty description for '" + description.key + "'");
    }
    if (description.word_count != word_count(description.text)) {
        throw std::invalid_argument("word_count does not match text for '" + description.key + "'");
    }
    const std::string key = description.key;
    entries_.insert_or_assign(key, std::move(description));
}

// ---- clients ----------------------------------------------------------------

FixtureLlmClient::FixtureLlmClient(std::map<std::string, std::string> responses, std::string model)
    : responses_(std::move(responses)), model_(std::move(model)) {}

std::unique_ptr<FixtureLlmClient> FixtureLlmClient::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open fixture " + path.string());
    }
    const auto j = nlohmann::json::parse(in);
    return std::make_unique<FixtureLlmClient>(j.get<std::map<std::string, std::string>>(),
                                              "fixture:" + path.filename().string());
}

std::string FixtureLlmClient::complete(const PromptPair& prompt) {
    ++calls_;
    if (!prompt.user_message.starts_with(kUserMessagePrefix)) {
        throw LlmError("fixture client: unexpected user message", false);
    }
    const std::string key = prompt.user_message.substr(kUserMessagePrefix.size());
    auto it = responses_.find(key);
    if (it == responses_.end()) {
        throw LlmError("fixture has no description for category '" + key + "'", false);
    }
    return it->second;
}

GenerationError::GenerationError(std::string key, int attempts, const std::string& reason)
    : std::runtime_error("category '" + key + "' failed after " + std::to_string(attempts) + " attempt(s): " + reason),
      key_(std::move(key)),
      attempts_(attempts) {}

BatchGenerationError::BatchGenerationError(std::vector<GenerationError> failures, GenerateSummary partial)
    : std::runtime_error(std::to_string(failures.size()) + " category description(s) failed; first: " +
                         (failures.empty() ? std::string{} : std::string(failures.front().what()))),
      failures_(std::move(failures)),
      partial_(partial) {}

// ---- generation -------------------------------------------------------------

CategoryDescription generate_description(const mind::CategoryKey& key, LlmClient& client, DescriptionCache& cache,
                                         const RetryPolicy& retry) {
    if (const auto* hit = cache.find(key.value)) {
        return *hit;
    }
    auto requested = request_text(key, client, retry);
    auto description = make_description(key, std::move(requested.text), client.model_id());
    cache.put(description);
    return description;
}

GenerateSummary generate_all(const std::vector<mind::CategoryKey>& vocab, LlmClient& client, DescriptionCache& cache,
                             const GenerateOptions& options) {
    GenerateSummary summary;
    summary.requested = vocab.size();
    std::vector<mind::CategoryKey> pending;
    for (const auto& key : vocab) {
        if (!options.force && cache.find(key.value) != nullptr) {
            ++summary.cache_hits;
        } else {
            pending.push_back(key);
        }
    }

    std::mutex mutex;  // guards cache, summary, failures, next_start
    std::vector<GenerationError> failures;
    auto next_start = std::chrono::steady_clock::now();
    std::atomic<std::size_t> cursor{0};

    auto worker = [&] {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= pending.size()) {
                return;
            }
            if (options.min_request_interval.count() > 0) {
                std::chrono::steady_clock::time_point slot;
                {
                    std::lock_guard lock(mutex);
                    slot = std::max(next_start, std::chrono::steady_clock::now());
                    next_start = slot + options.min_request_interval;
                }
                std::this_thread::sleep_until(slot);
            }
            const auto& key = pending[i];
            try {
                auto requested = request_text(key, client, options.retry);
                auto description = make_description(key, std::move(requested.text), client.model_id());
                std::lock_guard lock(mutex);
                cache.put(std::move(description));
                cache.save();
                ++summary.generated;
            } catch (const GenerationError& e) {
                std::lock_guard lock(mutex);
                failures.push_back(e);
            }
        }
    };

    const int threads = std::max(1, std::min<int>(options.concurrency, static_cast<int>(pending.size())));
    if (threads == 1 || pending.size() <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }

    cache.save();
    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end(),
                  [](const GenerationError& a, const GenerationError& b) { return a.key() < b.key(); });
        throw BatchGenerationError(std::move(failures), summary);
    }
    return summary;
}

double corpus_word_stats(const DescriptionCache& cache) {
    if (cache.empty()) {
        throw std::invalid_argument("word statistics need at least one description");
    }
    double total = 0.0;
    for (const auto& [key, d] : cache.entries()) {
        total += static_cast<double>(d.word_count);
    }
    return total / static_cast<double>(cache.size());
}

}  // namespace newsrec::describe
