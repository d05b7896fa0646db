// SPDX-License-Identifier: Apache-2.0
//
// HTTP side of the chat-completions client; kept in its own translation unit
// because cpp-httplib is header-only and heavy to compile.

#include "newsrec/category_describe.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

namespace newsrec::describe {

ChatCompletionsClient::ChatCompletionsClient(Options options) : options_(std::move(options)) {
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw CredentialError("environment variable " + options_.api_key_env + " is not set");
    }
    api_key_ = key;
}

nlohmann::json ChatCompletionsClient::request_body(const Options& options, const PromptPair& prompt) {
    return {{"model", options.model},
            {"temperature", options.temperature},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", prompt.system_message}},
                                    {{"role", "user"}, {"content", prompt.user_message}}})}};
}

std::string ChatCompletionsClient::complete(const PromptPair& prompt) {
    httplib::Client client(options_.base_url);
    client.set_connection_timeout(options_.timeout_seconds, 0);
    client.set_read_timeout(options_.timeout_seconds, 0);
    client.set_bearer_token_auth(api_key_);

    const auto body = request_body(options_, prompt).dump();
    auto res = client.Post(options_.endpoint, body, "application/json");
    if (!res) {
        throw LlmError("request failed: " + httplib::to_string(res.error()), true);
    }
    if (res->status == 429 || res->status >= 500) {
        throw LlmError("server returned HTTP " + std::to_string(res->status), true);
    }
    if (res->status != 200) {
        throw LlmError("server returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false);
    }
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw LlmError(std::string("malformed completion response: ") + e.what(), false);
    }
}

}  // namespace newsrec::describe
