// SPDX-License-Identifier: Apache-2.0
//
// One JSON manifest per CLI run: what was invoked, on which inputs, with
// which settings, and what it wrote.
#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace newsrec {

struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::string> input_digests;  // path -> sha256 hex
    std::optional<std::uint64_t> seed;
    std::chrono::system_clock::time_point started_at;
    std::chrono::system_clock::time_point finished_at;
    std::vector<std::string> outputs;
    int exit_status = 0;

    /// Hashes the file content and records it under its path.
    void add_input(const std::filesystem::path& path);

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    /// Writes to path atomically (temporary file then rename).
    void write(const std::filesystem::path& path) const;
};

std::string format_utc(std::chrono::system_clock::time_point t);

}  // namespace newsrec
