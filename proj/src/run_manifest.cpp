// SPDX-License-Identifier: Apache-2.0

#include "newsrec/run_manifest.hpp"

#include "newsrec/digest.hpp"

#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace newsrec {

namespace {

std::chrono::system_clock::time_point parse_utc(const std::string& text) {
    std::tm tm{};
    std::istringstream in(text);
    in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    if (in.fail()) {
        throw std::invalid_argument("bad manifest timestamp '" + text + "'");
    }
    return std::chrono::system_clock::from_time_t(timegm(&tm));
}

}  // namespace

std::string format_utc(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

void RunManifest::add_input(const std::filesystem::path& path) {
    input_digests[path.string()] = sha256_file(path);
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j = {
        {"command", command},
        {"argv", argv},
        {"config", config},
        {"input_digests", input_digests},
        {"started_at", format_utc(started_at)},
        {"finished_at", format_utc(finished_at)},
        {"outputs", outputs},
        {"exit_status", exit_status},
    };
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    m.started_at = parse_utc(j.at("started_at").get<std::string>());
    m.finished_at = parse_utc(j.at("finished_at").get<std::string>());
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.exit_status = j.at("exit_status").get<int>();
    return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out << to_json().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace newsrec
