// SPDX-License-Identifier: Apache-2.0
//
// Runs the built newsrec binary end to end in a scratch directory.

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = NEWSREC_CLI_PATH;
const std::string kData = NEWSREC_TEST_DATA_DIR;
const std::string kNews = kData + "/mind_tiny/news.tsv";
const std::string kBehaviors = kData + "/mind_tiny/behaviors.tsv";
const std::string kFixture = kData + "/fixture_descriptions.json";

struct Run {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Scratch {
public:
    explicit Scratch(const std::string& name) : dir_(fs::temp_directory_path() / ("newsrec_cli_" + name)) {
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Scratch() { fs::remove_all(dir_); }

    const fs::path& dir() const { return dir_; }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Run run(const std::string& args) const {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd =
            "cd '" + dir_.string() + "' && '" + kCli + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
        const int raw = std::system(cmd.c_str());
        Run r;
        r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    void write(const std::string& name, const std::string& content) const { std::ofstream(dir_ / name) << content; }

private:
    fs::path dir_;
};

const std::string kToy = " --plm toy --arch naml --epochs 1 --batch-size 4";

std::vector<double> report_losses(const fs::path& jsonl) {
    std::ifstream in(jsonl);
    std::vector<double> out;
    for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line).at("mean_loss"));
    return out;
}

}  // namespace

TEST_CASE("stats prints the counts") {
    Scratch s("stats");
    const auto r = s.run("stats --news " + kNews + " --behaviors " + kBehaviors);
    CHECK(r.status == 0);
    CHECK(r.out.find("users: 2") != std::string::npos);
    CHECK(r.out.find("news: 6") != std::string::npos);
    CHECK(r.out.find("impressions: 3") != std::string::npos);
    CHECK(r.out.find("clicks: 4") != std::string::npos);
    CHECK(fs::exists(s.dir() / "stats.manifest.json"));
    const auto manifest = nlohmann::json::parse(slurp(s.dir() / "stats.manifest.json"));
    CHECK(manifest.at("command") == "stats");
    CHECK(manifest.at("input_digests").size() == 2);
    CHECK(manifest.at("exit_status") == 0);

    s.write("empty.tsv", "");
    const auto empty = s.run("stats --news " + kNews + " --behaviors empty.tsv");
    CHECK(empty.status == 0);
    CHECK(empty.out.find("impressions: 0") != std::string::npos);

    s.write("broken.tsv", "1\tU1\t11/11/2019 9:05:58 AM\tN1\tN2-1\n2\tU1\tbad\n");
    const auto broken = s.run("stats --news " + kNews + " --behaviors broken.tsv");
    CHECK(broken.status != 0);
    CHECK(broken.err.find("broken.tsv:2") != std::string::npos);
}

TEST_CASE("generate-descriptions from a fixture") {
    Scratch s("generate");
    const auto r = s.run("generate-descriptions --news " + kNews + " --fixture " + kFixture + " --out cache.json");
    // The tiny catalogue has five keys and the fixture only three.
    CHECK(r.status != 0);
    CHECK(r.err.find("sports-golf") != std::string::npos);
    CHECK(r.err.find("lifestyle-pets") != std::string::npos);
    CHECK(nlohmann::json::parse(slurp(s.dir() / "cache.json")).size() == 3);

    s.write("three.tsv",
            "N1\ttv\tgolden-globes\tGlobes night recap\t\t\t[]\t[]\n"
            "N2\tfinance\treal-estate\tMortgage rates dip\t\t\t[]\t[]\n"
            "N3\tnews\tnews\tCity council votes\t\t\t[]\t[]\n");
    const auto ok = s.run("generate-descriptions --news three.tsv --fixture " + kFixture + " --out fresh.json");
    CHECK(ok.status == 0);
    CHECK(ok.out.find("3 descriptions (3 generated, 0 cached)") != std::string::npos);
    CHECK(fs::exists(s.dir() / "generate-descriptions.manifest.json"));

    const auto again = s.run("generate-descriptions --news three.tsv --fixture " + kFixture + " --out fresh.json");
    CHECK(again.out.find("(0 generated, 3 cached)") != std::string::npos);
}

TEST_CASE("train argument validation") {
    Scratch s("args");
    const std::string base = "train --news " + kNews + " --behaviors " + kBehaviors + " --out run --plm toy";
    CHECK(s.run(base + " --epochs 0").status != 0);
    CHECK(s.run(base + " --mode headline").status != 0);
    CHECK(s.run(base + " --arch lstm").status != 0);
    const auto no_cache = s.run(base + " --mode generated");
    CHECK(no_cache.status != 0);
    CHECK(no_cache.err.find("cache") != std::string::npos);
    CHECK(s.run("train --news missing.tsv --behaviors " + kBehaviors + " --out run --plm toy").status != 0);
}

TEST_CASE("train and evaluate round trip") {
    Scratch s("train");
    const std::string train = "train --news " + kNews + " --behaviors " + kBehaviors + kToy +
                              " --mode template --seed 5 --out ";
    const auto a = s.run(train + "a");
    REQUIRE(a.status == 0);
    CHECK(a.out.find("epoch 1: mean loss") != std::string::npos);
    CHECK(fs::exists(s.dir() / "a" / "final" / "head.safetensors"));
    CHECK(fs::exists(s.dir() / "a" / "train.manifest.json"));
    const auto b = s.run(train + "b");
    REQUIRE(b.status == 0);
    const auto la = report_losses(s.dir() / "a" / "train_report.jsonl");
    CHECK(la.size() == 1);
    CHECK(la == report_losses(s.dir() / "b" / "train_report.jsonl"));

    const auto eval = s.run("evaluate --checkpoint a/final --news " + kNews + " --behaviors " + kBehaviors +
                            " --out metrics");
    REQUIRE(eval.status == 0);
    const auto metrics = nlohmann::json::parse(slurp(s.dir() / "metrics" / "metrics.json"));
    CHECK(metrics.at("n_scored").get<int>() > 0);
    CHECK(eval.out.find("AUC") != std::string::npos);

    CHECK(s.run("evaluate --checkpoint a/final --news " + kNews + " --behaviors nope.tsv").status != 0);
    s.write("other.json", R"({"epochs": 7})");
    const auto mismatch =
        s.run("evaluate --checkpoint a/final --config other.json --news " + kNews + " --behaviors " + kBehaviors);
    CHECK(mismatch.status == 2);
    CHECK(s.run("evaluate --checkpoint missing --news " + kNews + " --behaviors " + kBehaviors).status != 0);
}

TEST_CASE("preprocess writes the composed corpus") {
    Scratch s("pre");
    s.run("generate-descriptions --news " + kNews + " --fixture " + kFixture + " --out cache.json");
    const auto r = s.run("preprocess --news " + kNews + " --plm toy --mode template --out pre");
    REQUIRE(r.status == 0);
    std::ifstream in(s.dir() / "pre" / "corpus.jsonl");
    std::string header;
    std::getline(in, header);
    CHECK(nlohmann::json::parse(header).at("mode") == "template");
    int records = 0;
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("full_text").get<std::string>().find("The news category is ") != std::string::npos);
        ++records;
    }
    CHECK(records == 6);
    CHECK(fs::exists(s.dir() / "pre" / "vocab.txt"));
}
