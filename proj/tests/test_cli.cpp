#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "runstyle");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = runstyle::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

/// The only entry under `root`.
fs::path single_run(const fs::path& root) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(root)) found.push_back(e.path());
    REQUIRE(found.size() == 1);
    return found.front();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"eval", "--model", "knn"}).code == 2);
    CHECK(run({"eval", "--scheme", "kfold"}).code == 2);
    CHECK(run({"finetune"}).code == 2);
    CHECK(run({"--profile", "huge", "synth"}).code == 2);
    const auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("synth") != std::string::npos);
}

TEST_CASE("synth writes a dataset once") {
    fixtures::TempDir dir("cli_synth");
    const auto out = (dir.path() / "data").string();
    const auto first = run({"synth", "--out", out, "--subjects", "2", "--duration", "12"});
    REQUIRE(first.code == 0);
    CHECK(fs::exists(dir.path() / "data" / "manifest.json"));
    CHECK(first.out.find("manifest.json") != std::string::npos);
    const auto again = run({"synth", "--out", out, "--subjects", "2", "--duration", "12"});
    CHECK(again.code == 2);
    CHECK(again.err.find("--force") != std::string::npos);
    CHECK(run({"synth", "--out", out, "--subjects", "2", "--duration", "12", "--force"}).code == 0);
}

TEST_CASE("missing run artifacts are runtime failures") {
    fixtures::TempDir dir("cli_missing");
    const auto r = run({"finetune", "--run", (dir.path() / "nothing").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("config.json") != std::string::npos);
}

TEST_CASE("classical eval and finetune refusal") {
    fixtures::TempDir dir("cli_eval");
    const auto data = (dir.path() / "data").string();
    REQUIRE(run({"synth", "--out", data, "--subjects", "5", "--duration", "20"}).code == 0);
    const auto runs = dir.path() / "runs";
    ::setenv(runstyle::cli::kOutEnv, runs.c_str(), 1);
    const auto r = run({"eval", "--scheme", "leave_subjects_out", "--model", "naive_bayes", "--data",
                        data + "/manifest.json"});
    ::unsetenv(runstyle::cli::kOutEnv);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Fusion") != std::string::npos);
    const auto run_dir = single_run(runs);
    CHECK(run_dir.filename().string().find("_eval_naive_bayes_leave_subjects_out") != std::string::npos);
    for (const char* f : {"config.json", "split.json", "report.json", "table.txt"}) {
        CHECK(fs::exists(run_dir / f));
    }
    CHECK(fs::exists(run_dir / "confusion" / "trial_0_fusion.csv"));
    const auto config = read_json(run_dir / "config.json");
    CHECK(config.at("model") == "naive_bayes");
    CHECK(read_json(run_dir / "report.json").at("trials").size() == 5);

    const auto ft = run({"finetune", "--run", run_dir.string()});
    CHECK(ft.code == 2);
}

TEST_CASE("deep eval, single-rung finetune and missing model") {
    fixtures::TempDir dir("cli_deep");
    const auto data = (dir.path() / "data").string();
    REQUIRE(run({"synth", "--out", data, "--subjects", "5", "--duration", "20"}).code == 0);
    const auto runs = dir.path() / "runs";
    const auto r = run({"eval", "--scheme", "leave_subjects_out", "--model", "cnn", "--data", data, "--out",
                        runs.string()});
    REQUIRE(r.code == 0);
    const auto run_dir = single_run(runs);
    CHECK(fs::exists(run_dir / "models" / "trial_4" / "rshank" / "params.bin"));

    const auto ft = run({"finetune", "--run", run_dir.string(), "--fractions", "0.05", "--epochs", "2"});
    REQUIRE(ft.code == 0);
    CHECK(ft.out.find("Tuning 5%") != std::string::npos);
    CHECK(ft.out.find("No Tuning") == std::string::npos);
    const auto report = read_json(run_dir / "report.json");
    REQUIRE(report.at("fine_tuning").size() == 1);
    CHECK(report.at("fine_tuning")[0].at("fraction") == 0.05);
    CHECK(fs::exists(run_dir / "finetune.txt"));

    CHECK(run({"finetune", "--run", run_dir.string(), "--fractions", "1.5"}).code == 2);

    fs::remove(run_dir / "models" / "trial_2" / "com" / "params.bin");
    const auto broken = run({"finetune", "--run", run_dir.string(), "--fractions", "0.05", "--epochs", "1"});
    CHECK(broken.code == 1);
    CHECK(broken.err.find("params.bin") != std::string::npos);
}
