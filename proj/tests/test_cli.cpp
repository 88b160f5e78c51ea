// Integration tests driving the installed CLI binary. The binary path comes
// from the ADM_CLI environment variable (set by ctest).

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

const char* cli_path() {
    const char* p = std::getenv("ADM_CLI");
    REQUIRE_MESSAGE(p != nullptr, "ADM_CLI must point at the adm binary");
    return p;
}

fs::path work_dir() {
    const fs::path d = fs::temp_directory_path() / "adm_cli_tests";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::string& args) {
    const fs::path out = work_dir() / "stdout.txt";
    const fs::path err = work_dir() / "stderr.txt";
    const std::string cmd = std::string(cli_path()) + " " + args + " >" + out.string() + " 2>" +
                            err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WEXITSTATUS(status);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// one small dataset shared by the eval/ablate/train cases
fs::path shared_dataset() {
    static fs::path data;
    if (data.empty()) {
        data = work_dir() / "shared.admd";
        const RunResult r = run_cli(
            "synth --classes 12 --images 20 --n 8 --c 6 --cov random-spd --sep 1.0 --seed 3 -o " +
            data.string() + " --split-frac 0.5 0 0.5");
        REQUIRE(r.exit_code == 0);
    }
    return data;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("synth is byte-deterministic") {
    const fs::path a = work_dir() / "det_a.admd";
    const fs::path b = work_dir() / "det_b.admd";
    const std::string flags =
        "synth --classes 4 --images 5 --n 6 --c 3 --cov random-spd --sep 2.0 --seed 7 -o ";
    CHECK(run_cli(flags + a.string()).exit_code == 0);
    CHECK(run_cli(flags + b.string()).exit_code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a.string() + ".split.json") == slurp(b.string() + ".split.json"));
}

TEST_CASE("synth rejects non-positive counts with the flag named") {
    const RunResult r = run_cli("synth --classes 0 --images 5 --n 6 --c 3 --seed 1 -o " +
                                (work_dir() / "zero.admd").string());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("--classes") != std::string::npos);
}

TEST_CASE("eval emits the report schema and is deterministic") {
    const fs::path data = shared_dataset();
    const fs::path rep1 = work_dir() / "rep1.json";
    const fs::path rep2 = work_dir() / "rep2.json";
    const std::string flags = "eval --data " + data.string() + " --split " + data.string() +
                              ".split.json --role test --measure kl --way 4 --shot 1 --query 5 "
                              "--tasks 20 --reps 2 --seed 5 -o ";
    const RunResult a = run_cli(flags + rep1.string());
    REQUIRE(a.exit_code == 0);
    const RunResult b = run_cli(flags + rep2.string());
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(rep1) == slurp(rep2));
    CHECK(a.out == b.out);

    const json j = json::parse(slurp(rep1));
    CHECK(j.contains("mean_acc"));
    CHECK(j.contains("ci95"));
    CHECK(j["tasks"] == 20);
    CHECK(j["reps"] == 2);
    CHECK(j["config"]["measure"] == "kl");
    CHECK(j["config"]["seed"] == 5);
    CHECK(j["config"]["way"] == 4);
}

TEST_CASE("eval honors the cms flag") {
    const fs::path data = shared_dataset();
    const fs::path rep = work_dir() / "cms.json";
    const RunResult r = run_cli("eval --data " + data.string() + " --split " + data.string() +
                                ".split.json --role test --measure adm --cms --way 3 --shot 1 "
                                "--query 4 --tasks 10 --reps 1 --seed 2 -o " +
                                rep.string());
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(slurp(rep));
    CHECK(j["config"]["measure"] == "adm");
    CHECK(j["config"]["cms"] == true);
}

TEST_CASE("eval exits 4 when the split has fewer classes than ways") {
    const fs::path data = shared_dataset();
    const RunResult r = run_cli("eval --data " + data.string() + " --split " + data.string() +
                                ".split.json --role test --measure kl --way 50 --shot 1 "
                                "--query 2 --tasks 5 --reps 1 --seed 0");
    CHECK(r.exit_code == 4);
}

TEST_CASE("eval without --seed is a usage error") {
    const fs::path data = shared_dataset();
    const RunResult r = run_cli("eval --data " + data.string() + " --measure kl");
    CHECK(r.exit_code == 2);
}

TEST_CASE("eval exits 3 on a missing dataset") {
    const RunResult r = run_cli("eval --data " + (work_dir() / "nope.admd").string() +
                                " --measure kl --seed 0");
    CHECK(r.exit_code == 3);
}

TEST_CASE("ablate emits six default rows, echoes the seed, subsets on request") {
    const fs::path data = shared_dataset();
    const fs::path out = work_dir() / "ablate.json";
    const std::string base = "ablate --data " + data.string() + " --split " + data.string() +
                             ".split.json --role test --way 4 --shot 1 --query 5 --tasks 15 "
                             "--seed 9 -o ";
    REQUIRE(run_cli(base + out.string()).exit_code == 0);
    const json j = json::parse(slurp(out));
    CHECK(j["seed"] == 9);
    REQUIRE(j["rows"].size() == 6);
    const std::vector<std::string> expect{"wass-approx", "wass-approx-cms", "kl",
                                          "kl-cms",      "i2c",             "adm"};
    for (size_t i = 0; i < expect.size(); ++i) CHECK(j["rows"][i]["name"] == expect[i]);

    const fs::path sub = work_dir() / "ablate_sub.json";
    REQUIRE(run_cli(base + sub.string() + " --rows kl,adm").exit_code == 0);
    const json js = json::parse(slurp(sub));
    REQUIRE(js["rows"].size() == 2);
    CHECK(js["rows"][0]["name"] == "kl");
    CHECK(js["rows"][1]["name"] == "adm");
}

TEST_CASE("ablate is identical across runs and worker counts") {
    const fs::path data = shared_dataset();
    const fs::path w1 = work_dir() / "ablate_w1.json";
    const fs::path w1b = work_dir() / "ablate_w1b.json";
    const fs::path w8 = work_dir() / "ablate_w8.json";
    const std::string base = "ablate --data " + data.string() + " --split " + data.string() +
                             ".split.json --role test --way 4 --shot 1 --query 5 --tasks 20 "
                             "--seed 13 ";
    REQUIRE(run_cli(base + "--workers 1 -o " + w1.string()).exit_code == 0);
    REQUIRE(run_cli(base + "--workers 1 -o " + w1b.string()).exit_code == 0);
    REQUIRE(run_cli(base + "--workers 8 -o " + w8.string()).exit_code == 0);
    CHECK(slurp(w1) == slurp(w1b));
    CHECK(slurp(w1) == slurp(w8));
}

TEST_CASE("convert accepts the text interchange format") {
    const fs::path txt = work_dir() / "tiny.txt";
    {
        std::ofstream f(txt, std::ios::trunc);
        f << "c=2\n"
          << "class 0\n"
          << "1.5 -2.0\n"
          << "0.25 0.75\n"
          << "\n"
          << "class 1\n"
          << "3 4\n";
    }
    const fs::path out = work_dir() / "tiny.admd";
    const RunResult r = run_cli("convert -i " + txt.string() + " -o " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out));
    // 12-byte header + 2 * (8-byte class header) + image headers and floats
    CHECK(fs::file_size(out) == 12 + (8 + 8 + 16) + (8 + 8 + 8));
}

TEST_CASE("convert reports the offending line") {
    const fs::path txt = work_dir() / "bad.txt";
    {
        std::ofstream f(txt, std::ios::trunc);
        f << "c=3\n"
          << "class 0\n"
          << "1 2 3\n"
          << "1 2\n";  // line 4: c-1 values
    }
    const RunResult r =
        run_cli("convert -i " + txt.string() + " -o " + (work_dir() / "bad.admd").string());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("line 4") != std::string::npos);
}

TEST_CASE("convert then load then save matches the direct bytes") {
    const fs::path txt = work_dir() / "round.txt";
    {
        std::ofstream f(txt, std::ios::trunc);
        f << "c=2\nclass 5\n0.5 0.5\n1.25 -1\n\nclass 5\n2 2\n\nclass 9\n-3 7\n";
    }
    const fs::path once = work_dir() / "round1.admd";
    const fs::path twice = work_dir() / "round2.admd";
    REQUIRE(run_cli("convert -i " + txt.string() + " -o " + once.string()).exit_code == 0);
    REQUIRE(run_cli("convert -i " + txt.string() + " -o " + twice.string()).exit_code == 0);
    CHECK(slurp(once) == slurp(twice));
}

TEST_CASE("train with zero epochs writes the initial parameters") {
    const fs::path data = shared_dataset();
    const fs::path params = work_dir() / "params0.json";
    const RunResult r = run_cli("train --data " + data.string() + " --split " + data.string() +
                                ".split.json --way 3 --shot 1 --query 3 --epochs 0 --seed 1 "
                                "--eval-tasks 5 -o " +
                                params.string());
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(slurp(params));
    CHECK(j["embedding"]["kind"] == "identity");
    CHECK(j["w"] == json::array({1.0, 1.0}));
    const json losses = json::parse(slurp(params.string() + ".loss.json"));
    CHECK(losses.empty());
}

TEST_CASE("train accepts both trainable sets and produces a loss curve") {
    const fs::path data = shared_dataset();
    for (const std::string trainable : {"fusion", "fusion+embedding"}) {
        const fs::path params = work_dir() / ("params_" + std::to_string(trainable.size()) + ".json");
        const RunResult r = run_cli("train --data " + data.string() + " --split " + data.string() +
                                    ".split.json --way 3 --shot 1 --query 3 --epochs 2 "
                                    "--episodes 10 --trainable " +
                                    trainable + " --seed 4 --eval-tasks 5 -o " + params.string());
        REQUIRE_MESSAGE(r.exit_code == 0, r.err);
        const json losses = json::parse(slurp(params.string() + ".loss.json"));
        CHECK(losses.size() == 2);
        const json j = json::parse(slurp(params));
        if (trainable == "fusion+embedding") CHECK(j["embedding"]["kind"] == "linear");
    }
}

TEST_CASE("trained params feed back into eval") {
    const fs::path data = shared_dataset();
    const fs::path params = work_dir() / "params_for_eval.json";
    REQUIRE(run_cli("train --data " + data.string() + " --split " + data.string() +
                    ".split.json --way 3 --shot 1 --query 3 --epochs 1 --episodes 5 --seed 6 "
                    "--eval-tasks 5 -o " +
                    params.string())
                .exit_code == 0);
    const fs::path rep = work_dir() / "eval_with_params.json";
    const RunResult r = run_cli("eval --data " + data.string() + " --split " + data.string() +
                                ".split.json --role test --measure adm --way 3 --shot 1 "
                                "--query 3 --tasks 10 --reps 1 --seed 6 --params " +
                                params.string() + " -o " + rep.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK(json::parse(slurp(rep))["config"]["measure"] == "adm");
}

TEST_SUITE_END();
