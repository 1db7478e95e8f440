#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
    const std::string cmd = std::string(GSCONV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "gsconv_cli_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("verify-gs passes on the built-in grid and fails when corrupted") {
    CHECK(run("verify-gs") == 0);
    CHECK(run("verify-gs --inject-corruption") != 0);
    CHECK(run("verify-gs --dims 1,4,4,4,8 --groups 2,2,1 --cg 1 --cs 4") == 0);
    // Depth 5 is not divisible by the group count.
    CHECK(run("verify-gs --dims 1,5,4,4,8 --groups 2,2,1 --cg 1 --cs 4") != 0);
}

TEST_CASE("gen, train, eval, profile round trip") {
    const fs::path dir = work_dir();
    const fs::path data = dir / "data";
    const fs::path out = dir / "run";
    fs::remove_all(data);
    fs::remove_all(out);

    CHECK(run("gen --task local --dims 16,16,16 --count 6 --seed 3 --out " + data.string()) == 0);
    CHECK(fs::exists(data / "manifest.json"));
    CHECK(fs::exists(data / "vol_00000.gsv"));
    CHECK(fs::exists(data / "lbl_00005.gsv"));

    CHECK(run("train --data " + data.string() +
              " --channels 16,16,16,16,16 --insert csc --iters 3 --batch 2 --seed 5 --out " +
              out.string()) == 0);
    CHECK(fs::exists(out / "metrics.csv"));
    CHECK(fs::exists(out / "checkpoint.gsc"));
    CHECK(fs::exists(out / "manifest.json"));

    CHECK(run("eval --checkpoint " + (out / "checkpoint.gsc").string() + " --data " +
              data.string()) == 0);

    CHECK(run("profile --channels 8,16,16,16,16 --input 1,16,16,16,1 --out " +
              (dir / "profile.csv").string()) == 0);
    std::ifstream profile(dir / "profile.csv");
    std::string first_line;
    std::getline(profile, first_line);
    CHECK(first_line.find("conventions") != std::string::npos);

    // Missing spec file is an I/O error with nonzero exit.
    CHECK(run("train --spec /nonexistent/spec.json --iters 1 --out " + out.string()) != 0);
}

TEST_CASE("errors are a single machine-parsable line on stderr") {
    const fs::path dir = work_dir();
    const std::string cmd = std::string(GSCONV_CLI_PATH) +
                            " verify-gs --dims 1,5,4,4,8 --groups 2,2,1 --cg 1 --cs 4 2> " +
                            (dir / "err.txt").string() + " >/dev/null";
    CHECK(std::system(cmd.c_str()) != 0);
    std::ifstream in(dir / "err.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.rfind("error[", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("bench reports a stable schema") {
    const fs::path dir = work_dir();
    const std::string cmd = std::string(GSCONV_CLI_PATH) +
                            " bench --dims 1,8,8,8,8 --groups 2,2,2 --reps 3 > " +
                            (dir / "bench.txt").string() + " 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    std::ifstream in(dir / "bench.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("naive_ns_per_elem") != std::string::npos);
    CHECK(text.find("table_ns_per_elem") != std::string::npos);
    CHECK(text.find("speedup") != std::string::npos);
}
