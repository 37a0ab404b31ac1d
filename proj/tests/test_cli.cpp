// End-to-end checks of the installed command surface: exit codes, file
// contracts, and determinism. Drives the real binary via std::system.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef S2M2_CLI_PATH
#error "S2M2_CLI_PATH must point at the built binary"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    fs::path out_file = fs::temp_directory_path() / "s2m2_cli_out.txt";
    std::string cmd = std::string(S2M2_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WEXITSTATUS(rc), ss.str()};
}

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("s2m2_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli("definitely-not-a-command").exit_code == 2);
    CHECK(run_cli("gen-data").exit_code == 2);  // missing --out
    auto r = run_cli("gen-data --classes 1 --per-class 2 --out /tmp/s2m2_cli_bad");
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("classes") != std::string::npos);
    CHECK(run_cli("train --data /nonexistent/manifest.csv --out /tmp/x").exit_code == 1);
}

TEST_CASE("gen-data writes records plus manifest and is seed-deterministic") {
    auto d1 = temp_dir("gen1");
    auto d2 = temp_dir("gen2");
    std::string base = "gen-data --classes 4 --per-class 5 --length 1024 --rate 250 --seed 7";
    auto r1 = run_cli(base + " --out " + d1.string());
    CHECK(r1.exit_code == 0);
    CHECK(r1.out.find("class_0") != std::string::npos);

    int record_files = 0;
    for (auto& e : fs::directory_iterator(d1))
        if (e.path().extension() == ".s2m2") ++record_files;
    CHECK(record_files == 20);
    REQUIRE(fs::exists(d1 / "manifest.csv"));

    auto r2 = run_cli(base + " --out " + d2.string());
    CHECK(r2.exit_code == 0);
    CHECK(slurp(d1 / "manifest.csv") == slurp(d2 / "manifest.csv"));
    CHECK(slurp(d1 / "rec_00003.s2m2") == slurp(d2 / "rec_00003.s2m2"));
}

TEST_CASE("full pipeline: gen-data, preprocess, train, eval, infer, bench") {
    auto data = temp_dir("pipe_data");
    auto prep = temp_dir("pipe_prep");
    auto out = temp_dir("pipe_train");

    REQUIRE(run_cli("gen-data --classes 2 --per-class 10 --length 1024 --seed 3 --out " +
                    data.string())
                .exit_code == 0);
    REQUIRE(run_cli("preprocess --in " + (data / "manifest.csv").string() + " --out " +
                    prep.string())
                .exit_code == 0);

    // tiny config so the test stays fast
    std::ofstream cfg(out / "cfg.txt");
    cfg << "# tiny smoke configuration\n"
        << "p = 64\ns = 64\ndepth = 1\ndim = 8\nstate_n = 2\nconv_kernel = 3\n"
        << "epochs = 2\nbatch_size = 4\nlearning_rate = 0.001\nseed = 5\n";
    cfg.close();

    auto tr = run_cli("train --data " + (prep / "manifest.csv").string() + " --config " +
                      (out / "cfg.txt").string() + " --out " + out.string());
    REQUIRE(tr.exit_code == 0);
    CHECK(tr.out.find("epoch=0") != std::string::npos);
    CHECK(fs::exists(out / "model.s2m2model"));
    CHECK(fs::exists(out / "history.txt"));
    CHECK(fs::exists(out / "report.txt"));

    auto ev = run_cli("eval --model " + (out / "model.s2m2model").string() + " --data " +
                      (prep / "manifest.csv").string() + " --split val");
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("accuracy=") != std::string::npos);
    CHECK(ev.out.find("macro_f1=") != std::string::npos);

    auto inf = run_cli("infer --model " + (out / "model.s2m2model").string() + " --record " +
                       (data / "rec_00000.s2m2").string());
    CHECK(inf.exit_code == 0);
    CHECK(inf.out.find("top: class_") != std::string::npos);
    // probabilities printed for every class and summing to ~1
    double p0 = -1, p1 = -1;
    std::sscanf(inf.out.c_str(), "class_0: %lf\nclass_1: %lf", &p0, &p1);
    CHECK(p0 >= 0);
    CHECK(p1 >= 0);
    CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-6));

    auto be = run_cli("bench --model " + (out / "model.s2m2model").string() +
                      " --repeats 5 --warmup 1");
    CHECK(be.exit_code == 0);
    CHECK(be.out.find("latency_ms min=") != std::string::npos);
    CHECK(be.out.find("peak_rss_kb=") != std::string::npos);

    // unknown config key is a usage error
    std::ofstream bad(out / "bad.txt");
    bad << "nonsense_key = 1\n";
    bad.close();
    CHECK(run_cli("train --data " + (prep / "manifest.csv").string() + " --config " +
                  (out / "bad.txt").string() + " --out " + out.string())
              .exit_code == 2);
}

TEST_CASE("ablate emits the fixed CSV schema with one row per combination") {
    auto data = temp_dir("abl_data");
    auto prep = temp_dir("abl_prep");
    auto out = temp_dir("abl_out");
    REQUIRE(run_cli("gen-data --classes 2 --per-class 8 --length 1024 --seed 11 --out " +
                    data.string())
                .exit_code == 0);
    REQUIRE(run_cli("preprocess --in " + (data / "manifest.csv").string() + " --out " +
                    prep.string())
                .exit_code == 0);

    std::ofstream grid(out / "grid.txt");
    grid << "p = 32, 64\ns_ratio = 1, 0.5\n"
         << "depth = 1\ndim = 8\nstate_n = 2\nconv_kernel = 3\n"
         << "bidirectional = on, off\n"
         << "epochs = 1\nbatch_size = 4\nlearning_rate = 0.001\nseed = 2\n";
    grid.close();

    auto r = run_cli("ablate --data " + (prep / "manifest.csv").string() + " --grid " +
                     (out / "grid.txt").string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);

    std::ifstream csv(out / "ablation.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "p,s,depth,dim,bidir,multi_branch,fusion,acc,f1,auc,params,train_s");
    int rows = 0, bidir_on = 0, bidir_off = 0;
    std::string line;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        ++rows;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        REQUIRE(fields.size() == 12);
        if (fields[4] == "on") ++bidir_on;
        if (fields[4] == "off") ++bidir_off;
    }
    CHECK(rows == 8);  // {p: 2} x {s_ratio: 2} x {bidir: 2}
    CHECK(bidir_on == 4);
    CHECK(bidir_off == 4);
}

TEST_CASE("ablate skips infeasible combinations with a logged reason") {
    auto data = temp_dir("skip_data");
    auto prep = temp_dir("skip_prep");
    auto out = temp_dir("skip_out");
    REQUIRE(run_cli("gen-data --classes 2 --per-class 8 --length 1024 --seed 13 --out " +
                    data.string())
                .exit_code == 0);
    REQUIRE(run_cli("preprocess --in " + (data / "manifest.csv").string() + " --out " +
                    prep.string())
                .exit_code == 0);
    std::ofstream grid(out / "grid.txt");
    grid << "p = 32\ns_ratio = 1, 2\n"  // ratio 2 makes s > p
         << "depth = 1\ndim = 8\nstate_n = 2\nconv_kernel = 3\n"
         << "epochs = 1\nbatch_size = 4\nlearning_rate = 0.001\nseed = 2\n";
    grid.close();
    auto r = run_cli("ablate --data " + (prep / "manifest.csv").string() + " --grid " +
                     (out / "grid.txt").string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("skipping") != std::string::npos);
    std::ifstream csv(out / "ablation.csv");
    std::string line;
    int rows = 0;
    std::getline(csv, line);  // header
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1);
}
