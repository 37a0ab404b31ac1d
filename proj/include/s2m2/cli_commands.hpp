// Command implementations behind the CLI front end. Kept separate so the
// acceptance suite can drive them in-process.

#ifndef S2M2_CLI_COMMANDS_HPP
#define S2M2_CLI_COMMANDS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "s2m2/model.hpp"
#include "s2m2/train_eval.hpp"

namespace s2m2 {

class usage_error : public std::runtime_error {
public:
    explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// `key = value` lines, '#' comments. Unknown keys are the caller's problem.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

// Applies known keys onto the configs; throws usage_error on unknown keys.
void apply_config_kv(const std::map<std::string, std::string>& kv, ModelConfig* mc,
                     TrainConfig* tc);

struct GenDataOpts {
    int classes = 4;
    int per_class = 100;
    int length = 2500;
    int rate = 250;
    uint64_t seed = 0;
    std::string out_dir;
    double fractions[3] = {0.8, 0.1, 0.1};
};
int cmd_gen_data(const GenDataOpts& o);

struct PreprocessOpts {
    std::string in_manifest;
    std::string out_dir;
};
int cmd_preprocess(const PreprocessOpts& o);

struct TrainOpts {
    std::string data_manifest;
    std::string config_file;  // optional
    std::string out_dir;
    uint64_t seed = 0;
};
int cmd_train(const TrainOpts& o);

struct EvalOpts {
    std::string model_path;
    std::string data_manifest;
    std::string split = "test";
};
int cmd_eval(const EvalOpts& o);

struct InferOpts {
    std::string model_path;
    std::string record_path;
};
int cmd_infer(const InferOpts& o);

struct BenchOpts {
    std::string model_path;
    int repeats = 100;
    int warmup = 10;
    uint64_t seed = 0;
};
struct BenchResult {
    double min_ms = 0, mean_ms = 0, p95_ms = 0;
    long peak_rss_kb = 0;
};
BenchResult run_bench(Model& model, int repeats, int warmup, uint64_t seed);
int cmd_bench(const BenchOpts& o);

struct AblateOpts {
    std::string data_manifest;
    std::string grid_file;
    std::string out_dir;
    uint64_t seed = 0;
};
struct AblateRow {
    ModelConfig config;
    MetricsReport metrics;
    long long params = 0;
    double train_seconds = 0;
    std::string model_path;
};
// Runs the grid, returns the completed rows, writes ablation.csv and one
// model file per row under out_dir.
std::vector<AblateRow> run_ablate(const AblateOpts& o);
int cmd_ablate(const AblateOpts& o);

}  // namespace s2m2

#endif
