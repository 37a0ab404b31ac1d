#include "s2m2/cli_commands.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "s2m2/preprocess.hpp"
#include "s2m2/synth.hpp"

namespace s2m2 {

namespace fs = std::filesystem;

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw usage_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw usage_error(path + ":" + std::to_string(lineno) + ": empty key or value");
        kv[key] = val;
    }
    return kv;
}

static bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw usage_error("config key '" + key + "': expected a boolean, got '" + v + "'");
}

void apply_config_kv(const std::map<std::string, std::string>& kv, ModelConfig* mc,
                     TrainConfig* tc) {
    for (const auto& [key, val] : kv) {
        if (mc && key == "p") mc->patch_len = std::stoi(val);
        else if (mc && key == "s") mc->step = std::stoi(val);
        else if (mc && key == "depth") mc->depth = std::stoi(val);
        else if (mc && key == "dim") mc->dim = std::stoi(val);
        else if (mc && key == "state_n") mc->state_n = std::stoi(val);
        else if (mc && key == "conv_kernel") mc->conv_kernel = std::stoi(val);
        else if (mc && key == "bidirectional") mc->bidirectional = parse_bool(val, key);
        else if (mc && key == "multi_branch") mc->multi_branch = parse_bool(val, key);
        else if (mc && key == "exact_zoh") mc->exact_zoh = parse_bool(val, key);
        else if (mc && key == "fusion") {
            if (val == "full") mc->fusion = FusionKind::full;
            else if (val == "concat") mc->fusion = FusionKind::concat_only;
            else throw usage_error("config key 'fusion': expected full|concat, got '" + val + "'");
        } else if (mc && key == "cls_policy") {
            if (val == "both_ends") mc->cls_policy = ClsPolicy::both_ends;
            else if (val == "start_only") mc->cls_policy = ClsPolicy::start_only;
            else throw usage_error("config key 'cls_policy': expected both_ends|start_only");
        } else if (mc && key == "direction_combine") {
            if (val == "sum") mc->direction_combine = DirCombine::sum;
            else if (val == "concat") mc->direction_combine = DirCombine::concat;
            else throw usage_error("config key 'direction_combine': expected sum|concat");
        } else if (mc && key == "layer_readout") {
            if (val == "last") mc->layer_readout = LayerReadout::last;
            else if (val == "sum") mc->layer_readout = LayerReadout::sum;
            else throw usage_error("config key 'layer_readout': expected last|sum");
        } else if (tc && key == "epochs") tc->epochs = std::stoi(val);
        else if (tc && key == "batch_size") tc->batch_size = std::stoi(val);
        else if (tc && key == "learning_rate") tc->learning_rate = std::stod(val);
        else if (tc && key == "weight_decay") tc->weight_decay = std::stod(val);
        else if (tc && key == "patience") tc->patience = std::stoi(val);
        else if (tc && key == "seed") tc->seed = (uint64_t)std::stoull(val);
        else
            throw usage_error("unknown config key '" + key + "'");
    }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const GenDataOpts& o) {
    if (o.classes < 2 || o.classes > 8)
        throw usage_error("--classes must be in [2, 8], got " + std::to_string(o.classes));
    if (o.per_class < 1) throw usage_error("--per-class must be >= 1");
    if (o.length < 4 * o.rate) throw usage_error("--length must be >= 4 * rate");
    if (o.out_dir.empty()) throw usage_error("--out is required");
    fs::create_directories(o.out_dir);

    std::vector<EcgRecord> records =
        generate_synthetic(o.classes, o.per_class, o.length, o.rate, o.seed);
    DatasetManifest manifest;
    manifest.base_dir = o.out_dir;
    for (size_t i = 0; i < records.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "rec_%05zu.s2m2", i);
        write_record(records[i], (fs::path(o.out_dir) / name).string());
        manifest.entries.push_back({name, records[i].label, Split::train});
    }
    for (int c = 0; c < o.classes; ++c) manifest.class_names.push_back("class_" + std::to_string(c));
    manifest = split_manifest(manifest, o.fractions, o.seed);
    write_manifest(manifest, (fs::path(o.out_dir) / "manifest.csv").string());

    std::vector<int> counts((size_t)o.classes, 0);
    for (const auto& e : manifest.entries) counts[(size_t)e.label]++;
    for (int c = 0; c < o.classes; ++c)
        std::cout << "class_" << c << ": " << counts[(size_t)c] << " records\n";
    std::cout << "wrote " << records.size() << " records + manifest.csv to " << o.out_dir << "\n";
    return 0;
}

int cmd_preprocess(const PreprocessOpts& o) {
    if (o.in_manifest.empty() || o.out_dir.empty())
        throw usage_error("preprocess needs --in and --out");
    DatasetManifest manifest = read_manifest(o.in_manifest, true);
    fs::create_directories(o.out_dir);
    DatasetManifest out = manifest;
    out.base_dir = o.out_dir;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        EcgRecord rec = read_record(manifest.resolve(manifest.entries[i]));
        std::vector<int> flagged;
        EcgRecord proc = preprocess_record(rec, &flagged);
        for (int ld : flagged)
            std::cerr << "warning: " << rec.id << " lead " << ld << " is flat, zeroed\n";
        std::string name = fs::path(manifest.entries[i].path).filename().string();
        write_record(proc, (fs::path(o.out_dir) / name).string());
        out.entries[i].path = name;
    }
    write_manifest(out, (fs::path(o.out_dir) / "manifest.csv").string());
    std::cout << "preprocessed " << manifest.entries.size() << " records into " << o.out_dir
              << "\n";
    return 0;
}

int cmd_train(const TrainOpts& o) {
    if (o.data_manifest.empty() || o.out_dir.empty())
        throw usage_error("train needs --data and --out");
    Dataset data = load_dataset(o.data_manifest);
    if (data.records.empty()) throw std::runtime_error("train: empty dataset");

    ModelConfig mc;
    TrainConfig tc;
    tc.seed = o.seed;
    if (!o.config_file.empty()) apply_config_kv(parse_kv_file(o.config_file), &mc, &tc);
    mc.classes = data.class_count();
    mc.seq_len = data.records.front().length;
    mc.validate();

    fs::create_directories(o.out_dir);
    Model model(mc, tc.seed);
    TrainResult result = train(model, data, tc);

    std::ofstream hist((fs::path(o.out_dir) / "history.txt").string());
    for (const auto& e : result.history) {
        std::string line = format_epoch_line(e);
        hist << line << "\n";
        std::cout << line << "\n";
    }
    MetricsReport val = evaluate(model, data, Split::val);
    std::ofstream report((fs::path(o.out_dir) / "report.txt").string());
    report << format_report(val, data.manifest.class_names);
    model.save((fs::path(o.out_dir) / "model.s2m2model").string());
    std::cout << "best epoch " << result.best_epoch << " val_f1=" << result.best_val_f1 << "\n";
    std::cout << "saved model to " << (fs::path(o.out_dir) / "model.s2m2model").string() << "\n";
    return 0;
}

int cmd_eval(const EvalOpts& o) {
    if (o.model_path.empty() || o.data_manifest.empty())
        throw usage_error("eval needs --model and --data");
    Split split = split_from_name(o.split);
    Model model = Model::load(o.model_path);
    Dataset data = load_dataset(o.data_manifest);
    MetricsReport r = evaluate(model, data, split);
    std::cout << format_report(r, data.manifest.class_names);
    return 0;
}

int cmd_infer(const InferOpts& o) {
    if (o.model_path.empty() || o.record_path.empty())
        throw usage_error("infer needs --model and --record");
    Model model = Model::load(o.model_path);
    EcgRecord rec = read_record(o.record_path);
    EcgRecord proc = preprocess_record(rec);
    std::vector<double> probs = model.predict_probs(proc);
    int top = 0;
    for (int c = 1; c < (int)probs.size(); ++c)
        if (probs[(size_t)c] > probs[(size_t)top]) top = c;
    for (int c = 0; c < (int)probs.size(); ++c)
        std::cout << "class_" << c << ": " << probs[(size_t)c] << "\n";
    std::cout << "top: class_" << top << " (p=" << probs[(size_t)top] << ")\n";
    return 0;
}

BenchResult run_bench(Model& model, int repeats, int warmup, uint64_t seed) {
    const ModelConfig& cfg = model.config();
    // one deterministic record shaped to the model; preprocessing excluded
    std::vector<EcgRecord> recs = generate_synthetic(2, 1, cfg.seq_len, 250, seed);
    EcgRecord input = preprocess_record(recs[0]);

    NoGrad guard(model);
    std::vector<double> times_ms;
    times_ms.reserve((size_t)repeats);
    for (int i = 0; i < warmup + repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        Tensor logits = model.forward({&input}, /*training=*/false);
        auto t1 = std::chrono::steady_clock::now();
        (void)logits;
        if (i >= warmup)
            times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times_ms.begin(), times_ms.end());
    BenchResult r;
    r.min_ms = times_ms.front();
    double sum = 0.0;
    for (double t : times_ms) sum += t;
    r.mean_ms = sum / (double)times_ms.size();
    r.p95_ms = times_ms[(size_t)std::min<double>((double)times_ms.size() - 1,
                                                 std::ceil(0.95 * times_ms.size()) - 1)];
    struct rusage ru;
    getrusage(RUSAGE_SELF, &ru);
    r.peak_rss_kb = ru.ru_maxrss;
    return r;
}

int cmd_bench(const BenchOpts& o) {
    if (o.model_path.empty()) throw usage_error("bench needs --model");
    if (o.repeats < 1) throw usage_error("--repeats must be >= 1");
    Model model = Model::load(o.model_path);
    BenchResult r = run_bench(model, o.repeats, o.warmup, o.seed);
    std::cout << "repeats=" << o.repeats << " warmup=" << o.warmup << "\n";
    std::cout << "latency_ms min=" << r.min_ms << " mean=" << r.mean_ms << " p95=" << r.p95_ms
              << "\n";
    std::cout << "peak_rss_kb=" << r.peak_rss_kb << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablation grid

static std::vector<std::string> split_csv_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<AblateRow> run_ablate(const AblateOpts& o) {
    if (o.data_manifest.empty() || o.grid_file.empty() || o.out_dir.empty())
        throw usage_error("ablate needs --data, --grid, and --out");
    auto kv = parse_kv_file(o.grid_file);

    // grid axes (comma lists); anything else is a scalar config key
    std::vector<int> ps = {50}, depths, dims;
    std::vector<double> s_ratios = {0.5};
    std::vector<bool> bidirs, multis;
    std::vector<FusionKind> fusions;
    ModelConfig base_mc;
    TrainConfig base_tc;
    base_tc.seed = o.seed;
    std::map<std::string, std::string> scalars;
    for (const auto& [key, val] : kv) {
        if (key == "p") {
            ps.clear();
            for (auto& s : split_csv_list(val)) ps.push_back(std::stoi(s));
        } else if (key == "s_ratio") {
            s_ratios.clear();
            for (auto& s : split_csv_list(val)) s_ratios.push_back(std::stod(s));
        } else if (key == "depth") {
            depths.clear();
            for (auto& s : split_csv_list(val)) depths.push_back(std::stoi(s));
        } else if (key == "dim") {
            dims.clear();
            for (auto& s : split_csv_list(val)) dims.push_back(std::stoi(s));
        } else if (key == "bidirectional") {
            for (auto& s : split_csv_list(val)) bidirs.push_back(parse_bool(s, key));
        } else if (key == "multi_branch") {
            for (auto& s : split_csv_list(val)) multis.push_back(parse_bool(s, key));
        } else if (key == "fusion") {
            for (auto& s : split_csv_list(val)) {
                if (s == "full") fusions.push_back(FusionKind::full);
                else if (s == "concat") fusions.push_back(FusionKind::concat_only);
                else throw usage_error("grid key 'fusion': expected full|concat");
            }
        } else {
            scalars[key] = val;
        }
    }
    apply_config_kv(scalars, &base_mc, &base_tc);
    if (depths.empty()) depths.push_back(base_mc.depth);
    if (dims.empty()) dims.push_back(base_mc.dim);
    if (bidirs.empty()) bidirs.push_back(base_mc.bidirectional);
    if (multis.empty()) multis.push_back(base_mc.multi_branch);
    if (fusions.empty()) fusions.push_back(base_mc.fusion);

    Dataset data = load_dataset(o.data_manifest);
    fs::create_directories(o.out_dir);
    bool has_test = !data.split_indices(Split::test).empty();

    std::vector<AblateRow> rows;
    int run_id = 0;
    for (int p : ps)
        for (double sr : s_ratios)
            for (int depth : depths)
                for (int dim : dims)
                    for (bool bidir : bidirs)
                        for (bool multi : multis)
                            for (FusionKind fusion : fusions) {
                                ModelConfig mc = base_mc;
                                mc.patch_len = p;
                                mc.step = std::max(1, (int)std::lround(p * sr));
                                mc.depth = depth;
                                mc.dim = dim;
                                mc.bidirectional = bidir;
                                mc.multi_branch = multi;
                                mc.fusion = fusion;
                                mc.classes = data.class_count();
                                mc.seq_len = data.records.front().length;
                                if (mc.step > mc.patch_len) {
                                    std::cerr << "skipping p=" << p << " s=" << mc.step
                                              << ": step exceeds patch length\n";
                                    continue;
                                }
                                AblateRow row;
                                row.config = mc;
                                Model model(mc, base_tc.seed);
                                auto t0 = std::chrono::steady_clock::now();
                                train(model, data, base_tc);
                                auto t1 = std::chrono::steady_clock::now();
                                row.train_seconds =
                                    std::chrono::duration<double>(t1 - t0).count();
                                row.metrics =
                                    evaluate(model, data, has_test ? Split::test : Split::val);
                                row.params = param_count(mc);
                                char name[32];
                                std::snprintf(name, sizeof name, "run_%03d.s2m2model", run_id++);
                                row.model_path = (fs::path(o.out_dir) / name).string();
                                model.save(row.model_path);
                                rows.push_back(std::move(row));
                            }

    std::ofstream csv((fs::path(o.out_dir) / "ablation.csv").string(),
                      std::ios::binary | std::ios::trunc);
    csv << "p,s,depth,dim,bidir,multi_branch,fusion,acc,f1,auc,params,train_s\n";
    csv.precision(6);
    csv << std::fixed;
    for (const auto& row : rows) {
        csv << row.config.patch_len << "," << row.config.step << "," << row.config.depth << ","
            << row.config.dim << "," << (row.config.bidirectional ? "on" : "off") << ","
            << (row.config.multi_branch ? "on" : "off") << ","
            << (row.config.fusion == FusionKind::full ? "full" : "concat") << ","
            << row.metrics.accuracy << "," << row.metrics.macro_f1 << ","
            << row.metrics.macro_auc << "," << row.params << "," << row.train_seconds << "\n";
    }
    return rows;
}

int cmd_ablate(const AblateOpts& o) {
    std::vector<AblateRow> rows = run_ablate(o);
    std::cout << "completed " << rows.size() << " runs; wrote "
              << (fs::path(o.out_dir) / "ablation.csv").string() << "\n";
    return 0;
}

}  // namespace s2m2
