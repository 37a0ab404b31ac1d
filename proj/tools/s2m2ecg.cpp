// s2m2ecg: generate data, preprocess, train, evaluate, infer, benchmark, and
// run ablation grids over the multi-lead ECG classifier.

#include <CLI11.hpp>

#include <iostream>

#include "s2m2/cli_commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multi-lead ECG classification with bidirectional selective state spaces"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    s2m2::GenDataOpts gen;
    std::string gen_split = "0.8,0.1,0.1";
    auto* cgen = app.add_subcommand("gen-data", "generate a synthetic labeled dataset");
    cgen->add_option("--classes", gen.classes, "number of classes (2..8)");
    cgen->add_option("--per-class", gen.per_class, "records per class");
    cgen->add_option("--length", gen.length, "samples per lead");
    cgen->add_option("--rate", gen.rate, "sample rate in Hz");
    cgen->add_option("--seed", gen.seed, "RNG seed");
    cgen->add_option("--out", gen.out_dir, "output directory")->required();
    cgen->add_option("--split", gen_split, "train,val,test fractions");

    s2m2::PreprocessOpts pre;
    auto* cpre = app.add_subcommand("preprocess", "resample, denoise, and z-score a dataset");
    cpre->add_option("--in", pre.in_manifest, "input manifest.csv")->required();
    cpre->add_option("--out", pre.out_dir, "output directory")->required();

    s2m2::TrainOpts tr;
    auto* ctr = app.add_subcommand(
        "train",
        "train a model on a preprocessed dataset; writes model.s2m2model, history.txt "
        "(one record per epoch: epoch=N loss= val_acc= val_f1= val_auc=) and report.txt "
        "(accuracy, macro precision/recall/f1/auc, per-class tp/tn/fp/fn)");
    ctr->add_option("--data", tr.data_manifest, "manifest.csv of preprocessed records")
        ->required();
    ctr->add_option("--config", tr.config_file, "key = value config file");
    ctr->add_option("--out", tr.out_dir, "output directory")->required();
    ctr->add_option("--seed", tr.seed, "RNG seed (config file seed wins)");

    s2m2::EvalOpts ev;
    auto* cev = app.add_subcommand("eval", "evaluate a model on one split");
    cev->add_option("--model", ev.model_path, "model file")->required();
    cev->add_option("--data", ev.data_manifest, "manifest.csv")->required();
    cev->add_option("--split", ev.split, "train|val|test (default test)");

    s2m2::InferOpts inf;
    auto* cinf = app.add_subcommand("infer", "classify a single record");
    cinf->add_option("--model", inf.model_path, "model file")->required();
    cinf->add_option("--record", inf.record_path, "record file")->required();

    s2m2::BenchOpts be;
    auto* cbe = app.add_subcommand("bench", "measure single-record inference latency");
    cbe->add_option("--model", be.model_path, "model file")->required();
    cbe->add_option("--repeats", be.repeats, "timed repeats (default 100)");
    cbe->add_option("--warmup", be.warmup, "discarded warm-up runs (default 10)");
    cbe->add_option("--seed", be.seed, "RNG seed for the probe record");

    s2m2::AblateOpts ab;
    auto* cab = app.add_subcommand("ablate", "train/evaluate a grid of configurations");
    cab->add_option("--data", ab.data_manifest, "manifest.csv")->required();
    cab->add_option("--grid", ab.grid_file, "grid file (comma lists per axis)")->required();
    cab->add_option("--out", ab.out_dir, "output directory")->required();
    cab->add_option("--seed", ab.seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cgen->parsed()) {
            double a, b, c;
            if (std::sscanf(gen_split.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3)
                throw s2m2::usage_error("--split expects three comma-separated fractions");
            gen.fractions[0] = a;
            gen.fractions[1] = b;
            gen.fractions[2] = c;
            return s2m2::cmd_gen_data(gen);
        }
        if (cpre->parsed()) return s2m2::cmd_preprocess(pre);
        if (ctr->parsed()) return s2m2::cmd_train(tr);
        if (cev->parsed()) return s2m2::cmd_eval(ev);
        if (cinf->parsed()) return s2m2::cmd_infer(inf);
        if (cbe->parsed()) return s2m2::cmd_bench(be);
        if (cab->parsed()) return s2m2::cmd_ablate(ab);
    } catch (const s2m2::usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
