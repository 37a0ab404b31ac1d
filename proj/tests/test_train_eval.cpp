#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "s2m2/cli_commands.hpp"
#include "s2m2/nn_ops.hpp"
#include "s2m2/preprocess.hpp"
#include "s2m2/synth.hpp"
#include "s2m2/train_eval.hpp"
#include "testutil.hpp"

using namespace s2m2;
namespace fs = std::filesystem;

namespace {

// independent confusion-matrix oracle, counted from scratch
struct OracleMetrics {
    double acc, macro_p, macro_r, macro_f1;
};

OracleMetrics metrics_oracle(const std::vector<int>& labels, const std::vector<int>& preds,
                             int n_classes) {
    OracleMetrics o{0, 0, 0, 0};
    int hit = 0;
    for (size_t i = 0; i < labels.size(); ++i) hit += labels[i] == preds[i];
    o.acc = (double)hit / (double)labels.size();
    for (int c = 0; c < n_classes; ++c) {
        long long tp = 0, fp = 0, fn = 0, present = 0;
        for (size_t i = 0; i < labels.size(); ++i) {
            present += labels[i] == c;
            if (preds[i] == c && labels[i] == c) ++tp;
            if (preds[i] == c && labels[i] != c) ++fp;
            if (preds[i] != c && labels[i] == c) ++fn;
        }
        double p = 0, r = 0, f1 = 0;
        if (present > 0) {
            p = tp + fp ? (double)tp / (tp + fp) : 0.0;
            r = tp + fn ? (double)tp / (tp + fn) : 0.0;
            f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        }
        o.macro_p += p;
        o.macro_r += r;
        o.macro_f1 += f1;
    }
    o.macro_p /= n_classes;
    o.macro_r /= n_classes;
    o.macro_f1 /= n_classes;
    return o;
}

Dataset tiny_dataset(int classes, int per_class, uint64_t seed, int length = 2500) {
    Dataset d;
    auto recs = generate_synthetic(classes, per_class, length, 250, seed);
    d.records.reserve(recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        EcgRecord proc = preprocess_record(recs[i]);
        d.manifest.entries.push_back({"r" + std::to_string(i), proc.label, Split::train});
        d.records.push_back(std::move(proc));
    }
    for (int c = 0; c < classes; ++c) d.manifest.class_names.push_back("class_" + std::to_string(c));
    double fr[3] = {0.6, 0.2, 0.2};
    d.manifest = split_manifest(d.manifest, fr, seed);
    return d;
}

}  // namespace

TEST_CASE("cross entropy values live in train_eval's loss path") {
    // covered numerically in the numerics suite; here: uniform-logit value
    Tensor logits = Tensor::full({3, 5}, 0.0);
    CHECK(cross_entropy(logits, {0, 1, 4}).item() ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor p({2, 2}, {1, 2, 3, 4}, true);
    std::vector<Tensor> params = {p};
    AdamState st;
    adam_step(params, st, 0.05);
    CHECK(p.value() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("adam: first step is approximately -lr * sign(g)") {
    Tensor p({1, 3}, {1.0, -2.0, 0.5}, true);
    Tensor loss = sum_all(mul(p, Tensor({1, 3}, {3.0, -0.25, 1e-3})));
    backward(loss);  // grads: 3, -0.25, 1e-3
    std::vector<Tensor> params = {p};
    AdamState st;
    adam_step(params, st, 0.01);
    CHECK(p.value()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.value()[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p.value()[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-3));
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [&]() {
        Rng rng(71);
        Tensor p = testutil::random_tensor({4, 4}, rng);
        std::vector<Tensor> params = {p};
        AdamState st;
        for (int i = 0; i < 25; ++i) {
            Tensor loss = mean_all(mul(p, p));
            backward(loss);
            adam_step(params, st, 3e-3, 0.9, 0.999, 1e-8, 1e-4);
            p.zero_grad();
        }
        return p.value();
    };
    CHECK(run() == run());
}

TEST_CASE("metrics: perfect and constant predictors") {
    std::vector<int> labels = {0, 1, 2, 3, 0, 1, 2, 3};
    std::vector<std::vector<double>> probs;
    for (int y : labels) {
        std::vector<double> p(4, 0.01);
        p[(size_t)y] = 0.97;
        probs.push_back(p);
    }
    MetricsReport perfect = compute_metrics(labels, labels, probs, 4);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);
    CHECK(perfect.macro_auc == 1.0);

    std::vector<int> constant(labels.size(), 0);
    std::vector<std::vector<double>> uniform(labels.size(), std::vector<double>(4, 0.25));
    MetricsReport flat = compute_metrics(labels, constant, uniform, 4);
    CHECK(flat.accuracy == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("macro-F1 equals the brute-force oracle and the harmonic-mean identity holds") {
    Rng rng(72);
    for (int trial = 0; trial < 100; ++trial) {
        int n_classes = rng.uniform_int(2, 6);
        int n = 60;
        std::vector<int> labels(n), preds(n);
        std::vector<std::vector<double>> probs(n);
        for (int i = 0; i < n; ++i) {
            labels[(size_t)i] = rng.uniform_int(0, n_classes - 1);
            preds[(size_t)i] = rng.uniform_int(0, n_classes - 1);
            std::vector<double> p((size_t)n_classes);
            double z = 0;
            for (auto& v : p) {
                v = rng.uniform01() + 1e-6;
                z += v;
            }
            for (auto& v : p) v /= z;
            probs[(size_t)i] = p;
        }
        MetricsReport r = compute_metrics(labels, preds, probs, n_classes);
        OracleMetrics o = metrics_oracle(labels, preds, n_classes);
        CHECK(std::fabs(r.macro_f1 - o.macro_f1) < 1e-12);
        CHECK(std::fabs(r.macro_precision - o.macro_p) < 1e-12);
        CHECK(std::fabs(r.macro_recall - o.macro_r) < 1e-12);
        CHECK(std::fabs(r.accuracy - o.acc) < 1e-12);
        // per-class F1 must be the harmonic mean of precision and recall
        for (const auto& cc : r.per_class) {
            if (cc.precision + cc.recall > 0)
                CHECK(std::fabs(cc.f1 - 2 * cc.precision * cc.recall /
                                           (cc.precision + cc.recall)) < 1e-12);
            else
                CHECK(cc.f1 == 0.0);
        }
    }
}

TEST_CASE("accuracy is invariant under class relabeling") {
    Rng rng(73);
    const int n = 50, C = 4;
    std::vector<int> labels(n), preds(n);
    std::vector<std::vector<double>> probs(n, std::vector<double>(C, 0.25));
    for (int i = 0; i < n; ++i) {
        labels[(size_t)i] = rng.uniform_int(0, C - 1);
        preds[(size_t)i] = rng.uniform_int(0, C - 1);
    }
    MetricsReport base = compute_metrics(labels, preds, probs, C);
    int perm[C] = {2, 0, 3, 1};
    std::vector<int> labels_p(n), preds_p(n);
    std::vector<std::vector<double>> probs_p(n, std::vector<double>(C, 0.25));
    for (int i = 0; i < n; ++i) {
        labels_p[(size_t)i] = perm[labels[(size_t)i]];
        preds_p[(size_t)i] = perm[preds[(size_t)i]];
    }
    MetricsReport moved = compute_metrics(labels_p, preds_p, probs_p, C);
    CHECK(base.accuracy == moved.accuracy);
    CHECK(base.macro_f1 == doctest::Approx(moved.macro_f1).epsilon(1e-12));
}

TEST_CASE("AUC: trapezoidal ROC behaves") {
    // perfect separation
    CHECK(roc_auc({1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}) == 1.0);
    // total inversion
    CHECK(roc_auc({0, 0, 1, 1}, {0.9, 0.8, 0.2, 0.1}) == 0.0);
    // all tied scores give chance level
    CHECK(roc_auc({1, 0, 1, 0}, {0.5, 0.5, 0.5, 0.5}) == doctest::Approx(0.5).epsilon(1e-12));

    // invariance under strictly monotone transforms
    Rng rng(74);
    std::vector<char> pos(40);
    std::vector<double> score(40), warped(40);
    for (int i = 0; i < 40; ++i) {
        pos[(size_t)i] = rng.uniform01() < 0.4;
        score[(size_t)i] = rng.normal();
        warped[(size_t)i] = std::tanh(score[(size_t)i]) * 3.0 + 7.0;
    }
    CHECK(roc_auc(pos, score) == doctest::Approx(roc_auc(pos, warped)).epsilon(1e-12));
}

TEST_CASE("absent class scores zero with a warning") {
    std::vector<int> labels = {0, 0, 1, 1};
    std::vector<int> preds = {0, 1, 1, 0};
    std::vector<std::vector<double>> probs(4, std::vector<double>(3, 1.0 / 3));
    MetricsReport r = compute_metrics(labels, preds, probs, 3);
    REQUIRE(r.absent_classes.size() == 1);
    CHECK(r.absent_classes[0] == 2);
    CHECK(r.per_class[2].precision == 0.0);
    CHECK(r.per_class[2].recall == 0.0);
    std::string report = format_report(r, {"a", "b", "c"});
    CHECK(report.find("warning: class 2") != std::string::npos);
}

TEST_CASE("confidence interval closed forms") {
    // identical values collapse to a point
    auto [lo0, hi0] = confidence_interval({0.5, 0.5, 0.5}, 2.776);
    CHECK(lo0 == hi0);

    // hand-computed half-width for {0.90..0.94}, t = 2.776 (5-run protocol)
    std::vector<double> v = {0.90, 0.91, 0.92, 0.93, 0.94};
    auto [lo, hi] = confidence_interval(v, 2.776);
    double half = (hi - lo) / 2.0;
    CHECK((lo + hi) / 2.0 == doctest::Approx(0.92).epsilon(1e-12));
    CHECK(half == doctest::Approx(0.019629).epsilon(1e-5 / 0.019629));

    CHECK_THROWS_AS(confidence_interval({0.5}, 2.0), std::invalid_argument);
}

TEST_CASE("student t CDF and the two-sample test") {
    // textbook quantile: t = 2.776 at df = 4 is the two-sided 5% point
    double p = 2.0 * (1.0 - student_t_cdf(2.776, 4.0));
    CHECK(p == doctest::Approx(0.05).epsilon(2e-3 / 0.05));
    CHECK(student_t_cdf(0.0, 7.0) == doctest::Approx(0.5).epsilon(1e-12));

    // identical samples: p = 1 by convention
    CHECK(t_test({0.9, 0.9, 0.9}, {0.9, 0.9, 0.9}) == 1.0);

    // extreme separation with tiny jitter
    std::vector<double> a = {0.0, 1e-4, -1e-4, 5e-5, -5e-5};
    std::vector<double> b = {1.0, 1.0 + 1e-4, 1.0 - 1e-4, 1.0 + 5e-5, 1.0 - 5e-5};
    CHECK(t_test(a, b) < 1e-6);

    CHECK_THROWS_AS(t_test({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("training is deterministic and honors lr = 0") {
    Dataset data = tiny_dataset(2, 12, 77, 1024);
    ModelConfig mc;
    mc.patch_len = 64;
    mc.step = 64;
    mc.depth = 1;
    mc.dim = 8;
    mc.state_n = 2;
    mc.classes = 2;
    mc.seq_len = 1024;
    mc.conv_kernel = 3;

    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.learning_rate = 1e-3;
    tc.seed = 5;
    tc.patience = 10;

    // same seed, same epoch-0 loss
    Model m1(mc, tc.seed);
    TrainResult r1 = train(m1, data, tc);
    Model m2(mc, tc.seed);
    TrainResult r2 = train(m2, data, tc);
    REQUIRE(!r1.history.empty());
    CHECK(r1.history[0].loss == r2.history[0].loss);
    CHECK(r1.history.back().loss == r2.history.back().loss);

    // lr = 0: learnable parameters frozen (batch-norm buffers still track
    // statistics), per-epoch losses identical
    TrainConfig tz = tc;
    tz.learning_rate = 0.0;
    tz.epochs = 3;
    Model mz(mc, 6);
    std::vector<std::vector<double>> before;
    for (const auto& nt : mz.named_tensors())
        if (nt.learnable) before.push_back(nt.tensor.value());
    TrainResult rz = train(mz, data, tz);
    std::vector<std::vector<double>> after;
    for (const auto& nt : mz.named_tensors())
        if (nt.learnable) after.push_back(nt.tensor.value());
    for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
    REQUIRE(rz.history.size() == 3);
    CHECK(rz.history[0].loss == rz.history[1].loss);
    CHECK(rz.history[1].loss == rz.history[2].loss);
}

TEST_CASE("train validates inputs") {
    Dataset data = tiny_dataset(2, 12, 78, 1024);
    ModelConfig mc;
    mc.patch_len = 64;
    mc.step = 64;
    mc.depth = 1;
    mc.dim = 8;
    mc.state_n = 2;
    mc.classes = 2;
    mc.seq_len = 1024;
    TrainConfig tc;
    tc.epochs = 0;
    Model m(mc, 0);
    CHECK_THROWS_AS(train(m, data, tc), std::invalid_argument);
    tc.epochs = 1;
    tc.batch_size = 1;
    CHECK_THROWS_AS(train(m, data, tc), std::invalid_argument);

    // empty split rejected
    tc.batch_size = 4;
    Dataset no_val = data;
    for (auto& e : no_val.manifest.entries)
        if (e.split == Split::val) e.split = Split::train;
    CHECK_THROWS_WITH_AS(train(m, no_val, tc), doctest::Contains("val"), std::invalid_argument);
}

TEST_CASE("epoch line format is stable") {
    EpochRecord e;
    e.epoch = 3;
    e.loss = 0.5;
    e.val.accuracy = 0.75;
    e.val.macro_f1 = 0.5;
    e.val.macro_auc = 0.25;
    CHECK(format_epoch_line(e) ==
          "epoch=3 loss=0.500000 val_acc=0.750000 val_f1=0.500000 val_auc=0.250000");
}
