// Loss, Adam, the training loop, classification metrics, and the confidence
// interval / t-test statistics used in reporting.

#ifndef S2M2_TRAIN_EVAL_HPP
#define S2M2_TRAIN_EVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "s2m2/model.hpp"
#include "s2m2/record.hpp"

namespace s2m2 {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    int patience = 10;

    void validate() const;
};

struct ClassCounts {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    double precision = 0, recall = 0, f1 = 0, auc = 0;
};

struct MetricsReport {
    double accuracy = 0;
    double macro_precision = 0, macro_recall = 0, macro_f1 = 0, macro_auc = 0;
    std::vector<ClassCounts> per_class;
    std::vector<int> absent_classes;  // classes missing from the split (scored 0, warned)
};

// One-vs-rest confusion per class, macro-averaged. probs[i] holds the class
// probability row for sample i.
MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds,
                              const std::vector<std::vector<double>>& probs, int n_classes);

// Trapezoidal area under the ROC of `scores` against binary labels.
double roc_auc(const std::vector<char>& positive, const std::vector<double>& scores);

struct AdamState {
    long long step = 0;
    std::vector<std::vector<double>> m, v;
};

// Bias-corrected Adam on params' accumulated gradients. Deterministic.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);

struct Dataset {
    DatasetManifest manifest;
    std::vector<EcgRecord> records;  // aligned with manifest.entries

    std::vector<size_t> split_indices(Split s) const;
    int class_count() const { return manifest.class_count(); }
};

Dataset load_dataset(const std::string& manifest_csv);

struct EpochRecord {
    int epoch = 0;
    double loss = 0;
    MetricsReport val;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_f1 = 0;
};

// Seeded mini-batch training with best-val-macro-F1 checkpointing and
// early stopping. The model is left at the best checkpoint.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& tc);

MetricsReport evaluate(Model& model, const Dataset& data, Split split);
MetricsReport evaluate_records(Model& model, const std::vector<const EcgRecord*>& records);

// report/history text formats shared by CLI and tests
std::string format_epoch_line(const EpochRecord& e);
std::string format_report(const MetricsReport& r, const std::vector<std::string>& class_names);

// Confidence interval: mean +/- t * s / sqrt(n), with sample std (n-1).
std::pair<double, double> confidence_interval(const std::vector<double>& values,
                                              double t_threshold);

// Two-sided independent two-sample t-test with pooled variance.
double t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// CDF of Student's t with df degrees of freedom (via the regularized
// incomplete beta function).
double student_t_cdf(double t, double df);

}  // namespace s2m2

#endif
