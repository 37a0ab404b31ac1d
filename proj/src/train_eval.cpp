#include "s2m2/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "s2m2/nn_ops.hpp"
#include "s2m2/rng.hpp"

namespace s2m2 {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
    if (learning_rate < 0) throw std::invalid_argument("train config: negative learning rate");
    if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
}

double roc_auc(const std::vector<char>& positive, const std::vector<double>& scores) {
    const size_t n = scores.size();
    long long pos = 0;
    for (char c : positive) pos += c ? 1 : 0;
    long long neg = (long long)n - pos;
    if (pos == 0 || neg == 0) return 0.0;  // undefined; caller warns
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    // sweep thresholds, grouping ties, trapezoid over (FPR, TPR)
    double auc = 0.0;
    long long tp = 0, fp = 0;
    double prev_tpr = 0.0, prev_fpr = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            if (positive[idx[j]]) ++tp;
            else ++fp;
            ++j;
        }
        double tpr = (double)tp / pos;
        double fpr = (double)fp / neg;
        auc += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
        prev_tpr = tpr;
        prev_fpr = fpr;
        i = j;
    }
    return auc;
}

MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds,
                              const std::vector<std::vector<double>>& probs, int n_classes) {
    const size_t n = labels.size();
    if (preds.size() != n || probs.size() != n)
        throw std::invalid_argument("compute_metrics: size mismatch");
    MetricsReport r;
    r.per_class.resize((size_t)n_classes);
    long long correct = 0;
    for (size_t i = 0; i < n; ++i)
        if (labels[i] == preds[i]) ++correct;
    r.accuracy = n ? (double)correct / (double)n : 0.0;

    for (int c = 0; c < n_classes; ++c) {
        ClassCounts& cc = r.per_class[(size_t)c];
        std::vector<char> pos(n);
        std::vector<double> score(n);
        long long present = 0;
        for (size_t i = 0; i < n; ++i) {
            bool is_c = labels[i] == c;
            bool pred_c = preds[i] == c;
            present += is_c;
            if (is_c && pred_c) ++cc.tp;
            else if (is_c && !pred_c) ++cc.fn;
            else if (!is_c && pred_c) ++cc.fp;
            else ++cc.tn;
            pos[i] = is_c ? 1 : 0;
            score[i] = probs[i][(size_t)c];
        }
        if (present == 0) {
            r.absent_classes.push_back(c);
            cc.precision = cc.recall = cc.f1 = cc.auc = 0.0;
        } else {
            cc.precision = (cc.tp + cc.fp) ? (double)cc.tp / (cc.tp + cc.fp) : 0.0;
            cc.recall = (cc.tp + cc.fn) ? (double)cc.tp / (cc.tp + cc.fn) : 0.0;
            cc.f1 = (cc.precision + cc.recall > 0)
                        ? 2.0 * cc.precision * cc.recall / (cc.precision + cc.recall)
                        : 0.0;
            cc.auc = roc_auc(pos, score);
        }
        r.macro_precision += cc.precision;
        r.macro_recall += cc.recall;
        r.macro_f1 += cc.f1;
        r.macro_auc += cc.auc;
    }
    r.macro_precision /= n_classes;
    r.macro_recall /= n_classes;
    r.macro_f1 /= n_classes;
    r.macro_auc /= n_classes;
    return r;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps, double weight_decay) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign((size_t)params[i].size(), 0.0);
            state.v[i].assign((size_t)params[i].size(), 0.0);
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, (double)state.step);
    const double bc2 = 1.0 - std::pow(beta2, (double)state.step);
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].mutable_value();
        const auto& g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < p.size(); ++j) {
            double grad = g[j] + weight_decay * p[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * grad;
            v[j] = beta2 * v[j] + (1.0 - beta2) * grad * grad;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::vector<size_t> Dataset::split_indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        if (manifest.entries[i].split == s) out.push_back(i);
    return out;
}

Dataset load_dataset(const std::string& manifest_csv) {
    Dataset d;
    d.manifest = read_manifest(manifest_csv, /*check_paths=*/true);
    d.records.reserve(d.manifest.entries.size());
    for (const auto& e : d.manifest.entries) {
        EcgRecord r = read_record(d.manifest.resolve(e));
        r.label = e.label;  // manifest labels win over embedded ones
        d.records.push_back(std::move(r));
    }
    return d;
}

MetricsReport evaluate_records(Model& model, const std::vector<const EcgRecord*>& records) {
    if (records.empty()) throw std::invalid_argument("evaluate: empty split");
    std::vector<int> labels, preds;
    std::vector<std::vector<double>> probs;
    labels.reserve(records.size());
    for (const EcgRecord* r : records) {
        std::vector<double> p = model.predict_probs(*r);
        int arg = 0;
        for (int c = 1; c < (int)p.size(); ++c)
            if (p[(size_t)c] > p[(size_t)arg]) arg = c;
        labels.push_back(r->label);
        preds.push_back(arg);
        probs.push_back(std::move(p));
    }
    return compute_metrics(labels, preds, probs, model.config().classes);
}

MetricsReport evaluate(Model& model, const Dataset& data, Split split) {
    std::vector<const EcgRecord*> recs;
    for (size_t i : data.split_indices(split)) recs.push_back(&data.records[i]);
    return evaluate_records(model, recs);
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& tc) {
    tc.validate();
    std::vector<size_t> train_idx = data.split_indices(Split::train);
    std::vector<size_t> val_idx = data.split_indices(Split::val);
    if (train_idx.empty()) throw std::invalid_argument("train: empty train split");
    if (val_idx.empty()) throw std::invalid_argument("train: empty val split");

    // One fixed, seeded permutation reused every epoch keeps runs bit-stable.
    Rng rng(tc.seed);
    rng.shuffle(train_idx);

    std::vector<Tensor> params = model.parameters();
    AdamState adam;
    TrainResult result;
    auto best_snapshot = model.snapshot();
    int since_best = 0;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        double loss_sum = 0.0;
        long long seen = 0;
        for (size_t start = 0; start < train_idx.size(); start += (size_t)tc.batch_size) {
            size_t end = std::min(train_idx.size(), start + (size_t)tc.batch_size);
            std::vector<const EcgRecord*> batch;
            std::vector<int> labels;
            for (size_t i = start; i < end; ++i) {
                batch.push_back(&data.records[train_idx[i]]);
                labels.push_back(data.records[train_idx[i]].label);
            }
            Tensor logits = model.forward(batch, /*training=*/true);
            Tensor loss = cross_entropy(logits, labels);
            loss_sum += loss.item() * (double)batch.size();
            seen += (long long)batch.size();
            backward(loss, /*release_graph=*/true);
            adam_step(params, adam, tc.learning_rate, 0.9, 0.999, 1e-8, tc.weight_decay);
            for (auto& p : params) p.zero_grad();
        }

        EpochRecord er;
        er.epoch = epoch;
        er.loss = loss_sum / (double)seen;
        er.val = evaluate(model, data, Split::val);
        result.history.push_back(er);

        if (result.best_epoch < 0 || er.val.macro_f1 > result.best_val_f1 + 1e-12) {
            result.best_epoch = epoch;
            result.best_val_f1 = er.val.macro_f1;
            best_snapshot = model.snapshot();
            since_best = 0;
        } else if (er.val.macro_f1 >= result.best_val_f1 - 1e-12) {
            // tie: keep the most-trained of the equally good checkpoints,
            // but let the patience clock keep running
            result.best_epoch = epoch;
            best_snapshot = model.snapshot();
            if (++since_best >= tc.patience) break;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    model.restore(best_snapshot);
    return result;
}

std::string format_epoch_line(const EpochRecord& e) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "epoch=" << e.epoch << " loss=" << e.loss << " val_acc=" << e.val.accuracy
       << " val_f1=" << e.val.macro_f1 << " val_auc=" << e.val.macro_auc;
    return os.str();
}

std::string format_report(const MetricsReport& r, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "accuracy=" << r.accuracy << "\n"
       << "macro_precision=" << r.macro_precision << "\n"
       << "macro_recall=" << r.macro_recall << "\n"
       << "macro_f1=" << r.macro_f1 << "\n"
       << "macro_auc=" << r.macro_auc << "\n";
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& cc = r.per_class[c];
        std::string name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
        os << name << ": tp=" << cc.tp << " tn=" << cc.tn << " fp=" << cc.fp << " fn=" << cc.fn
           << " precision=" << cc.precision << " recall=" << cc.recall << " f1=" << cc.f1
           << " auc=" << cc.auc << "\n";
    }
    for (int c : r.absent_classes)
        os << "warning: class " << c << " absent from split, scored 0\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// statistics

std::pair<double, double> confidence_interval(const std::vector<double>& values,
                                              double t_threshold) {
    const size_t n = values.size();
    if (n < 2) throw std::invalid_argument("confidence_interval: need at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= (double)n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    double s = std::sqrt(ss / (double)(n - 1));
    double half = t_threshold * s / std::sqrt((double)n);
    return {mean - half, mean + half};
}

// regularized incomplete beta via Lentz's continued fraction
static double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double tiny = 1e-300, eps = 1e-15;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

static double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    double x = df / (df + t * t);
    double p = 0.5 * inc_beta(0.5 * df, 0.5, x);  // two-sided tail / 2
    return t > 0 ? 1.0 - p : p;
}

double t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b) {
    const size_t na = sample_a.size(), nb = sample_b.size();
    if (na < 2 || nb < 2) throw std::invalid_argument("t_test: each sample needs n >= 2");
    auto mean_of = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        return m / (double)v.size();
    };
    double ma = mean_of(sample_a), mb = mean_of(sample_b);
    double ssa = 0.0, ssb = 0.0;
    for (double x : sample_a) ssa += (x - ma) * (x - ma);
    for (double x : sample_b) ssb += (x - mb) * (x - mb);
    double df = (double)(na + nb - 2);
    double sp2 = (ssa + ssb) / df;
    double denom = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    if (denom < 1e-300) return std::fabs(ma - mb) < 1e-300 ? 1.0 : 0.0;
    double t = (ma - mb) / denom;
    double tail = 1.0 - student_t_cdf(std::fabs(t), df);
    return 2.0 * tail;
}

}  // namespace s2m2
