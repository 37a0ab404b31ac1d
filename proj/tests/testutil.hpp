// Shared test helpers: finite-difference gradient checks and the naive
// oracles the implementation is verified against. Everything here is kept
// independent of the library's fast paths.

#ifndef S2M2_TESTUTIL_HPP
#define S2M2_TESTUTIL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "s2m2/rng.hpp"
#include "s2m2/tensor.hpp"

namespace testutil {

// naive triple-loop product, the matmul oracle
inline std::vector<double> matmul_naive(const std::vector<double>& a, int m, int k,
                                        const std::vector<double>& b, int n) {
    std::vector<double> c((size_t)m * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += a[(size_t)i * k + t] * b[(size_t)t * n + j];
            c[(size_t)i * n + j] = s;
        }
    return c;
}

// direct-sum causal convolution oracle
inline std::vector<double> conv_naive(const std::vector<double>& x, int C, int T,
                                      const std::vector<double>& k, int K) {
    std::vector<double> y((size_t)C * T, 0.0);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            double s = 0.0;
            for (int j = 0; j < K; ++j) {
                int src = t - (K - 1) + j;
                if (src >= 0 && src < T) s += k[(size_t)c * K + j] * x[(size_t)c * T + src];
            }
            y[(size_t)c * T + t] = s;
        }
    return y;
}

// Central finite differences against the analytic gradient of `leaf` for the
// scalar produced by `forward`. Probes random coordinates; returns the worst
// relative error seen.
inline double grad_check(const std::function<s2m2::Tensor()>& forward, s2m2::Tensor leaf,
                         s2m2::Rng& rng, int probes = 20, double h = 1e-5) {
    s2m2::Tensor loss = forward();
    leaf.zero_grad();
    s2m2::backward(loss);
    std::vector<double> analytic = leaf.grad();

    double worst = 0.0;
    const long long n = leaf.size();
    for (int p = 0; p < probes; ++p) {
        long long i = (long long)(rng.uniform01() * (double)n);
        if (i >= n) i = n - 1;
        double saved = leaf.mutable_value()[(size_t)i];
        leaf.mutable_value()[(size_t)i] = saved + h;
        double up = forward().item();
        leaf.mutable_value()[(size_t)i] = saved - h;
        double dn = forward().item();
        leaf.mutable_value()[(size_t)i] = saved;
        double numeric = (up - dn) / (2.0 * h);
        // the floor keeps near-zero coordinates from amplifying central
        // difference rounding noise into a fake relative error
        double denom = std::max({std::fabs(numeric), std::fabs(analytic[(size_t)i]), 1e-5});
        worst = std::max(worst, std::fabs(numeric - analytic[(size_t)i]) / denom);
    }
    return worst;
}

inline s2m2::Tensor random_tensor(std::vector<int> shape, s2m2::Rng& rng, double scale = 1.0,
                                  bool requires_grad = true) {
    long long n = s2m2::shape_numel(shape);
    std::vector<double> data((size_t)n);
    for (double& v : data) v = scale * rng.normal();
    return s2m2::Tensor(std::move(shape), std::move(data), requires_grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// --- rhythm feature oracle for the synthetic generator ----------------------

inline std::vector<double> detrend(const std::vector<double>& x, int rate_hz) {
    const int n = (int)x.size();
    const int win = rate_hz / 2;
    std::vector<double> out((size_t)n);
    double acc = 0.0;
    int lo = 0, hi = -1;
    for (int i = 0; i < n; ++i) {
        int want_lo = std::max(0, i - win / 2), want_hi = std::min(n - 1, i + win / 2);
        while (hi < want_hi) acc += x[(size_t)++hi];
        while (lo < want_lo) acc -= x[(size_t)lo++];
        out[(size_t)i] = x[(size_t)i] - acc / (hi - lo + 1);
    }
    return out;
}

// threshold peak picking with a refractory window, on a detrended signal
inline std::vector<int> detect_r_peaks(const std::vector<double>& detr, int rate_hz) {
    const int n = (int)detr.size();
    double mx = 0.0;
    for (double v : detr) mx = std::max(mx, v);
    const double thresh = 0.5 * mx;
    const int refractory = rate_hz / 4;
    std::vector<int> peaks;
    int i = 1;
    while (i < n - 1) {
        if (detr[(size_t)i] > thresh && detr[(size_t)i] >= detr[(size_t)i - 1] &&
            detr[(size_t)i] >= detr[(size_t)i + 1]) {
            int best = i;
            int end = std::min(n - 1, i + refractory);
            for (int j = i; j <= end; ++j)
                if (detr[(size_t)j] > detr[(size_t)best]) best = j;
            peaks.push_back(best);
            i = best + refractory;
        } else {
            ++i;
        }
    }
    return peaks;
}

struct RhythmFeatures {
    double mean_rr = 0;    // samples between R peaks
    double qrs_width = 0;  // samples above half peak height
};

inline RhythmFeatures rhythm_features(const std::vector<double>& x, int rate_hz) {
    RhythmFeatures f;
    std::vector<double> detr = detrend(x, rate_hz);
    std::vector<int> peaks = detect_r_peaks(detr, rate_hz);
    if (peaks.size() < 2) return f;
    double rr = 0.0;
    for (size_t i = 1; i < peaks.size(); ++i) rr += peaks[i] - peaks[i - 1];
    f.mean_rr = rr / (double)(peaks.size() - 1);

    double wsum = 0.0;
    for (int p : peaks) {
        double half = 0.5 * detr[(size_t)p];
        int a = p, b = p;
        while (a > 0 && detr[(size_t)a] > half && p - a < rate_hz / 5) --a;
        while (b < (int)detr.size() - 1 && detr[(size_t)b] > half && b - p < rate_hz / 5) ++b;
        wsum += b - a;
    }
    f.qrs_width = wsum / (double)peaks.size();
    return f;
}

// sinusoid power at frequency f via least-squares projection
inline double tone_power(const std::vector<double>& x, double freq_hz, double rate_hz) {
    const size_t n = x.size();
    double cs = 0.0, sn = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double w = 2.0 * M_PI * freq_hz * (double)i / rate_hz;
        cs += x[i] * std::cos(w);
        sn += x[i] * std::sin(w);
    }
    double a = 2.0 * cs / (double)n, b = 2.0 * sn / (double)n;
    return 0.5 * (a * a + b * b);
}

}  // namespace testutil

#endif
