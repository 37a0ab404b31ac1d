#include "s2m2/preprocess.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace s2m2 {

WaveletBank WaveletBank::db6() {
    // Daubechies-6 decomposition low-pass (12 taps), spectral factorization of
    // the degree-11 half-band polynomial, normalized to sum sqrt(2).
    static const std::vector<double> lo = {
        -0.00107730108530847956, 0.00477725751094551064,  0.00055384220116149614,
        -0.03158203931748602957, 0.02752286553030572863,  0.09750160558732304910,
        -0.12976686756726193556, -0.22626469396543982008, 0.31525035170919762909,
        0.75113390802109535068,  0.49462389039845308568,  0.11154074335010946362};
    WaveletBank b;
    b.dec_lo = lo;
    const int F = (int)lo.size();
    b.dec_hi.resize(F);
    for (int n = 0; n < F; ++n) b.dec_hi[n] = ((n % 2) ? -1.0 : 1.0) * lo[(size_t)(F - 1 - n)];
    b.rec_lo.assign(lo.rbegin(), lo.rend());
    b.rec_hi.assign(b.dec_hi.rbegin(), b.dec_hi.rend());
    return b;
}

// symmetric (edge-repeating) extension by n samples on each side
static std::vector<double> sym_extend(const std::vector<double>& x, int n) {
    std::vector<double> out;
    out.reserve(x.size() + 2 * (size_t)n);
    for (int i = n - 1; i >= 0; --i) out.push_back(x[(size_t)std::min<int>(i, (int)x.size() - 1)]);
    out.insert(out.end(), x.begin(), x.end());
    for (int i = 0; i < n; ++i)
        out.push_back(x[(size_t)std::max<int>(0, (int)x.size() - 1 - i)]);
    return out;
}

// single analysis step: y[o] = sum_j f[j] * xe[2o+1-j+(F-1)], o < floor((n+F-1)/2)
static void dwt_step(const std::vector<double>& x, const std::vector<double>& lo,
                     const std::vector<double>& hi, std::vector<double>& ca,
                     std::vector<double>& cd) {
    const int n = (int)x.size();
    const int F = (int)lo.size();
    const int L = (n + F - 1) / 2;
    std::vector<double> xe = sym_extend(x, F - 1);
    ca.assign((size_t)L, 0.0);
    cd.assign((size_t)L, 0.0);
    for (int o = 0; o < L; ++o) {
        const double* seg = xe.data() + 2 * o + 1;  // xe[2o+1 .. 2o+F], reversed filter order
        double a = 0.0, d = 0.0;
        for (int j = 0; j < F; ++j) {
            a += lo[(size_t)(F - 1 - j)] * seg[j];
            d += hi[(size_t)(F - 1 - j)] * seg[j];
        }
        ca[(size_t)o] = a;
        cd[(size_t)o] = d;
    }
}

// single synthesis step, trimmed to target_len
static std::vector<double> idwt_step(const std::vector<double>& ca, const std::vector<double>& cd,
                                     const std::vector<double>& rec_lo,
                                     const std::vector<double>& rec_hi, int target_len) {
    const int L = (int)ca.size();
    const int F = (int)rec_lo.size();
    const int m = 2 * L - F + 2;
    if (m < target_len)
        throw format_error("idwt: coefficient band too short for requested length");
    std::vector<double> r((size_t)m, 0.0);
    for (int o = 0; o < L; ++o) {
        int base = 2 * o - (F - 2);
        for (int k = 0; k < F; ++k) {
            int t = base + k;
            if (t >= 0 && t < m)
                r[(size_t)t] += rec_lo[(size_t)k] * ca[(size_t)o] + rec_hi[(size_t)k] * cd[(size_t)o];
        }
    }
    r.resize((size_t)target_len);
    return r;
}

WaveletCoeffs dwt(const std::vector<double>& signal, const WaveletBank& bank, int levels) {
    if (levels < 1) throw std::invalid_argument("dwt: levels must be >= 1");
    const long long min_len = 1LL << levels;
    if ((long long)signal.size() < min_len)
        throw std::invalid_argument("dwt: signal length " + std::to_string(signal.size()) +
                                    " below minimum " + std::to_string(min_len) + " for " +
                                    std::to_string(levels) + " levels");
    WaveletCoeffs out;
    std::vector<double> cur = signal;
    for (int lev = 0; lev < levels; ++lev) {
        out.level_len.push_back((int)cur.size());
        std::vector<double> ca, cd;
        dwt_step(cur, bank.dec_lo, bank.dec_hi, ca, cd);
        out.detail.push_back(std::move(cd));
        cur = std::move(ca);
    }
    out.approx = std::move(cur);
    return out;
}

std::vector<double> idwt(const WaveletCoeffs& coeffs, const WaveletBank& bank) {
    std::vector<double> cur = coeffs.approx;
    for (int lev = (int)coeffs.detail.size() - 1; lev >= 0; --lev)
        cur = idwt_step(cur, coeffs.detail[(size_t)lev], bank.rec_lo, bank.rec_hi,
                        coeffs.level_len[(size_t)lev]);
    return cur;
}

std::vector<double> wavelet_denoise(const std::vector<double>& signal_250hz,
                                    const WaveletBank& bank) {
    if (signal_250hz.size() < 512)
        throw std::invalid_argument("wavelet_denoise: need at least 512 samples");
    WaveletCoeffs c = dwt(signal_250hz, bank, 9);
    std::fill(c.approx.begin(), c.approx.end(), 0.0);     // A9: baseline wander band
    std::fill(c.detail[0].begin(), c.detail[0].end(), 0.0);  // D1
    std::fill(c.detail[1].begin(), c.detail[1].end(), 0.0);  // D2: mains + EMG band
    return idwt(c, bank);
}

// 31-tap Hamming-windowed sinc, cutoff at half the input Nyquist
static std::vector<double> halfband_taps() {
    const int taps = 31;
    const int mid = taps / 2;
    std::vector<double> h((size_t)taps);
    double sum = 0.0;
    for (int i = 0; i < taps; ++i) {
        int k = i - mid;
        double sinc = (k == 0) ? 0.5 : std::sin(0.5 * M_PI * k) / (M_PI * k);
        double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (taps - 1));
        h[(size_t)i] = sinc * w;
        sum += h[(size_t)i];
    }
    for (double& v : h) v /= sum;  // unity DC gain
    return h;
}

EcgRecord resample_to_250(const EcgRecord& record) {
    if (record.sample_rate_hz == 250) return record;
    if (record.sample_rate_hz != 500)
        throw std::invalid_argument("resample_to_250: unsupported rate " +
                                    std::to_string(record.sample_rate_hz) +
                                    " Hz (expected 250 or 500)");
    static const std::vector<double> h = halfband_taps();
    const int mid = (int)h.size() / 2;
    const int L = record.length;
    const int out_len = (L + 1) / 2;
    EcgRecord out;
    out.leads = record.leads;
    out.length = out_len;
    out.sample_rate_hz = 250;
    out.label = record.label;
    out.id = record.id;
    out.samples.resize((size_t)out.leads * out_len);
    for (int ld = 0; ld < record.leads; ++ld) {
        const double* x = record.lead(ld);
        double* y = out.samples.data() + (size_t)ld * out_len;
        for (int o = 0; o < out_len; ++o) {
            int t = 2 * o;
            double acc = 0.0;
            for (int j = 0; j < (int)h.size(); ++j) {
                int idx = t + j - mid;
                if (idx < 0) idx = -idx - 1;              // symmetric edges
                if (idx >= L) idx = 2 * L - 1 - idx;
                acc += h[(size_t)j] * x[idx];
            }
            y[o] = acc;
        }
    }
    return out;
}

std::vector<double> zscore(const std::vector<double>& signal, bool* flagged) {
    const size_t n = signal.size();
    if (n == 0) throw std::invalid_argument("zscore: empty signal");
    double mu = 0.0;
    for (double v : signal) mu += v;
    mu /= (double)n;
    double var = 0.0;
    for (double v : signal) var += (v - mu) * (v - mu);
    var /= (double)n;  // population sigma, no Bessel correction
    double sigma = std::sqrt(var);
    if (flagged) *flagged = false;
    if (sigma < 1e-12) {
        if (flagged) *flagged = true;
        return std::vector<double>(n, 0.0);
    }
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = (signal[i] - mu) / sigma;
    return out;
}

EcgRecord preprocess_record(const EcgRecord& record, std::vector<int>* flagged_leads) {
    static const WaveletBank bank = WaveletBank::db6();
    EcgRecord r = resample_to_250(record);
    for (int ld = 0; ld < r.leads; ++ld) {
        std::vector<double> sig = r.lead_vec(ld);
        sig = wavelet_denoise(sig, bank);
        bool flat = false;
        sig = zscore(sig, &flat);
        if (flat && flagged_leads) flagged_leads->push_back(ld);
        std::copy(sig.begin(), sig.end(), r.lead(ld));
    }
    return r;
}

}  // namespace s2m2
