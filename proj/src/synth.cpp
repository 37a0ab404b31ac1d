#include "s2m2/synth.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "s2m2/rng.hpp"

namespace s2m2 {

static const double kBaseRates[4] = {50.0, 75.0, 120.0, 95.0};

SynthClassSpec synth_class_spec(int cls) {
    // Morphology table: class 1 drops the P wave, class 2 doubles the QRS
    // width, class 3 doubles the T wave. Classes 4..7 reuse the rhythm of
    // 0..3 with an altered QRS width so every class stays separable on
    // (mean RR, QRS width) alone.
    static const double p_amp[8] = {0.15, 0.0, 0.15, 0.075, 0.15, 0.0, 0.15, 0.075};
    static const double qrs_w[8] = {1.0, 1.0, 2.0, 1.0, 2.0, 2.0, 0.6, 2.0};
    static const double t_amp[8] = {0.30, 0.30, 0.30, 0.60, 0.30, 0.30, 0.30, 0.60};
    SynthClassSpec s;
    s.rate_bpm = kBaseRates[cls % 4];
    s.p_amp = p_amp[cls];
    s.qrs_width_factor = qrs_w[cls];
    s.t_amp = t_amp[cls];
    return s;
}

struct Bump {
    double amp, offset_s, sigma_s;
};

std::vector<EcgRecord> generate_synthetic(int class_count, int per_class, int length, int rate_hz,
                                          uint64_t seed) {
    if (class_count < 2 || class_count > 8)
        throw std::invalid_argument("generate_synthetic: class_count must be in [2, 8], got " +
                                    std::to_string(class_count));
    if (per_class < 1) throw std::invalid_argument("generate_synthetic: per_class must be >= 1");
    if (length < 4 * rate_hz)
        throw std::invalid_argument("generate_synthetic: length must be >= 4 * rate_hz");

    const int leads = 12;
    Rng rng(seed);
    std::vector<EcgRecord> out;
    out.reserve((size_t)class_count * per_class);

    for (int cls = 0; cls < class_count; ++cls) {
        SynthClassSpec spec = synth_class_spec(cls);
        for (int k = 0; k < per_class; ++k) {
            double bpm = spec.rate_bpm + rng.uniform(-3.0, 3.0);
            double period_s = 60.0 / bpm;

            Bump bumps[5] = {
                {spec.p_amp, -0.16, 0.022},                           // P
                {-0.10, -0.022, 0.008 * spec.qrs_width_factor},       // Q
                {1.00, 0.0, 0.011 * spec.qrs_width_factor},           // R
                {-0.22, 0.024, 0.009 * spec.qrs_width_factor},        // S
                {spec.t_amp, 0.26, 0.055},                            // T
            };

            std::vector<double> beat_wave((size_t)length, 0.0);
            double duration_s = (double)length / rate_hz;
            int n_beats = (int)(duration_s / period_s) + 2;
            for (int b = 0; b < n_beats; ++b) {
                double t_r = (0.4 + b * period_s);  // first R at 0.4 s
                for (const Bump& bp : bumps) {
                    if (bp.amp == 0.0) continue;
                    double center = t_r + bp.offset_s;
                    int lo = (int)std::floor((center - 4.0 * bp.sigma_s) * rate_hz);
                    int hi = (int)std::ceil((center + 4.0 * bp.sigma_s) * rate_hz);
                    lo = std::max(lo, 0);
                    hi = std::min(hi, length - 1);
                    for (int i = lo; i <= hi; ++i) {
                        double dt = (double)i / rate_hz - center;
                        beat_wave[(size_t)i] +=
                            bp.amp * std::exp(-0.5 * dt * dt / (bp.sigma_s * bp.sigma_s));
                    }
                }
            }

            EcgRecord rec;
            rec.leads = leads;
            rec.length = length;
            rec.sample_rate_hz = rate_hz;
            rec.label = cls;
            rec.id = "syn_" + std::to_string(cls) + "_" + std::to_string(k);
            rec.samples.resize((size_t)leads * length);
            for (int ld = 0; ld < leads; ++ld) {
                double gain = 0.5 + (double)ld / 11.0;  // fixed per-lead gain in [0.5, 1.5]
                double drift_phase = rng.uniform(0.0, 2.0 * M_PI);
                double mains_phase = rng.uniform(0.0, 2.0 * M_PI);
                double* dst = rec.samples.data() + (size_t)ld * length;
                for (int i = 0; i < length; ++i) {
                    double t = (double)i / rate_hz;
                    double v = gain * beat_wave[(size_t)i];
                    v += 0.05 * rng.normal();                                   // white noise
                    v += 0.3 * std::sin(2.0 * M_PI * 0.2 * t + drift_phase);    // baseline drift
                    v += 0.1 * std::sin(2.0 * M_PI * 50.0 * t + mains_phase);   // mains pickup
                    dst[i] = (double)(float)v;  // float32-exact for bit-exact file round-trips
                }
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace s2m2
