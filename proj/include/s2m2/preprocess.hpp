// Signal conditioning pipeline: resample to 250 Hz, 9-level db6 wavelet
// filtering (drop A9, D1, D2), then per-lead z-score.

#ifndef S2M2_PREPROCESS_HPP
#define S2M2_PREPROCESS_HPP

#include <vector>

#include "s2m2/record.hpp"

namespace s2m2 {

// Daubechies-6 analysis/synthesis filters (12 taps each). The published
// coefficients are validated by the perfect-reconstruction tests rather
// than trusted blindly.
struct WaveletBank {
    std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;
    static WaveletBank db6();
};

struct WaveletCoeffs {
    std::vector<double> approx;                 // A_levels
    std::vector<std::vector<double>> detail;    // detail[k] = D_{k+1}
    std::vector<int> level_len;                 // input length at each level
};

// Pyramid DWT with symmetric boundary extension. Requires len >= 2^levels.
WaveletCoeffs dwt(const std::vector<double>& signal, const WaveletBank& bank, int levels = 9);
std::vector<double> idwt(const WaveletCoeffs& coeffs, const WaveletBank& bank);

// dwt -> zero A9, D1, D2 -> idwt. 250 Hz input, length >= 512.
std::vector<double> wavelet_denoise(const std::vector<double>& signal_250hz,
                                    const WaveletBank& bank);

// 500 Hz -> half-band low-pass (31-tap windowed sinc) and decimate by 2;
// 250 Hz passes through. Other rates are rejected.
EcgRecord resample_to_250(const EcgRecord& record);

// Population-sigma z-score. A flat lead (sigma < 1e-12) comes back as zeros
// with flagged=true.
std::vector<double> zscore(const std::vector<double>& signal, bool* flagged = nullptr);

// Full pipeline in the fixed order resample -> denoise -> zscore.
// flagged_leads collects indices of flat leads when non-null.
EcgRecord preprocess_record(const EcgRecord& record, std::vector<int>* flagged_leads = nullptr);

}  // namespace s2m2

#endif
