// Synthetic 12-lead ECG generator. Classes differ in both rhythm (base heart
// rate) and morphology (P presence, QRS width, T height) so they stay
// separable on simple (mean RR, QRS width) features.

#ifndef S2M2_SYNTH_HPP
#define S2M2_SYNTH_HPP

#include <cstdint>
#include <vector>

#include "s2m2/record.hpp"

namespace s2m2 {

struct SynthClassSpec {
    double rate_bpm;
    double p_amp;
    double qrs_width_factor;
    double t_amp;
};

SynthClassSpec synth_class_spec(int cls);

// Deterministic per seed. length must be >= 4 * rate_hz; class_count in 2..8.
// Samples are snapped to float32 so record files round-trip bit-exactly.
std::vector<EcgRecord> generate_synthetic(int class_count, int per_class, int length, int rate_hz,
                                          uint64_t seed);

}  // namespace s2m2

#endif
