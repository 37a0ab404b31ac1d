// Selective state-space core: ZOH discretization, linear-time scan, the LTI
// convolution-kernel form, and the gated block built from them.

#ifndef S2M2_SSM_HPP
#define S2M2_SSM_HPP

#include <utility>
#include <vector>

#include "s2m2/tensor.hpp"

namespace s2m2 {

// abar[c,s,t] = exp(delta[c,t] * a[c,s]).  delta must be positive elementwise.
Tensor discretize_a(const Tensor& delta, const Tensor& a);

// Simplified ZOH: bbar[c,s,t] = delta[c,t] * b[s,t].
// Exact ZOH:      bbar[c,s,t] = (exp(delta*a) - 1)/a * b[s,t], limit delta*b as a -> 0.
Tensor discretize_b(const Tensor& delta, const Tensor& a, const Tensor& b, bool exact_zoh);

// delta {C,T}, a {C,S}, b {S,T} -> (abar {C,S,T}, bbar {C,S,T})
std::pair<Tensor, Tensor> discretize(const Tensor& delta, const Tensor& a, const Tensor& b,
                                     bool exact_zoh = false);

// h[c,s] <- abar[c,s,t]*h[c,s] + bbar[c,s,t]*x[c,t]
// y[c,t]  = sum_s c[s,t]*h[c,s] + d[c]*x[c,t]
// Strictly causal in t; h starts at zero.
Tensor selective_scan(const Tensor& abar, const Tensor& bbar, const Tensor& c, const Tensor& x,
                      const Tensor& d);

// LTI form of the same recurrence: K[c,j] = sum_s cvec[s] * abar[c,s]^j * bbar[c,s].
// Kept deliberately independent of selective_scan so each can check the other.
std::vector<double> ssm_kernel(const std::vector<double>& abar, const std::vector<double>& bbar,
                               const std::vector<double>& cvec, int channels, int state_n,
                               int m_len);

// y[c,t] = sum_{j<=min(t,M-1)} K[c,j] * x[c,t-j]
std::vector<double> kernel_apply(const std::vector<double>& kern, int channels, int m_len,
                                 const std::vector<double>& x, int t_len);

enum class ScanDirection { forward, reverse };

// Parameters of one scan direction inside a block.
struct ScanDirParams {
    Tensor conv_w;  // {m, k} depthwise kernel
    Tensor conv_b;  // {1, m}
    Tensor w_b;     // {m, S}
    Tensor w_c;     // {m, S}
    Tensor w_dt;    // {m, m}
    Tensor b_dt;    // {1, m}
    Tensor a_log;   // {m, S}; A = -exp(a_log)
    Tensor d_skip;  // {1, m}
};

struct MambaBlockParams {
    Tensor ln_g, ln_b;    // {1, dim}
    Tensor w_x, b_x;      // {dim, m}, {1, m}
    Tensor w_z, b_z;      // {dim, m}, {1, m}
    Tensor w_out, b_out;  // {m or 2m, dim}, {1, dim}
    ScanDirParams fwd, rev;
    bool has_rev = false;
};

// One directional pass: norm, x/z projections, conv + scan on the chosen
// direction, gate, output projection. No residual; the caller adds it.
Tensor mamba_block(const Tensor& tokens, const MambaBlockParams& p, ScanDirection dir,
                   bool exact_zoh = false);

// Both directions summed (or channel-concatenated), output projection, then
// the residual. With bidirectional=false this is the forward pass alone.
Tensor bidirectional_block(const Tensor& tokens, const MambaBlockParams& p, bool bidirectional,
                           bool exact_zoh = false, bool combine_concat = false);

}  // namespace s2m2

#endif
