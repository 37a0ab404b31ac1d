// Segment tokenization: slice a lead into fixed windows, embed each window,
// then wrap with CLS tokens and positional embeddings.

#ifndef S2M2_TOKENIZE_HPP
#define S2M2_TOKENIZE_HPP

#include <vector>

#include "s2m2/tensor.hpp"

namespace s2m2 {

enum class ClsPolicy { both_ends, start_only };
enum class Direction { forward, reverse };

struct TokenizerConfig {
    int patch_len = 50;
    int step = 25;
    int model_dim = 192;
    ClsPolicy cls_policy = ClsPolicy::both_ends;

    void validate(long long signal_len) const;
};

// N = floor((L - p) / s) + 1; trailing samples that do not fill a window drop.
int segment_count(long long signal_len, int patch_len, int step);

// {N, p} patch matrix; window starts at 0, s, 2s, ... identically per lead.
Tensor segment(const std::vector<double>& lead_signal, int patch_len, int step);

// row-wise affine projection into model space
Tensor embed(const Tensor& patches, const Tensor& w, const Tensor& b);

struct TokenSequence {
    int lead_index = 0;
    Tensor tokens;  // {N_total, dim}
    std::vector<int> cls_positions;
    Direction direction = Direction::forward;
};

// CLS placement per policy, then learned absolute positions added
// elementwise. cls_tail may be undefined for start_only.
TokenSequence assemble(const Tensor& embedded, const Tensor& cls_head, const Tensor& cls_tail,
                       const Tensor& pos_table, ClsPolicy policy, int lead_index);

// Reversed token order, same per-token content. An involution.
TokenSequence reverse_view(const TokenSequence& seq);

}  // namespace s2m2

#endif
