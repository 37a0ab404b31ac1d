#include "s2m2/tokenize.hpp"

#include <stdexcept>
#include <string>

#include "s2m2/nn_ops.hpp"

namespace s2m2 {

void TokenizerConfig::validate(long long signal_len) const {
    if (model_dim < 8) throw std::invalid_argument("tokenizer: model_dim must be >= 8");
    (void)segment_count(signal_len, patch_len, step);  // enforces 1 <= s <= p <= L
}

int segment_count(long long signal_len, int patch_len, int step) {
    if (patch_len < 1 || step < 1 || step > patch_len)
        throw std::invalid_argument("segment: need 1 <= step <= patch_len");
    if (signal_len < patch_len)
        throw std::invalid_argument("segment: signal length " + std::to_string(signal_len) +
                                    " shorter than patch length " + std::to_string(patch_len));
    return (int)((signal_len - patch_len) / step) + 1;
}

Tensor segment(const std::vector<double>& lead_signal, int patch_len, int step) {
    const int n = segment_count((long long)lead_signal.size(), patch_len, step);
    std::vector<double> data((size_t)n * patch_len);
    for (int i = 0; i < n; ++i)
        std::copy(lead_signal.begin() + (size_t)i * step,
                  lead_signal.begin() + (size_t)i * step + patch_len,
                  data.begin() + (size_t)i * patch_len);
    return Tensor({n, patch_len}, std::move(data));
}

Tensor embed(const Tensor& patches, const Tensor& w, const Tensor& b) {
    return add_bias_rows(matmul(patches, w), b);
}

TokenSequence assemble(const Tensor& embedded, const Tensor& cls_head, const Tensor& cls_tail,
                       const Tensor& pos_table, ClsPolicy policy, int lead_index) {
    const int n = embedded.dim(0);
    const bool both = policy == ClsPolicy::both_ends;
    const int n_total = n + (both ? 2 : 1);
    if (pos_table.dim(0) < n_total)
        throw shape_error("assemble: positional table has " + std::to_string(pos_table.dim(0)) +
                          " rows, sequence needs " + std::to_string(n_total));
    std::vector<Tensor> parts = {cls_head, embedded};
    if (both) {
        if (!cls_tail.defined()) throw shape_error("assemble: both_ends policy needs a tail CLS");
        parts.push_back(cls_tail);
    }
    TokenSequence seq;
    seq.lead_index = lead_index;
    seq.tokens = add(concat_rows(parts), slice_rows(pos_table, 0, n_total));
    seq.cls_positions = both ? std::vector<int>{0, n_total - 1} : std::vector<int>{0};
    seq.direction = Direction::forward;
    return seq;
}

TokenSequence reverse_view(const TokenSequence& seq) {
    TokenSequence out;
    out.lead_index = seq.lead_index;
    out.tokens = reverse_rows(seq.tokens);
    const int n_total = seq.tokens.dim(0);
    for (int p : seq.cls_positions) out.cls_positions.push_back(n_total - 1 - p);
    out.direction =
        seq.direction == Direction::forward ? Direction::reverse : Direction::forward;
    return out;
}

}  // namespace s2m2
