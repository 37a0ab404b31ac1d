// Full network: 12 lead branches of bidirectional blocks, FFN+SE lead
// fusion, and the classifying head.

#ifndef S2M2_MODEL_HPP
#define S2M2_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "s2m2/record.hpp"
#include "s2m2/ssm.hpp"
#include "s2m2/tokenize.hpp"

namespace s2m2 {

enum class FusionKind { full, concat_only };
enum class DirCombine { sum, concat };
enum class LayerReadout { last, sum };

struct ModelConfig {
    int patch_len = 50;
    int step = 25;
    int depth = 12;
    int dim = 192;
    int state_n = 16;
    int leads = 12;
    int classes = 4;
    int seq_len = 2500;
    int conv_kernel = 4;
    bool bidirectional = true;
    bool multi_branch = true;
    bool exact_zoh = false;
    FusionKind fusion = FusionKind::full;
    ClsPolicy cls_policy = ClsPolicy::both_ends;
    DirCombine direction_combine = DirCombine::sum;
    LayerReadout layer_readout = LayerReadout::last;

    // The scan runs in a compact working space; this keeps the reference
    // configuration near the architecture's sub-million parameter budget.
    int scan_width() const { return std::max(4, dim / 32); }
    int head_hidden() const { return 64; }

    int token_count() const;   // windows per lead at seq_len
    int total_tokens() const;  // plus CLS tokens
    void validate() const;
};

// exact number of learnable scalars, by arithmetic alone
long long param_count(const ModelConfig& cfg);

struct BranchParams {
    Tensor embed_w, embed_b;   // {p, dim}, {1, dim}
    Tensor cls_head, cls_tail; // {1, dim} each (tail only for both_ends)
    Tensor pos;                // {N_total, dim}
    std::vector<MambaBlockParams> blocks;
};

struct FusionParams {
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // dim -> 2*dim -> dim
    Tensor se_w1, se_b1, se_w2, se_b2;      // leads -> 1 -> leads
};

struct HeadParams {
    Tensor lead_w, lead_b;      // {dim, 64}, {1, 64}
    Tensor bn_gamma, bn_beta;   // {1, 64}
    Tensor bn_mean, bn_var;     // running stats; buffers, not learnable
    Tensor out_w, out_b;        // {leads*64, classes}, {1, classes}
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
    bool learnable = true;
};

class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<BranchParams>& branches() const { return branches_; }
    const FusionParams& fusion() const { return fusion_; }

    // Batch of preprocessed records -> logits {batch, classes}. Training mode
    // drives batch-norm statistics.
    Tensor forward(const std::vector<const EcgRecord*>& batch, bool training);

    // Single-record eval path without gradient bookkeeping.
    std::vector<double> predict_probs(const EcgRecord& rec);

    // Pre-fusion feature map of one lead (branch output), for probes.
    Tensor branch_features(const EcgRecord& rec, int lead);

    // Per-lead maps after the fusion stage (FFN + SE scaling, or the raw
    // branch outputs under concat-only fusion).
    std::vector<Tensor> fused_lead_maps(const EcgRecord& rec);

    // The excitation weights the SE block would apply to each lead.
    // Empty under concat-only fusion.
    std::vector<double> se_weights(const EcgRecord& rec);

    std::vector<NamedTensor>& named_tensors() { return registry_; }
    const std::vector<NamedTensor>& named_tensors() const { return registry_; }
    std::vector<Tensor> parameters() const;  // learnable only
    long long live_param_count() const;
    void set_requires_grad(bool rg);

    std::vector<std::vector<double>> snapshot() const;  // all tensors incl. buffers
    void restore(const std::vector<std::vector<double>>& snap);

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    Tensor branch_forward(const double* lead_signal, int len, const BranchParams& br, int lead);
    std::vector<Tensor> fused_lead_maps_impl(const EcgRecord& rec, Tensor* weights_out);

    ModelConfig cfg_;
    std::vector<BranchParams> branches_;
    FusionParams fusion_;
    HeadParams head_;
    std::vector<NamedTensor> registry_;
};

std::string encode_model_config(const ModelConfig& c);
ModelConfig decode_model_config(const std::string& text);

// Scoped requires_grad(false) over all model parameters.
class NoGrad {
public:
    explicit NoGrad(Model& m) : model_(m) { model_.set_requires_grad(false); }
    ~NoGrad() { model_.set_requires_grad(true); }

private:
    Model& model_;
};

}  // namespace s2m2

#endif
