#include "s2m2/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "s2m2/nn_ops.hpp"
#include "s2m2/rng.hpp"

namespace s2m2 {

int ModelConfig::token_count() const { return (seq_len - patch_len) / step + 1; }

int ModelConfig::total_tokens() const {
    return token_count() + (cls_policy == ClsPolicy::both_ends ? 2 : 1);
}

void ModelConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("config: depth must be >= 1");
    if (dim < 8 || dim % 2 != 0)
        throw std::invalid_argument("config: dim must be even and >= 8");
    if (classes < 2) throw std::invalid_argument("config: classes must be >= 2");
    if (state_n < 1) throw std::invalid_argument("config: state_n must be >= 1");
    if (leads != 12) throw std::invalid_argument("config: the pipeline expects 12 leads");
    if (step < 1 || step > patch_len)
        throw std::invalid_argument("config: need 1 <= s <= p");
    if (patch_len > seq_len)
        throw std::invalid_argument("config: patch length exceeds sequence length");
    if (conv_kernel < 1) throw std::invalid_argument("config: conv kernel must be >= 1");
}

long long param_count(const ModelConfig& cfg) {
    cfg.validate();
    const long long D = cfg.dim, m = cfg.scan_width(), S = cfg.state_n, k = cfg.conv_kernel;
    const long long H = cfg.head_hidden(), L = cfg.leads;
    const long long per_dir = m * k + m      // conv
                              + 2 * m * S    // w_b, w_c
                              + m * m + m    // w_dt, b_dt
                              + m * S        // a_log
                              + m;           // d_skip
    const long long n_dir = cfg.bidirectional ? 2 : 1;
    const long long out_in =
        (cfg.bidirectional && cfg.direction_combine == DirCombine::concat) ? 2 * m : m;
    const long long block = 2 * D                  // layer norm
                            + 2 * (D * m + m)      // x and z projections
                            + (out_in * D + D)     // output projection
                            + n_dir * per_dir;
    const long long cls = (cfg.cls_policy == ClsPolicy::both_ends ? 2 : 1) * D;
    const long long branch = (long long)cfg.patch_len * D + D  // embed
                             + cls + (long long)cfg.total_tokens() * D + cfg.depth * block;
    long long total = (cfg.multi_branch ? L : 1) * branch;
    if (cfg.fusion == FusionKind::full) {
        total += D * 2 * D + 2 * D + 2 * D * D + D;  // FFN
        total += L * 1 + 1 + 1 * L + L;              // SE bottleneck
    }
    total += D * H + H + 2 * H;          // lead projection + BN affine
    total += L * H * cfg.classes + cfg.classes;
    return total;
}

// ---------------------------------------------------------------------------
// construction

namespace {

struct Builder {
    Rng rng;
    std::vector<NamedTensor>* reg;

    Tensor uniform(const std::string& name, std::vector<int> shape, double bound) {
        long long n = shape_numel(shape);
        std::vector<double> data((size_t)n);
        for (double& v : data) v = rng.uniform(-bound, bound);
        Tensor t(std::move(shape), std::move(data), true);
        reg->push_back({name, t, true});
        return t;
    }
    Tensor constant(const std::string& name, std::vector<int> shape, double v,
                    bool learnable = true) {
        Tensor t = Tensor::full(std::move(shape), v, learnable);
        reg->push_back({name, t, learnable});
        return t;
    }
    Tensor gaussian(const std::string& name, std::vector<int> shape, double sigma) {
        long long n = shape_numel(shape);
        std::vector<double> data((size_t)n);
        for (double& v : data) v = sigma * rng.normal();
        Tensor t(std::move(shape), std::move(data), true);
        reg->push_back({name, t, true});
        return t;
    }
    Tensor custom(const std::string& name, std::vector<int> shape, std::vector<double> data) {
        Tensor t(std::move(shape), std::move(data), true);
        reg->push_back({name, t, true});
        return t;
    }
};

ScanDirParams build_dir(Builder& b, const std::string& prefix, const ModelConfig& cfg) {
    const int m = cfg.scan_width(), S = cfg.state_n, k = cfg.conv_kernel;
    ScanDirParams d;
    d.conv_w = b.uniform(prefix + ".conv_w", {m, k}, 1.0 / std::sqrt((double)k));
    d.conv_b = b.constant(prefix + ".conv_b", {1, m}, 0.0);
    d.w_b = b.uniform(prefix + ".w_b", {m, S}, 1.0 / std::sqrt((double)m));
    d.w_c = b.uniform(prefix + ".w_c", {m, S}, 1.0 / std::sqrt((double)m));
    d.w_dt = b.uniform(prefix + ".w_dt", {m, m}, 1.0 / std::sqrt((double)m));
    // bias places softplus(b_dt) log-uniformly in [1e-3, 1e-1]
    std::vector<double> dt0((size_t)m);
    for (double& v : dt0) {
        double dt = std::exp(b.rng.uniform(std::log(1e-3), std::log(1e-1)));
        v = std::log(std::expm1(dt));
    }
    d.b_dt = b.custom(prefix + ".b_dt", {1, m}, std::move(dt0));
    std::vector<double> alog((size_t)m * S);
    for (int c = 0; c < m; ++c)
        for (int s = 0; s < S; ++s) alog[(size_t)c * S + s] = std::log((double)(s + 1));
    d.a_log = b.custom(prefix + ".a_log", {m, S}, std::move(alog));
    d.d_skip = b.constant(prefix + ".d_skip", {1, m}, 1.0);
    return d;
}

MambaBlockParams build_block(Builder& b, const std::string& prefix, const ModelConfig& cfg) {
    const int D = cfg.dim, m = cfg.scan_width();
    MambaBlockParams p;
    p.ln_g = b.constant(prefix + ".ln_g", {1, D}, 1.0);
    p.ln_b = b.constant(prefix + ".ln_b", {1, D}, 0.0);
    p.w_x = b.uniform(prefix + ".w_x", {D, m}, 1.0 / std::sqrt((double)D));
    p.b_x = b.constant(prefix + ".b_x", {1, m}, 0.0);
    p.w_z = b.uniform(prefix + ".w_z", {D, m}, 1.0 / std::sqrt((double)D));
    p.b_z = b.constant(prefix + ".b_z", {1, m}, 0.0);
    const int out_in =
        (cfg.bidirectional && cfg.direction_combine == DirCombine::concat) ? 2 * m : m;
    p.w_out = b.uniform(prefix + ".w_out", {out_in, D}, 1.0 / std::sqrt((double)out_in));
    p.b_out = b.constant(prefix + ".b_out", {1, D}, 0.0);
    p.fwd = build_dir(b, prefix + ".fwd", cfg);
    if (cfg.bidirectional) {
        p.rev = build_dir(b, prefix + ".rev", cfg);
        p.has_rev = true;
    }
    return p;
}

}  // namespace

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Builder b{Rng(seed), &registry_};
    const int D = cfg_.dim;
    const int n_branches = cfg_.multi_branch ? cfg_.leads : 1;
    for (int i = 0; i < n_branches; ++i) {
        std::string bp = "branch" + std::to_string(i);
        BranchParams br;
        br.embed_w = b.uniform(bp + ".embed_w", {cfg_.patch_len, D},
                               1.0 / std::sqrt((double)cfg_.patch_len));
        br.embed_b = b.constant(bp + ".embed_b", {1, D}, 0.0);
        br.cls_head = b.gaussian(bp + ".cls_head", {1, D}, 0.02);
        if (cfg_.cls_policy == ClsPolicy::both_ends)
            br.cls_tail = b.gaussian(bp + ".cls_tail", {1, D}, 0.02);
        br.pos = b.gaussian(bp + ".pos", {cfg_.total_tokens(), D}, 0.02);
        for (int d = 0; d < cfg_.depth; ++d)
            br.blocks.push_back(build_block(b, bp + ".block" + std::to_string(d), cfg_));
        branches_.push_back(std::move(br));
    }
    if (cfg_.fusion == FusionKind::full) {
        fusion_.ffn_w1 = b.uniform("fusion.ffn_w1", {D, 2 * D}, 1.0 / std::sqrt((double)D));
        fusion_.ffn_b1 = b.constant("fusion.ffn_b1", {1, 2 * D}, 0.0);
        fusion_.ffn_w2 = b.uniform("fusion.ffn_w2", {2 * D, D}, 1.0 / std::sqrt(2.0 * D));
        fusion_.ffn_b2 = b.constant("fusion.ffn_b2", {1, D}, 0.0);
        fusion_.se_w1 = b.uniform("fusion.se_w1", {cfg_.leads, 1},
                                  1.0 / std::sqrt((double)cfg_.leads));
        fusion_.se_b1 = b.constant("fusion.se_b1", {1, 1}, 0.0);
        fusion_.se_w2 = b.uniform("fusion.se_w2", {1, cfg_.leads}, 1.0);
        fusion_.se_b2 = b.constant("fusion.se_b2", {1, cfg_.leads}, 0.0);
    }
    const int H = cfg_.head_hidden();
    head_.lead_w = b.uniform("head.lead_w", {D, H}, 1.0 / std::sqrt((double)D));
    head_.lead_b = b.constant("head.lead_b", {1, H}, 0.0);
    head_.bn_gamma = b.constant("head.bn_gamma", {1, H}, 1.0);
    head_.bn_beta = b.constant("head.bn_beta", {1, H}, 0.0);
    head_.bn_mean = b.constant("head.bn_mean", {1, H}, 0.0, /*learnable=*/false);
    head_.bn_var = b.constant("head.bn_var", {1, H}, 1.0, /*learnable=*/false);
    head_.out_w = b.uniform("head.out_w", {cfg_.leads * H, cfg_.classes},
                            1.0 / std::sqrt((double)cfg_.leads * H));
    head_.out_b = b.constant("head.out_b", {1, cfg_.classes}, 0.0);
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (const auto& nt : registry_)
        if (nt.learnable) out.push_back(nt.tensor);
    return out;
}

long long Model::live_param_count() const {
    long long n = 0;
    for (const auto& nt : registry_)
        if (nt.learnable) n += nt.tensor.size();
    return n;
}

void Model::set_requires_grad(bool rg) {
    for (auto& nt : registry_)
        if (nt.learnable) nt.tensor.set_requires_grad(rg);
}

std::vector<std::vector<double>> Model::snapshot() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(registry_.size());
    for (const auto& nt : registry_) snap.push_back(nt.tensor.value());
    return snap;
}

void Model::restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != registry_.size())
        throw std::invalid_argument("restore: snapshot size mismatch");
    for (size_t i = 0; i < snap.size(); ++i) registry_[i].tensor.mutable_value() = snap[i];
}

// ---------------------------------------------------------------------------
// forward

Tensor Model::branch_forward(const double* lead_signal, int len, const BranchParams& br,
                             int lead) {
    std::vector<double> sig(lead_signal, lead_signal + len);
    Tensor patches = segment(sig, cfg_.patch_len, cfg_.step);
    Tensor emb = embed(patches, br.embed_w, br.embed_b);
    TokenSequence seq = assemble(emb, br.cls_head, br.cls_tail, br.pos, cfg_.cls_policy, lead);
    Tensor x = seq.tokens;
    Tensor acc;
    const bool concat = cfg_.direction_combine == DirCombine::concat;
    for (const auto& blk : br.blocks) {
        x = bidirectional_block(x, blk, cfg_.bidirectional, cfg_.exact_zoh, concat);
        if (cfg_.layer_readout == LayerReadout::sum) acc = acc.defined() ? add(acc, x) : x;
    }
    return cfg_.layer_readout == LayerReadout::sum ? acc : x;
}

Tensor Model::branch_features(const EcgRecord& rec, int lead) {
    if (rec.leads != cfg_.leads) throw std::invalid_argument("branch_features: lead count");
    const BranchParams& br = branches_[cfg_.multi_branch ? (size_t)lead : 0];
    return branch_forward(rec.lead(lead), rec.length, br, lead);
}

std::vector<Tensor> Model::fused_lead_maps_impl(const EcgRecord& rec, Tensor* weights_out) {
    if (rec.leads != cfg_.leads)
        throw std::invalid_argument("model: record has " + std::to_string(rec.leads) +
                                    " leads, expected " + std::to_string(cfg_.leads));
    if (rec.sample_rate_hz != 250)
        throw std::invalid_argument("model: records must be preprocessed to 250 Hz");
    std::vector<Tensor> maps((size_t)cfg_.leads);
    for (int ld = 0; ld < cfg_.leads; ++ld) {
        const BranchParams& br = branches_[cfg_.multi_branch ? (size_t)ld : 0];
        maps[(size_t)ld] = branch_forward(rec.lead(ld), rec.length, br, ld);
    }
    if (cfg_.fusion == FusionKind::full) {
        std::vector<Tensor> ffn((size_t)cfg_.leads);
        std::vector<Tensor> squeezed((size_t)cfg_.leads);
        for (int ld = 0; ld < cfg_.leads; ++ld) {
            Tensor hidden = silu(add_bias_rows(matmul(maps[(size_t)ld], fusion_.ffn_w1),
                                               fusion_.ffn_b1));
            Tensor back = add_bias_rows(matmul(hidden, fusion_.ffn_w2), fusion_.ffn_b2);
            ffn[(size_t)ld] = add(maps[(size_t)ld], back);
            squeezed[(size_t)ld] = mean_all(ffn[(size_t)ld]);
        }
        Tensor s = stack_scalars_row(squeezed);
        Tensor mid = silu(add(matmul(s, fusion_.se_w1), fusion_.se_b1));
        Tensor weights = sigmoid(add(matmul(mid, fusion_.se_w2), fusion_.se_b2));
        if (weights_out) *weights_out = weights;
        for (int ld = 0; ld < cfg_.leads; ++ld)
            maps[(size_t)ld] = scale_by_element(ffn[(size_t)ld], weights, ld);
    }
    return maps;
}

std::vector<Tensor> Model::fused_lead_maps(const EcgRecord& rec) {
    return fused_lead_maps_impl(rec, nullptr);
}

std::vector<double> Model::se_weights(const EcgRecord& rec) {
    Tensor w;
    fused_lead_maps_impl(rec, &w);
    return w.defined() ? w.value() : std::vector<double>();
}

Tensor Model::forward(const std::vector<const EcgRecord*>& batch, bool training) {
    if (batch.empty()) throw std::invalid_argument("model: empty batch");
    std::vector<Tensor> head_rows;
    head_rows.reserve(batch.size() * (size_t)cfg_.leads);
    for (const EcgRecord* rec : batch) {
        std::vector<Tensor> maps = fused_lead_maps(*rec);
        for (int ld = 0; ld < cfg_.leads; ++ld) {
            Tensor pooled = mean_rows(maps[(size_t)ld]);
            head_rows.push_back(
                silu(add_bias_rows(matmul(pooled, head_.lead_w), head_.lead_b)));
        }
    }
    Tensor bn_in = concat_rows(head_rows);
    Tensor bn_out = batch_norm_1d(bn_in, head_.bn_gamma, head_.bn_beta, head_.bn_mean,
                                  head_.bn_var, training);
    Tensor flat = reshape(bn_out, {(int)batch.size(), cfg_.leads * cfg_.head_hidden()});
    return add_bias_rows(matmul(flat, head_.out_w), head_.out_b);
}

std::vector<double> Model::predict_probs(const EcgRecord& rec) {
    NoGrad guard(*this);
    Tensor logits = forward({&rec}, /*training=*/false);
    std::vector<double> probs((size_t)cfg_.classes);
    softmax_row(logits.value().data(), cfg_.classes, probs.data());
    return probs;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back((char)((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back((char)((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    void need(size_t n, const char* what) {
        if (pos + n > buf.size())
            throw format_error(std::string("model file truncated while reading ") + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= (uint32_t)(unsigned char)buf[pos + i] << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= (uint64_t)(unsigned char)buf[pos + i] << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string fusion_name(FusionKind f) { return f == FusionKind::full ? "full" : "concat"; }
std::string cls_name(ClsPolicy p) {
    return p == ClsPolicy::both_ends ? "both_ends" : "start_only";
}
std::string combine_name(DirCombine d) { return d == DirCombine::sum ? "sum" : "concat"; }
std::string readout_name(LayerReadout r) { return r == LayerReadout::last ? "last" : "sum"; }

}  // namespace

std::string encode_model_config(const ModelConfig& c) {
    std::ostringstream os;
    os << "p = " << c.patch_len << "\n"
       << "s = " << c.step << "\n"
       << "depth = " << c.depth << "\n"
       << "dim = " << c.dim << "\n"
       << "state_n = " << c.state_n << "\n"
       << "leads = " << c.leads << "\n"
       << "classes = " << c.classes << "\n"
       << "seq_len = " << c.seq_len << "\n"
       << "conv_kernel = " << c.conv_kernel << "\n"
       << "bidirectional = " << (c.bidirectional ? "true" : "false") << "\n"
       << "multi_branch = " << (c.multi_branch ? "true" : "false") << "\n"
       << "exact_zoh = " << (c.exact_zoh ? "true" : "false") << "\n"
       << "fusion = " << fusion_name(c.fusion) << "\n"
       << "cls_policy = " << cls_name(c.cls_policy) << "\n"
       << "direction_combine = " << combine_name(c.direction_combine) << "\n"
       << "layer_readout = " << readout_name(c.layer_readout) << "\n";
    return os.str();
}

ModelConfig decode_model_config(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw format_error("model config: malformed line " + line);
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        auto as_bool = [&](const std::string& v) { return v == "true"; };
        if (key == "p") c.patch_len = std::stoi(val);
        else if (key == "s") c.step = std::stoi(val);
        else if (key == "depth") c.depth = std::stoi(val);
        else if (key == "dim") c.dim = std::stoi(val);
        else if (key == "state_n") c.state_n = std::stoi(val);
        else if (key == "leads") c.leads = std::stoi(val);
        else if (key == "classes") c.classes = std::stoi(val);
        else if (key == "seq_len") c.seq_len = std::stoi(val);
        else if (key == "conv_kernel") c.conv_kernel = std::stoi(val);
        else if (key == "bidirectional") c.bidirectional = as_bool(val);
        else if (key == "multi_branch") c.multi_branch = as_bool(val);
        else if (key == "exact_zoh") c.exact_zoh = as_bool(val);
        else if (key == "fusion")
            c.fusion = (val == "full") ? FusionKind::full : FusionKind::concat_only;
        else if (key == "cls_policy")
            c.cls_policy = (val == "both_ends") ? ClsPolicy::both_ends : ClsPolicy::start_only;
        else if (key == "direction_combine")
            c.direction_combine = (val == "sum") ? DirCombine::sum : DirCombine::concat;
        else if (key == "layer_readout")
            c.layer_readout = (val == "last") ? LayerReadout::last : LayerReadout::sum;
        else
            throw format_error("model config: unknown key '" + key + "'");
    }
    return c;
}

void Model::save(const std::string& path) const {
    std::string buf;
    buf += "S2M2MODL";
    put_u32(buf, 1u);
    std::string cfg_text = encode_model_config(cfg_);
    put_u32(buf, (uint32_t)cfg_text.size());
    buf += cfg_text;
    put_u32(buf, (uint32_t)registry_.size());
    for (const auto& nt : registry_) {
        put_u32(buf, (uint32_t)nt.name.size());
        buf += nt.name;
        put_u32(buf, (uint32_t)nt.tensor.ndim());
        for (int d : nt.tensor.shape()) put_u32(buf, (uint32_t)d);
        buf.push_back(nt.learnable ? 1 : 0);
        for (double v : nt.tensor.value()) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(buf, bits);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("save: cannot open " + path);
    out.write(buf.data(), (std::streamsize)buf.size());
    if (!out) throw format_error("save: short write to " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("load: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    Reader r{buf};
    if (r.bytes(8, "magic") != "S2M2MODL") throw format_error("load: bad magic in " + path);
    uint32_t version = r.u32("version");
    if (version != 1)
        throw format_error("load: unsupported model version " + std::to_string(version));
    uint32_t cfg_len = r.u32("config length");
    ModelConfig cfg = decode_model_config(r.bytes(cfg_len, "config"));
    Model model(cfg, /*seed=*/0);
    uint32_t count = r.u32("tensor count");
    if (count != model.registry_.size())
        throw shape_error("load: file has " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(model.registry_.size()));
    for (auto& nt : model.registry_) {
        uint32_t name_len = r.u32("tensor name length");
        std::string name = r.bytes(name_len, "tensor name");
        if (name != nt.name)
            throw shape_error("load: expected tensor '" + nt.name + "', file has '" + name + "'");
        uint32_t nd = r.u32("tensor rank");
        std::vector<int> shape((size_t)nd);
        for (auto& d : shape) d = (int)r.u32("tensor dim");
        if (shape != nt.tensor.shape()) {
            std::string want, got;
            for (int d : nt.tensor.shape()) want += std::to_string(d) + " ";
            for (int d : shape) got += std::to_string(d) + " ";
            throw shape_error("load: tensor '" + nt.name + "' shape mismatch: expected [" + want +
                              "], file has [" + got + "]");
        }
        r.bytes(1, "learnable flag");
        auto& dst = nt.tensor.mutable_value();
        for (auto& v : dst) {
            uint64_t bits = r.u64("tensor payload");
            std::memcpy(&v, &bits, 8);
        }
    }
    if (r.pos != buf.size()) throw format_error("load: trailing bytes in " + path);
    return model;
}

}  // namespace s2m2
