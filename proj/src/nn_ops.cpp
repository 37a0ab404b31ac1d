#include "s2m2/nn_ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace s2m2 {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

static void require_2d(const Tensor& t, const char* who) {
    if (t.ndim() != 2) throw shape_error(std::string(who) + ": expected a 2-D tensor");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw shape_error("matmul: inner dimensions disagree (" + std::to_string(k) + " vs " +
                          std::to_string(k2) + ")");
    std::vector<double> out((size_t)m * n);
    MapConst A(a.value().data(), m, k);
    MapConst B(b.value().data(), k, n);
    MapMat(out.data(), m, n).noalias() = A * B;
    return make_op_result({m, n}, std::move(out), {a, b}, [=](detail::Node& node) {
        auto pa = a.node(), pb = b.node();
        node.backprop = [&node, pa, pb, m, k, n]() {
            MapConst G(node.grad.data(), m, n);
            if (pa->requires_grad) {
                MapConst B(pb->value.data(), k, n);
                MapMat(pa->grad_buf().data(), m, k).noalias() += G * B.transpose();
            }
            if (pb->requires_grad) {
                MapConst A(pa->value.data(), m, k);
                MapMat(pb->grad_buf().data(), k, n).noalias() += A.transpose() * G;
            }
        };
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw shape_error("add: shape mismatch");
    std::vector<double> out(a.value());
    const auto& bv = b.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [=](detail::Node& node) {
        auto pa = a.node(), pb = b.node();
        node.backprop = [&node, pa, pb]() {
            if (pa->requires_grad) {
                auto& g = pa->grad_buf();
                for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buf();
                for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
            }
        };
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw shape_error("mul: shape mismatch");
    std::vector<double> out(a.value());
    const auto& bv = b.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [=](detail::Node& node) {
        auto pa = a.node(), pb = b.node();
        node.backprop = [&node, pa, pb]() {
            if (pa->requires_grad) {
                auto& g = pa->grad_buf();
                for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * pb->value[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buf();
                for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * pa->value[i];
            }
        };
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.value());
    for (double& v : out) v *= c;
    return make_op_result(a.shape(), std::move(out), {a}, [=](detail::Node& node) {
        auto pa = a.node();
        node.backprop = [&node, pa, c]() {
            auto& g = pa->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += c * node.grad[i];
        };
    });
}

Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
    require_2d(x, "add_bias_rows");
    const int R = x.dim(0), C = x.dim(1);
    if (bias.size() != C) throw shape_error("add_bias_rows: bias length mismatch");
    std::vector<double> out(x.value());
    const auto& bv = bias.value();
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) out[(size_t)r * C + c] += bv[(size_t)c];
    return make_op_result({R, C}, std::move(out), {x, bias}, [=](detail::Node& node) {
        auto px = x.node(), pb = bias.node();
        node.backprop = [&node, px, pb, R, C]() {
            if (px->requires_grad) {
                auto& g = px->grad_buf();
                for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buf();
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) g[(size_t)c] += node.grad[(size_t)r * C + c];
            }
        };
    });
}

static inline double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.value().size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sigmoid_scalar(xv[i]);
    return make_op_result(x.shape(), std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px]() {
            auto& g = px->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) {
                double s = sigmoid_scalar(px->value[i]);
                g[i] += node.grad[i] * s * (1.0 + px->value[i] * (1.0 - s));
            }
        };
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.value().size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
    auto saved = std::make_shared<std::vector<double>>(out);
    return make_op_result(x.shape(), std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px, saved]() {
            auto& g = px->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) {
                double s = (*saved)[i];
                g[i] += node.grad[i] * s * (1.0 - s);
            }
        };
    });
}

Tensor softplus(const Tensor& x) {
    std::vector<double> out(x.value().size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = xv[i] > 30.0 ? xv[i] : std::log1p(std::exp(xv[i]));
    return make_op_result(x.shape(), std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px]() {
            auto& g = px->grad_buf();
            for (size_t i = 0; i < g.size(); ++i)
                g[i] += node.grad[i] * sigmoid_scalar(px->value[i]);
        };
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const int d = (int)gain.size();
    if ((int)bias.size() != d) throw shape_error("layer_norm: gain/bias length mismatch");
    if (x.shape().back() != d) throw shape_error("layer_norm: last axis must match gain length");
    const long long rows = x.size() / d;
    const auto& xv = x.value();
    std::vector<double> out(xv.size());
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>((size_t)rows);
    const auto& gv = gain.value();
    const auto& bv = bias.value();
    for (long long r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mu = 0.0;
        for (int c = 0; c < d; ++c) mu += row[c];
        mu /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[(size_t)r] = is;
        for (int c = 0; c < d; ++c) {
            double xh = (row[c] - mu) * is;
            (*xhat)[(size_t)(r * d + c)] = xh;
            out[(size_t)(r * d + c)] = gv[(size_t)c] * xh + bv[(size_t)c];
        }
    }
    return make_op_result(x.shape(), std::move(out), {x, gain, bias}, [=](detail::Node& node) {
        auto px = x.node(), pg = gain.node(), pb = bias.node();
        node.backprop = [&node, px, pg, pb, xhat, inv_std, rows, d]() {
            const auto& gv = pg->value;
            for (long long r = 0; r < rows; ++r) {
                const double* go = node.grad.data() + r * d;
                const double* xh = xhat->data() + r * d;
                double is = (*inv_std)[(size_t)r];
                if (px->requires_grad) {
                    // dx = is*(dxh - mean(dxh) - xh*mean(dxh*xh))
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (int c = 0; c < d; ++c) {
                        double dxh = go[c] * gv[(size_t)c];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[c];
                    }
                    mean_dxh /= d;
                    mean_dxh_xh /= d;
                    auto& g = px->grad_buf();
                    for (int c = 0; c < d; ++c) {
                        double dxh = go[c] * gv[(size_t)c];
                        g[(size_t)(r * d + c)] += is * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
                    }
                }
                if (pg->requires_grad) {
                    auto& g = pg->grad_buf();
                    for (int c = 0; c < d; ++c) g[(size_t)c] += go[c] * xh[c];
                }
                if (pb->requires_grad) {
                    auto& g = pb->grad_buf();
                    for (int c = 0; c < d; ++c) g[(size_t)c] += go[c];
                }
            }
        };
    });
}

Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     Tensor& running_mean, Tensor& running_var, bool training, double momentum,
                     double eps) {
    require_2d(x, "batch_norm_1d");
    const int B = x.dim(0), F = x.dim(1);
    if ((int)gamma.size() != F || (int)beta.size() != F || (int)running_mean.size() != F ||
        (int)running_var.size() != F)
        throw shape_error("batch_norm_1d: feature length mismatch");
    if (training && B < 2)
        throw std::invalid_argument("batch_norm_1d: training mode needs a batch of at least 2");

    const auto& xv = x.value();
    auto mean = std::make_shared<std::vector<double>>((size_t)F, 0.0);
    auto inv_std = std::make_shared<std::vector<double>>((size_t)F);
    auto xhat = std::make_shared<std::vector<double>>(xv.size());

    if (training) {
        std::vector<double> var((size_t)F, 0.0);
        for (int b = 0; b < B; ++b)
            for (int f = 0; f < F; ++f) (*mean)[(size_t)f] += xv[(size_t)b * F + f];
        for (int f = 0; f < F; ++f) (*mean)[(size_t)f] /= B;
        for (int b = 0; b < B; ++b)
            for (int f = 0; f < F; ++f) {
                double d = xv[(size_t)b * F + f] - (*mean)[(size_t)f];
                var[(size_t)f] += d * d;
            }
        for (int f = 0; f < F; ++f) var[(size_t)f] /= B;
        for (int f = 0; f < F; ++f) (*inv_std)[(size_t)f] = 1.0 / std::sqrt(var[(size_t)f] + eps);
        // running stats use the unbiased variance (torch convention)
        auto& rm = running_mean.mutable_value();
        auto& rv = running_var.mutable_value();
        for (int f = 0; f < F; ++f) {
            rm[(size_t)f] = (1.0 - momentum) * rm[(size_t)f] + momentum * (*mean)[(size_t)f];
            double unbiased = var[(size_t)f] * (double)B / (double)(B - 1);
            rv[(size_t)f] = (1.0 - momentum) * rv[(size_t)f] + momentum * unbiased;
        }
    } else {
        const auto& rm = running_mean.value();
        const auto& rv = running_var.value();
        for (int f = 0; f < F; ++f) {
            (*mean)[(size_t)f] = rm[(size_t)f];
            (*inv_std)[(size_t)f] = 1.0 / std::sqrt(rv[(size_t)f] + eps);
        }
    }

    std::vector<double> out(xv.size());
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) {
            size_t i = (size_t)b * F + f;
            double xh = (xv[i] - (*mean)[(size_t)f]) * (*inv_std)[(size_t)f];
            (*xhat)[i] = xh;
            out[i] = gv[(size_t)f] * xh + bv[(size_t)f];
        }

    return make_op_result({B, F}, std::move(out), {x, gamma, beta}, [=](detail::Node& node) {
        auto px = x.node(), pg = gamma.node(), pb = beta.node();
        node.backprop = [&node, px, pg, pb, xhat, inv_std, B, F, training]() {
            const auto& gv = pg->value;
            if (px->requires_grad) {
                auto& g = px->grad_buf();
                if (training) {
                    for (int f = 0; f < F; ++f) {
                        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                        for (int b = 0; b < B; ++b) {
                            size_t i = (size_t)b * F + f;
                            double dxh = node.grad[i] * gv[(size_t)f];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * (*xhat)[i];
                        }
                        for (int b = 0; b < B; ++b) {
                            size_t i = (size_t)b * F + f;
                            double dxh = node.grad[i] * gv[(size_t)f];
                            g[i] += (*inv_std)[(size_t)f] *
                                    (dxh - sum_dxh / B - (*xhat)[i] * sum_dxh_xh / B);
                        }
                    }
                } else {
                    for (int b = 0; b < B; ++b)
                        for (int f = 0; f < F; ++f) {
                            size_t i = (size_t)b * F + f;
                            g[i] += node.grad[i] * gv[(size_t)f] * (*inv_std)[(size_t)f];
                        }
                }
            }
            if (pg->requires_grad) {
                auto& g = pg->grad_buf();
                for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f) {
                        size_t i = (size_t)b * F + f;
                        g[(size_t)f] += node.grad[i] * (*xhat)[i];
                    }
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buf();
                for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f) g[(size_t)f] += node.grad[(size_t)b * F + f];
            }
        };
    });
}

Tensor depthwise_causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    require_2d(x, "depthwise_causal_conv1d");
    require_2d(kernel, "depthwise_causal_conv1d");
    const int C = x.dim(0), T = x.dim(1), K = kernel.dim(1);
    if (kernel.dim(0) != C)
        throw shape_error("depthwise_causal_conv1d: kernel channel count mismatch");
    if (K < 1) throw shape_error("depthwise_causal_conv1d: kernel width must be >= 1");
    const bool has_bias = bias.defined();
    if (has_bias && (int)bias.size() != C)
        throw shape_error("depthwise_causal_conv1d: bias length mismatch");

    const auto& xv = x.value();
    const auto& kv = kernel.value();
    std::vector<double> out((size_t)C * T, 0.0);
    for (int c = 0; c < C; ++c) {
        const double* xr = xv.data() + (size_t)c * T;
        const double* kr = kv.data() + (size_t)c * K;
        double* orow = out.data() + (size_t)c * T;
        double b = has_bias ? bias.value()[(size_t)c] : 0.0;
        for (int t = 0; t < T; ++t) {
            double s = b;
            int j0 = std::max(0, K - 1 - t);
            for (int j = j0; j < K; ++j) s += kr[j] * xr[t - (K - 1) + j];
            orow[t] = s;
        }
    }
    std::vector<Tensor> inputs = {x, kernel};
    if (has_bias) inputs.push_back(bias);
    return make_op_result({C, T}, std::move(out), inputs, [=](detail::Node& node) {
        auto px = x.node(), pk = kernel.node();
        auto pbias = has_bias ? bias.node() : nullptr;
        node.backprop = [&node, px, pk, pbias, C, T, K]() {
            for (int c = 0; c < C; ++c) {
                const double* go = node.grad.data() + (size_t)c * T;
                const double* xr = px->value.data() + (size_t)c * T;
                const double* kr = pk->value.data() + (size_t)c * K;
                if (px->requires_grad) {
                    double* gx = px->grad_buf().data() + (size_t)c * T;
                    for (int t = 0; t < T; ++t) {
                        int j0 = std::max(0, K - 1 - t);
                        for (int j = j0; j < K; ++j) gx[t - (K - 1) + j] += go[t] * kr[j];
                    }
                }
                if (pk->requires_grad) {
                    double* gk = pk->grad_buf().data() + (size_t)c * K;
                    for (int t = 0; t < T; ++t) {
                        int j0 = std::max(0, K - 1 - t);
                        for (int j = j0; j < K; ++j) gk[j] += go[t] * xr[t - (K - 1) + j];
                    }
                }
                if (pbias && pbias->requires_grad) {
                    double s = 0.0;
                    for (int t = 0; t < T; ++t) s += go[t];
                    pbias->grad_buf()[(size_t)c] += s;
                }
            }
        };
    });
}

Tensor transpose(const Tensor& x) {
    require_2d(x, "transpose");
    const int R = x.dim(0), C = x.dim(1);
    std::vector<double> out((size_t)R * C);
    const auto& xv = x.value();
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) out[(size_t)c * R + r] = xv[(size_t)r * C + c];
    return make_op_result({C, R}, std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px, R, C]() {
            auto& g = px->grad_buf();
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) g[(size_t)r * C + c] += node.grad[(size_t)c * R + r];
        };
    });
}

Tensor reverse_rows(const Tensor& x) {
    require_2d(x, "reverse_rows");
    const int R = x.dim(0), C = x.dim(1);
    std::vector<double> out((size_t)R * C);
    const auto& xv = x.value();
    for (int r = 0; r < R; ++r)
        std::copy(xv.begin() + (size_t)r * C, xv.begin() + (size_t)(r + 1) * C,
                  out.begin() + (size_t)(R - 1 - r) * C);
    return make_op_result({R, C}, std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px, R, C]() {
            auto& g = px->grad_buf();
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c)
                    g[(size_t)r * C + c] += node.grad[(size_t)(R - 1 - r) * C + c];
        };
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_rows: no parts");
    const int C = parts[0].dim(1);
    int R = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p.dim(1) != C) throw shape_error("concat_rows: column mismatch");
        R += p.dim(0);
    }
    std::vector<double> out;
    out.reserve((size_t)R * C);
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    std::vector<int> row_of(parts.size());
    int acc = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
        row_of[i] = acc;
        acc += parts[i].dim(0);
    }
    return make_op_result({R, C}, std::move(out), parts, [=](detail::Node& node) {
        node.backprop = [&node, row_of, C]() {
            for (size_t i = 0; i < node.parents.size(); ++i) {
                auto& p = node.parents[i];
                if (!p->requires_grad) continue;
                auto& g = p->grad_buf();
                size_t off = (size_t)row_of[i] * C;
                for (size_t j = 0; j < g.size(); ++j) g[j] += node.grad[off + j];
            }
        };
    });
}

Tensor slice_rows(const Tensor& x, int start, int count) {
    require_2d(x, "slice_rows");
    const int R = x.dim(0), C = x.dim(1);
    if (start < 0 || count < 1 || start + count > R)
        throw shape_error("slice_rows: range [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") outside " + std::to_string(R) +
                          " rows");
    std::vector<double> out(x.value().begin() + (size_t)start * C,
                            x.value().begin() + (size_t)(start + count) * C);
    return make_op_result({count, C}, std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px, start, C]() {
            auto& g = px->grad_buf();
            size_t off = (size_t)start * C;
            for (size_t j = 0; j < node.grad.size(); ++j) g[off + j] += node.grad[j];
        };
    });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (shape_numel(shape) != x.size()) throw shape_error("reshape: element count mismatch");
    std::vector<double> out(x.value());
    return make_op_result(std::move(shape), std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px]() {
            auto& g = px->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
        };
    });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    return make_op_result({1}, {s}, {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px]() {
            auto& g = px->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[0];
        };
    });
}

Tensor mean_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    const double n = (double)x.size();
    return make_op_result({1}, {s / n}, {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px, n]() {
            auto& g = px->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[0] / n;
        };
    });
}

Tensor mean_rows(const Tensor& x) {
    require_2d(x, "mean_rows");
    const int R = x.dim(0), C = x.dim(1);
    std::vector<double> out((size_t)C, 0.0);
    const auto& xv = x.value();
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) out[(size_t)c] += xv[(size_t)r * C + c];
    for (double& v : out) v /= R;
    return make_op_result({1, C}, std::move(out), {x}, [=](detail::Node& node) {
        auto px = x.node();
        node.backprop = [&node, px, R, C]() {
            auto& g = px->grad_buf();
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) g[(size_t)r * C + c] += node.grad[(size_t)c] / R;
        };
    });
}

Tensor stack_scalars_row(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) throw shape_error("stack_scalars_row: no inputs");
    std::vector<double> out;
    out.reserve(scalars.size());
    for (const auto& s : scalars) {
        if (s.size() != 1) throw shape_error("stack_scalars_row: inputs must be scalars");
        out.push_back(s.value()[0]);
    }
    const int n = (int)scalars.size();
    return make_op_result({1, n}, std::move(out), scalars, [=](detail::Node& node) {
        node.backprop = [&node]() {
            for (size_t i = 0; i < node.parents.size(); ++i) {
                auto& p = node.parents[i];
                if (p->requires_grad) p->grad_buf()[0] += node.grad[i];
            }
        };
    });
}

Tensor scale_by_element(const Tensor& x, const Tensor& row, int idx) {
    if (idx < 0 || idx >= (int)row.size()) throw shape_error("scale_by_element: index out of range");
    const double w = row.value()[(size_t)idx];
    std::vector<double> out(x.value());
    for (double& v : out) v *= w;
    return make_op_result(x.shape(), std::move(out), {x, row}, [=](detail::Node& node) {
        auto px = x.node(), pr = row.node();
        node.backprop = [&node, px, pr, idx, w]() {
            if (px->requires_grad) {
                auto& g = px->grad_buf();
                for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * w;
            }
            if (pr->requires_grad) {
                double s = 0.0;
                for (size_t i = 0; i < node.grad.size(); ++i) s += node.grad[i] * px->value[i];
                pr->grad_buf()[(size_t)idx] += s;
            }
        };
    });
}

void softmax_row(const double* logits, int n, double* probs_out) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        probs_out[i] = std::exp(logits[i] - mx);
        z += probs_out[i];
    }
    for (int i = 0; i < n; ++i) probs_out[i] /= z;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_2d(logits, "cross_entropy");
    const int B = logits.dim(0), C = logits.dim(1);
    if ((int)labels.size() != B) throw shape_error("cross_entropy: one label per batch row");
    for (int y : labels)
        if (y < 0 || y >= C)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(C) + ")");
    auto probs = std::make_shared<std::vector<double>>((size_t)B * C);
    const auto& lv = logits.value();
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        softmax_row(lv.data() + (size_t)b * C, C, probs->data() + (size_t)b * C);
        loss -= std::log(std::max((*probs)[(size_t)b * C + labels[(size_t)b]], 1e-300));
    }
    loss /= B;
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    return make_op_result({1}, {loss}, {logits}, [=](detail::Node& node) {
        auto pl = logits.node();
        node.backprop = [&node, pl, probs, labels_copy, B, C]() {
            auto& g = pl->grad_buf();
            const double go = node.grad[0] / B;
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    double ind = (c == (*labels_copy)[(size_t)b]) ? 1.0 : 0.0;
                    g[(size_t)b * C + c] += go * ((*probs)[(size_t)b * C + c] - ind);
                }
        };
    });
}

}  // namespace s2m2
