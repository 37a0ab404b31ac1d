// Differentiable primitives over Tensor. 2-D tensors are row-major {rows, cols}.

#ifndef S2M2_NN_OPS_HPP
#define S2M2_NN_OPS_HPP

#include "s2m2/tensor.hpp"

namespace s2m2 {

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_bias_rows(const Tensor& x, const Tensor& bias);  // x{R,C} + bias{1,C}

// elementwise activations
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);  // log(1+exp(x)), returns x for x > 30

// normalization
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Training mode normalizes over the batch axis and refreshes the running
// stats in place (momentum 0.1, torch convention); eval mode reads them.
Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     Tensor& running_mean, Tensor& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5);

// x{C,T} convolved per channel with kernel{C,K}, left-padded with K-1 zeros
// so out[c,t] never depends on x[c,t'] for t' > t. bias may be undefined.
Tensor depthwise_causal_conv1d(const Tensor& x, const Tensor& kernel,
                               const Tensor& bias = Tensor());

// shaping
Tensor transpose(const Tensor& x);
Tensor reverse_rows(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int start, int count);
Tensor reshape(const Tensor& x, std::vector<int> shape);

// reductions
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // {R,C} -> {1,C}

// glue
Tensor stack_scalars_row(const std::vector<Tensor>& scalars);     // n scalars -> {1,n}
Tensor scale_by_element(const Tensor& x, const Tensor& row, int idx);

// mean over the batch of -log softmax(logits)[label]; max-subtracted
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// raw helpers shared with the inference-side code
void softmax_row(const double* logits, int n, double* probs_out);

}  // namespace s2m2

#endif
