#pragma once

#include "jmorph/rng.hpp"
#include "jmorph/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace jmorph {

// Layers own their parameters and accumulate into the parameter `grad`
// buffers on backward. Backward methods return the input gradient. All
// activation tensors are (N, C, D, H, W); fully connected ones are (N, F).

// 3x3x3 convolution, stride 1, zero padding 1: shape preserving.
struct Conv3d {
  int cin = 0, cout = 0;
  Tensor w; // (cout, cin, 3, 3, 3)
  Tensor b; // (cout)

  static Conv3d create(int cin, int cout, Rng &rng); // He-uniform, zero bias
  Tensor forward(const Tensor &x) const;
  Tensor backward(const Tensor &x, const Tensor &dy);
};

// Per-channel normalization over the (N, D, H, W) slab.
struct BatchNorm {
  int channels = 0;
  double momentum = 0.1;
  double eps = 1e-5;
  Tensor gamma, beta;              // learned
  Tensor running_mean, running_var; // inference statistics

  struct Cache {
    bool train = false;
    std::vector<double> inv_std; // per channel
    Tensor xhat;
  };

  static BatchNorm create(int channels);
  // train: batch statistics, running averages updated in place
  // eval: running statistics, an affine map per channel
  Tensor forward(const Tensor &x, bool train, Cache &cache);
  Tensor backward(const Cache &cache, const Tensor &dy);
};

// 2x2x2 max pooling, stride 2, floor semantics: odd trailing slices drop.
struct MaxPool {
  Tensor forward(const Tensor &x, std::vector<size_t> &argmax) const;
  Tensor backward(const std::vector<size_t> &argmax,
                  const std::vector<int> &xshape, const Tensor &dy) const;
};

struct Dense {
  int in = 0, out = 0;
  Tensor w; // (out, in)
  Tensor b; // (out)

  static Dense create(int in, int out, Rng &rng);
  Tensor forward(const Tensor &x) const;
  Tensor backward(const Tensor &x, const Tensor &dy);
};

Tensor relu_forward(const Tensor &x);
Tensor relu_backward(const Tensor &x, const Tensor &dy);

// Inverted dropout: kept units scale by 1/(1-p) so eval is a no-op.
Tensor dropout_forward(const Tensor &x, double p, bool train, Rng &rng,
                       std::vector<uint8_t> &mask);
Tensor dropout_backward(const std::vector<uint8_t> &mask, double p,
                        const Tensor &dy);

// Row-wise stable softmax of (N, K) logits.
Tensor softmax(const Tensor &logits);

// Mean cross-entropy over the batch and its logits gradient.
std::pair<double, Tensor> cross_entropy(const Tensor &logits,
                                        const std::vector<int> &labels);

} // namespace jmorph
