#pragma once

#include "jmorph/layers.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace jmorph {

struct ConvBlockSpec {
  int out_channels = 10;
  bool batch_norm = true;
  bool relu = true;
  bool pool = false; // 2x2x2 max pool after the activation
};

struct ModelConfig {
  int in_channels = 1;
  std::array<int, 3> input_dim{32, 32, 32}; // (D, H, W)
  std::vector<ConvBlockSpec> conv_blocks;
  std::vector<int> fc; // hidden widths, class count last
  double dropout_p = 0.5;
  int num_classes = 4;

  void validate() const;
  // spatial dims after each block's pooling, index 0 = input
  std::vector<std::array<int, 3>> dims_through() const;
  int flat_dim() const;

  // Five shape-preserving conv blocks of 10 channels (pooling after the
  // first three), then FC 360 with dropout and the class layer.
  static ModelConfig baseline(int in_channels = 1);
  // Two-channel variant with two extra conv blocks before flattening.
  static ModelConfig multimodal();
};

std::string config_to_json(const ModelConfig &cfg);
ModelConfig config_from_json(const std::string &text);

// Everything the reverse pass and the explanation pass need from forward.
struct Activations {
  Tensor input;
  std::vector<Tensor> conv_in;  // block inputs
  std::vector<Tensor> conv_out; // raw conv outputs
  std::vector<BatchNorm::Cache> bn_cache;
  std::vector<Tensor> bn_out;
  std::vector<Tensor> act_out; // post-activation features, pre pooling
  std::vector<std::vector<size_t>> pool_arg;
  std::vector<std::vector<int>> pool_in_shape;
  Tensor flat;
  std::vector<Tensor> fc_in;
  std::vector<Tensor> fc_pre; // pre-activation dense outputs
  std::vector<uint8_t> drop_mask;
  Tensor logits;
};

struct Model {
  ModelConfig cfg;
  std::vector<Conv3d> convs;
  std::vector<BatchNorm> bns; // parallel to convs; unused entries stay empty
  std::vector<Dense> fcs;
  Rng drop_rng{0};

  static Model create(const ModelConfig &cfg, uint64_t seed);

  // Logits (N, num_classes), softmax deliberately left out. train switches
  // batch-norm to batch statistics and samples dropout masks.
  Tensor forward(const Tensor &x, bool train, Activations &acts);

  // Reverse pass seeded with an arbitrary logits cotangent; accumulates
  // parameter gradients. Optionally reports the input gradient and the
  // gradient at one block's post-activation features.
  void backward(const Activations &acts, const Tensor &dlogits,
                Tensor *input_grad = nullptr, int act_block = -1,
                Tensor *act_grad = nullptr);

  // Mean cross-entropy plus a full reverse pass in training mode.
  double loss_and_backward(const Tensor &x, const std::vector<int> &labels,
                           Tensor *input_grad = nullptr);

  struct ParamRef {
    std::string name;
    Tensor *t;
    bool trainable; // batch-norm running statistics travel as state
  };
  std::vector<ParamRef> params(); // fixed declaration order
  void zero_grads();
};

} // namespace jmorph
