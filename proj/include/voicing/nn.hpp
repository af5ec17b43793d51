#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voicing/common.hpp"

// Feedforward and 1-D convolutional networks from first principles: valid
// convolution (stride 1), rectifier activations, non-overlapping max-pooling,
// fully connected layers and a single logistic output unit. Training uses
// exact gradients of the weighted binary cross-entropy and Adam updates.

namespace voicing::models {

struct ConvBlockConfig {
  int n_filters = 0;
  int kernel_len = 0;
  int pool_len = 1;
};

struct NetworkConfig {
  int input_len = 0;
  int input_channels = 1;
  std::vector<ConvBlockConfig> conv_blocks;  // empty means plain feedforward
  std::vector<int> fc_sizes;                 // hidden layers; the 1-unit output is implicit
  std::uint64_t seed = 1;
};

// Scratch buffers for one forward/backward pass; reusable across calls,
// one per thread.
struct Workspace {
  // Post-activation values per stage, channel-major; [0] is the input copy.
  std::vector<std::vector<double>> stages;
  std::vector<std::vector<double>> preacts;      // pre-activation values per stage
  std::vector<std::vector<std::size_t>> argmax;  // pool routing, per pool stage
  double logit = 0.0;
};

class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  std::size_t n_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Posterior probability of the positive (voiced) class.
  double forward(std::span<const double> input, Workspace& ws) const;

  // Weighted binary cross-entropy -w [y log p + (1-y) log(1-p)], evaluated
  // through the logit for stability.
  double loss(std::span<const double> input, double y, double weight, Workspace& ws) const;

  // Accumulates exact parameter gradients of the weighted loss into `grad`
  // (same layout as params) and returns the loss. Throws NumericError with
  // the offending stage index when activations go non-finite.
  double backward(std::span<const double> input, double y, double weight, Workspace& ws,
                  std::span<double> grad) const;

  // Shape of the feature map entering stage `stage` of the conv stack
  // (post-pool), for tests that inspect translation behaviour.
  struct StageShape {
    int channels = 0;
    int length = 0;
  };
  const std::vector<StageShape>& conv_shapes() const { return conv_shapes_; }

  static Network deserialize(const NetworkConfig& config, std::vector<double> params);

 private:
  struct Layer {
    enum class Kind { kConv, kPool, kDense } kind;
    int in_channels = 0, in_len = 0;
    int out_channels = 0, out_len = 0;
    int kernel_len = 0;  // conv kernel or pool window
    bool relu = true;    // dense output layer is linear
    std::size_t weight_offset = 0, bias_offset = 0;
  };

  void init_params();

  NetworkConfig config_;
  std::vector<Layer> layers_;
  std::vector<StageShape> conv_shapes_;
  std::vector<double> params_;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  explicit AdamState(std::size_t n_params = 0, double lr = 1e-3)
      : learning_rate(lr), first_moment(n_params, 0.0), second_moment(n_params, 0.0) {}
};

// One bias-corrected Adam update; moments and parameters must agree in size.
void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads);

}  // namespace voicing::models
