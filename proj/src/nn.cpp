#include "voicing/nn.hpp"

#include <cmath>
#include <random>

namespace voicing::models {

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  if (config_.input_len <= 0 || config_.input_channels <= 0)
    throw UsageError("network: input shape must be positive");

  int channels = config_.input_channels;
  int length = config_.input_len;
  std::size_t offset = 0;
  conv_shapes_.push_back({channels, length});
  for (const auto& block : config_.conv_blocks) {
    if (block.n_filters <= 0 || block.kernel_len <= 0 || block.pool_len <= 0)
      throw UsageError("network: conv block fields must be positive");
    if (block.kernel_len > length)
      throw UsageError("network: kernel longer than its input (" +
                       std::to_string(block.kernel_len) + " > " + std::to_string(length) + ")");
    Layer conv;
    conv.kind = Layer::Kind::kConv;
    conv.in_channels = channels;
    conv.in_len = length;
    conv.out_channels = block.n_filters;
    conv.out_len = length - block.kernel_len + 1;
    conv.kernel_len = block.kernel_len;
    conv.weight_offset = offset;
    offset += std::size_t(block.n_filters) * std::size_t(channels) * std::size_t(block.kernel_len);
    conv.bias_offset = offset;
    offset += std::size_t(block.n_filters);
    layers_.push_back(conv);
    channels = conv.out_channels;
    length = conv.out_len;

    if (block.pool_len > 1) {
      Layer pool;
      pool.kind = Layer::Kind::kPool;
      pool.in_channels = channels;
      pool.in_len = length;
      pool.out_channels = channels;
      pool.out_len = length / block.pool_len;  // tail samples beyond full windows drop
      pool.kernel_len = block.pool_len;
      if (pool.out_len <= 0) throw UsageError("network: pooling collapses the feature map");
      layers_.push_back(pool);
      length = pool.out_len;
    }
    conv_shapes_.push_back({channels, length});
  }

  int width = channels * length;
  if (width <= 0) throw UsageError("network: flattened size must be positive");
  std::vector<int> dense_sizes = config_.fc_sizes;
  dense_sizes.push_back(1);  // logistic output unit
  for (std::size_t i = 0; i < dense_sizes.size(); ++i) {
    const int out = dense_sizes[i];
    if (out <= 0) throw UsageError("network: fc sizes must be positive");
    Layer dense;
    dense.kind = Layer::Kind::kDense;
    dense.in_channels = 1;
    dense.in_len = width;
    dense.out_channels = 1;
    dense.out_len = out;
    dense.relu = i + 1 < dense_sizes.size();
    dense.weight_offset = offset;
    offset += std::size_t(out) * std::size_t(width);
    dense.bias_offset = offset;
    offset += std::size_t(out);
    layers_.push_back(dense);
    width = out;
  }

  params_.assign(offset, 0.0);
  init_params();
}

void Network::init_params() {
  // Fan-in scaled uniform weights, zero biases.
  std::mt19937_64 rng(config_.seed);
  for (const auto& layer : layers_) {
    if (layer.kind == Layer::Kind::kPool) continue;
    const std::size_t fan_in = layer.kind == Layer::Kind::kConv
                                   ? std::size_t(layer.in_channels) * std::size_t(layer.kernel_len)
                                   : std::size_t(layer.in_len);
    const double limit = std::sqrt(3.0 / double(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t n_weights = layer.bias_offset - layer.weight_offset;
    for (std::size_t i = 0; i < n_weights; ++i) params_[layer.weight_offset + i] = dist(rng);
  }
}

Network Network::deserialize(const NetworkConfig& config, std::vector<double> params) {
  Network net(config);
  if (params.size() != net.params_.size())
    throw DataError("network: parameter blob size " + std::to_string(params.size()) +
                    " does not match architecture (" + std::to_string(net.params_.size()) + ")");
  net.params_ = std::move(params);
  return net;
}

namespace {

double stable_softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double Network::forward(std::span<const double> input, Workspace& ws) const {
  if (input.size() != std::size_t(config_.input_len) * std::size_t(config_.input_channels))
    throw DataError("network: input size " + std::to_string(input.size()) +
                    " does not match configured " +
                    std::to_string(config_.input_len * config_.input_channels));

  ws.stages.assign(layers_.size() + 1, {});
  ws.preacts.assign(layers_.size(), {});
  ws.argmax.assign(layers_.size(), {});
  ws.stages[0].assign(input.begin(), input.end());

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& layer = layers_[li];
    const auto& in = ws.stages[li];
    auto& pre = ws.preacts[li];
    auto& out = ws.stages[li + 1];
    switch (layer.kind) {
      case Layer::Kind::kConv: {
        pre.assign(std::size_t(layer.out_channels) * std::size_t(layer.out_len), 0.0);
        for (int oc = 0; oc < layer.out_channels; ++oc) {
          const double bias = params_[layer.bias_offset + std::size_t(oc)];
          for (int i = 0; i < layer.out_len; ++i) {
            double acc = bias;
            for (int ic = 0; ic < layer.in_channels; ++ic) {
              const double* w = &params_[layer.weight_offset +
                                         (std::size_t(oc) * std::size_t(layer.in_channels) +
                                          std::size_t(ic)) *
                                             std::size_t(layer.kernel_len)];
              const double* x = &in[std::size_t(ic) * std::size_t(layer.in_len) + std::size_t(i)];
              for (int k = 0; k < layer.kernel_len; ++k) acc += w[k] * x[k];
            }
            pre[std::size_t(oc) * std::size_t(layer.out_len) + std::size_t(i)] = acc;
          }
        }
        out.resize(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) out[i] = std::max(pre[i], 0.0);
        break;
      }
      case Layer::Kind::kPool: {
        out.assign(std::size_t(layer.out_channels) * std::size_t(layer.out_len), 0.0);
        ws.argmax[li].assign(out.size(), 0);
        for (int c = 0; c < layer.out_channels; ++c)
          for (int i = 0; i < layer.out_len; ++i) {
            const std::size_t base =
                std::size_t(c) * std::size_t(layer.in_len) + std::size_t(i * layer.kernel_len);
            std::size_t best = base;
            for (int k = 1; k < layer.kernel_len; ++k)
              if (in[base + std::size_t(k)] > in[best]) best = base + std::size_t(k);
            const std::size_t oi = std::size_t(c) * std::size_t(layer.out_len) + std::size_t(i);
            out[oi] = in[best];
            ws.argmax[li][oi] = best;
          }
        break;
      }
      case Layer::Kind::kDense: {
        pre.assign(std::size_t(layer.out_len), 0.0);
        for (int o = 0; o < layer.out_len; ++o) {
          double acc = params_[layer.bias_offset + std::size_t(o)];
          const double* w =
              &params_[layer.weight_offset + std::size_t(o) * std::size_t(layer.in_len)];
          for (int i = 0; i < layer.in_len; ++i) acc += w[i] * in[std::size_t(i)];
          pre[std::size_t(o)] = acc;
        }
        out.resize(pre.size());
        if (layer.relu)
          for (std::size_t i = 0; i < pre.size(); ++i) out[i] = std::max(pre[i], 0.0);
        else
          out = pre;
        break;
      }
    }
    for (const double v : out)
      if (!std::isfinite(v))
        throw NumericError("network: non-finite activation at stage " + std::to_string(li));
  }
  ws.logit = ws.stages.back()[0];
  return sigmoid(ws.logit);
}

double Network::loss(std::span<const double> input, double y, double weight,
                     Workspace& ws) const {
  forward(input, ws);
  // -w [y log p + (1-y) log(1-p)] = w [softplus(z) - y z]
  return weight * (stable_softplus(ws.logit) - y * ws.logit);
}

double Network::backward(std::span<const double> input, double y, double weight,
                         Workspace& ws, std::span<double> grad) const {
  if (grad.size() != params_.size())
    throw UsageError("network: gradient buffer size mismatch");
  const double loss_value = loss(input, y, weight, ws);

  // d loss / d logit
  std::vector<double> delta{weight * (sigmoid(ws.logit) - y)};
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const auto& in = ws.stages[li];
    std::vector<double> delta_in;
    switch (layer.kind) {
      case Layer::Kind::kDense: {
        if (layer.relu)
          for (std::size_t o = 0; o < delta.size(); ++o)
            if (ws.preacts[li][o] <= 0.0) delta[o] = 0.0;
        delta_in.assign(std::size_t(layer.in_len), 0.0);
        for (int o = 0; o < layer.out_len; ++o) {
          const double d = delta[std::size_t(o)];
          grad[layer.bias_offset + std::size_t(o)] += d;
          const std::size_t w0 = layer.weight_offset + std::size_t(o) * std::size_t(layer.in_len);
          for (int i = 0; i < layer.in_len; ++i) {
            grad[w0 + std::size_t(i)] += d * in[std::size_t(i)];
            delta_in[std::size_t(i)] += d * params_[w0 + std::size_t(i)];
          }
        }
        break;
      }
      case Layer::Kind::kPool: {
        // Subgradient: route each pooled delta to its argmax position only.
        delta_in.assign(in.size(), 0.0);
        for (std::size_t oi = 0; oi < delta.size(); ++oi)
          delta_in[ws.argmax[li][oi]] += delta[oi];
        break;
      }
      case Layer::Kind::kConv: {
        for (std::size_t i = 0; i < delta.size(); ++i)
          if (ws.preacts[li][i] <= 0.0) delta[i] = 0.0;
        delta_in.assign(in.size(), 0.0);
        for (int oc = 0; oc < layer.out_channels; ++oc) {
          double bias_grad = 0.0;
          for (int i = 0; i < layer.out_len; ++i) {
            const double d =
                delta[std::size_t(oc) * std::size_t(layer.out_len) + std::size_t(i)];
            if (d == 0.0) continue;
            bias_grad += d;
            for (int ic = 0; ic < layer.in_channels; ++ic) {
              const std::size_t w0 =
                  layer.weight_offset + (std::size_t(oc) * std::size_t(layer.in_channels) +
                                         std::size_t(ic)) *
                                            std::size_t(layer.kernel_len);
              const std::size_t x0 =
                  std::size_t(ic) * std::size_t(layer.in_len) + std::size_t(i);
              for (int k = 0; k < layer.kernel_len; ++k) {
                grad[w0 + std::size_t(k)] += d * in[x0 + std::size_t(k)];
                delta_in[x0 + std::size_t(k)] += d * params_[w0 + std::size_t(k)];
              }
            }
          }
          grad[layer.bias_offset + std::size_t(oc)] += bias_grad;
        }
        break;
      }
    }
    delta = std::move(delta_in);
  }
  return loss_value;
}

void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw UsageError("adam: parameter, gradient and moment sizes must agree");
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, double(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g;
    state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
    const double m_hat = state.first_moment[i] / bc1;
    const double v_hat = state.second_moment[i] / bc2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace voicing::models
