#include <cmath>
#include <random>
#include <string>

#include "texsr/error.hpp"
#include "texsr/model.hpp"

namespace texsr {

namespace {

FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(Errc::shape_mismatch, "swapped features are " + std::to_string(b.height) + "x" +
                                          std::to_string(b.width) + ", activations " + std::to_string(a.height) +
                                          "x" + std::to_string(a.width));
  }
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

void fill_gaussian(std::vector<double>& w, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : w) v = dist(rng);
}

} // namespace

void Network::validate() const {
  if (layers.empty()) throw Error(Errc::invalid_argument, "network has no layers");
  for (const auto& l : layers) l.validate();
  if (concat_after) {
    if (*concat_after < 0 || *concat_after + 1 >= static_cast<int>(layers.size())) {
      throw Error(Errc::invalid_argument, "concat point must precede another layer");
    }
    if (concat_channels < 1) throw Error(Errc::invalid_argument, "concat needs >= 1 channel");
  } else if (concat_channels != 0) {
    throw Error(Errc::invalid_argument, "concat channels given without a concat point");
  }
  if (layers.front().in_channels != 1) throw Error(Errc::shape_mismatch, "first layer must take one channel");
  for (std::size_t n = 1; n < layers.size(); ++n) {
    int expect = layers[n - 1].out_channels;
    if (concat_after && static_cast<int>(n) - 1 == *concat_after) expect += concat_channels;
    if (layers[n].in_channels != expect) {
      throw Error(Errc::shape_mismatch, "layer " + std::to_string(n) + " takes " +
                                            std::to_string(layers[n].in_channels) + " channels, expected " +
                                            std::to_string(expect));
    }
  }
  if (layers.back().out_channels != 1 || layers.back().activation != Activation::identity) {
    throw Error(Errc::invalid_argument, "last layer must be single-channel and linear");
  }
}

Network make_srcnn(const SrcnnShape& s, std::uint64_t seed) {
  Network net;
  net.layers.emplace_back(1, s.width1, s.kernel1, Activation::rectifier);
  net.layers.emplace_back(s.width1 + s.concat_channels, s.width2, s.kernel2, Activation::rectifier);
  net.layers.emplace_back(s.width2, 1, s.kernel3, Activation::identity);
  if (s.concat_channels > 0) {
    net.concat_after = 0;
    net.concat_channels = s.concat_channels;
  }
  net.residual = s.residual;
  net.validate();

  std::mt19937_64 rng(seed);
  for (auto& l : net.layers) {
    const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
    const double gain = l.activation == Activation::rectifier ? 2.0 : 1.0;
    fill_gaussian(l.weight, std::sqrt(gain / fan_in), rng);
  }
  return net;
}

Network make_identity_network() {
  Network net;
  net.layers.emplace_back(1, 1, 1, Activation::identity);
  net.layers[0].weight[0] = 1.0;
  return net;
}

Image forward(const Network& net, const Image& input, const FeatureMap* swapped, ForwardTape* tape) {
  net.validate();
  if (net.uses_references() != (swapped != nullptr)) {
    throw Error(Errc::mode_mismatch, net.uses_references() ? "network expects swapped features"
                                                           : "network takes no swapped features");
  }
  if (swapped != nullptr && swapped->channels != net.concat_channels) {
    throw Error(Errc::shape_mismatch, "swapped features have " + std::to_string(swapped->channels) +
                                          " channels, network expects " + std::to_string(net.concat_channels));
  }
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->outputs.clear();
  }
  FeatureMap x = as_feature_map(input);
  for (std::size_t n = 0; n < net.layers.size(); ++n) {
    const auto& layer = net.layers[n];
    FeatureMap y = conv_forward(layer, x);
    if (layer.activation == Activation::rectifier)
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(x));
      tape->outputs.push_back(y);
    }
    x = (net.concat_after && static_cast<int>(n) == *net.concat_after) ? concat(y, *swapped) : std::move(y);
  }
  Image out(input.height, input.width, std::move(x.data));
  if (net.residual)
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += input.data[k];
  return out;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers) {
    g.weight.emplace_back(l.weight.size(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void Gradients::add(const Gradients& o) {
  if (o.weight.size() != weight.size()) throw Error(Errc::shape_mismatch, "gradient sets differ in layer count");
  for (std::size_t n = 0; n < weight.size(); ++n) {
    for (std::size_t k = 0; k < weight[n].size(); ++k) weight[n][k] += o.weight[n][k];
    for (std::size_t k = 0; k < bias[n].size(); ++k) bias[n][k] += o.bias[n][k];
  }
}

void Gradients::scale(double s) {
  for (auto& w : weight)
    for (double& v : w) v *= s;
  for (auto& b : bias)
    for (double& v : b) v *= s;
  for (double& v : input.data) v *= s;
}

Gradients backward(const Network& net, const ForwardTape& tape, const Image& grad_out, bool input_grad) {
  const std::size_t n_layers = net.layers.size();
  if (tape.inputs.size() != n_layers || tape.outputs.size() != n_layers) {
    throw Error(Errc::shape_mismatch, "tape has " + std::to_string(tape.inputs.size()) + " layers, network " +
                                          std::to_string(n_layers));
  }
  const FeatureMap& last = tape.outputs.back();
  if (grad_out.height != last.height || grad_out.width != last.width) {
    throw Error(Errc::shape_mismatch, "output gradient does not match the forward output");
  }
  Gradients g = Gradients::zeros_like(net);
  FeatureMap delta(1, grad_out.height, grad_out.width, grad_out.data);
  for (std::size_t n = n_layers; n-- > 0;) {
    const auto& layer = net.layers[n];
    if (layer.activation == Activation::rectifier) {
      const auto& out = tape.outputs[n];
      for (std::size_t k = 0; k < delta.size(); ++k)
        if (!(out.data[k] > 0.0)) delta.data[k] = 0.0;
    }
    const bool need_input = n > 0 || input_grad;
    FeatureMap grad_in;
    conv_backward(layer, tape.inputs[n], delta, g.weight[n], g.bias[n], need_input ? &grad_in : nullptr);
    if (!need_input) break;
    if (n > 0 && net.concat_after && static_cast<int>(n) - 1 == *net.concat_after) {
      // Drop the rows belonging to the constant swapped features.
      grad_in.data.resize(static_cast<std::size_t>(net.layers[n - 1].out_channels) * grad_in.plane_size());
      grad_in.channels = net.layers[n - 1].out_channels;
    }
    delta = std::move(grad_in);
  }
  if (input_grad) {
    g.input = Image(grad_out.height, grad_out.width, std::move(delta.data));
    if (net.residual)
      for (std::size_t k = 0; k < g.input.size(); ++k) g.input.data[k] += grad_out.data[k];
  }
  return g;
}

std::vector<std::span<double>> parameters(Network& net) {
  std::vector<std::span<double>> out;
  for (auto& l : net.layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> parameters(const Gradients& grads) {
  std::vector<std::span<const double>> out;
  for (std::size_t n = 0; n < grads.weight.size(); ++n) {
    out.emplace_back(grads.weight[n]);
    out.emplace_back(grads.bias[n]);
  }
  return out;
}

} // namespace texsr
