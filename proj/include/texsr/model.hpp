#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "texsr/image.hpp"

namespace texsr {

enum class Activation { rectifier, identity };

/// Same-size 2D convolution with replicated borders. Kernel layout is
/// [out][in][ky][kx].
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  Activation activation = Activation::identity;
  std::vector<double> weight;
  std::vector<double> bias;

  ConvLayer() = default;
  ConvLayer(int in, int out, int k, Activation act);

  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
  void validate() const;
  bool operator==(const ConvLayer&) const = default;
};

/// Pre-activation convolution. Any number of threads may call this on the
/// same layer.
FeatureMap conv_forward(const ConvLayer& layer, const FeatureMap& in);

/// Given dL/d(pre-activation output), accumulates kernel and bias gradients
/// and, when `grad_in` is non-null, writes dL/d(input).
void conv_backward(const ConvLayer& layer, const FeatureMap& in, const FeatureMap& grad_out,
                   std::span<double> grad_weight, std::span<double> grad_bias, FeatureMap* grad_in);

struct Network {
  std::vector<ConvLayer> layers;
  /// Layer whose output receives the swapped feature map as extra channels.
  std::optional<int> concat_after;
  int concat_channels = 0;
  /// Adds the network input to the final output.
  bool residual = false;

  void validate() const;
  bool uses_references() const noexcept { return concat_after.has_value(); }
  bool operator==(const Network&) const = default;
};

struct SrcnnShape {
  int width1 = 64;
  int width2 = 32;
  int kernel1 = 9;
  int kernel2 = 5;
  int kernel3 = 5;
  /// Swapped-feature channels concatenated after the first layer; 0 disables.
  int concat_channels = 0;
  bool residual = false;
};

/// Three-layer SRCNN with fan-in scaled Gaussian weights and zero biases.
Network make_srcnn(const SrcnnShape& shape, std::uint64_t seed);

/// Single 1x1 layer with unit weight: forward returns its input.
Network make_identity_network();

struct ForwardTape {
  std::vector<FeatureMap> inputs;   // input of each layer, after concatenation
  std::vector<FeatureMap> outputs;  // post-activation output of each layer
};

Image forward(const Network& net, const Image& input, const FeatureMap* swapped = nullptr,
              ForwardTape* tape = nullptr);

struct Gradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
  Image input;

  static Gradients zeros_like(const Network& net);
  void add(const Gradients& other);
  void scale(double s);
};

/// Reverse pass. The swapped feature map is a constant, so no gradient is
/// returned for it. `input_grad` false skips the input gradient.
Gradients backward(const Network& net, const ForwardTape& tape, const Image& grad_out, bool input_grad = true);

std::vector<std::span<double>> parameters(Network& net);
std::vector<std::span<const double>> parameters(const Gradients& grads);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam(const Network& net, double lr = 1e-4);

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state);
void adam_step(Network& net, const Gradients& grads, AdamState& state);

struct Checkpoint {
  Network net;
  AdamState adam;
  std::uint64_t step = 0;
  /// Free-form JSON object stored alongside (run metadata). Key order is
  /// kept; loading returns its compact serialization.
  std::string metadata = "{}";
};

/// Single file: "TXCK", u32 version, u32 manifest length, JSON manifest,
/// then one float64 STTF tensor per parameter and moment in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads and requires the architecture of `expected`; differing layer
/// shapes or concat layout raise shape_mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Network& expected);

} // namespace texsr
