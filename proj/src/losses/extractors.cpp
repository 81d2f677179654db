#include <cmath>
#include <random>

#include "texsr/error.hpp"
#include "texsr/losses.hpp"

namespace texsr {

namespace {

struct ScatterTrace final : PerceptualExtractor::Trace {
  std::shared_ptr<const ScatteringTransform> transform;
  ScatterTape tape;
};

struct ConvTrace final : PerceptualExtractor::Trace {
  std::vector<FeatureMap> inputs;
  std::vector<FeatureMap> outputs;
};

} // namespace

ScatteringExtractor::ScatteringExtractor(const ScatterConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

std::shared_ptr<const ScatteringTransform> ScatteringExtractor::transform(int height, int width) const {
  std::lock_guard lock(mutex_);
  auto& slot = cache_[{height, width}];
  if (!slot) slot = std::make_shared<const ScatteringTransform>(cfg_, height, width);
  return slot;
}

FeatureMap ScatteringExtractor::extract(const Image& img, std::unique_ptr<Trace>* trace) const {
  auto st = transform(img.height, img.width);
  if (trace == nullptr) return st->forward(img);
  auto t = std::make_unique<ScatterTrace>();
  t->transform = st;
  FeatureMap out = st->forward(img, &t->tape);
  *trace = std::move(t);
  return out;
}

Image ScatteringExtractor::backward(const Trace& trace, const FeatureMap& grad) const {
  const auto* t = dynamic_cast<const ScatterTrace*>(&trace);
  if (t == nullptr) throw Error(Errc::invalid_argument, "trace was not produced by a scattering extractor");
  return t->transform->backward(t->tape, grad);
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, int width) {
  std::mt19937_64 rng(seed);
  for (int n = 0; n < 3; ++n) {
    ConvLayer l(n == 0 ? 1 : width, width, 3, Activation::rectifier);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (l.in_channels * 9.0)));
    for (double& w : l.weight) w = dist(rng);
    layers_.push_back(std::move(l));
  }
}

FeatureMap RandomConvExtractor::extract(const Image& img, std::unique_ptr<Trace>* trace) const {
  auto t = std::make_unique<ConvTrace>();
  FeatureMap x = as_feature_map(img);
  for (const auto& l : layers_) {
    FeatureMap y = conv_forward(l, x);
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    if (trace != nullptr) {
      t->inputs.push_back(std::move(x));
      t->outputs.push_back(y);
    }
    x = std::move(y);
  }
  if (trace != nullptr) *trace = std::move(t);
  return x;
}

Image RandomConvExtractor::backward(const Trace& trace, const FeatureMap& grad) const {
  const auto* t = dynamic_cast<const ConvTrace*>(&trace);
  if (t == nullptr || t->inputs.size() != layers_.size()) {
    throw Error(Errc::invalid_argument, "trace was not produced by this extractor");
  }
  FeatureMap delta = grad;
  for (std::size_t n = layers_.size(); n-- > 0;) {
    const auto& out = t->outputs[n];
    if (!delta.same_shape(out)) throw Error(Errc::shape_mismatch, "feature gradient does not match the trace");
    for (std::size_t k = 0; k < delta.size(); ++k)
      if (!(out.data[k] > 0.0)) delta.data[k] = 0.0;
    std::vector<double> gw(layers_[n].weight_count()), gb(layers_[n].bias.size());
    FeatureMap grad_in;
    conv_backward(layers_[n], t->inputs[n], delta, gw, gb, &grad_in);
    delta = std::move(grad_in);
  }
  return Image(delta.height, delta.width, std::move(delta.data));
}

std::unique_ptr<PerceptualExtractor> make_extractor(const LossConfig& cfg) {
  if (cfg.extractor == ExtractorKind::random_conv) return std::make_unique<RandomConvExtractor>(cfg.extractor_seed);
  return std::make_unique<ScatteringExtractor>(cfg.scatter);
}

} // namespace texsr
