#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string_view>
#include <vector>

#include "texsr/image.hpp"
#include "texsr/model.hpp"
#include "texsr/scattering.hpp"

namespace texsr {

struct LossWeights {
  double w_rec = 1.0;
  double w_p = 0.05;
  double w_t = 0.01;

  void validate() const;
};

struct ImageLoss {
  double value = 0.0;
  Image grad;
};

struct FeatureLoss {
  double value = 0.0;
  FeatureMap grad;
};

/// Mean absolute error; the gradient uses sign(0) = 0.
ImageLoss loss_rec(const Image& sr, const Image& hr);

/// Row-major C x C Gram matrix, divided by H*W unless `normalized` is false.
std::vector<double> gram(const FeatureMap& fm, bool normalized = true);

/// ||gram(f_sr) - gram(f_swapped)||_F / (C*H*W). Zero gradient at zero value.
FeatureLoss loss_texture(const FeatureMap& f_sr, const FeatureMap& f_swapped, bool normalized_gram = true);

/// (1/S) * sum over channels of ||f_sr[i] - f_hr[i]||_F with S = C*H*W,
/// evaluated on already extracted features.
FeatureLoss feature_distance(const FeatureMap& f_sr, const FeatureMap& f_hr);

enum class ExtractorKind { scattering, random_conv };

/// Fixed differentiable feature operator used by the perceptual loss.
class PerceptualExtractor {
public:
  struct Trace {
    virtual ~Trace() = default;
  };

  virtual ~PerceptualExtractor() = default;
  virtual ExtractorKind kind() const noexcept = 0;
  virtual FeatureMap extract(const Image& img, std::unique_ptr<Trace>* trace = nullptr) const = 0;
  /// Vector-Jacobian product at the traced input.
  virtual Image backward(const Trace& trace, const FeatureMap& grad) const = 0;
};

/// Scattering transforms are built per image size on first use and cached.
class ScatteringExtractor final : public PerceptualExtractor {
public:
  explicit ScatteringExtractor(const ScatterConfig& cfg);

  ExtractorKind kind() const noexcept override { return ExtractorKind::scattering; }
  FeatureMap extract(const Image& img, std::unique_ptr<Trace>* trace = nullptr) const override;
  Image backward(const Trace& trace, const FeatureMap& grad) const override;

  const ScatterConfig& config() const noexcept { return cfg_; }
  std::shared_ptr<const ScatteringTransform> transform(int height, int width) const;

private:
  ScatterConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const ScatteringTransform>> cache_;
};

/// Three rectified 3x3 convolutions (1 -> width -> width -> width) with
/// fixed seeded weights.
class RandomConvExtractor final : public PerceptualExtractor {
public:
  explicit RandomConvExtractor(std::uint64_t seed, int width = 16);

  ExtractorKind kind() const noexcept override { return ExtractorKind::random_conv; }
  FeatureMap extract(const Image& img, std::unique_ptr<Trace>* trace = nullptr) const override;
  Image backward(const Trace& trace, const FeatureMap& grad) const override;

private:
  std::vector<ConvLayer> layers_;
};

ImageLoss loss_perceptual(const Image& sr, const Image& hr, const PerceptualExtractor& ext);

struct LossConfig {
  LossWeights weights;
  ScatterConfig scatter;
  ExtractorKind extractor = ExtractorKind::scattering;
  std::uint64_t extractor_seed = 1;
  bool normalized_gram = true;
};

struct LossBreakdown {
  double total = 0.0;
  double rec = 0.0;
  double perceptual = 0.0;
  double texture = 0.0;
  Image grad;
};

/// Weighted sum of the three losses. The texture term compares the
/// scattering of `sr` with `swapped`; when the perceptual extractor is the
/// same scattering, one forward and one backward pass serve both terms.
class TotalLoss {
public:
  explicit TotalLoss(const LossConfig& cfg);

  /// `hr_features`, when given, must equal the extractor applied to `hr`.
  LossBreakdown operator()(const Image& sr, const Image& hr, const FeatureMap* swapped,
                           const FeatureMap* hr_features = nullptr) const;

  FeatureMap perceptual_features(const Image& img) const { return extractor_->extract(img); }
  const LossConfig& config() const noexcept { return cfg_; }

private:
  LossConfig cfg_;
  std::unique_ptr<PerceptualExtractor> extractor_;
  std::unique_ptr<ScatteringExtractor> texture_;
};

LossBreakdown loss_total(const Image& sr, const Image& hr, const FeatureMap* swapped, const LossConfig& cfg);

std::unique_ptr<PerceptualExtractor> make_extractor(const LossConfig& cfg);

} // namespace texsr
