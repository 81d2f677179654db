#include <Eigen/Core>
#include <cmath>
#include <string>

#include "texsr/error.hpp"
#include "texsr/losses.hpp"

namespace texsr {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRows = Eigen::Map<const RowMatrix>;
using Rows = Eigen::Map<RowMatrix>;

void require_same(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw Error(Errc::shape_mismatch, std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                          std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

void require_same(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b)) throw Error(Errc::shape_mismatch, "feature maps differ in shape");
}

void add_scaled(Image& dst, const Image& src, double w) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst.data[k] += w * src.data[k];
}

} // namespace

void LossWeights::validate() const {
  if (!(w_rec >= 0.0) || !(w_p >= 0.0) || !(w_t >= 0.0)) {
    throw Error(Errc::invalid_argument, "loss weights must be nonnegative");
  }
  if (w_rec == 0.0 && w_p == 0.0 && w_t == 0.0) throw Error(Errc::invalid_argument, "all loss weights are zero");
}

ImageLoss loss_rec(const Image& sr, const Image& hr) {
  require_same(sr, hr);
  const double n = static_cast<double>(sr.size());
  ImageLoss out{0.0, Image(sr.height, sr.width)};
  for (std::size_t k = 0; k < sr.size(); ++k) {
    const double d = sr.data[k] - hr.data[k];
    out.value += std::abs(d);
    out.grad.data[k] = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n;
  }
  out.value /= n;
  return out;
}

std::vector<double> gram(const FeatureMap& fm, bool normalized) {
  const auto c = static_cast<Eigen::Index>(fm.channels);
  const auto p = static_cast<Eigen::Index>(fm.plane_size());
  std::vector<double> g(static_cast<std::size_t>(c * c));
  const ConstRows f(fm.data.data(), c, p);
  Rows out(g.data(), c, c);
  out.noalias() = f * f.transpose();
  if (normalized && p > 0) out /= static_cast<double>(p);
  out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  return g;
}

FeatureLoss loss_texture(const FeatureMap& f_sr, const FeatureMap& f_swapped, bool normalized_gram) {
  require_same(f_sr, f_swapped);
  const auto c = static_cast<Eigen::Index>(f_sr.channels);
  const auto p = static_cast<Eigen::Index>(f_sr.plane_size());
  const double size = static_cast<double>(f_sr.size());

  auto d = gram(f_sr, normalized_gram);
  const auto g2 = gram(f_swapped, normalized_gram);
  double ss = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    d[k] -= g2[k];
    ss += d[k] * d[k];
  }
  const double norm = std::sqrt(ss);
  FeatureLoss out{norm / size, FeatureMap(f_sr.channels, f_sr.height, f_sr.width)};
  if (norm == 0.0) return out;

  // d/dF ||D||_F = D F * 2 / (||D|| * P) for the normalized Gram.
  const double scale = 2.0 / (norm * size * (normalized_gram ? static_cast<double>(p) : 1.0));
  const ConstRows dm(d.data(), c, c);
  const ConstRows f(f_sr.data.data(), c, p);
  Rows g(out.grad.data.data(), c, p);
  g.noalias() = dm * f;
  g *= scale;
  return out;
}

FeatureLoss feature_distance(const FeatureMap& f_sr, const FeatureMap& f_hr) {
  require_same(f_sr, f_hr);
  const double s = static_cast<double>(f_sr.size());
  FeatureLoss out{0.0, FeatureMap(f_sr.channels, f_sr.height, f_sr.width)};
  for (int c = 0; c < f_sr.channels; ++c) {
    const auto a = f_sr.channel(c);
    const auto b = f_hr.channel(c);
    double ss = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
    const double norm = std::sqrt(ss);
    out.value += norm;
    if (norm == 0.0) continue;
    auto g = out.grad.channel(c);
    for (std::size_t k = 0; k < a.size(); ++k) g[k] = (a[k] - b[k]) / (norm * s);
  }
  out.value /= s;
  return out;
}

ImageLoss loss_perceptual(const Image& sr, const Image& hr, const PerceptualExtractor& ext) {
  require_same(sr, hr);
  std::unique_ptr<PerceptualExtractor::Trace> trace;
  const FeatureMap f_sr = ext.extract(sr, &trace);
  const FeatureLoss d = feature_distance(f_sr, ext.extract(hr));
  return {d.value, ext.backward(*trace, d.grad)};
}

TotalLoss::TotalLoss(const LossConfig& cfg) : cfg_(cfg) {
  cfg_.weights.validate();
  cfg_.scatter.validate();
  extractor_ = make_extractor(cfg_);
  if (extractor_->kind() != ExtractorKind::scattering) texture_ = std::make_unique<ScatteringExtractor>(cfg_.scatter);
}

LossBreakdown TotalLoss::operator()(const Image& sr, const Image& hr, const FeatureMap* swapped,
                                    const FeatureMap* hr_features) const {
  require_same(sr, hr);
  const auto& w = cfg_.weights;
  if (w.w_t > 0.0 && swapped == nullptr) {
    throw Error(Errc::missing_reference, "texture loss needs swapped features");
  }
  LossBreakdown out;
  out.grad = Image(sr.height, sr.width);

  if (w.w_rec > 0.0) {
    const ImageLoss rec = loss_rec(sr, hr);
    out.rec = rec.value;
    add_scaled(out.grad, rec.grad, w.w_rec);
  }

  const bool shared = texture_ == nullptr;
  if (w.w_p > 0.0 || (w.w_t > 0.0 && shared)) {
    std::unique_ptr<PerceptualExtractor::Trace> trace;
    const FeatureMap f_sr = extractor_->extract(sr, &trace);
    FeatureMap g(f_sr.channels, f_sr.height, f_sr.width);
    if (w.w_p > 0.0) {
      const FeatureMap f_hr = hr_features != nullptr ? *hr_features : extractor_->extract(hr);
      const FeatureLoss p = feature_distance(f_sr, f_hr);
      out.perceptual = p.value;
      for (std::size_t k = 0; k < g.size(); ++k) g.data[k] = w.w_p * p.grad.data[k];
    }
    if (w.w_t > 0.0 && shared) {
      const FeatureLoss t = loss_texture(f_sr, *swapped, cfg_.normalized_gram);
      out.texture = t.value;
      for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += w.w_t * t.grad.data[k];
    }
    add_scaled(out.grad, extractor_->backward(*trace, g), 1.0);
  }
  if (w.w_t > 0.0 && !shared) {
    std::unique_ptr<PerceptualExtractor::Trace> trace;
    const FeatureMap f_sr = texture_->extract(sr, &trace);
    FeatureLoss t = loss_texture(f_sr, *swapped, cfg_.normalized_gram);
    out.texture = t.value;
    for (double& v : t.grad.data) v *= w.w_t;
    add_scaled(out.grad, texture_->backward(*trace, t.grad), 1.0);
  }
  out.total = w.w_rec * out.rec + w.w_p * out.perceptual + w.w_t * out.texture;
  return out;
}

LossBreakdown loss_total(const Image& sr, const Image& hr, const FeatureMap* swapped, const LossConfig& cfg) {
  return TotalLoss(cfg)(sr, hr, swapped);
}

} // namespace texsr
