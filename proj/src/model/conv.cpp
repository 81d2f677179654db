#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "texsr/error.hpp"
#include "texsr/model.hpp"

namespace texsr {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedRows = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedRows = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using ConstKernel = Eigen::Map<const RowMatrix>;
using Kernel = Eigen::Map<RowMatrix>;

constexpr std::size_t kBandElements = std::size_t{1} << 19;

// Rows per band so that a band's column matrix stays cache-sized.
int band_rows(const ConvLayer& layer, int width) {
  const std::size_t rows = static_cast<std::size_t>(layer.in_channels) * layer.kernel * layer.kernel;
  const std::size_t pixels = std::max<std::size_t>(kBandElements / rows, 1);
  return static_cast<int>(std::max<std::size_t>(pixels / static_cast<std::size_t>(width), 1));
}

// Column matrix for output rows [y0, y1): one row per (c, ky, kx), one
// column per output pixel, sampled with clamped coordinates.
void im2col(const FeatureMap& in, int k, int y0, int y1, RowMatrix& col) {
  const int r = k / 2;
  const int h = in.height, w = in.width;
  const int cols = (y1 - y0) * w;
  col.resize(static_cast<Eigen::Index>(in.channels) * k * k, cols);
  Eigen::Index row = 0;
  for (int c = 0; c < in.channels; ++c) {
    const double* plane = in.data.data() + c * in.plane_size();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        double* dst = col.row(row).data();
        for (int y = y0; y < y1; ++y) {
          const double* src = plane + static_cast<std::size_t>(std::clamp(y + ky - r, 0, h - 1)) * w;
          const int dx = kx - r;
          const int lo = std::clamp(-dx, 0, w), hi = std::clamp(w - dx, 0, w);
          for (int x = 0; x < lo; ++x) *dst++ = src[0];
          for (int x = lo; x < hi; ++x) *dst++ = src[x + dx];
          for (int x = std::max(hi, lo); x < w; ++x) *dst++ = src[w - 1];
        }
      }
    }
  }
}

// Adjoint of im2col: adds each column entry back onto the pixel it was read from.
void col2im(const RowMatrix& col, int k, int y0, int y1, FeatureMap& out) {
  const int r = k / 2;
  const int h = out.height, w = out.width;
  Eigen::Index row = 0;
  for (int c = 0; c < out.channels; ++c) {
    double* plane = out.data.data() + c * out.plane_size();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const double* src = col.row(row).data();
        for (int y = y0; y < y1; ++y) {
          double* dst = plane + static_cast<std::size_t>(std::clamp(y + ky - r, 0, h - 1)) * w;
          const int dx = kx - r;
          const int lo = std::clamp(-dx, 0, w), hi = std::clamp(w - dx, 0, w);
          for (int x = 0; x < lo; ++x) dst[0] += *src++;
          for (int x = lo; x < hi; ++x) dst[x + dx] += *src++;
          for (int x = std::max(hi, lo); x < w; ++x) dst[w - 1] += *src++;
        }
      }
    }
  }
}

} // namespace

ConvLayer::ConvLayer(int in, int out, int k, Activation act)
    : in_channels(in), out_channels(out), kernel(k), activation(act) {
  validate();
  weight.assign(weight_count(), 0.0);
  bias.assign(static_cast<std::size_t>(out), 0.0);
}

void ConvLayer::validate() const {
  if (in_channels < 1 || out_channels < 1) throw Error(Errc::invalid_argument, "layer needs >= 1 channel each side");
  if (kernel < 1 || kernel % 2 == 0) {
    throw Error(Errc::invalid_argument, "kernel size " + std::to_string(kernel) + " is not odd");
  }
  if (!weight.empty() && weight.size() != weight_count()) throw Error(Errc::shape_mismatch, "kernel size mismatch");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_channels)) {
    throw Error(Errc::shape_mismatch, "bias size mismatch");
  }
}

FeatureMap conv_forward(const ConvLayer& layer, const FeatureMap& in) {
  if (in.channels != layer.in_channels) {
    throw Error(Errc::shape_mismatch, "layer expects " + std::to_string(layer.in_channels) + " channels, got " +
                                          std::to_string(in.channels));
  }
  const int k = layer.kernel;
  FeatureMap out(layer.out_channels, in.height, in.width);
  const auto plane = static_cast<Eigen::Index>(in.plane_size());
  const ConstKernel wmat(layer.weight.data(), layer.out_channels, static_cast<Eigen::Index>(layer.in_channels) * k * k);
  const int band = band_rows(layer, in.width);
  RowMatrix col;
  for (int y0 = 0; y0 < in.height; y0 += band) {
    const int y1 = std::min(in.height, y0 + band);
    im2col(in, k, y0, y1, col);
    StridedRows dst(out.data.data() + static_cast<std::size_t>(y0) * in.width, layer.out_channels, col.cols(),
                    Eigen::OuterStride<>(plane));
    dst.noalias() = wmat * col;
  }
  for (int o = 0; o < layer.out_channels; ++o)
    for (double& v : out.channel(o)) v += layer.bias[static_cast<std::size_t>(o)];
  return out;
}

void conv_backward(const ConvLayer& layer, const FeatureMap& in, const FeatureMap& grad_out,
                   std::span<double> grad_weight, std::span<double> grad_bias, FeatureMap* grad_in) {
  if (in.channels != layer.in_channels || grad_out.channels != layer.out_channels || grad_out.height != in.height ||
      grad_out.width != in.width) {
    throw Error(Errc::shape_mismatch, "tape does not match layer");
  }
  if (grad_weight.size() != layer.weight_count() || grad_bias.size() != layer.bias.size()) {
    throw Error(Errc::shape_mismatch, "gradient buffers do not match layer");
  }
  const int k = layer.kernel;
  const auto plane = static_cast<Eigen::Index>(in.plane_size());
  const auto rows = static_cast<Eigen::Index>(layer.in_channels) * k * k;
  const ConstKernel wmat(layer.weight.data(), layer.out_channels, rows);
  Kernel gw(grad_weight.data(), layer.out_channels, rows);
  if (grad_in != nullptr) *grad_in = FeatureMap(in.channels, in.height, in.width);

  const int band = band_rows(layer, in.width);
  RowMatrix col, dcol;
  for (int y0 = 0; y0 < in.height; y0 += band) {
    const int y1 = std::min(in.height, y0 + band);
    im2col(in, k, y0, y1, col);
    const ConstStridedRows g(grad_out.data.data() + static_cast<std::size_t>(y0) * in.width, layer.out_channels,
                             col.cols(), Eigen::OuterStride<>(plane));
    gw.noalias() += g * col.transpose();
    if (grad_in != nullptr) {
      dcol.noalias() = wmat.transpose() * g;
      col2im(dcol, k, y0, y1, *grad_in);
    }
  }
  for (int o = 0; o < layer.out_channels; ++o) {
    double s = 0.0;
    for (double v : grad_out.channel(o)) s += v;
    grad_bias[static_cast<std::size_t>(o)] += s;
  }
}

} // namespace texsr
