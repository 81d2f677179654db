#include "texsr/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "texsr/error.hpp"
#include "texsr/resample.hpp"

namespace texsr {

namespace {

constexpr double kMinNorm = 1e-12;
constexpr std::size_t kPanel = 8;        // reference patches per panel
constexpr std::size_t kGroup = 4;        // input patches sharing one pass over a panel
constexpr std::size_t kInputBlock = 64;  // input patches kept hot while panels stream

void prepare_patch(std::span<const double> p, SimilarityMode mode, double* out) {
  if (mode == SimilarityMode::dot) {
    std::copy(p.begin(), p.end(), out);
    return;
  }
  double ss = 0.0;
  for (double v : p) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm < kMinNorm) {
    std::fill(out, out + p.size(), 0.0);
    return;
  }
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = p[k] / norm;
}

// Prepared reference patches in panels of kPanel: within a panel, element k
// of the panel's patches is contiguous. The last panel is zero-padded.
struct ReferenceMatrix {
  std::size_t length = 0;
  std::size_t count = 0;
  std::vector<double> values;
};

struct ReferenceView {
  std::size_t length;
  std::size_t count;
  std::span<const double> values;

  ReferenceView(std::size_t l, std::size_t c, std::span<const double> v) : length(l), count(c), values(v) {}
  ReferenceView(const ReferenceMatrix& m) : length(m.length), count(m.count), values(m.values) {}
};

std::size_t panel_count(std::size_t count) { return (count + kPanel - 1) / kPanel; }

ReferenceMatrix build_reference_matrix(std::span<const FeatureMap> refs, int patch_size, int stride,
                                       SimilarityMode mode, std::vector<PatchGrid>* grids) {
  ReferenceMatrix m;
  std::vector<PatchSet> sets;
  for (const auto& ref : refs) {
    const PatchGrid g = make_grid(ref.height, ref.width, patch_size, stride);
    if (grids != nullptr) grids->push_back(g);
    sets.push_back(extract_patches(ref, g));
    m.count += g.count();
  }
  m.length = sets.empty() ? 0 : sets.front().patch_length;
  m.values.assign(panel_count(m.count) * m.length * kPanel, 0.0);
  std::vector<double> buf(m.length);
  std::size_t col = 0;
  for (const auto& set : sets) {
    for (std::size_t i = 0; i < set.count(); ++i, ++col) {
      prepare_patch(set.patch(i), mode, buf.data());
      double* panel = m.values.data() + (col / kPanel) * m.length * kPanel + col % kPanel;
      for (std::size_t k = 0; k < m.length; ++k) panel[k * kPanel] = buf[k];
    }
  }
  return m;
}

// Scores of up to kGroup prepared inputs against one panel. Each score is
// accumulated over k in order from zero, exactly as similarity() does.
using Lane = double __attribute__((vector_size(32)));

inline Lane load_lane(const double* p) {
  Lane v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void score_panel(const double* const* a, std::size_t len, const double* panel,
                        double (&out)[kGroup][kPanel]) {
  static_assert(kPanel == 8);
  Lane s[kGroup][2] = {};
  for (std::size_t k = 0; k < len; ++k) {
    const Lane r0 = load_lane(panel + k * kPanel);
    const Lane r1 = load_lane(panel + k * kPanel + 4);
    for (std::size_t ii = 0; ii < kGroup; ++ii) {
      const double av = a[ii][k];
      s[ii][0] += av * r0;
      s[ii][1] += av * r1;
    }
  }
  std::memcpy(out, s, sizeof out);
}

MatchMap match_against(const FeatureMap& f_in, const PatchGrid& grid, ReferenceView ref,
                       SimilarityMode mode) {
  const std::size_t len = ref.length;
  if (len != static_cast<std::size_t>(f_in.channels) * grid.patch_size * grid.patch_size) {
    throw Error(Errc::shape_mismatch, "input and reference channel counts differ");
  }
  if (ref.count == 0) throw Error(Errc::invalid_argument, "reference pool is empty");

  const PatchSet inputs = extract_patches(f_in, grid);
  const std::size_t n_in = inputs.count();
  MatchMap out;
  out.grid = grid;
  out.indices.assign(n_in, 0);
  out.scores.assign(n_in, -std::numeric_limits<double>::infinity());

  std::vector<double> prepared(kInputBlock * len);
  const std::size_t panels = panel_count(ref.count);
  double acc[kGroup][kPanel];
  for (std::size_t i0 = 0; i0 < n_in; i0 += kInputBlock) {
    const std::size_t ib = std::min(kInputBlock, n_in - i0);
    for (std::size_t ii = 0; ii < ib; ++ii) prepare_patch(inputs.patch(i0 + ii), mode, prepared.data() + ii * len);

    for (std::size_t p = 0; p < panels; ++p) {
      const double* panel = ref.values.data() + p * len * kPanel;
      const std::size_t jb = std::min(kPanel, ref.count - p * kPanel);
      for (std::size_t g0 = 0; g0 < ib; g0 += kGroup) {
        const double* a[kGroup];
        // A short final group repeats its last input; the duplicates are ignored.
        for (std::size_t ii = 0; ii < kGroup; ++ii) a[ii] = prepared.data() + std::min(g0 + ii, ib - 1) * len;
        score_panel(a, len, panel, acc);
        for (std::size_t ii = 0; ii < kGroup && g0 + ii < ib; ++ii) {
          double& best = out.scores[i0 + g0 + ii];
          auto& best_idx = out.indices[i0 + g0 + ii];
          for (std::size_t jj = 0; jj < jb; ++jj) {
            if (acc[ii][jj] > best) {
              best = acc[ii][jj];
              best_idx = static_cast<std::int64_t>(p * kPanel + jj);
            }
          }
        }
      }
    }
  }
  return out;
}

} // namespace

double similarity(std::span<const double> p_in, std::span<const double> p_ref, SimilarityMode mode) {
  if (p_in.size() != p_ref.size()) {
    throw Error(Errc::shape_mismatch, "patch sizes " + std::to_string(p_in.size()) + " and " +
                                          std::to_string(p_ref.size()) + " differ");
  }
  std::vector<double> a(p_in.size()), b(p_ref.size());
  prepare_patch(p_in, mode, a.data());
  prepare_patch(p_ref, mode, b.data());
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

MatchMap dense_match(const FeatureMap& f_in, const FeatureMap& f_ref_blur, const PatchGrid& grid,
                     SimilarityMode mode) {
  if (f_in.channels != f_ref_blur.channels) throw Error(Errc::shape_mismatch, "channel counts differ");
  const auto ref = build_reference_matrix(std::span(&f_ref_blur, 1), grid.patch_size, grid.stride, mode, nullptr);
  return match_against(f_in, grid, ref, mode);
}

MatchMap dense_match(const FeatureMap& f_in, std::span<const FeatureMap> f_refs_blur, int patch_size, int stride,
                     SimilarityMode mode) {
  if (f_refs_blur.empty()) throw Error(Errc::missing_reference, "no reference feature maps");
  for (const auto& r : f_refs_blur) {
    if (r.channels != f_in.channels) throw Error(Errc::shape_mismatch, "channel counts differ");
  }
  const auto ref = build_reference_matrix(f_refs_blur, patch_size, stride, mode, nullptr);
  return match_against(f_in, make_grid(f_in.height, f_in.width, patch_size, stride), ref, mode);
}

FeatureMap transfer(std::span<const FeatureMap> f_refs_hr, const MatchMap& match, int channels, int height,
                    int width) {
  const PatchGrid& grid = match.grid;
  if (match.indices.size() != grid.count()) throw Error(Errc::shape_mismatch, "match map does not cover its grid");
  std::vector<PatchGrid> ref_grids;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& r : f_refs_hr) {
    if (r.channels != channels) throw Error(Errc::shape_mismatch, "reference channel count differs from output");
    ref_grids.push_back(make_grid(r.height, r.width, grid.patch_size, grid.stride));
    offsets.push_back(total);
    total += ref_grids.back().count();
  }

  const int p = grid.patch_size;
  PatchSet picked;
  picked.patch_length = static_cast<std::size_t>(channels) * p * p;
  picked.values.resize(grid.count() * picked.patch_length);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const auto idx = match.indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= total) {
      throw Error(Errc::invalid_argument, "match index " + std::to_string(idx) + " out of range");
    }
    const auto r = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(),
                                                             static_cast<std::size_t>(idx)) - offsets.begin() - 1);
    const std::size_t local = static_cast<std::size_t>(idx) - offsets[r];
    const int oy = ref_grids[r].origin_y(local);
    const int ox = ref_grids[r].origin_x(local);
    double* dst = picked.patch(i).data();
    for (int c = 0; c < channels; ++c)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx) *dst++ = f_refs_hr[r].at(c, oy + dy, ox + dx);
  }
  return assemble_patches(picked, grid, channels, height, width);
}

FeatureMap transfer(const FeatureMap& f_ref_hr, const MatchMap& match, int channels, int height, int width) {
  return transfer(std::span(&f_ref_hr, 1), match, channels, height, width);
}

ReferencePool::ReferencePool(std::span<const Image> references, const ScatterConfig& cfg, int factor,
                             int patch_size, int stride, SimilarityMode mode)
    : cfg_(cfg), patch_size_(patch_size), stride_(stride), mode_(mode) {
  if (references.empty()) throw Error(Errc::missing_reference, "texture transfer requires >= 1 reference");
  if (cfg.subsample) throw Error(Errc::invalid_argument, "texture transfer needs aligned (non-subsampled) features");
  for (const auto& ref : references) {
    const ScatteringTransform st(cfg, ref.height, ref.width);
    hr_.push_back(st.forward(ref));
    blur_.push_back(st.forward(degrade(ref, factor).lr_up));
  }
  auto matrix = build_reference_matrix(blur_, patch_size, stride, mode, &grids_);
  patch_count_ = matrix.count;
  patch_length_ = matrix.length;
  matrix_ = std::move(matrix.values);
}

ReferencePool::Swap ReferencePool::swap(const Image& lr_up) const {
  const FeatureMap f_in = scatter(lr_up, cfg_);
  Swap out;
  out.match = match_against(f_in, make_grid(f_in.height, f_in.width, patch_size_, stride_),
                            {patch_length_, patch_count_, matrix_}, mode_);
  out.features = transfer(hr_, out.match, f_in.channels, f_in.height, f_in.width);
  return out;
}

std::pair<std::size_t, std::size_t> ReferencePool::locate(std::int64_t pooled) const {
  if (pooled < 0) throw Error(Errc::invalid_argument, "negative pooled index");
  auto rest = static_cast<std::size_t>(pooled);
  for (std::size_t r = 0; r < grids_.size(); ++r) {
    if (rest < grids_[r].count()) return {r, rest};
    rest -= grids_[r].count();
  }
  throw Error(Errc::invalid_argument, "pooled index out of range");
}

FeatureMap swap_features(const Image& lr_up, const Image& reference, const ScatterConfig& cfg, int factor) {
  return ReferencePool(std::span(&reference, 1), cfg, factor).swap(lr_up).features;
}

namespace {

Image visualize(const MatchMap& match, auto&& locate_grid) {
  const auto& g = match.grid;
  Image out(g.origin_rows, 2 * g.origin_cols);
  for (std::size_t i = 0; i < g.count(); ++i) {
    const auto [ref_grid, local] = locate_grid(match.indices[i]);
    const int y = static_cast<int>(i) / g.origin_cols;
    const int x = static_cast<int>(i) % g.origin_cols;
    out(y, x) = static_cast<double>(local / ref_grid.origin_cols) / std::max(ref_grid.origin_rows - 1, 1);
    out(y, g.origin_cols + x) = static_cast<double>(local % ref_grid.origin_cols) / std::max(ref_grid.origin_cols - 1, 1);
  }
  return out;
}

} // namespace

Image match_visualization(const MatchMap& match, const ReferencePool& pool) {
  std::vector<PatchGrid> grids;
  for (const auto& b : pool.blurred_features()) grids.push_back(make_grid(b.height, b.width, match.grid.patch_size,
                                                                          match.grid.stride));
  return visualize(match, [&](std::int64_t idx) {
    const auto [r, local] = pool.locate(idx);
    return std::pair{grids[r], local};
  });
}

Image match_visualization(const MatchMap& match, const PatchGrid& ref_grid) {
  return visualize(match, [&](std::int64_t idx) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= ref_grid.count()) {
      throw Error(Errc::invalid_argument, "match index out of range");
    }
    return std::pair{ref_grid, static_cast<std::size_t>(idx)};
  });
}

} // namespace texsr
