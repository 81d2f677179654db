#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "texsr/image.hpp"
#include "texsr/scattering.hpp"

namespace texsr {

enum class SimilarityMode {
  /// Cosine of the angle between flattened patches; zero when either norm
  /// is below 1e-12.
  normalized,
  /// Raw inner product.
  dot,
};

/// Patches are normalized first, then their inner product accumulated in
/// element order. dense_match reproduces this arithmetic exactly.
double similarity(std::span<const double> p_in, std::span<const double> p_ref,
                  SimilarityMode mode = SimilarityMode::normalized);

struct MatchMap {
  PatchGrid grid;                      // grid over the input feature map
  std::vector<std::int64_t> indices;   // best reference patch per input patch
  std::vector<double> scores;          // its similarity
};

/// Exhaustive argmax over reference patches, ties to the lowest index.
MatchMap dense_match(const FeatureMap& f_in, const FeatureMap& f_ref_blur, const PatchGrid& grid,
                     SimilarityMode mode = SimilarityMode::normalized);

/// Several references pooled into one candidate set; reference r's patches
/// follow those of references 0..r-1 in the index space.
MatchMap dense_match(const FeatureMap& f_in, std::span<const FeatureMap> f_refs_blur, int patch_size = 3,
                     int stride = 1, SimilarityMode mode = SimilarityMode::normalized);

/// Places the matched HR-reference patches on the input grid, averaging
/// overlaps. `f_refs_hr` must be patch-aligned with the maps used for matching.
FeatureMap transfer(std::span<const FeatureMap> f_refs_hr, const MatchMap& match, int channels, int height,
                    int width);
FeatureMap transfer(const FeatureMap& f_ref_hr, const MatchMap& match, int channels, int height, int width);

/// Reference images prepared for repeated swaps: scattering of each
/// reference and of its bicubic-degraded version, with the normalized
/// blurred patches laid out for matching.
class ReferencePool {
public:
  ReferencePool(std::span<const Image> references, const ScatterConfig& cfg, int factor, int patch_size = 3,
                int stride = 1, SimilarityMode mode = SimilarityMode::normalized);

  struct Swap {
    FeatureMap features;
    MatchMap match;
  };

  /// Matches scatter(lr_up) against the pool and transfers HR patches.
  Swap swap(const Image& lr_up) const;

  std::size_t patch_count() const noexcept { return patch_count_; }
  std::span<const FeatureMap> hr_features() const noexcept { return hr_; }
  std::span<const FeatureMap> blurred_features() const noexcept { return blur_; }
  const ScatterConfig& config() const noexcept { return cfg_; }

  /// (reference index, local patch index) of a pooled index.
  std::pair<std::size_t, std::size_t> locate(std::int64_t pooled) const;

private:
  ScatterConfig cfg_;
  int patch_size_;
  int stride_;
  SimilarityMode mode_;
  std::vector<FeatureMap> hr_;
  std::vector<FeatureMap> blur_;
  std::vector<PatchGrid> grids_;
  std::size_t patch_count_ = 0;
  std::size_t patch_length_ = 0;
  std::vector<double> matrix_;
};

/// Feature swapping for one reference image.
FeatureMap swap_features(const Image& lr_up, const Image& reference, const ScatterConfig& cfg, int factor);

/// Two side-by-side panels over the input grid: matched reference row and
/// column, each scaled to [0,1] by the reference grid extent.
Image match_visualization(const MatchMap& match, const ReferencePool& pool);
Image match_visualization(const MatchMap& match, const PatchGrid& ref_grid);

} // namespace texsr
