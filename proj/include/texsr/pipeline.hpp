#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "texsr/image.hpp"
#include "texsr/losses.hpp"
#include "texsr/metrics.hpp"
#include "texsr/model.hpp"
#include "texsr/scattering.hpp"
#include "texsr/transfer.hpp"

namespace texsr {

struct TrainConfig {
  int sr_factor = 4;
  int patch_size = 64;
  int crops_per_slice = 20;
  int batch_size = 9;
  double lr = 1e-4;
  std::int64_t steps = 2000;
  std::uint64_t seed = 1;
  ScatterConfig scatter;
  LossWeights weights;
  /// Empty: baseline without texture transfer.
  std::vector<std::string> reference_paths;
  std::string degradation = "bicubic";
  /// Steps between validation passes; 0 disables them.
  std::int64_t eval_interval = 0;
  /// Pairs held out of training for the validation passes.
  int validation_pairs = 0;
  int width1 = 64;
  int width2 = 32;
  bool residual = false;
  ExtractorKind extractor = ExtractorKind::scattering;
  std::uint64_t extractor_seed = 1;
  bool normalized_gram = true;
  int match_patch_size = 3;

  bool texture_transfer() const noexcept { return !reference_paths.empty(); }
  void validate() const;
  LossConfig loss_config() const;
  SrcnnShape network_shape() const;
};

/// Flat "key = value" text; '#' starts a comment. Unknown keys and
/// malformed values raise Errc::invalid_argument.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string to_text(const TrainConfig& cfg);
/// JSON object with the same keys as the text form.
std::string to_json(const TrainConfig& cfg);

struct NamedImage {
  std::string name;
  Image image;
};

/// Loadable images (.pgm, .sttf) in a directory, sorted by file name.
std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir);

struct PatchPair {
  std::string id;
  std::string source;
  int y = 0;
  int x = 0;
  Image hr;
  Image lr;
};

struct Dataset {
  int sr_factor = 4;
  std::vector<PatchPair> pairs;
};

/// Seeded crop origins for slice `slice_index`; identical for identical
/// arguments.
std::vector<std::pair<int, int>> crop_positions(int height, int width, int patch, int count, std::uint64_t seed,
                                                std::size_t slice_index);

/// Crops every slice; slices smaller than a patch are skipped with a
/// warning on `warn` (when non-null).
Dataset make_dataset(const std::vector<NamedImage>& slices, const TrainConfig& cfg, std::ostream* warn = nullptr);

/// Writes hr/<id>.sttf, lr/<id>.sttf and index.txt under `out_dir`;
/// returns the number of pairs.
std::size_t prepare_dataset(const std::filesystem::path& hr_dir, const std::filesystem::path& out_dir,
                            const TrainConfig& cfg, std::ostream* warn = nullptr);
void save_dataset(const Dataset& ds, const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Bicubic upsampling of the LR patch back to the HR grid.
Image upsampled_input(const PatchPair& pair, int factor);

std::vector<Image> load_references(const std::vector<std::string>& paths);

/// Swapped feature maps for every pair, keyed by pair id.
struct SwapArchive {
  std::vector<std::string> ids;
  std::vector<FeatureMap> features;
  std::vector<double> mean_scores;

  const FeatureMap* find(const std::string& id) const;
};

SwapArchive precompute_swaps(const Dataset& ds, const ReferencePool& pool);
SwapArchive precompute_swaps(const Dataset& ds, const std::vector<Image>& references, const TrainConfig& cfg);
void save_swaps(const SwapArchive& archive, const std::filesystem::path& dir);
SwapArchive load_swaps(const std::filesystem::path& dir);

std::unique_ptr<ReferencePool> make_reference_pool(const std::vector<Image>& references, const TrainConfig& cfg);

struct StepRecord {
  std::int64_t step = 0;
  double total = 0.0;
  double rec = 0.0;
  double perceptual = 0.0;
  double texture = 0.0;
};

struct EvalRecord {
  std::int64_t step = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_bicubic = 0.0;
  double ssim_bicubic = 0.0;
};

struct RunManifest {
  std::string config_json;
  std::string revision;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  double wall_seconds = 0.0;
  std::size_t train_pairs = 0;
  std::size_t validation_pairs = 0;

  std::string to_json() const;
};

struct TrainOptions {
  /// Called after every step; may be empty.
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
};

struct TrainResult {
  Checkpoint checkpoint;
  RunManifest manifest;
};

/// Deterministic for a given config, dataset and swap archive.
TrainResult train(const TrainConfig& cfg, const Dataset& ds, const SwapArchive* swaps,
                  const TrainOptions& options = {});

/// Upsamples `lr` by `factor` and runs the network, with swapped features
/// from `pool` when the network takes them.
Image infer(const Network& net, const Image& lr, int factor, const ReferencePool* pool);

/// A method under evaluation: a trained network or plain bicubic.
struct Method {
  std::string name = "bicubic";
  std::optional<Network> net;
  std::shared_ptr<const ReferencePool> pool;

  Image super_resolve(const Image& lr, int factor) const;
};

struct EvalRow {
  std::string image_id;
  double psnr_a = 0.0;
  double psnr_b = 0.0;
  double ssim_a = 0.0;
  double ssim_b = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  WilcoxonResult psnr_test;
  WilcoxonResult ssim_test;
  double mean_psnr_a = 0.0;
  double mean_psnr_b = 0.0;
  double mean_ssim_a = 0.0;
  double mean_ssim_b = 0.0;
};

/// Degrades each HR test image by `factor`, super-resolves it with both
/// methods and tests the paired per-image scores.
EvalReport evaluate(const Method& a, const Method& b, const std::vector<NamedImage>& test_hr, int factor);

/// Recomputes the summary and tests from per-image rows.
EvalReport compare(std::vector<EvalRow> rows);

void write_csv(const std::vector<EvalRow>& rows, std::ostream& os);
std::vector<EvalRow> read_csv(std::istream& is);

/// key=value lines: counts, means, statistics, p values, verdicts.
std::string verdict_text(const EvalReport& report);

} // namespace texsr
