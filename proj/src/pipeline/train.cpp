#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>

#include "texsr/error.hpp"
#include "texsr/pipeline.hpp"
#include "texsr/resample.hpp"

#ifndef TEXSR_REVISION
#define TEXSR_REVISION "unknown"
#endif

namespace texsr {

namespace {

// Upper bound on cached perceptual features of the HR targets.
constexpr std::size_t kFeatureCacheBytes = std::size_t{1} << 30;

struct Sample {
  const PatchPair* pair = nullptr;
  Image input;
  const FeatureMap* swapped = nullptr;
  FeatureMap hr_features;
};

bool finite(const Image& img) {
  for (double v : img.data)
    if (!std::isfinite(v)) return false;
  return true;
}

double metric_or_nan(const Image& a, const Image& b) {
  return a.height >= 11 && a.width >= 11 ? ssim(a, b) : std::numeric_limits<double>::quiet_NaN();
}

nlohmann::ordered_json number(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

} // namespace

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["revision"] = revision;
  j["config"] = nlohmann::ordered_json::parse(config_json);
  j["train_pairs"] = train_pairs;
  j["validation_pairs"] = validation_pairs;
  j["wall_seconds"] = wall_seconds;
  auto& s = j["steps"] = nlohmann::ordered_json::array();
  for (const auto& r : steps) {
    s.push_back({{"step", r.step},
                 {"total", number(r.total)},
                 {"rec", number(r.rec)},
                 {"perceptual", number(r.perceptual)},
                 {"texture", number(r.texture)}});
  }
  auto& e = j["evals"] = nlohmann::ordered_json::array();
  for (const auto& r : evals) {
    e.push_back({{"step", r.step},
                 {"psnr", number(r.psnr)},
                 {"ssim", number(r.ssim)},
                 {"psnr_bicubic", number(r.psnr_bicubic)},
                 {"ssim_bicubic", number(r.ssim_bicubic)}});
  }
  return j.dump(1);
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds, const SwapArchive* swaps, const TrainOptions& options) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  if (ds.sr_factor != cfg.sr_factor) throw Error(Errc::invalid_argument, "config and dataset sr_factor differ");
  if (cfg.texture_transfer() != (swaps != nullptr)) {
    throw Error(Errc::mode_mismatch, cfg.texture_transfer() ? "texture transfer run needs a swap archive"
                                                            : "swap archive given to a run without references");
  }
  const std::size_t n_val = static_cast<std::size_t>(cfg.validation_pairs);
  if (n_val >= ds.pairs.size()) throw Error(Errc::invalid_argument, "validation_pairs leaves no training pairs");

  const TotalLoss loss(cfg.loss_config());
  auto prepare = [&](const PatchPair& pair, bool with_features) {
    Sample s;
    s.pair = &pair;
    s.input = upsampled_input(pair, cfg.sr_factor);
    if (swaps != nullptr) {
      s.swapped = swaps->find(pair.id);
      if (s.swapped == nullptr) throw Error(Errc::missing_reference, "swap archive has no entry for " + pair.id);
    }
    if (with_features) s.hr_features = loss.perceptual_features(pair.hr);
    return s;
  };

  const std::size_t n_train = ds.pairs.size() - n_val;
  const std::size_t feature_bytes = static_cast<std::size_t>(cfg.scatter.channel_count()) * cfg.patch_size *
                                    cfg.patch_size * sizeof(double) * n_train;
  const bool cache_features = cfg.weights.w_p > 0.0 && feature_bytes <= kFeatureCacheBytes;
  std::vector<Sample> train_set, eval_set;
  for (std::size_t i = 0; i < n_train; ++i) train_set.push_back(prepare(ds.pairs[i], cache_features));
  if (cfg.eval_interval > 0) {
    if (n_val > 0) {
      for (std::size_t i = n_train; i < ds.pairs.size(); ++i) eval_set.push_back(prepare(ds.pairs[i], false));
    } else {
      for (std::size_t i = 0; i < std::min<std::size_t>(8, n_train); ++i) eval_set.push_back(prepare(ds.pairs[i], false));
    }
  }

  TrainResult result;
  auto& manifest = result.manifest;
  manifest.config_json = to_json(cfg);
  manifest.revision = TEXSR_REVISION;
  manifest.train_pairs = n_train;
  manifest.validation_pairs = n_val;

  Checkpoint& ckpt = result.checkpoint;
  ckpt.net = make_srcnn(cfg.network_shape(), cfg.seed);
  ckpt.adam = make_adam(ckpt.net, cfg.lr);
  {
    nlohmann::ordered_json meta;
    meta["config"] = nlohmann::ordered_json::parse(manifest.config_json);
    meta["texture_transfer"] = cfg.texture_transfer();
    meta["sr_factor"] = cfg.sr_factor;
    meta["revision"] = manifest.revision;
    ckpt.metadata = meta.dump();
  }

  double bicubic_psnr = 0.0, bicubic_ssim = 0.0;
  for (const auto& s : eval_set) {
    bicubic_psnr += psnr(s.input, s.pair->hr);
    bicubic_ssim += metric_or_nan(s.input, s.pair->hr);
  }
  auto run_eval = [&](std::int64_t step) {
    EvalRecord r;
    r.step = step;
    for (const auto& s : eval_set) {
      const Image sr = forward(ckpt.net, s.input, s.swapped);
      r.psnr += psnr(sr, s.pair->hr);
      r.ssim += metric_or_nan(sr, s.pair->hr);
    }
    const double n = static_cast<double>(eval_set.size());
    r.psnr /= n;
    r.ssim /= n;
    r.psnr_bicubic = bicubic_psnr / n;
    r.ssim_bicubic = bicubic_ssim / n;
    manifest.evals.push_back(r);
    if (options.on_eval) options.on_eval(r);
  };

  std::seed_seq shuffle_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                             0x73687566u};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size());

  ForwardTape tape;
  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    if (cursor + batch > order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    Gradients grads = Gradients::zeros_like(ckpt.net);
    StepRecord rec;
    rec.step = step;
    for (std::size_t b = 0; b < batch; ++b) {
      const Sample& s = train_set[order[cursor + b]];
      const Image sr = forward(ckpt.net, s.input, s.swapped, &tape);
      const auto l = loss(sr, s.pair->hr, s.swapped, cache_features ? &s.hr_features : nullptr);
      if (!std::isfinite(l.total) || !finite(l.grad)) {
        throw Error(Errc::numeric_failure, "non-finite loss at step " + std::to_string(step) + " on pair " +
                                               s.pair->id + "; lower lr or check the inputs");
      }
      grads.add(backward(ckpt.net, tape, l.grad, false));
      rec.total += l.total;
      rec.rec += l.rec;
      rec.perceptual += l.perceptual;
      rec.texture += l.texture;
    }
    cursor += batch;
    const double inv = 1.0 / static_cast<double>(batch);
    grads.scale(inv);
    rec.total *= inv;
    rec.rec *= inv;
    rec.perceptual *= inv;
    rec.texture *= inv;
    adam_step(ckpt.net, grads, ckpt.adam);
    ckpt.step = static_cast<std::uint64_t>(step);
    manifest.steps.push_back(rec);
    if (options.on_step) options.on_step(rec);
    if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) run_eval(step);
  }
  if (cfg.eval_interval > 0 && (manifest.evals.empty() || manifest.evals.back().step != cfg.steps)) run_eval(cfg.steps);

  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

Image infer(const Network& net, const Image& lr, int factor, const ReferencePool* pool) {
  if (net.uses_references() && pool == nullptr) {
    throw Error(Errc::mode_mismatch, "checkpoint was trained with texture transfer; supply reference images");
  }
  if (!net.uses_references() && pool != nullptr) {
    throw Error(Errc::mode_mismatch, "checkpoint was trained without texture transfer; drop the references");
  }
  const Image up = bicubic_resize(lr, {factor, 1});
  if (pool == nullptr) return forward(net, up);
  const FeatureMap f = pool->swap(up).features;
  return forward(net, up, &f);
}

} // namespace texsr
