#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "texsr/error.hpp"
#include "texsr/io.hpp"
#include "texsr/pipeline.hpp"
#include "texsr/resample.hpp"

namespace fs = std::filesystem;
using namespace texsr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(Errc c) {
  switch (c) {
    case Errc::invalid_argument:
      return kExitUsage;
    case Errc::numeric_failure:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

// Leftover "--key=value" / "--key value" arguments become config overrides.
std::vector<std::pair<std::string, std::string>> overrides_from(std::vector<std::string> rest) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& a = rest[i];
    if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else if (i + 1 < rest.size()) {
      out.emplace_back(a.substr(2), rest[++i]);
    } else {
      throw UsageError("option '" + a + "' needs a value");
    }
  }
  return out;
}

TrainConfig build_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides,
                         TrainConfig base = {}) {
  TrainConfig cfg = path.empty() ? std::move(base) : load_config(path, std::move(base));
  for (const auto& [k, v] : overrides) apply_override(cfg, k, v);
  return cfg;
}

// The configuration a checkpoint was trained with, from its metadata.
TrainConfig config_of(const Checkpoint& ckpt) {
  TrainConfig cfg;
  const auto meta = nlohmann::json::parse(ckpt.metadata, nullptr, false);
  if (meta.is_discarded() || !meta.contains("config")) return cfg;
  for (const auto& [k, v] : meta["config"].items()) {
    if (k == "reference_paths") {
      cfg.reference_paths = v.get<std::vector<std::string>>();
    } else if (v.is_string()) {
      apply_override(cfg, k, v.get<std::string>());
    }
  }
  return cfg;
}

void save_output_image(const Image& img, const fs::path& path) {
  if (path.extension() == ".sttf") {
    save_tensor(to_tensor(img), path, TensorPrecision::f64);
  } else {
    save_image(img, path, PgmDepth::u16);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out.flush()) throw Error(Errc::io_failure, "cannot write " + path.string());
}

struct Loaded {
  Method method;
  int factor = 4;
};

Loaded load_method(const std::string& source, const std::vector<std::pair<std::string, std::string>>& overrides) {
  Loaded out;
  if (source == "bicubic") return out;
  const Checkpoint ckpt = load_checkpoint(source);
  const TrainConfig cfg = build_config("", overrides, config_of(ckpt));
  out.factor = cfg.sr_factor;
  out.method.name = fs::path(source).stem().string();
  out.method.net = ckpt.net;
  if (ckpt.net.uses_references()) {
    out.method.pool = make_reference_pool(load_references(cfg.reference_paths), cfg);
  }
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Texture-transfer super-resolution toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);

  auto* prepare = app.add_subcommand("prepare", "Crop HR slices into HR/LR patch pairs");
  std::string hr_dir, out_path;
  prepare->add_option("--hr", hr_dir, "Directory of HR slices (.pgm, .sttf)")->required();
  prepare->add_option("--out", out_path, "Dataset directory")->required();

  auto* swap = app.add_subcommand("swap", "Precompute swapped reference features for a dataset");
  std::string data_dir;
  swap->add_option("--data", data_dir, "Dataset directory")->required();
  swap->add_option("--out", out_path, "Swap archive directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a network");
  std::string swaps_dir, manifest_path;
  bool verbose = false;
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--swaps", swaps_dir, "Swap archive (computed on the fly when absent)");
  train_cmd->add_option("--out", out_path, "Checkpoint file")->required();
  train_cmd->add_option("--manifest", manifest_path, "Run manifest JSON (default: <out>.json)");
  train_cmd->add_flag("--verbose", verbose, "Print losses every 100 steps");

  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one LR image");
  std::string ckpt_path, input_path;
  infer_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  infer_cmd->add_option("--input", input_path, "LR image")->required();
  infer_cmd->add_option("--out", out_path, "Output image (.pgm or .sttf)")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Compare two methods on HR test images");
  std::string method_a, method_b = "bicubic", test_dir, csv_path, verdict_path;
  eval_cmd->add_option("--a", method_a, "Checkpoint file or 'bicubic'")->required();
  eval_cmd->add_option("--b", method_b, "Checkpoint file or 'bicubic'");
  eval_cmd->add_option("--test", test_dir, "Directory of HR test images")->required();
  eval_cmd->add_option("--csv", csv_path, "Per-image metrics CSV")->required();
  eval_cmd->add_option("--verdict", verdict_path, "Verdict file (also printed)");

  auto* compare_cmd = app.add_subcommand("compare", "Paired tests on an existing metrics CSV");
  compare_cmd->add_option("--csv", csv_path, "Per-image metrics CSV")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--verdict", verdict_path, "Verdict file (also printed)");

  auto* scatter_cmd = app.add_subcommand("scatter", "Dump scattering features of an image");
  scatter_cmd->add_option("--input", input_path, "Image")->required();
  scatter_cmd->add_option("--out", out_path, "Feature tensor (.sttf)")->required();

  auto* match_cmd = app.add_subcommand("match", "Dump the dense match of an LR image against references");
  std::string vis_path;
  match_cmd->add_option("--input", input_path, "LR image")->required();
  match_cmd->add_option("--out", out_path, "Match tensor (.sttf): plane 0 index, plane 1 score")->required();
  match_cmd->add_option("--vis", vis_path, "Visualization PGM");

  for (auto* sub : app.get_subcommands({})) sub->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const auto overrides = overrides_from(sub->remaining());

    if (sub == prepare) {
      const TrainConfig cfg = build_config(config_path, overrides, [] {
        TrainConfig c;
        c.weights.w_t = 0.0;
        return c;
      }());
      const std::size_t n = prepare_dataset(hr_dir, out_path, cfg, &std::cerr);
      std::cout << "pairs=" << n << "\n";
    } else if (sub == swap) {
      const TrainConfig cfg = build_config(config_path, overrides);
      cfg.validate();
      const Dataset ds = load_dataset(data_dir);
      const auto archive = precompute_swaps(ds, load_references(cfg.reference_paths), cfg);
      save_swaps(archive, out_path);
      std::cout << "swaps=" << archive.ids.size() << "\n";
    } else if (sub == train_cmd) {
      const TrainConfig cfg = build_config(config_path, overrides);
      const Dataset ds = load_dataset(data_dir);
      std::optional<SwapArchive> archive;
      if (cfg.texture_transfer()) {
        archive = swaps_dir.empty() ? precompute_swaps(ds, load_references(cfg.reference_paths), cfg)
                                    : load_swaps(swaps_dir);
      } else if (!swaps_dir.empty()) {
        throw Error(Errc::mode_mismatch, "--swaps given but the config has no reference_paths");
      }
      TrainOptions opt;
      if (verbose) {
        opt.on_step = [](const StepRecord& r) {
          if (r.step % 100 == 0) {
            std::cerr << "step " << r.step << " total " << r.total << " rec " << r.rec << " perceptual "
                      << r.perceptual << " texture " << r.texture << "\n";
          }
        };
      }
      opt.on_eval = [](const EvalRecord& r) {
        std::cerr << "eval step " << r.step << " psnr " << r.psnr << " (bicubic " << r.psnr_bicubic << ") ssim "
                  << r.ssim << "\n";
      };
      const auto result = train(cfg, ds, archive ? &*archive : nullptr, opt);
      if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
      save_checkpoint(result.checkpoint, out_path);
      write_text(manifest_path.empty() ? out_path + ".json" : manifest_path, result.manifest.to_json());
      std::cout << "steps=" << result.checkpoint.step << "\n";
    } else if (sub == infer_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const TrainConfig cfg = build_config(config_path, overrides, config_of(ckpt));
      std::unique_ptr<ReferencePool> pool;
      if (ckpt.net.uses_references()) pool = make_reference_pool(load_references(cfg.reference_paths), cfg);
      const Image sr = infer(ckpt.net, load_image(input_path), cfg.sr_factor, pool.get());
      save_output_image(sr, out_path);
      std::cout << "size=" << sr.height << "x" << sr.width << "\n";
    } else if (sub == eval_cmd) {
      if (!config_path.empty()) throw UsageError("eval takes its settings from the checkpoints; drop --config");
      const Loaded a = load_method(method_a, overrides);
      const Loaded b = load_method(method_b, overrides);
      if (method_a != "bicubic" && method_b != "bicubic" && a.factor != b.factor) {
        throw Error(Errc::invalid_argument, "checkpoints disagree on sr_factor");
      }
      const int factor = method_a != "bicubic" ? a.factor : b.factor;
      const auto test = load_image_dir(test_dir);
      const auto report = evaluate(a.method, b.method, test, factor);
      std::ostringstream csv;
      write_csv(report.rows, csv);
      write_text(csv_path, csv.str());
      const std::string text = verdict_text(report);
      if (!verdict_path.empty()) write_text(verdict_path, text);
      std::cout << text;
    } else if (sub == compare_cmd) {
      std::ifstream in(csv_path);
      const auto report = compare(read_csv(in));
      const std::string text = verdict_text(report);
      if (!verdict_path.empty()) write_text(verdict_path, text);
      std::cout << text;
    } else if (sub == scatter_cmd) {
      TrainConfig cfg = build_config(config_path, overrides);
      const FeatureMap f = scatter(load_image(input_path), cfg.scatter);
      save_feature_map(f, out_path, TensorPrecision::f64);
      std::cout << "channels=" << f.channels << " size=" << f.height << "x" << f.width << "\n";
    } else if (sub == match_cmd) {
      const TrainConfig cfg = build_config(config_path, overrides);
      const auto pool = make_reference_pool(load_references(cfg.reference_paths), cfg);
      const Image up = bicubic_resize(load_image(input_path), {cfg.sr_factor, 1});
      const auto s = pool->swap(up);
      Tensor t;
      t.dims = {2, static_cast<std::uint32_t>(s.match.grid.origin_rows),
                static_cast<std::uint32_t>(s.match.grid.origin_cols)};
      t.values.reserve(2 * s.match.indices.size());
      for (auto i : s.match.indices) t.values.push_back(static_cast<double>(i));
      t.values.insert(t.values.end(), s.match.scores.begin(), s.match.scores.end());
      save_tensor(t, out_path, TensorPrecision::f64);
      if (!vis_path.empty()) save_image(match_visualization(s.match, *pool), vis_path, PgmDepth::u8);
      std::cout << "patches=" << s.match.indices.size() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
