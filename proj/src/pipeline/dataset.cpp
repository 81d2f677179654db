#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "texsr/error.hpp"
#include "texsr/io.hpp"
#include "texsr/pipeline.hpp"
#include "texsr/resample.hpp"

namespace texsr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDatasetHeader = "texsr-dataset 1";
constexpr const char* kSwapHeader = "texsr-swaps 1";

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(Errc::malformed_header, "bad number '" + s + "'");
  return v;
}

std::string zero_padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

} // namespace

std::vector<NamedImage> load_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::io_failure, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".sttf")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> out;
  for (const auto& f : files) out.push_back({f.stem().string(), load_image(f)});
  return out;
}

std::vector<std::pair<int, int>> crop_positions(int height, int width, int patch, int count, std::uint64_t seed,
                                                std::size_t slice_index) {
  if (height < patch || width < patch) throw Error(Errc::invalid_argument, "slice smaller than a patch");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(slice_index), 0x63726f70u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> ys(0, height - patch), xs(0, width - patch);
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < count; ++i) {
    const int y = ys(rng);
    out.emplace_back(y, xs(rng));
  }
  return out;
}

Dataset make_dataset(const std::vector<NamedImage>& slices, const TrainConfig& cfg, std::ostream* warn) {
  cfg.validate();
  if (slices.empty()) throw Error(Errc::empty_input, "no HR slices");
  Dataset ds;
  ds.sr_factor = cfg.sr_factor;
  const int p = cfg.patch_size;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    const auto& slice = slices[s];
    if (slice.image.height < p || slice.image.width < p) {
      if (warn != nullptr) {
        *warn << "warning: skipping " << slice.name << " (" << slice.image.height << "x" << slice.image.width
              << " is smaller than " << p << "x" << p << ")\n";
      }
      continue;
    }
    const auto origins = crop_positions(slice.image.height, slice.image.width, p, cfg.crops_per_slice, cfg.seed, s);
    for (std::size_t k = 0; k < origins.size(); ++k) {
      const auto [y0, x0] = origins[k];
      PatchPair pair;
      pair.id = slice.name + "_" + zero_padded(k, 3);
      pair.source = slice.name;
      pair.y = y0;
      pair.x = x0;
      pair.hr = Image(p, p);
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) pair.hr(y, x) = slice.image(y0 + y, x0 + x);
      pair.lr = degrade(pair.hr, cfg.sr_factor).lr;
      ds.pairs.push_back(std::move(pair));
    }
  }
  if (ds.pairs.empty()) throw Error(Errc::empty_input, "every slice is smaller than the patch size");
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& out_dir) {
  fs::create_directories(out_dir / "hr");
  fs::create_directories(out_dir / "lr");
  std::ofstream index(out_dir / "index.txt");
  if (!index) throw Error(Errc::io_failure, "cannot write " + (out_dir / "index.txt").string());
  index << kDatasetHeader << " sr_factor=" << ds.sr_factor << "\n";
  for (const auto& p : ds.pairs) {
    save_tensor(to_tensor(p.hr), out_dir / "hr" / (p.id + ".sttf"), TensorPrecision::f64);
    save_tensor(to_tensor(p.lr), out_dir / "lr" / (p.id + ".sttf"), TensorPrecision::f64);
    index << p.id << ' ' << p.source << ' ' << p.y << ' ' << p.x << "\n";
  }
  if (!index.flush()) throw Error(Errc::io_failure, "write to " + out_dir.string() + " failed");
}

std::size_t prepare_dataset(const fs::path& hr_dir, const fs::path& out_dir, const TrainConfig& cfg,
                            std::ostream* warn) {
  const auto slices = load_image_dir(hr_dir);
  if (slices.empty()) throw Error(Errc::empty_input, hr_dir.string() + " holds no .pgm or .sttf images");
  const Dataset ds = make_dataset(slices, cfg, warn);
  save_dataset(ds, out_dir);
  return ds.pairs.size();
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream index(dir / "index.txt");
  if (!index) throw Error(Errc::io_failure, "cannot open " + (dir / "index.txt").string());
  std::string header;
  std::getline(index, header);
  const std::string prefix = std::string(kDatasetHeader) + " sr_factor=";
  if (header.rfind(prefix, 0) != 0) throw Error(Errc::malformed_header, "not a dataset index: " + dir.string());
  Dataset ds;
  ds.sr_factor = static_cast<int>(parse_double(header.substr(prefix.size())));
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    PatchPair p;
    if (!(ls >> p.id >> p.source >> p.y >> p.x)) throw Error(Errc::malformed_header, "bad index line: " + line);
    p.hr = load_image(dir / "hr" / (p.id + ".sttf"));
    p.lr = load_image(dir / "lr" / (p.id + ".sttf"));
    if (p.hr.height != p.lr.height * ds.sr_factor || p.hr.width != p.lr.width * ds.sr_factor) {
      throw Error(Errc::shape_mismatch, "pair " + p.id + " does not match sr_factor");
    }
    ds.pairs.push_back(std::move(p));
  }
  if (ds.pairs.empty()) throw Error(Errc::empty_input, "dataset " + dir.string() + " is empty");
  return ds;
}

Image upsampled_input(const PatchPair& pair, int factor) { return bicubic_resize(pair.lr, {factor, 1}); }

std::vector<Image> load_references(const std::vector<std::string>& paths) {
  if (paths.empty()) throw Error(Errc::missing_reference, "texture transfer requires >= 1 reference");
  std::vector<Image> refs;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw Error(Errc::missing_reference, "reference " + p + " does not exist");
    refs.push_back(load_image(p));
  }
  return refs;
}

std::unique_ptr<ReferencePool> make_reference_pool(const std::vector<Image>& references, const TrainConfig& cfg) {
  return std::make_unique<ReferencePool>(references, cfg.scatter, cfg.sr_factor, cfg.match_patch_size);
}

const FeatureMap* SwapArchive::find(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? nullptr : &features[static_cast<std::size_t>(it - ids.begin())];
}

SwapArchive precompute_swaps(const Dataset& ds, const ReferencePool& pool) {
  SwapArchive out;
  for (const auto& pair : ds.pairs) {
    auto s = pool.swap(upsampled_input(pair, ds.sr_factor));
    double mean = 0.0;
    for (double v : s.match.scores) mean += v;
    out.ids.push_back(pair.id);
    out.features.push_back(std::move(s.features));
    out.mean_scores.push_back(mean / static_cast<double>(s.match.scores.size()));
  }
  return out;
}

SwapArchive precompute_swaps(const Dataset& ds, const std::vector<Image>& references, const TrainConfig& cfg) {
  if (references.empty()) throw Error(Errc::missing_reference, "texture transfer requires >= 1 reference");
  if (cfg.sr_factor != ds.sr_factor) throw Error(Errc::invalid_argument, "config and dataset sr_factor differ");
  return precompute_swaps(ds, *make_reference_pool(references, cfg));
}

void save_swaps(const SwapArchive& a, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream index(dir / "index.txt");
  if (!index) throw Error(Errc::io_failure, "cannot write " + (dir / "index.txt").string());
  index << kSwapHeader << "\n";
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    save_feature_map(a.features[i], dir / (a.ids[i] + ".sttf"), TensorPrecision::f64);
    index << a.ids[i] << ' ' << format_double(a.mean_scores[i]) << "\n";
  }
  if (!index.flush()) throw Error(Errc::io_failure, "write to " + dir.string() + " failed");
}

SwapArchive load_swaps(const fs::path& dir) {
  std::ifstream index(dir / "index.txt");
  if (!index) throw Error(Errc::io_failure, "cannot open " + (dir / "index.txt").string());
  std::string line;
  std::getline(index, line);
  if (line != kSwapHeader) throw Error(Errc::malformed_header, "not a swap archive: " + dir.string());
  SwapArchive a;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, score;
    if (!(ls >> id >> score)) throw Error(Errc::malformed_header, "bad swap index line: " + line);
    a.ids.push_back(id);
    a.mean_scores.push_back(parse_double(score));
    a.features.push_back(load_feature_map(dir / (id + ".sttf")));
  }
  return a;
}

} // namespace texsr
