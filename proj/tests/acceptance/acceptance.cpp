#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "oracles/scatter_oracle.hpp"
#include "texsr/io.hpp"
#include "texsr/pipeline.hpp"
#include "texsr/resample.hpp"

using namespace texsr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects sub-check outcomes of one criterion.
class Checks {
public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failures_.empty(); }
  std::string summary() const {
    std::string s;
    for (const auto& n : notes_) s += (s.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) s += (s.empty() ? "FAILED " : "; FAILED ") + f;
    return s;
  }

private:
  std::vector<std::string> notes_;
  std::vector<std::string> failures_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void scattering_correctness(Checks& c) {
  const ScatterConfig cfg;
  c.expect(cfg.channel_count() == 81, "channel count " + std::to_string(cfg.channel_count()));

  const auto zero = scatter(Image(32, 32, 0.0), cfg);
  c.expect(zero.channels == 81 && std::all_of(zero.data.begin(), zero.data.end(), [](double v) { return v == 0.0; }),
           "zero input");

  const double k = 0.37;
  const auto constant = scatter(Image(64, 64, k), cfg);
  double err0 = 0.0, err_hi = 0.0;
  for (double v : constant.channel(0)) err0 = std::max(err0, std::abs(v - k));
  for (int ch = 1; ch < constant.channels; ++ch)
    for (double v : constant.channel(ch)) err_hi = std::max(err_hi, std::abs(v));
  c.expect(err0 <= 1e-6 && err_hi <= 1e-5, "constant input (" + fmt(err0) + ", " + fmt(err_hi) + ")");

  const Image img = oracle::random_image(32, 32, 11);
  const int dy = 5, dx = -3;
  auto wrap = [](int i) { return ((i % 32) + 32) % 32; };
  Image shifted(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) shifted(wrap(y + dy), wrap(x + dx)) = img(y, x);
  const auto a = scatter(img, cfg), b = scatter(shifted, cfg);
  double shift_err = 0.0;
  for (int ch = 0; ch < a.channels; ++ch)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        shift_err = std::max(shift_err, std::abs(b.at(ch, wrap(y + dy), wrap(x + dx)) - a.at(ch, y, x)));
  c.expect(shift_err <= 1e-5, "translation covariance " + fmt(shift_err));
  c.note("shift err " + fmt(shift_err, 2));

  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Image x = oracle::random_image(64, 64, 100 + seed, -1.0, 1.0);
    worst_ratio = std::max(worst_ratio, l2(scatter(x, cfg).data) / l2(x.data));
  }
  c.expect(worst_ratio <= 1.05, "energy ratio " + fmt(worst_ratio));
  c.note("energy ratio " + fmt(worst_ratio));

  const Image probe = oracle::random_image(64, 64, 7);
  const auto got = scatter(probe, cfg);
  const auto expect = oracle::ReferenceScattering(cfg, 64, 64).forward(probe);
  double rel = std::numeric_limits<double>::infinity();
  if (got.same_shape(expect)) {
    rel = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      rel = std::max(rel, std::abs(got.data[i] - expect.data[i]) / std::max(std::abs(expect.data[i]), 1e-3));
    }
  }
  c.expect(rel <= 1e-3, "reference cross-check " + fmt(rel));
  c.note("64x64 cross-check rel " + fmt(rel, 2));
}

// Exhaustive recomputation written from the matching contract alone:
// c-major patches, unit-normalized (zero below 1e-12), summed in order.
MatchMap exhaustive_match(const FeatureMap& in, const FeatureMap& ref, int p, bool* tied = nullptr) {
  auto patches = [p](const FeatureMap& fm) {
    std::vector<std::vector<double>> out;
    for (int oy = 0; oy + p <= fm.height; ++oy) {
      for (int ox = 0; ox + p <= fm.width; ++ox) {
        std::vector<double> v;
        for (int ch = 0; ch < fm.channels; ++ch)
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) v.push_back(fm.at(ch, oy + y, ox + x));
        double ss = 0.0;
        for (double e : v) ss += e * e;
        const double n = std::sqrt(ss);
        for (double& e : v) e = n < 1e-12 ? 0.0 : e / n;
        out.push_back(std::move(v));
      }
    }
    return out;
  };
  const auto a = patches(in), b = patches(ref);
  MatchMap m;
  for (const auto& pa : a) {
    double best = -std::numeric_limits<double>::infinity();
    std::int64_t arg = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pa.size(); ++k) s += pa[k] * b[j][k];
      if (s > best) {
        best = s;
        arg = static_cast<std::int64_t>(j);
      } else if (s == best && tied != nullptr) {
        *tied = true;
      }
    }
    m.indices.push_back(arg);
    m.scores.push_back(best);
  }
  return m;
}

void matching_oracle(Checks& c) {
  std::mt19937_64 rng(77);
  int instances = 0, mismatched = 0, with_ties = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const int ch = 1 + static_cast<int>(rng() % 4);
    const int h = 3 + static_cast<int>(rng() % 6), w = 3 + static_cast<int>(rng() % 6);
    const int rh = 3 + static_cast<int>(rng() % 6), rw = 3 + static_cast<int>(rng() % 6);
    auto in = oracle::random_feature_map(ch, h, w, rng());
    auto ref = oracle::random_feature_map(ch, rh, rw, rng());
    if (trial % 3 != 0) {
      // Coarse values make duplicate and parallel patches, hence ties.
      for (auto& v : in.data) v = std::round(v);
      for (auto& v : ref.data) v = std::round(v);
    }
    const auto got = dense_match(in, ref, make_grid(h, w));
    bool tied = false;
    const auto expect = exhaustive_match(in, ref, 3, &tied);
    ++instances;
    with_ties += tied;
    if (got.indices != expect.indices || got.scores != expect.scores) ++mismatched;
  }
  c.expect(mismatched == 0, std::to_string(mismatched) + " of " + std::to_string(instances) + " instances differ");
  c.expect(with_ties > 0, "no instance exercised a tie");
  c.note(std::to_string(instances) + " instances exact, " + std::to_string(with_ties) + " with ties");
}

// Random-coordinate central-difference check; returns worst relative error.
oracle::GradientCheck sampled_check(const std::function<double()>& f, std::vector<double*> coords,
                                    const std::vector<double>& analytic, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  oracle::GradientCheck r;
  std::vector<std::size_t> idx(coords.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(samples, idx.size()));
  for (std::size_t i : idx) {
    const double fd = oracle::central_difference(f, *coords[i]);
    r.worst = std::max(r.worst, oracle::relative_error(analytic[i], fd, 1e-6 * scale));
    ++r.count;
  }
  return r;
}

std::vector<double*> pointers(std::vector<double>& v) {
  std::vector<double*> out;
  for (double& x : v) out.push_back(&x);
  return out;
}

void gradient_suite(Checks& c) {
  auto report = [&](const std::string& name, const oracle::GradientCheck& r) {
    c.expect(r.count >= 100 && r.worst <= 1e-4, name + " worst " + fmt(r.worst) + " over " + std::to_string(r.count));
    c.note(name + " " + fmt(r.worst, 2));
  };

  {
    Image sr = oracle::random_image(16, 16, 1);
    const Image hr = oracle::random_image(16, 16, 2);
    const auto g = loss_rec(sr, hr).grad;
    report("rec", sampled_check([&] { return loss_rec(sr, hr).value; }, pointers(sr.data), g.data, 150, 3));
  }
  {
    const ScatteringExtractor ext{ScatterConfig{}};
    Image sr = oracle::random_image(16, 16, 4);
    const Image hr = oracle::random_image(16, 16, 5);
    const auto g = loss_perceptual(sr, hr, ext).grad;
    report("perceptual",
           sampled_check([&] { return loss_perceptual(sr, hr, ext).value; }, pointers(sr.data), g.data, 120, 6));
  }
  {
    const ScatteringTransform st(ScatterConfig{}, 16, 16);
    Image img = oracle::random_image(16, 16, 7);
    const FeatureMap target = st.forward(oracle::random_image(16, 16, 8));
    ScatterTape tape;
    const FeatureMap f = st.forward(img, &tape);
    const Image g = st.backward(tape, loss_texture(f, target).grad);
    report("texture", sampled_check([&] { return loss_texture(st.forward(img), target).value; }, pointers(img.data),
                                    g.data, 120, 9));
  }
  {
    SrcnnShape shape;
    shape.width1 = 4;
    shape.width2 = 3;
    shape.concat_channels = 81;
    Network net = make_srcnn(shape, 10);
    Image x = oracle::random_image(12, 12, 11);
    const Image hr = oracle::random_image(12, 12, 12);
    const FeatureMap swapped = scatter(oracle::random_image(12, 12, 13), ScatterConfig{});
    LossConfig lc;
    lc.weights = {1.0, 0.05, 0.01};
    const TotalLoss loss(lc);
    ForwardTape tape;
    const Image sr = forward(net, x, &swapped, &tape);
    const Gradients g = backward(net, tape, loss(sr, hr, &swapped).grad);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (std::size_t n = 0; n < net.layers.size(); ++n) {
      for (std::size_t k = 0; k < net.layers[n].weight.size(); ++k) {
        coords.push_back(&net.layers[n].weight[k]);
        analytic.push_back(g.weight[n][k]);
      }
      for (std::size_t k = 0; k < net.layers[n].bias.size(); ++k) {
        coords.push_back(&net.layers[n].bias[k]);
        analytic.push_back(g.bias[n][k]);
      }
    }
    for (std::size_t k = 0; k < x.data.size(); ++k) {
      coords.push_back(&x.data[k]);
      analytic.push_back(g.input.data[k]);
    }
    report("network", sampled_check([&] { return loss(forward(net, x, &swapped), hr, &swapped).total; }, coords,
                                    analytic, 200, 14));
  }
}

void metric_oracles(Checks& c) {
  const double p = psnr(Image(16, 16, 0.5), Image(16, 16, 0.6));
  c.expect(std::abs(p - 20.0) <= 1e-12, "uniform 0.1 PSNR " + fmt(p, 17));
  c.note("PSNR " + fmt(p, 15));

  const double c1 = 1e-4;
  const double closed = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  const double s = ssim(Image(32, 32, 0.2), Image(32, 32, 0.8));
  c.expect(std::abs(s - closed) <= 1e-6, "constant SSIM " + fmt(s, 10));

  const std::vector<double> d{1, 2, 3, 4, 5};
  const auto w = wilcoxon_signed_rank(d, WilcoxonMethod::exact);
  c.expect(w.p_two_sided == 0.0625, "Wilcoxon exact p " + fmt(w.p_two_sided, 17));
  c.note("p " + fmt(w.p_two_sided));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.3, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20);
    for (double& v : x) v = nd(rng);
    const double pe = wilcoxon_signed_rank(x, WilcoxonMethod::exact).p_two_sided;
    const double pn = wilcoxon_signed_rank(x, WilcoxonMethod::normal).p_two_sided;
    worst = std::max(worst, std::abs(pe - pn));
  }
  c.expect(worst <= 0.01, "exact vs normal at n=20 " + fmt(worst));
  c.note("exact-normal " + fmt(worst, 2));
}

constexpr std::uint64_t kFamily = 7;

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.sr_factor = 4;
  cfg.patch_size = 32;
  cfg.crops_per_slice = 8;
  cfg.batch_size = 4;
  cfg.steps = 2000;
  cfg.width1 = 32;
  cfg.width2 = 16;
  cfg.seed = 1;
  return cfg;
}

struct SmokeResult {
  EvalReport base_vs_bicubic;
  EvalReport tt_vs_base;
  std::vector<fs::path> artifacts;
  double seconds = 0.0;
};

// Shared inputs, written once so both runs read identical files.
struct SmokeData {
  std::vector<NamedImage> train;
  std::vector<NamedImage> test;
  fs::path reference;
};

SmokeData smoke_data(const fs::path& root) {
  SmokeData d;
  for (int i = 0; i < 8; ++i) d.train.push_back({"train" + std::to_string(i), oracle::striped_family(128, 128, kFamily, i)});
  for (int i = 0; i < 10; ++i) {
    d.test.push_back({"test" + std::to_string(i), oracle::striped_family(128, 128, kFamily, 100 + i)});
  }
  d.reference = root / "reference.sttf";
  save_tensor(to_tensor(oracle::striped_family(64, 64, kFamily, 999)), d.reference, TensorPrecision::f64);
  return d;
}

SmokeResult run_smoke(const SmokeData& data, const fs::path& dir) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  SmokeResult r;

  TrainConfig base_cfg = smoke_config();
  base_cfg.weights.w_t = 0.0;
  const Dataset ds = make_dataset(data.train, base_cfg);
  const auto base = train(base_cfg, ds, nullptr);
  save_checkpoint(base.checkpoint, dir / "baseline.ckpt");

  TrainConfig tt_cfg = smoke_config();
  tt_cfg.reference_paths = {data.reference.string()};
  const auto refs = load_references(tt_cfg.reference_paths);
  std::shared_ptr<const ReferencePool> pool = make_reference_pool(refs, tt_cfg);
  const SwapArchive swaps = precompute_swaps(ds, *pool);
  const auto tt = train(tt_cfg, ds, &swaps);
  save_checkpoint(tt.checkpoint, dir / "tt.ckpt");

  Method bicubic;
  Method base_m{"baseline", base.checkpoint.net, nullptr};
  Method tt_m{"tt", tt.checkpoint.net, pool};
  r.base_vs_bicubic = evaluate(base_m, bicubic, data.test, 4);
  r.tt_vs_base = evaluate(tt_m, base_m, data.test, 4);

  auto write = [&](const std::string& name, const EvalReport& rep) {
    std::ofstream csv(dir / (name + ".csv"));
    write_csv(rep.rows, csv);
    std::ofstream(dir / (name + ".txt")) << verdict_text(rep);
    r.artifacts.push_back(dir / (name + ".csv"));
    r.artifacts.push_back(dir / (name + ".txt"));
  };
  write("baseline_vs_bicubic", r.base_vs_bicubic);
  write("tt_vs_baseline", r.tt_vs_base);
  r.artifacts.push_back(dir / "baseline.ckpt");
  r.artifacts.push_back(dir / "tt.ckpt");
  r.seconds = seconds_since(t0);
  return r;
}

void smoke_checks(Checks& c, const SmokeResult& r) {
  const double base = r.base_vs_bicubic.mean_psnr_a;
  const double bicubic = r.base_vs_bicubic.mean_psnr_b;
  const double tt = r.tt_vs_base.mean_psnr_a;
  c.note("bicubic " + fmt(bicubic, 6) + " dB, baseline " + fmt(base, 6) + " dB, tt " + fmt(tt, 6) + " dB");
  c.expect(base >= bicubic + 0.5, "baseline gain " + fmt(base - bicubic) + " dB");

  bool changed = false;
  for (const auto& row : r.tt_vs_base.rows) changed = changed || row.psnr_a != row.psnr_b || row.ssim_a != row.ssim_b;
  c.expect(changed, "texture transfer left every metric unchanged");
  c.expect(tt >= base - 0.1, "tt - baseline " + fmt(tt - base) + " dB");
  c.note("tt-baseline " + fmt(tt - base, 3) + " dB");

  const auto& w = r.tt_vs_base.psnr_test;
  const bool verdict = w.n > 0 && w.p_two_sided >= 0.0 && w.p_two_sided <= 1.0 && w.verdict != Verdict::no_decision;
  c.expect(verdict, "Wilcoxon produced no verdict");
  c.note("tt vs baseline psnr verdict " + std::string(to_string(w.verdict)) + " (p " + fmt(w.p_two_sided, 3) + ")");
  c.note("baseline vs bicubic " + std::string(to_string(r.base_vs_bicubic.psnr_test.verdict)));
  c.expect(r.seconds < 600.0, "runtime " + fmt(r.seconds) + " s");
}

void round_trips(Checks& c, const fs::path& dir) {
  fs::create_directories(dir);
  const Image img = oracle::random_image(23, 17, 3);

  save_tensor(to_tensor(img), dir / "t64.sttf", TensorPrecision::f64);
  c.expect(load_image(dir / "t64.sttf").data == img.data, "f64 tensor not bit-exact");

  save_tensor(to_tensor(img), dir / "t32.sttf", TensorPrecision::f32);
  const Image t32 = load_image(dir / "t32.sttf");
  double e32 = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) e32 = std::max(e32, std::abs(t32.data[i] - img.data[i]));
  c.expect(e32 <= 6e-8, "f32 tensor error " + fmt(e32));

  const FeatureMap fm = oracle::random_feature_map(5, 6, 7, 9);
  save_feature_map(fm, dir / "fm.sttf", TensorPrecision::f64);
  c.expect(load_feature_map(dir / "fm.sttf") == fm, "feature map not bit-exact");

  for (auto [depth, bound, name] : {std::tuple{PgmDepth::u8, 0.5 / 255.0, "u8"},
                                    std::tuple{PgmDepth::u16, 0.5 / 65535.0, "u16"}}) {
    save_image(img, dir / "img.pgm", depth);
    const Image back = load_image(dir / "img.pgm");
    double err = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) err = std::max(err, std::abs(back.data[i] - img.data[i]));
    c.expect(back.same_shape(img) && err <= bound + 1e-15, std::string(name) + " PGM error " + fmt(err));
    save_image(back, dir / "again.pgm", depth);
    c.expect(oracle::read_file(dir / "img.pgm") == oracle::read_file(dir / "again.pgm"),
             std::string(name) + " PGM not stable");
  }

  TrainConfig cfg;
  cfg.patch_size = 16;
  cfg.crops_per_slice = 2;
  cfg.batch_size = 2;
  cfg.steps = 3;
  cfg.width1 = 4;
  cfg.width2 = 3;
  cfg.reference_paths = {"unused"};
  const Dataset ds = make_dataset({{"s", oracle::striped_family(24, 24, 1, 0)}}, cfg);
  const auto swaps = precompute_swaps(ds, {oracle::striped_family(20, 20, 1, 1)}, cfg);
  const auto trained = train(cfg, ds, &swaps).checkpoint;
  save_checkpoint(trained, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt", trained.net);
  c.expect(back.net == trained.net && back.adam == trained.adam && back.step == trained.step &&
               back.metadata == trained.metadata,
           "checkpoint not bit-exact");
  save_checkpoint(back, dir / "b.ckpt");
  c.expect(oracle::read_file(dir / "a.ckpt") == oracle::read_file(dir / "b.ckpt"), "checkpoint bytes differ");

  save_swaps(swaps, dir / "swaps");
  const auto swaps_back = load_swaps(dir / "swaps");
  bool same = swaps_back.ids == swaps.ids && swaps_back.mean_scores == swaps.mean_scores;
  for (std::size_t i = 0; same && i < swaps.ids.size(); ++i) same = swaps_back.features[i] == swaps.features[i];
  c.expect(same, "swap archive not bit-exact");
  c.note("f32 err " + fmt(e32, 2) + ", f64/checkpoint/swaps bit-exact");
}

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

Outcome run(int id, const std::string& name, double limit, const std::function<void(Checks&)>& body) {
  Checks c;
  const auto t0 = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double s = seconds_since(t0);
  if (limit > 0.0) c.expect(s < limit, "runtime " + fmt(s) + " s over " + fmt(limit) + " s");
  Outcome o{id, name, c.ok(), c.summary(), s};
  std::printf("[%s] %d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), s, o.detail.c_str());
  std::fflush(stdout);
  return o;
}

} // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "texsr_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  std::vector<Outcome> out;
  out.push_back(run(1, "scattering correctness", 10.0, scattering_correctness));
  out.push_back(run(2, "matching oracle", 5.0, matching_oracle));
  out.push_back(run(3, "gradient suite", 60.0, gradient_suite));
  out.push_back(run(4, "metric oracles", 0.0, metric_oracles));

  SmokeData data;
  SmokeResult first, second;
  bool smoke_ok = false;
  out.push_back(run(5, "end-to-end smoke", 0.0, [&](Checks& c) {
    data = smoke_data(work);
    first = run_smoke(data, work / "run1");
    smoke_ok = true;
    smoke_checks(c, first);
  }));
  out.push_back(run(6, "determinism", 0.0, [&](Checks& c) {
    c.expect(smoke_ok, "smoke run did not complete");
    if (!smoke_ok) return;
    second = run_smoke(data, work / "run2");
    std::size_t identical = 0;
    for (std::size_t i = 0; i < first.artifacts.size(); ++i) {
      const bool same = oracle::read_file(first.artifacts[i]) == oracle::read_file(second.artifacts[i]) &&
                        !oracle::read_file(first.artifacts[i]).empty();
      c.expect(same, first.artifacts[i].filename().string() + " differs");
      identical += same;
    }
    c.note(std::to_string(identical) + "/" + std::to_string(first.artifacts.size()) +
           " artifacts bit-identical (checkpoints, CSVs, verdicts)");
  }));
  out.push_back(run(7, "round-trips", 0.0, [&](Checks& c) { round_trips(c, work / "roundtrip"); }));

  const auto passed = std::count_if(out.begin(), out.end(), [](const Outcome& o) { return o.pass; });
  std::printf("%ld/%zu criteria passed\n", static_cast<long>(passed), out.size());
  return passed == static_cast<long>(out.size()) ? 0 : 1;
}
