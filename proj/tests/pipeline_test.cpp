#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <random>
#include <sstream>

#include "oracles/oracles.hpp"
#include "texsr/error.hpp"
#include "texsr/io.hpp"
#include "texsr/pipeline.hpp"
#include "texsr/resample.hpp"

using namespace texsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "texsr_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Errc error_code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected texsr::Error");
  return Errc::io_failure;
}

// Small, fast configuration used by the training tests.
TrainConfig small_config() {
  TrainConfig c;
  c.patch_size = 16;
  c.crops_per_slice = 3;
  c.batch_size = 2;
  c.steps = 5;
  c.width1 = 4;
  c.width2 = 3;
  c.weights.w_t = 0.0;
  return c;
}

std::vector<NamedImage> family_slices(int n, int size, std::uint64_t first_member = 0) {
  std::vector<NamedImage> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"s" + std::to_string(i), oracle::striped_family(size, size, 3, first_member + i)});
  }
  return out;
}

bool same_bits(const FeatureMap& a, const FeatureMap& b) {
  return a.channels == b.channels && a.height == b.height && a.width == b.width && a.data == b.data;
}

} // namespace

TEST_CASE("config text parses comments, overrides and lists") {
  const auto c = parse_config("# run\nsteps = 12\nlr=0.001  # faster\n\nreference_paths = a.pgm, b.pgm\nresidual = true\n");
  CHECK(c.steps == 12);
  CHECK(c.lr == 0.001);
  CHECK(c.reference_paths == std::vector<std::string>{"a.pgm", "b.pgm"});
  CHECK(c.residual);
  CHECK(c.texture_transfer());
  CHECK(c.batch_size == 9);

  TrainConfig d = c;
  apply_override(d, "batch_size", "3");
  CHECK(d.batch_size == 3);
  CHECK(parse_config(to_text(d)).batch_size == 3);
  CHECK(to_text(parse_config(to_text(d))) == to_text(d));

  const auto j = nlohmann::json::parse(to_json(d));
  CHECK(j.at("steps") == "12");
  CHECK(j.at("reference_paths").size() == 2);
}

TEST_CASE("config errors") {
  TrainConfig c;
  CHECK(error_code_of([&] { apply_override(c, "stpes", "1"); }) == Errc::invalid_argument);
  CHECK(error_code_of([&] { apply_override(c, "steps", "ten"); }) == Errc::invalid_argument);
  CHECK(error_code_of([&] { apply_override(c, "residual", "maybe"); }) == Errc::invalid_argument);
  CHECK(error_code_of([&] { parse_config("steps 3\n"); }) == Errc::invalid_argument);
  CHECK(error_code_of([&] { load_config("/nonexistent/texsr.cfg"); }) == Errc::io_failure);

  TrainConfig no_refs;
  CHECK(no_refs.weights.w_t > 0.0);
  CHECK(error_code_of([&] { no_refs.validate(); }) == Errc::invalid_argument);
  no_refs.weights.w_t = 0.0;
  CHECK_NOTHROW(no_refs.validate());

  TrainConfig odd = no_refs;
  odd.patch_size = 30;
  CHECK(error_code_of([&] { odd.validate(); }) == Errc::invalid_argument);
  TrainConfig degr = no_refs;
  degr.degradation = "gaussian";
  CHECK(error_code_of([&] { degr.validate(); }) == Errc::invalid_argument);
}

TEST_CASE("three slices with 20 crops give 60 pairs") {
  TrainConfig c;
  c.weights.w_t = 0.0;
  const auto ds = make_dataset(family_slices(3, 96), c);
  REQUIRE(ds.pairs.size() == 60);
  for (const auto& p : ds.pairs) {
    CHECK(p.hr.height == 64);
    CHECK(p.lr.height == 16);
    CHECK(p.lr.width == 16);
  }
  CHECK(ds.pairs[0].id == "s0_000");
  CHECK(ds.pairs[59].id == "s2_019");
}

TEST_CASE("crop positions depend only on the seed and slice") {
  const auto a = crop_positions(128, 100, 64, 20, 5, 2);
  CHECK(a == crop_positions(128, 100, 64, 20, 5, 2));
  CHECK(a != crop_positions(128, 100, 64, 20, 6, 2));
  CHECK(a != crop_positions(128, 100, 64, 20, 5, 3));
  for (const auto& [y, x] : a) {
    CHECK(y >= 0);
    CHECK(y <= 64);
    CHECK(x >= 0);
    CHECK(x <= 36);
  }
  for (const auto& [y, x] : crop_positions(64, 64, 64, 20, 5, 0)) {
    CHECK(y == 0);
    CHECK(x == 0);
  }
}

TEST_CASE("a slice exactly one patch wide yields identical crops") {
  TrainConfig c;
  c.weights.w_t = 0.0;
  const auto ds = make_dataset(family_slices(1, 64), c);
  REQUIRE(ds.pairs.size() == 20);
  for (const auto& p : ds.pairs) CHECK(p.hr.data == ds.pairs[0].hr.data);
}

TEST_CASE("small slices are skipped with a warning") {
  TrainConfig c = small_config();
  auto slices = family_slices(2, 32);
  slices.push_back({"tiny", oracle::random_image(8, 40, 1)});
  std::ostringstream warn;
  const auto ds = make_dataset(slices, c, &warn);
  CHECK(ds.pairs.size() == 6);
  CHECK(warn.str().find("tiny") != std::string::npos);

  CHECK(error_code_of([&] { make_dataset({{"tiny", oracle::random_image(8, 8, 1)}}, c); }) == Errc::empty_input);
  CHECK(error_code_of([&] { make_dataset({}, c); }) == Errc::empty_input);

  const auto empty = scratch("empty_dir");
  CHECK(error_code_of([&] { prepare_dataset(empty, scratch("empty_out"), c); }) == Errc::empty_input);
}

TEST_CASE("prepared datasets load back bit-exactly") {
  const TrainConfig c = small_config();
  const auto hr_dir = scratch("prepare_hr");
  save_image(oracle::striped_family(40, 40, 3, 0), hr_dir / "a.pgm", PgmDepth::u16);
  save_tensor(to_tensor(oracle::striped_family(48, 32, 3, 1)), hr_dir / "b.sttf", TensorPrecision::f64);
  const auto out = scratch("prepare_out");
  CHECK(prepare_dataset(hr_dir, out, c) == 6);

  const auto slices = load_image_dir(hr_dir);
  const auto expected = make_dataset(slices, c);
  const auto loaded = load_dataset(out);
  REQUIRE(loaded.pairs.size() == expected.pairs.size());
  CHECK(loaded.sr_factor == 4);
  for (std::size_t i = 0; i < loaded.pairs.size(); ++i) {
    CHECK(loaded.pairs[i].id == expected.pairs[i].id);
    CHECK(loaded.pairs[i].y == expected.pairs[i].y);
    CHECK(loaded.pairs[i].x == expected.pairs[i].x);
    CHECK(loaded.pairs[i].hr.data == expected.pairs[i].hr.data);
    CHECK(loaded.pairs[i].lr.data == expected.pairs[i].lr.data);
  }
}

TEST_CASE("swap precomputation") {
  TrainConfig c = small_config();
  const auto ds = make_dataset(family_slices(2, 24, 10), c);

  CHECK(error_code_of([&] { precompute_swaps(ds, {}, c); }) == Errc::missing_reference);
  CHECK(error_code_of([&] { load_references({}); }) == Errc::missing_reference);
  CHECK(error_code_of([&] { load_references({"/nonexistent/ref.pgm"}); }) == Errc::missing_reference);

  SUBCASE("a reference equal to one HR patch gives that patch the top score") {
    for (std::size_t target : {std::size_t{1}, std::size_t{4}}) {
      const auto archive = precompute_swaps(ds, {ds.pairs[target].hr}, c);
      REQUIRE(archive.ids.size() == ds.pairs.size());
      for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        if (i != target) CHECK(archive.mean_scores[target] > archive.mean_scores[i]);
      }
      CHECK(archive.mean_scores[target] == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  SUBCASE("archives round-trip bit-exactly") {
    const auto archive = precompute_swaps(ds, {oracle::striped_family(20, 28, 3, 99)}, c);
    const auto dir = scratch("swaps");
    save_swaps(archive, dir);
    const auto back = load_swaps(dir);
    REQUIRE(back.ids == archive.ids);
    CHECK(back.mean_scores == archive.mean_scores);
    for (std::size_t i = 0; i < back.ids.size(); ++i) CHECK(same_bits(back.features[i], archive.features[i]));
    CHECK(back.find(archive.ids[2]) != nullptr);
    CHECK(back.find("missing") == nullptr);
  }
}

TEST_CASE("zero steps leave the initialization untouched") {
  TrainConfig c = small_config();
  c.steps = 0;
  const auto ds = make_dataset(family_slices(1, 24), c);
  const auto r = train(c, ds, nullptr);
  CHECK(r.checkpoint.net == make_srcnn(c.network_shape(), c.seed));
  CHECK(r.checkpoint.adam == make_adam(r.checkpoint.net, c.lr));
  CHECK(r.checkpoint.step == 0);
  CHECK(r.manifest.steps.empty());
}

TEST_CASE("training is deterministic for a fixed seed") {
  TrainConfig c = small_config();
  c.steps = 7;
  c.eval_interval = 3;
  const auto ds = make_dataset(family_slices(2, 24), c);
  const auto a = train(c, ds, nullptr);
  const auto b = train(c, ds, nullptr);
  CHECK(a.checkpoint.net == b.checkpoint.net);
  CHECK(a.checkpoint.adam == b.checkpoint.adam);
  CHECK(a.checkpoint.metadata == b.checkpoint.metadata);
  REQUIRE(a.manifest.evals.size() == 3);
  CHECK(a.manifest.evals.back().step == 7);

  TrainConfig other = c;
  other.seed = 2;
  CHECK_FALSE(train(other, ds, nullptr).checkpoint.net == a.checkpoint.net);

  const auto dir = scratch("determinism");
  save_checkpoint(a.checkpoint, dir / "a.ckpt");
  save_checkpoint(b.checkpoint, dir / "b.ckpt");
  CHECK(oracle::read_file(dir / "a.ckpt") == oracle::read_file(dir / "b.ckpt"));

  const auto manifest = nlohmann::json::parse(a.manifest.to_json());
  CHECK(manifest.at("config").at("seed") == "1");
  CHECK(manifest.at("steps").size() == 7);
  CHECK(manifest.at("train_pairs") == 6);
}

TEST_CASE("texture-transfer settings do not touch a run without references") {
  TrainConfig base = small_config();
  const auto ds = make_dataset(family_slices(2, 24), base);
  TrainConfig tweaked = base;
  tweaked.match_patch_size = 5;
  tweaked.normalized_gram = false;
  const auto a = train(base, ds, nullptr);
  const auto b = train(tweaked, ds, nullptr);
  CHECK(a.checkpoint.net == b.checkpoint.net);
  CHECK(a.checkpoint.adam == b.checkpoint.adam);
  CHECK_FALSE(a.checkpoint.net.uses_references());
}

TEST_CASE("train checks the swap archive against the mode") {
  TrainConfig base = small_config();
  const auto ds = make_dataset(family_slices(1, 24), base);
  TrainConfig tt = base;
  tt.reference_paths = {"ref"};
  tt.weights.w_t = 0.01;
  const auto archive = precompute_swaps(ds, {oracle::striped_family(24, 24, 3, 7)}, tt);
  CHECK(error_code_of([&] { train(base, ds, &archive); }) == Errc::mode_mismatch);
  CHECK(error_code_of([&] { train(tt, ds, nullptr); }) == Errc::mode_mismatch);
  SwapArchive partial = archive;
  partial.ids.back() = "other";
  CHECK(error_code_of([&] { train(tt, ds, &partial); }) == Errc::missing_reference);

  const auto r = train(tt, ds, &archive);
  CHECK(r.checkpoint.net.uses_references());
  CHECK(r.checkpoint.net.concat_channels == 81);
  for (const auto& s : r.manifest.steps) CHECK(s.texture > 0.0);

  TrainConfig bad = base;
  bad.lr = 1e300;
  bad.steps = 50;
  CHECK(error_code_of([&] { train(bad, ds, nullptr); }) == Errc::numeric_failure);
}

TEST_CASE("overfitting one image drives the L1 loss down") {
  TrainConfig c;
  c.patch_size = 32;
  c.crops_per_slice = 1;
  c.batch_size = 1;
  c.steps = 2000;
  c.width1 = 16;
  c.width2 = 8;
  c.weights.w_t = 0.0;
  const auto ds = make_dataset({{"one", oracle::striped_family(32, 32, 5, 0)}}, c);
  const auto r = train(c, ds, nullptr);
  const double first = r.manifest.steps.front().rec;
  const double last = r.manifest.steps.back().rec;
  MESSAGE("L1 " << first << " -> " << last);
  CHECK(last < 0.25 * first);

  const auto& pair = ds.pairs.front();
  const Image sr = infer(r.checkpoint.net, pair.lr, 4, nullptr);
  CHECK(psnr(sr, pair.hr) > psnr(bicubic_resize(pair.lr, {4, 1}), pair.hr));
}

TEST_CASE("inference shapes and modes") {
  const Image lr = oracle::random_image(16, 16, 3);
  const Image sr = infer(make_identity_network(), lr, 4, nullptr);
  CHECK(sr.height == 64);
  CHECK(sr.width == 64);
  CHECK(sr.data == bicubic_resize(lr, {4, 1}).data);

  TrainConfig c = small_config();
  c.reference_paths = {"ref"};
  const std::vector<Image> refs{oracle::striped_family(24, 24, 3, 0)};
  const auto pool = make_reference_pool(refs, c);
  const Network tt_net = make_srcnn(c.network_shape(), 1);
  CHECK(error_code_of([&] { infer(tt_net, lr, 4, nullptr); }) == Errc::mode_mismatch);
  CHECK(error_code_of([&] { infer(make_identity_network(), lr, 4, pool.get()); }) == Errc::mode_mismatch);
  const Image tt_sr = infer(tt_net, lr, 4, pool.get());
  CHECK(tt_sr.height == 64);
}

TEST_CASE("evaluating a method against itself reaches no decision") {
  const auto test = family_slices(4, 32);
  const Method bicubic;
  const auto report = evaluate(bicubic, bicubic, test, 4);
  REQUIRE(report.rows.size() == test.size());
  CHECK(report.psnr_test.verdict == Verdict::no_decision);
  CHECK(report.ssim_test.verdict == Verdict::no_decision);
  CHECK(verdict_text(report).find("psnr_verdict=no_decision") != std::string::npos);

  CHECK(error_code_of([&] { evaluate(bicubic, bicubic, {}, 4); }) == Errc::empty_input);
  CHECK(error_code_of([&] { compare({}); }) == Errc::empty_input);
}

TEST_CASE("bicubic beats bicubic plus noise significantly") {
  const auto test = family_slices(12, 32);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<EvalRow> rows;
  for (const auto& t : test) {
    const Image up = bicubic_resize(degrade(t.image, 4).lr, {4, 1});
    Image noisy = up;
    for (double& v : noisy.data) v += noise(rng);
    rows.push_back({t.name, psnr(up, t.image), psnr(noisy, t.image), ssim(up, t.image), ssim(noisy, t.image)});
  }
  const auto report = compare(rows);
  CHECK(report.psnr_test.significant);
  CHECK(report.psnr_test.verdict == Verdict::a_better);
  CHECK(report.ssim_test.verdict == Verdict::a_better);
  CHECK(report.mean_psnr_a > report.mean_psnr_b);
}

TEST_CASE("evaluation CSV has one row per image and round-trips") {
  const auto test = family_slices(5, 32);
  Method identity;
  identity.name = "identity";
  identity.net = make_identity_network();
  const auto report = evaluate(identity, Method{}, test, 4);
  std::stringstream csv;
  write_csv(report.rows, csv);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  const auto back = read_csv(csv);
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].image_id == report.rows[i].image_id);
    CHECK(back[i].psnr_a == report.rows[i].psnr_a);
    CHECK(back[i].ssim_b == report.rows[i].ssim_b);
  }
  CHECK(verdict_text(compare(back)) == verdict_text(report));

  std::stringstream inf_csv("image_id,psnr_a,psnr_b,ssim_a,ssim_b\nx,inf,inf,1,1\n");
  CHECK(std::isinf(read_csv(inf_csv).front().psnr_a));
  std::stringstream bad("image_id,psnr_a,psnr_b,ssim_a,ssim_b\nx,1,2,3\n");
  CHECK(error_code_of([&] { read_csv(bad); }) == Errc::malformed_header);
  std::stringstream wrong_header("id,a,b\n");
  CHECK(error_code_of([&] { read_csv(wrong_header); }) == Errc::malformed_header);
}
