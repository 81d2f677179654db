#include "texsr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "texsr/error.hpp"

namespace texsr {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr std::size_t kExactLimit = 20;

void require_same(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw Error(Errc::shape_mismatch, std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                          std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double s = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    w[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

// Separable weighted average over every fully contained window.
Image window_mean(const Image& img, const std::array<double, kWindow>& w) {
  const int oh = img.height - kWindow + 1, ow = img.width - kWindow + 1;
  Image rows(img.height, ow);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += w[k] * img(y, x + k);
      rows(y, x) = s;
    }
  Image out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += w[k] * rows(y + k, x);
      out(y, x) = s;
    }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out(a.height, a.width);
  for (std::size_t k = 0; k < a.size(); ++k) out.data[k] = a.data[k] * b.data[k];
  return out;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

} // namespace

double psnr(const Image& a, const Image& b, double peak) {
  require_same(a, b);
  if (a.size() == 0) throw Error(Errc::empty_input, "psnr of empty images");
  double ss = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) ss += (a.data[k] - b.data[k]) * (a.data[k] - b.data[k]);
  const double mse = ss / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b);
  if (a.height < kWindow || a.width < kWindow) {
    throw Error(Errc::invalid_argument, "ssim needs images of at least 11x11, got " + std::to_string(a.height) + "x" +
                                            std::to_string(a.width));
  }
  const auto w = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Image mu_a = window_mean(a, w), mu_b = window_mean(b, w);
  const Image aa = window_mean(product(a, a), w), bb = window_mean(product(b, b), w);
  const Image ab = window_mean(product(a, b), w);
  double total = 0.0;
  for (std::size_t k = 0; k < mu_a.size(); ++k) {
    const double ma = mu_a.data[k], mb = mu_b.data[k];
    const double va = aa.data[k] - ma * ma, vb = bb.data[k] - mb * mb;
    const double cov = ab.data[k] - ma * mb;
    total += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::a_better: return "a_better";
    case Verdict::b_better: return "b_better";
    case Verdict::no_difference: return "no_difference";
    case Verdict::no_decision: return "no_decision";
  }
  return "unknown";
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs_in, WilcoxonMethod method, double alpha) {
  std::vector<double> d;
  for (double v : diffs_in) {
    if (std::isnan(v)) throw Error(Errc::invalid_argument, "difference is NaN");
    if (v != 0.0) d.push_back(v);
  }
  WilcoxonResult r;
  r.n = d.size();
  if (r.n == 0) return r;

  std::vector<std::size_t> order(r.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return std::abs(d[i]) < std::abs(d[j]); });
  // Ranks are kept doubled so midranks stay integral.
  std::vector<long long> rank2(r.n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < r.n;) {
    std::size_t j = i;
    while (j + 1 < r.n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const auto t = static_cast<long long>(j - i + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = static_cast<long long>(i + j + 2);
    tie_term += static_cast<double>(t * t * t - t);
    i = j + 1;
  }
  long long wplus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0.0) wplus2 += rank2[i];
  }
  r.w_plus = wplus2 / 2.0;
  r.w_minus = (total2 - wplus2) / 2.0;
  r.statistic = std::min(r.w_plus, r.w_minus);

  r.exact = method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && r.n <= kExactLimit);
  if (r.exact) {
    // Null distribution of the doubled positive rank sum: each rank enters
    // with probability 1/2.
    std::vector<double> dist(static_cast<std::size_t>(total2) + 1, 0.0);
    dist[0] = 1.0;
    long long reach = 0;
    for (long long rk : rank2) {
      for (long long s = reach; s >= 0; --s) dist[static_cast<std::size_t>(s + rk)] += dist[static_cast<std::size_t>(s)];
      reach += rk;
    }
    const double all = std::ldexp(1.0, static_cast<int>(r.n));
    double lower = 0.0, upper = 0.0;
    for (long long s = 0; s <= total2; ++s) {
      if (s <= wplus2) lower += dist[static_cast<std::size_t>(s)];
      if (s >= wplus2) upper += dist[static_cast<std::size_t>(s)];
    }
    r.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  } else {
    const double n = static_cast<double>(r.n);
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = std::max(std::abs(r.w_plus - mean) - 0.5, 0.0);
    r.p_two_sided = var > 0.0 ? std::min(1.0, 2.0 * normal_upper_tail(dev / std::sqrt(var))) : 1.0;
  }
  r.significant = r.p_two_sided < alpha;
  r.verdict = !r.significant ? Verdict::no_difference : r.w_plus > r.w_minus ? Verdict::a_better : Verdict::b_better;
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, WilcoxonMethod method,
                                    double alpha) {
  if (a.size() != b.size()) throw Error(Errc::shape_mismatch, "paired score lists differ in length");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] == b[i] ? 0.0 : a[i] - b[i];
  return wilcoxon_signed_rank(d, method, alpha);
}

} // namespace texsr
