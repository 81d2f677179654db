#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "texsr/image.hpp"

namespace texsr {

/// 10 log10(peak^2 / MSE) in dB; +infinity when the images are identical.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);

enum class WilcoxonMethod { automatic, exact, normal };

enum class Verdict {
  a_better,       // significant, differences a - b mostly positive
  b_better,
  no_difference,  // not significant
  no_decision,    // every difference is zero
};

std::string_view to_string(Verdict v) noexcept;

struct WilcoxonResult {
  std::size_t n = 0;          // nonzero differences
  double w_plus = 0.0;        // rank sum of positive differences
  double w_minus = 0.0;
  double statistic = 0.0;     // min(w_plus, w_minus)
  double p_two_sided = 1.0;
  bool significant = false;   // p < alpha
  bool exact = false;         // which distribution produced p
  Verdict verdict = Verdict::no_decision;
};

/// Signed-rank test on a[i] - b[i]. Zero differences are dropped, ties get
/// midranks. `automatic` uses the exact null distribution up to n = 20 and
/// the tie- and continuity-corrected normal approximation above.
/// Pairs where both values are +infinity count as zero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method = WilcoxonMethod::automatic, double alpha = 0.05);

/// Same on precomputed differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs, WilcoxonMethod method = WilcoxonMethod::automatic,
                                    double alpha = 0.05);

} // namespace texsr
