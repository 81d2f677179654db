#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "texsr/error.hpp"
#include "texsr/pipeline.hpp"
#include "texsr/resample.hpp"

namespace texsr {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_field(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(Errc::malformed_header, "csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

constexpr const char* kCsvHeader = "image_id,psnr_a,psnr_b,ssim_a,ssim_b";

double mean(const std::vector<EvalRow>& rows, double EvalRow::*field) {
  double s = 0.0;
  for (const auto& r : rows) s += r.*field;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

void describe(std::ostream& os, const std::string& prefix, const WilcoxonResult& r) {
  os << prefix << "_n=" << r.n << "\n"
     << prefix << "_w_plus=" << format_double(r.w_plus) << "\n"
     << prefix << "_w_minus=" << format_double(r.w_minus) << "\n"
     << prefix << "_statistic=" << format_double(r.statistic) << "\n"
     << prefix << "_p=" << format_double(r.p_two_sided) << "\n"
     << prefix << "_method=" << (r.n == 0 ? "none" : r.exact ? "exact" : "normal") << "\n"
     << prefix << "_significant=" << (r.significant ? "true" : "false") << "\n"
     << prefix << "_verdict=" << to_string(r.verdict) << "\n";
}

} // namespace

Image Method::super_resolve(const Image& lr, int factor) const {
  if (!net) return bicubic_resize(lr, {factor, 1});
  return infer(*net, lr, factor, pool.get());
}

EvalReport compare(std::vector<EvalRow> rows) {
  if (rows.empty()) throw Error(Errc::empty_input, "no evaluation rows");
  EvalReport r;
  std::vector<double> pa, pb, sa, sb;
  for (const auto& row : rows) {
    pa.push_back(row.psnr_a);
    pb.push_back(row.psnr_b);
    sa.push_back(row.ssim_a);
    sb.push_back(row.ssim_b);
  }
  r.psnr_test = wilcoxon_signed_rank(pa, pb);
  r.ssim_test = wilcoxon_signed_rank(sa, sb);
  r.mean_psnr_a = mean(rows, &EvalRow::psnr_a);
  r.mean_psnr_b = mean(rows, &EvalRow::psnr_b);
  r.mean_ssim_a = mean(rows, &EvalRow::ssim_a);
  r.mean_ssim_b = mean(rows, &EvalRow::ssim_b);
  r.rows = std::move(rows);
  return r;
}

EvalReport evaluate(const Method& a, const Method& b, const std::vector<NamedImage>& test_hr, int factor) {
  if (test_hr.empty()) throw Error(Errc::empty_input, "empty test set");
  std::vector<EvalRow> rows;
  for (const auto& t : test_hr) {
    const Image lr = degrade(t.image, factor).lr;
    const Image sa = a.super_resolve(lr, factor);
    const Image sb = b.super_resolve(lr, factor);
    rows.push_back({t.name, psnr(sa, t.image), psnr(sb, t.image), ssim(sa, t.image), ssim(sb, t.image)});
  }
  return compare(std::move(rows));
}

void write_csv(const std::vector<EvalRow>& rows, std::ostream& os) {
  os << kCsvHeader << "\n";
  for (const auto& r : rows) {
    if (r.image_id.find(',') != std::string::npos) {
      throw Error(Errc::invalid_argument, "image id '" + r.image_id + "' contains a comma");
    }
    os << r.image_id << ',' << format_double(r.psnr_a) << ',' << format_double(r.psnr_b) << ','
       << format_double(r.ssim_a) << ',' << format_double(r.ssim_b) << "\n";
  }
}

std::vector<EvalRow> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) {
    throw Error(Errc::malformed_header, std::string("csv header must be '") + kCsvHeader + "'");
  }
  std::vector<EvalRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw Error(Errc::malformed_header, "csv line " + std::to_string(lineno) + ": expected 5 fields");
    rows.push_back({f[0], parse_field(f[1], lineno), parse_field(f[2], lineno), parse_field(f[3], lineno),
                    parse_field(f[4], lineno)});
  }
  return rows;
}

std::string verdict_text(const EvalReport& report) {
  std::ostringstream os;
  os << "images=" << report.rows.size() << "\n"
     << "mean_psnr_a=" << format_double(report.mean_psnr_a) << "\n"
     << "mean_psnr_b=" << format_double(report.mean_psnr_b) << "\n"
     << "mean_ssim_a=" << format_double(report.mean_ssim_a) << "\n"
     << "mean_ssim_b=" << format_double(report.mean_ssim_b) << "\n";
  describe(os, "psnr", report.psnr_test);
  describe(os, "ssim", report.ssim_test);
  return os.str();
}

} // namespace texsr
